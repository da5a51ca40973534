"""Fast oracle-equivalence and invariant checks that need no test runner."""
from __future__ import annotations

import numpy as np

from .detector import DetectorConfig, detect_doppler_sweep
from .dictionary import SteeringDictionary, build_grid
from .solver import (SolverParams, constrained_ls_oracle, soft_threshold, solve_jie_adm,
                     solve_single_snapshot, solve_t, t_update_terms)


def _t_update_matches_oracle(rng):
    for _ in range(20):
        m = int(rng.integers(2, 17))
        n = int(rng.integers(2, 6))
        L = int(rng.choice([1, 4]))
        X = rng.standard_normal((n * m, L)) + 1j * rng.standard_normal((n * m, L))
        Z = rng.standard_normal((n * m, L)) + 1j * rng.standard_normal((n * m, L))
        vs = complex(m)
        b, a = t_update_terms(Z, X, m)
        t = solve_t(b, a, vs)
        ref = constrained_ls_oracle(Z, X, vs, m)
        if np.linalg.norm(t - ref) > 1e-8 * np.linalg.norm(ref):
            return False
        if abs(t.sum() - vs) > 1e-9 * abs(vs):
            return False
    return True


def _shrinkage_formula(rng):
    if soft_threshold(np.array([3 + 4j]), 2.5)[0] != 1.5 + 2j:
        return False
    if soft_threshold(np.zeros(3, complex), 1.0).any():
        return False
    v = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    k = 0.7
    ref = np.maximum(np.abs(v) - k, 0) * v / np.abs(v)
    return bool(np.allclose(soft_threshold(v, k), ref, rtol=0, atol=1e-15))


def _single_snapshot_bitwise(rng):
    grid = build_grid((4, 4), 2, 2)
    dic = SteeringDictionary(grid)
    params = SolverParams(max_iter=50, zeta=0.0)
    tau = params.resolved_tau(dic)
    for _ in range(3):
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        a = solve_jie_adm(x[:, None], dic, params, tau=tau)
        b = solve_single_snapshot(x, dic, params, tau=tau)
        if not (np.array_equal(a.profiles[:, 0], b.profiles) and np.array_equal(a.t, b.t)):
            return False
    return True


def _matrix_free_matches_dense(rng):
    grid = build_grid((5, 4), 3, 2)
    dense = SteeringDictionary(grid)
    lazy = SteeringDictionary(grid, dense_limit=0)
    a = rng.standard_normal((grid.size, 3)) + 1j * rng.standard_normal((grid.size, 3))
    y = rng.standard_normal((20, 3)) + 1j * rng.standard_normal((20, 3))
    return bool(np.allclose(dense.apply(a), lazy.apply(a), atol=1e-10)
                and np.allclose(dense.adjoint(y), lazy.adjoint(y), atol=1e-10))


def _detector_scale_invariance(rng):
    grid = build_grid((6, 6), 3, 3)
    cfg = DetectorConfig(threshold_db=3.0)
    for _ in range(20):
        cut = rng.standard_normal(grid.size) * (rng.random(grid.size) < 0.3)
        sec = rng.standard_normal((grid.size, 10)) * (rng.random((grid.size, 10)) < 0.3)
        s = 10 ** rng.uniform(-6, 6)
        d1 = detect_doppler_sweep(cut, sec, grid, cfg).decisions
        d2 = detect_doppler_sweep(s * cut, s * sec, grid, cfg).decisions
        if not np.array_equal(d1, d2):
            return False
    return True


CHECKS = {
    "t-update equals constrained least squares": _t_update_matches_oracle,
    "soft threshold equals componentwise shrinkage": _shrinkage_formula,
    "one-snapshot batch iterates are bitwise single-snapshot iterates": _single_snapshot_bitwise,
    "matrix-free products equal dense products": _matrix_free_matches_dense,
    "detector decisions are scale invariant": _detector_scale_invariance,
}


def run_selftest(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS.items():
        try:
            passed = bool(check(rng))
        except Exception as exc:  # a crash is a failure of that property
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
