"""Seeded Monte Carlo experiments: profiles, PD-vs-SNR, ROC and timing.

Every random draw of a trial comes from a ``SeedSequence`` keyed by
``(base_seed, stream, error case, trial)``. Nothing algorithm-specific enters
the data seed, so all algorithms see the same realizations (common random
numbers) and adding an algorithm never perturbs the others. Within a trial
the array errors, the clutter-plus-noise and the target phases use separate
child streams, so changing the target SNR or Doppler keeps the background
fixed.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
from scipy.stats import binomtest

from . import __version__
from .detector import (DetectorConfig, cfar_statistic_db, decide, empirical_threshold,
                       window_statistics)
from .dictionary import SteeringDictionary, build_grid, write_profile_csv
from .scene import (GainPhaseError, RadarConfig, TargetSpec, draw_gp_errors,
                    synthesize_clutter, target_return)
from .solver import SolverParams, solve_adm_fixed_t, solve_jie_adm

log = logging.getLogger(__name__)

ALGORITHMS = ("jie-adm", "adm", "admt")
STREAMS = {"h1": 1, "calibration": 2, "h0": 3, "profile": 4, "timing": 5}
MIN_TRIALS = 50


class SpecError(ValueError):
    """Invalid experiment specification."""


# 30 dB of clutter in total, shared evenly by the patches of one range ring
TOTAL_CNR_DB = 30.0
PATCH_CNR_DB = TOTAL_CNR_DB - 10 * math.log10(RadarConfig().num_clutter_patches)


def _default_radar() -> RadarConfig:
    return RadarConfig(num_elements=8, num_pulses=8, cnr_db=PATCH_CNR_DB)


def _default_solver() -> SolverParams:
    # weak enough l1 weight that secondary windows are almost never all zero
    return SolverParams(data_scale=1000.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce an experiment.

    The desk-scale defaults use an 8x8 array, 3x oversampled grid and
    ``pfa = 1e-2``; the ``full`` preset restores the 10x10 system.
    """

    radar: RadarConfig = field(default_factory=_default_radar)
    rho_s: float = 3.0
    rho_d: float = 3.0
    solver: SolverParams = field(default_factory=_default_solver)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    error_cases: tuple = ((0.0, 0.0), (0.05, 0.05 * math.pi), (0.1, 0.1 * math.pi))
    targets: tuple = (TargetSpec(0.36, 0.0, 0.0),)
    algorithms: tuple = ALGORITHMS
    num_trials: int = 200
    base_seed: int = 0
    output_dir: str = "results"
    pfa: float = 1e-2
    calibration_trials: int = 1000
    snr_grid: tuple = (-12.0, -9.0, -6.0, -3.0, 0.0, 3.0)
    pfa_grid: tuple = (1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0)
    joint_secondaries: bool = True
    snap_targets: bool = True
    timing_sizes: tuple = (4, 6, 8, 10, 12)
    timing_rho: float = 5.0
    timing_iterations: int = 500
    timing_repeats: int = 10

    def __post_init__(self):
        if not self.algorithms:
            raise SpecError("algorithms must be a nonempty subset of " + ", ".join(ALGORITHMS))
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise SpecError(f"unknown algorithm(s) {bad}; choose from {list(ALGORITHMS)}")
        if self.num_trials < 1 or self.calibration_trials < 1:
            raise SpecError("num_trials and calibration_trials must be >= 1")
        if not 0 < self.pfa <= 1:
            raise SpecError("pfa must lie in (0, 1]")
        if not self.error_cases:
            raise SpecError("error_cases must be nonempty")
        for case in self.error_cases:
            if len(case) != 2 or not 0 <= case[0] < 1 or case[1] < 0:
                raise SpecError(f"error case {case} must be (eps_max in [0,1), phi_max >= 0)")
        # grid validation happens here so that bad factors fail at load time
        try:
            build_grid(self.radar, self.rho_s, self.rho_d)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc

    # -- serialization ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("radar", "solver", "detector"):
                v = v.to_dict()
            elif f.name == "targets":
                v = [dataclasses.asdict(t) for t in v]
            elif isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise SpecError("spec must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise SpecError(f"unknown spec field(s): {sorted(unknown)}; valid fields: {sorted(names)}")
        kw = dict(data)
        try:
            if "radar" in kw:
                kw["radar"] = RadarConfig.from_dict(_require_obj(kw["radar"], "radar"))
            if "solver" in kw:
                kw["solver"] = SolverParams.from_dict(_require_obj(kw["solver"], "solver"))
            if "detector" in kw:
                kw["detector"] = DetectorConfig.from_dict(_require_obj(kw["detector"], "detector"))
            if "targets" in kw:
                kw["targets"] = tuple(_target(t) for t in kw["targets"])
            if "error_cases" in kw:
                kw["error_cases"] = tuple(tuple(float(v) for v in c) for c in kw["error_cases"])
            for name in ("algorithms", "snr_grid", "pfa_grid", "timing_sizes"):
                if name in kw:
                    kw[name] = tuple(kw[name])
            return cls(**kw)
        except SpecError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_overrides(self, overrides: Iterable[str]) -> "ExperimentSpec":
        """Apply ``dotted.path=value`` overrides (values parsed as JSON when possible)."""
        d = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise SpecError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            node = d
            parts = key.split(".")
            for part in parts[:-1]:
                if not isinstance(node, dict) or part not in node:
                    raise SpecError(f"override path {key!r}: no field {part!r}")
                node = node[part]
            if not isinstance(node, dict) or parts[-1] not in node:
                raise SpecError(f"override path {key!r}: no field {parts[-1]!r}")
            node[parts[-1]] = value
        return ExperimentSpec.from_dict(d)


def _require_obj(v, name):
    if not isinstance(v, dict):
        raise SpecError(f"{name} must be a JSON object")
    return v


def _target(t) -> TargetSpec:
    if not isinstance(t, dict):
        raise SpecError("each target must be a JSON object")
    names = {f.name for f in dataclasses.fields(TargetSpec)}
    unknown = set(t) - names
    if unknown:
        raise SpecError(f"unknown target field(s): {sorted(unknown)}")
    if "normalized_doppler" not in t:
        raise SpecError("target is missing required field 'normalized_doppler'")
    return TargetSpec(**t)


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise SpecError(f"spec file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON in {path}: {exc}") from exc
    return ExperimentSpec.from_dict(data)


def save_spec(spec: ExperimentSpec, path) -> None:
    Path(path).write_text(spec.to_json() + "\n")


# -- presets -------------------------------------------------------------------------

FIG3_TARGETS = (TargetSpec(-0.13, 0.0, 0.2), TargetSpec(0.11, 0.0, -3.8), TargetSpec(0.41, 0.0, -3.8))
FIG5_TARGETS = (TargetSpec(0.36, 0.0, 0.0),)
ROC_TARGETS = (TargetSpec(0.13, 0.0, -6.0), TargetSpec(0.23, 0.0, -6.0), TargetSpec(0.36, 0.0, -6.0))


def preset(name: str) -> ExperimentSpec:
    """Named experiment presets: ``fig3``, ``fig5``, ``roc``, ``full``, ``desk``."""
    if name == "desk":
        return ExperimentSpec()
    if name == "fig3":
        return ExperimentSpec(targets=FIG3_TARGETS, num_trials=1)
    if name == "fig5":
        return ExperimentSpec(targets=FIG5_TARGETS)
    if name == "roc":
        return ExperimentSpec(targets=ROC_TARGETS, error_cases=((0.1, 0.1 * math.pi),),
                              algorithms=("jie-adm",))
    if name == "full":
        return ExperimentSpec(
            radar=RadarConfig(cnr_db=PATCH_CNR_DB), rho_s=5.0, rho_d=5.0, solver=SolverParams(), pfa=1e-3,
            calibration_trials=10000, targets=FIG5_TARGETS,
            error_cases=((0.0, 0.0), (0.025, 0.025 * math.pi), (0.05, 0.05 * math.pi),
                         (0.1, 0.1 * math.pi), (0.15, 0.15 * math.pi), (0.2, 0.2 * math.pi)))
    raise SpecError(f"unknown preset {name!r}")


PRESET_NAMES = ("desk", "fig3", "fig5", "roc", "full")


# -- trial machinery -----------------------------------------------------------------

@dataclass
class TrialRecord:
    trial: int
    seed: list
    algorithm: str
    error_case: int
    decisions: list
    statistics: list
    iterations: int
    wall_time: float


def trial_seed(base_seed: int, stream: str, case_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(STREAMS[stream], case_index, trial))


class Pipeline:
    """Shared, read-only state for running trials of one spec."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.cfg = spec.radar
        self.grid = build_grid(spec.radar, spec.rho_s, spec.rho_d)
        self.dictionary = SteeringDictionary(self.grid)
        self.tau = spec.solver.resolved_tau(self.dictionary)
        self.num_snapshots = 1 + spec.detector.num_secondary

    def target_bin(self, target: TargetSpec) -> int:
        return self.grid.nearest_doppler_index(target.normalized_doppler)

    def place(self, target: TargetSpec) -> TargetSpec:
        if not self.spec.snap_targets:
            return target
        fd, fs = self.grid.snap(target.normalized_doppler, target.normalized_spatial)
        return dataclasses.replace(target, normalized_doppler=fd, normalized_spatial=fs)

    def realization(self, stream: str, case_index: int, trial: int):
        """``(gp, background, target_rng)`` for one trial; background is ``NM x (1+L)``."""
        seq = trial_seed(self.spec.base_seed, stream, case_index, trial)
        err_seq, bg_seq, tgt_seq = seq.spawn(3)
        eps, phi = self.spec.error_cases[case_index]
        gp = draw_gp_errors(eps, phi, self.cfg.num_elements, np.random.default_rng(err_seq))
        rng = np.random.default_rng(bg_seq)
        x = synthesize_clutter(self.cfg, gp, rng, self.num_snapshots)
        x = x + np.sqrt(self.cfg.noise_power / 2) * (rng.standard_normal(x.shape)
                                                    + 1j * rng.standard_normal(x.shape))
        return gp, x, tgt_seq

    def add_targets(self, x: np.ndarray, gp: GainPhaseError, targets: Sequence[TargetSpec],
                    tgt_seq: np.random.SeedSequence) -> np.ndarray:
        x = x.copy()
        for i, tgt in enumerate(targets):
            # explicit child keys: spawn() is stateful and would differ between calls
            s = np.random.SeedSequence(tgt_seq.entropy, spawn_key=tgt_seq.spawn_key + (i,))
            x[:, 0] += target_return(self.cfg, gp, self.place(tgt), np.random.default_rng(s))
        return x

    def solve(self, algorithm: str, X: np.ndarray, gp: GainPhaseError):
        params = self.spec.solver
        if algorithm == "jie-adm":
            run = lambda x: solve_jie_adm(x, self.dictionary, params, tau=self.tau)
        elif algorithm == "adm":
            run = lambda x: solve_adm_fixed_t(x, self.dictionary, params, tau=self.tau)
        elif algorithm == "admt":
            t = gp.t * params.resolved_varsigma(self.cfg.num_elements) / np.sum(gp.t)
            run = lambda x: solve_adm_fixed_t(x, self.dictionary, params, t, tau=self.tau)
        else:
            raise SpecError(f"unknown algorithm {algorithm!r}")
        if self.spec.joint_secondaries:
            rep = run(X)
            return rep.profiles, rep.iterations
        reps = [run(X[:, l]) for l in range(X.shape[1])]
        return np.stack([r.profiles for r in reps], axis=1), int(np.mean([r.iterations for r in reps]))

    def statistics(self, profiles: np.ndarray) -> np.ndarray:
        """CFAR statistic in dB at every Doppler bin, mainlobe spatial window."""
        w = window_statistics(profiles, self.grid, self.spec.detector.mainlobe_spatial)
        return cfar_statistic_db(w[:, 0], w[:, 1:])

    def run_trial(self, stream: str, case_index: int, trial: int,
                  targets: Sequence[TargetSpec] = (), algorithms=None) -> dict:
        """CFAR statistics (all Doppler bins) per algorithm for one realization."""
        gp, bg, tgt_seq = self.realization(stream, case_index, trial)
        X = self.add_targets(bg, gp, targets, tgt_seq) if targets else bg
        out = {}
        for alg in algorithms or self.spec.algorithms:
            t0 = time.perf_counter()
            prof, iters = self.solve(alg, X, gp)
            out[alg] = (self.statistics(prof), iters, time.perf_counter() - t0)
        return out


_WORKER: Pipeline | None = None


def _init_worker(spec_dict):
    global _WORKER
    _WORKER = Pipeline(ExperimentSpec.from_dict(spec_dict))


def _work(job):
    stream, case_index, trial, targets, algorithms = job
    return _WORKER.run_trial(stream, case_index, trial, targets, algorithms)


def map_trials(pipeline: Pipeline, jobs: list, workers: int | None = None) -> list:
    """Run ``(stream, case, trial, targets, algorithms)`` jobs, serially or in a process pool.

    Results come back in job order, so aggregation does not depend on scheduling.
    """
    workers = workers or 1
    if workers <= 1 or len(jobs) < 2:
        return [pipeline.run_trial(*job) for job in jobs]
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(pipeline.spec.to_dict(),)) as ex:
        return list(ex.map(_work, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# -- statistics helpers ----------------------------------------------------------------

def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def h0_statistics(pipeline: Pipeline, case_index: int, num_trials: int,
                  stream: str = "calibration", algorithms=None, workers=None,
                  first_trial: int = 0) -> dict:
    """``{algorithm: (num_trials, N_d) array}`` of H0 statistics."""
    algorithms = tuple(algorithms or pipeline.spec.algorithms)
    jobs = [(stream, case_index, first_trial + i, (), algorithms) for i in range(num_trials)]
    res = map_trials(pipeline, jobs, workers)
    return {a: np.array([r[a][0] for r in res]) for a in algorithms}


def h1_statistics(pipeline: Pipeline, case_index: int, targets: Sequence[TargetSpec],
                  num_trials: int, algorithms=None, workers=None) -> dict:
    algorithms = tuple(algorithms or pipeline.spec.algorithms)
    jobs = [("h1", case_index, i, tuple(targets), algorithms) for i in range(num_trials)]
    res = map_trials(pipeline, jobs, workers)
    return {a: np.array([r[a][0] for r in res]) for a in algorithms}


def check_trials(n: int, allow_few: bool) -> None:
    if n < MIN_TRIALS and not allow_few:
        raise SpecError(f"{n} trials is below the minimum of {MIN_TRIALS}; "
                        "pass allow_few_trials to override")


# -- manifests and CSV -----------------------------------------------------------------

def write_manifest(out_dir, spec: ExperimentSpec, command: str, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "spec": spec.to_dict(),
        "spec_sha256": spec.digest(),
        "base_seed": spec.base_seed,
        "versions": {"sparse_stap": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def save_records(records: Sequence[TrialRecord], path) -> None:
    Path(path).write_text(json.dumps([dataclasses.asdict(r) for r in records], indent=1,
                                     default=_jsonable) + "\n")


# -- experiments -----------------------------------------------------------------------

def run_profile_experiment(spec: ExperimentSpec, out_dir=None, trial: int = 0) -> dict:
    """One seeded realization per error case; the CUT profile of each algorithm to CSV.

    Returns ``{(case_index, algorithm): profile}``.
    """
    out_dir = Path(out_dir or spec.output_dir)
    pipe = Pipeline(spec)
    profiles = {}
    for ci, (eps, phi) in enumerate(spec.error_cases):
        gp, bg, tgt_seq = pipe.realization("profile", ci, trial)
        X = pipe.add_targets(bg, gp, spec.targets, tgt_seq)
        for alg in spec.algorithms:
            prof, _ = pipe.solve(alg, X, gp)
            cut = prof[:, 0]
            profiles[(ci, alg)] = cut
            write_profile_csv(out_dir / f"profile_case{ci}_{alg}.csv", pipe.grid, cut)
    return profiles


def run_pd_vs_snr(spec: ExperimentSpec, snr_grid=None, out_dir=None, workers=None,
                  allow_few_trials: bool = False, write: bool = True) -> list[dict]:
    """PD at the first target's Doppler bin for every SNR, error case and algorithm.

    Thresholds come from ``spec.calibration_trials`` H0 trials per error case at
    ``spec.pfa``. The H1 trials at different SNRs share their backgrounds.
    """
    snr_grid = tuple(spec.snr_grid if snr_grid is None else snr_grid)
    check_trials(spec.num_trials, allow_few_trials)
    pipe = Pipeline(spec)
    target = spec.targets[0]
    k = pipe.target_bin(target)
    rows = []
    for ci in range(len(spec.error_cases)):
        h0 = h0_statistics(pipe, ci, spec.calibration_trials, workers=workers)
        xi = {a: empirical_threshold(h0[a][:, k], spec.pfa) for a in spec.algorithms}
        for snr in snr_grid:
            tgt = dataclasses.replace(target, snr_db=float(snr))
            h1 = h1_statistics(pipe, ci, (tgt,), spec.num_trials, workers=workers)
            for a in spec.algorithms:
                dec = decide(h1[a][:, k], xi[a])
                hits = int(dec.sum())
                lo, hi = clopper_pearson(hits, spec.num_trials)
                rows.append({"snr_db": float(snr), "case": ci, "algorithm": a,
                             "pd": hits / spec.num_trials, "ci_lo": lo, "ci_hi": hi,
                             "trials": spec.num_trials, "threshold_db": xi[a],
                             "decisions": dec})
    if write:
        out_dir = Path(out_dir or spec.output_dir)
        header = ["snr_db", "case", "algorithm", "pd", "ci_lo", "ci_hi", "trials"]
        write_rows(out_dir / "pd_curve.csv", header, ([r[h] for h in header] for r in rows))
    return rows


def roc_points(h0: np.ndarray, h1: np.ndarray, pfa_grid) -> list[tuple[float, float]]:
    """(pfa, pd) pairs; ``pfa = 1`` declares every trial H1."""
    pts = []
    for pfa in pfa_grid:
        if pfa >= 1:
            pts.append((1.0, 1.0))
            continue
        xi = empirical_threshold(h0, pfa)
        pts.append((float(pfa), float(np.mean(decide(h1, xi)))))
    return pts


def run_roc(spec: ExperimentSpec, pfa_grid=None, out_dir=None, workers=None,
            allow_few_trials: bool = False, write: bool = True) -> list[dict]:
    """ROC per target Doppler for the first error case; one target per curve."""
    pfa_grid = tuple(spec.pfa_grid if pfa_grid is None else pfa_grid)
    check_trials(spec.num_trials, allow_few_trials)
    pipe = Pipeline(spec)
    h0 = h0_statistics(pipe, 0, spec.calibration_trials, workers=workers)
    rows = []
    for target in spec.targets:
        k = pipe.target_bin(target)
        h1 = h1_statistics(pipe, 0, (target,), spec.num_trials, workers=workers)
        for a in spec.algorithms:
            for pfa, pd in roc_points(h0[a][:, k], h1[a][:, k], pfa_grid):
                rows.append({"pfa": pfa, "pd": pd, "doppler": target.normalized_doppler,
                             "algorithm": a})
    if write:
        out_dir = Path(out_dir or spec.output_dir)
        header = ["pfa", "pd", "doppler", "algorithm"]
        write_rows(out_dir / "roc.csv", header, ([r[h] for h in header] for r in rows))
    return rows


def run_timing(spec: ExperimentSpec, out_dir=None, write: bool = True) -> list[dict]:
    """Wall time per solve and per iteration against the number of dictionary columns.

    Every solve runs exactly ``timing_iterations`` iterations (tolerance
    disabled) on one clutter-plus-noise snapshot, so per-iteration costs are
    compared at equal work.
    """
    rows = []
    params = dataclasses.replace(spec.solver, zeta=0.0, max_iter=spec.timing_iterations)
    algs = [a for a in spec.algorithms if a in ("jie-adm", "adm")] or ["jie-adm", "adm"]
    for size in spec.timing_sizes:
        cfg = spec.radar.with_updates(num_elements=size, num_pulses=size)
        grid = build_grid(cfg, spec.timing_rho, spec.timing_rho)
        dic = SteeringDictionary(grid)
        tau = params.resolved_tau(dic)
        rng = np.random.default_rng(trial_seed(spec.base_seed, "timing", 0, size))
        gp = draw_gp_errors(*spec.error_cases[-1], size, rng)
        x = synthesize_clutter(cfg, gp, rng) + (rng.standard_normal(cfg.size)
                                                + 1j * rng.standard_normal(cfg.size)) / np.sqrt(2)
        solvers = {"jie-adm": lambda: solve_jie_adm(x, dic, params, tau=tau),
                   "adm": lambda: solve_adm_fixed_t(x, dic, params, tau=tau)}
        for a in algs:
            solvers[a]()  # warm-up
        times = {a: [] for a in algs}
        # interleave repeats so slow drifts of the machine hit both algorithms alike
        for _ in range(spec.timing_repeats):
            for a in algs:
                t0 = time.perf_counter()
                rep = solvers[a]()
                times[a].append((time.perf_counter() - t0, rep.iterations))
        for a in algs:
            wall = np.array([w for w, _ in times[a]]) * 1e3
            per_it = np.array([w / it for w, it in times[a]]) * 1e3
            rows.append({"columns": grid.size, "algorithm": a,
                         "mean_ms": float(wall.mean()), "std_ms": float(wall.std(ddof=1)) if len(wall) > 1 else 0.0,
                         "mean_iter_ms": float(per_it.mean()),
                         "std_iter_ms": float(per_it.std(ddof=1)) if len(per_it) > 1 else 0.0})
    if write:
        out_dir = Path(out_dir or spec.output_dir)
        header = ["columns", "algorithm", "mean_ms", "std_ms", "mean_iter_ms", "std_iter_ms"]
        write_rows(out_dir / "timing.csv", header, ([r[h] for h in header] for r in rows))
    return rows


def run_calibration(spec: ExperimentSpec, out_dir=None, workers=None, write: bool = True) -> dict:
    """Empirical thresholds per algorithm and error case at the first target's Doppler."""
    pipe = Pipeline(spec)
    k = pipe.target_bin(spec.targets[0])
    result = {"pfa": spec.pfa, "trials": spec.calibration_trials,
              "doppler": float(pipe.grid.doppler_values[k]), "thresholds": []}
    for ci, case in enumerate(spec.error_cases):
        h0 = h0_statistics(pipe, ci, spec.calibration_trials, workers=workers)
        for a in spec.algorithms:
            result["thresholds"].append({"case": ci, "eps_max": case[0], "phi_max": case[1],
                                         "algorithm": a,
                                         "threshold_db": empirical_threshold(h0[a][:, k], spec.pfa)})
    if write:
        out_dir = Path(out_dir or spec.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "threshold.json").write_text(json.dumps(result, indent=2) + "\n")
    return result
