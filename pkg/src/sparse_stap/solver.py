"""Joint sparse-profile / array-error estimation by the alternating direction method.

The problem solved is

    min  sum_l ||alpha_l||_1 + 1/(2 rho) sum_l ||r_l||^2
    s.t. Phi alpha_l + r_l = T x_l,   sum_m t_m = varsigma,

with ``T = I_N (x) diag(t)`` and ``t_m = 1 / c_m``. One sweep updates the
residuals, the profiles (one proximal-gradient/shrinkage step), the inverse
error vector ``t`` (closed-form equality-constrained least squares), and the
multipliers, in that order. Fixing ``t`` turns the same iteration into the
plain ADM (``t = 1``) or the ADMT oracle (``t = 1/c_true``).
"""
from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dictionary import SteeringDictionary, apply_T


class DegenerateChannelError(ValueError):
    """An array element carries no energy in any snapshot (``a_m == 0``)."""


@dataclass(frozen=True)
class SolverParams:
    """Parameters of the iteration.

    ``tau=None`` selects ``0.99 / lambda_max(Phi^H Phi)``; ``varsigma=None``
    selects ``M`` so that the error-free fixed point is ``t = 1``.
    ``data_scale`` rescales each batch to that RMS amplitude before iterating
    (profiles and multipliers are mapped back afterwards); ``None`` iterates
    on the raw data.
    """

    rho: float = 0.01
    beta: float = 0.1
    tau: float | None = None
    varsigma: complex | None = None
    zeta: float = 1e-4
    max_iter: int = 500
    data_scale: float | None = None

    def __post_init__(self):
        if not self.rho > 0 or not self.beta > 0:
            raise ValueError("rho and beta must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.varsigma is not None and abs(self.varsigma) == 0:
            raise ValueError("varsigma must be nonzero")
        if not 0 <= self.zeta < 1:
            raise ValueError("zeta must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.data_scale is not None and not self.data_scale > 0:
            raise ValueError("data_scale must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(d["varsigma"], complex):
            d["varsigma"] = [d["varsigma"].real, d["varsigma"].imag]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolverParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SolverParams field(s): {sorted(unknown)}")
        data = dict(data)
        vs = data.get("varsigma")
        if isinstance(vs, (list, tuple)):
            data["varsigma"] = complex(vs[0], vs[1])
        return cls(**data)

    def resolved_tau(self, dictionary: SteeringDictionary) -> float:
        if self.tau is not None:
            return self.tau
        return 0.99 / dictionary.max_eigenvalue(50)

    def resolved_varsigma(self, num_elements: int) -> complex:
        return complex(num_elements) if self.varsigma is None else complex(self.varsigma)


@dataclass
class SolverState:
    """Iterates: profiles ``upsilon`` (K x L), residuals ``gamma`` and
    multipliers ``lam`` (NM x L), inverse errors ``t`` (M,)."""

    upsilon: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    t: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, dictionary: SteeringDictionary, num_snapshots: int,
                t0: np.ndarray | None = None) -> "SolverState":
        nm, k = dictionary.shape
        t = np.ones(dictionary.M, dtype=complex) if t0 is None else np.array(t0, dtype=complex)
        return cls(np.zeros((k, num_snapshots), complex), np.zeros((nm, num_snapshots), complex),
                   np.zeros((nm, num_snapshots), complex), t)

    def copy(self) -> "SolverState":
        return SolverState(self.upsilon.copy(), self.gamma.copy(), self.lam.copy(),
                           self.t.copy(), self.iteration)


@dataclass
class SolveReport:
    profiles: np.ndarray
    t: np.ndarray
    iterations: int
    history: list[float]
    termination: str
    state: SolverState | None = field(default=None, repr=False)
    elapsed: float = 0.0

    @property
    def c(self) -> np.ndarray:
        return 1.0 / self.t

    def to_dict(self) -> dict:
        return {
            "termination": self.termination,
            "iterations": self.iterations,
            "relative_change": [float(v) for v in self.history],
            "elapsed_s": self.elapsed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def soft_threshold(v: np.ndarray, kappa: float) -> np.ndarray:
    """Complex shrinkage ``max(|v| - kappa, 0) v / |v|`` with ``0/0 = 0``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    v = np.asarray(v)
    mag = np.abs(v)
    shrunk = np.maximum(mag - kappa, 0.0)
    ratio = np.divide(shrunk, mag, out=np.zeros_like(mag), where=mag > 0)
    return v * ratio


# -- single sweep, one block at a time ------------------------------------------

def update_r(state: SolverState, dictionary: SteeringDictionary, X: np.ndarray,
             params: SolverParams) -> np.ndarray:
    rb = params.rho * params.beta
    tx = apply_T(state.t, X)
    return rb / (1 + rb) * (state.lam / params.beta - dictionary.apply(state.upsilon) + tx)


def profile_gradient(state: SolverState, dictionary: SteeringDictionary,
                     X: np.ndarray, params: SolverParams) -> np.ndarray:
    """``Phi^H (Phi Y + Gamma - T X - Lambda / beta)`` with ``Gamma`` already advanced."""
    tx = apply_T(state.t, X)
    return dictionary.adjoint(dictionary.apply(state.upsilon) + state.gamma - tx
                              - state.lam / params.beta)


def update_alpha(state: SolverState, dictionary: SteeringDictionary, X: np.ndarray,
                 params: SolverParams, tau: float | None = None) -> np.ndarray:
    tau = params.resolved_tau(dictionary) if tau is None else tau
    g = profile_gradient(state, dictionary, X, params)
    return soft_threshold(state.upsilon - tau * g, tau / params.beta)


def t_update_terms(Z: np.ndarray, X: np.ndarray, num_elements: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-element sums ``b_m = sum conj(x) z`` and ``a_m = sum |x|^2`` over pulses and snapshots."""
    X2 = X if X.ndim == 2 else X[:, None]
    Z2 = Z if Z.ndim == 2 else Z[:, None]
    n = X2.shape[0] // num_elements
    b = (X2.conj() * Z2).reshape(n, num_elements, -1).sum(axis=0).sum(axis=1)
    a = (X2.real ** 2 + X2.imag ** 2).reshape(n, num_elements, -1).sum(axis=0).sum(axis=1)
    return b, a


def solve_t(b: np.ndarray, a: np.ndarray, varsigma: complex) -> np.ndarray:
    """Closed-form minimizer of ``||z - Q t||^2`` subject to ``sum t = varsigma``."""
    if np.any(a <= 0):
        bad = np.flatnonzero(a <= 0).tolist()
        raise DegenerateChannelError(f"element(s) {bad} carry no energy; t is undetermined")
    gamma = (varsigma - np.sum(b / a)) / np.sum(1.0 / a)
    return (b + gamma) / a


def update_t(state: SolverState, dictionary: SteeringDictionary, X: np.ndarray,
             params: SolverParams) -> np.ndarray:
    """Requires ``upsilon`` and ``gamma`` already advanced; ``lam`` still at p."""
    Z = dictionary.apply(state.upsilon) + state.gamma - state.lam / params.beta
    b, a = t_update_terms(Z, X, dictionary.M)
    return solve_t(b, a, params.resolved_varsigma(dictionary.M))


def update_lambda(state: SolverState, dictionary: SteeringDictionary, X: np.ndarray,
                  params: SolverParams) -> np.ndarray:
    return state.lam - params.beta * (dictionary.apply(state.upsilon) + state.gamma
                                      - apply_T(state.t, X))


def constrained_ls_oracle(Z: np.ndarray, X: np.ndarray, varsigma: complex,
                          num_elements: int) -> np.ndarray:
    """Dense KKT solve of ``min sum_l ||z_l - Q_l t||^2 s.t. sum t = varsigma``.

    Forms ``[[sum Q^H Q, -1], [1^T, 0]] [t; gamma] = [sum Q^H z; varsigma]``
    explicitly. Only meant for small ``M``, as an independent check of the
    closed-form update.
    """
    X2 = X if X.ndim == 2 else X[:, None]
    Z2 = Z if Z.ndim == 2 else Z[:, None]
    nm, L = X2.shape
    m = num_elements
    sel = np.tile(np.eye(m), (nm // m, 1))
    H = np.zeros((m, m), complex)
    g = np.zeros(m, complex)
    for l in range(L):
        Q = X2[:, l][:, None] * sel
        H += Q.conj().T @ Q
        g += Q.conj().T @ Z2[:, l]
    kkt = np.zeros((m + 1, m + 1), complex)
    kkt[:m, :m] = H
    kkt[:m, m] = -1
    kkt[m, :m] = 1
    rhs = np.concatenate([g, [varsigma]])
    if np.linalg.cond(kkt) > 1e14:
        raise np.linalg.LinAlgError("singular KKT system")
    return np.linalg.solve(kkt, rhs)[:m]


# -- full solves -----------------------------------------------------------------

def _relative_change(old: np.ndarray, new: np.ndarray) -> float:
    num = float(np.sqrt(((old - new).real ** 2 + (old - new).imag ** 2).sum(axis=0)).sum())
    den = float(np.sqrt((new.real ** 2 + new.imag ** 2).sum(axis=0)).sum())
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def _data_scale(X: np.ndarray, params: SolverParams) -> float:
    if params.data_scale is None:
        return 1.0
    rms = np.sqrt(np.mean(X.real ** 2 + X.imag ** 2))
    return params.data_scale / rms if rms > 0 else 1.0


def _run(X: np.ndarray, dictionary: SteeringDictionary, params: SolverParams,
         t_fixed: np.ndarray | None, callback: Callable[[SolverState], None] | None,
         tau: float | None) -> SolveReport:
    start = time.perf_counter()
    X = np.asarray(X, dtype=complex)
    vec = X.ndim == 1
    X2 = X[:, None] if vec else X
    if X2.shape[0] != dictionary.shape[0]:
        raise ValueError(f"snapshot length {X2.shape[0]} != {dictionary.shape[0]}")
    L = X2.shape[1]
    estimate = t_fixed is None
    if not estimate and np.any(np.asarray(t_fixed) == 0):
        raise ValueError("t_fixed must have no zero entries")
    state = SolverState.initial(dictionary, L, t_fixed)

    def finish(termination, history):
        ups = state.upsilon / scale
        state.upsilon, state.gamma, state.lam = ups, state.gamma / scale, state.lam / scale
        return SolveReport(ups[:, 0] if vec else ups, state.t.copy(), state.iteration,
                           history, termination, state, time.perf_counter() - start)

    scale = 1.0
    if not np.any(X2):
        return finish("zero-data", [])
    scale = _data_scale(X2, params)
    Xs = X2 * scale

    M, beta = dictionary.M, params.beta
    tau = params.resolved_tau(dictionary) if tau is None else tau
    kappa = tau / beta
    rb = params.rho * beta
    coef = rb / (1 + rb)
    varsigma = params.resolved_varsigma(M)
    if estimate:
        _, a = t_update_terms(Xs, Xs, M)
        if np.any(a <= 0):
            raise DegenerateChannelError(
                f"element(s) {np.flatnonzero(a <= 0).tolist()} carry no energy; t is undetermined")
        inv_a = 1.0 / a
        inv_a_sum = np.sum(inv_a)
        n_pulses = Xs.shape[0] // M
        # (pulse, element, snapshot) views, so the t-step costs few array calls
        xs3 = Xs.reshape(n_pulses, M, L)
        xc3 = xs3.conj()

    ups, lam, t = state.upsilon, state.lam, state.t
    tx = apply_T(t, Xs)
    py = dictionary.apply(ups)
    history: list[float] = []
    termination = "max_iter"
    for p in range(params.max_iter):
        lb = lam / beta
        gamma = coef * (lb - py + tx)
        g = dictionary.adjoint(py + gamma - tx - lb)
        ups_new = soft_threshold(ups - tau * g, kappa)
        py = dictionary.apply(ups_new)
        pg = py + gamma
        if estimate:
            b = (xc3 * (pg - lb).reshape(xc3.shape)).sum(axis=(0, 2))
            t = (b + (varsigma - b @ inv_a) / inv_a_sum) * inv_a
            tx = (xs3 * t[:, None]).reshape(Xs.shape)
        lam = lam - beta * (pg - tx)
        change = _relative_change(ups, ups_new)
        ups = ups_new
        history.append(change)
        state.upsilon, state.gamma, state.lam, state.t, state.iteration = ups, gamma, lam, t, p + 1
        if callback is not None:
            callback(state)
        # an all-zero profile is not a fixed point while the multipliers still move
        if change <= params.zeta and ups.any():
            termination = "tolerance"
            break
    return finish(termination, history)


def solve_jie_adm(X: np.ndarray, dictionary: SteeringDictionary, params: SolverParams,
                  callback: Callable[[SolverState], None] | None = None,
                  tau: float | None = None) -> SolveReport:
    """Jointly estimate the profiles of all snapshots (columns of ``X``) and ``t``.

    ``X`` may be a single snapshot vector or an ``NM x L`` batch sharing one
    set of array errors. ``tau`` overrides the step size (skipping the power
    iteration when the caller already knows it).
    """
    return _run(X, dictionary, params, None, callback, tau)


def solve_adm_fixed_t(X: np.ndarray, dictionary: SteeringDictionary, params: SolverParams,
                      t_fixed: np.ndarray | None = None,
                      callback: Callable[[SolverState], None] | None = None,
                      tau: float | None = None) -> SolveReport:
    """Same iteration with ``t`` frozen; ``t_fixed=None`` means all ones (plain ADM)."""
    if t_fixed is None:
        t_fixed = np.ones(dictionary.M, dtype=complex)
    return _run(X, dictionary, params, np.asarray(t_fixed, dtype=complex), callback, tau)


def solve_single_snapshot(x: np.ndarray, dictionary: SteeringDictionary, params: SolverParams,
                          t_fixed: np.ndarray | None = None,
                          callback: Callable[[SolverState], None] | None = None,
                          tau: float | None = None) -> SolveReport:
    """Single-snapshot iteration written with vector quantities throughout.

    Kept separate from the batch driver so the two can be checked against
    each other; with one snapshot they must produce identical iterates.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ValueError("expected a single snapshot vector")
    nm, k = dictionary.shape
    M, beta = dictionary.M, params.beta
    start = time.perf_counter()
    t = np.ones(M, complex) if t_fixed is None else np.array(t_fixed, dtype=complex)
    alpha = np.zeros(k, complex)
    lam = np.zeros(nm, complex)
    r = np.zeros(nm, complex)
    state = SolverState(alpha[:, None], r[:, None], lam[:, None], t)
    if not np.any(x):
        return SolveReport(alpha, t, 0, [], "zero-data", state, time.perf_counter() - start)
    scale = _data_scale(x[:, None], params)
    xs = x * scale
    tau = params.resolved_tau(dictionary) if tau is None else tau
    rb = params.rho * beta
    varsigma = params.resolved_varsigma(M)
    n_pulses = nm // M
    if t_fixed is None:
        a = (xs.real ** 2 + xs.imag ** 2).reshape(n_pulses, M).sum(axis=0)
        if np.any(a <= 0):
            raise DegenerateChannelError("an element carries no energy; t is undetermined")
    history = []
    termination = "max_iter"
    iters = 0
    for p in range(params.max_iter):
        tx = apply_T(t, xs)
        r = rb / (1 + rb) * (lam / beta - dictionary.apply(alpha) + tx)
        g = dictionary.adjoint(dictionary.apply(alpha) + r - tx - lam / beta)
        alpha_new = soft_threshold(alpha - tau * g, tau / beta)
        phi_alpha = dictionary.apply(alpha_new)
        if t_fixed is None:
            z = phi_alpha + r - lam / beta
            b = (xs.conj() * z).reshape(n_pulses, M).sum(axis=0)
            inv_a = 1.0 / a
            gam = (varsigma - b @ inv_a) / np.sum(inv_a)
            t = (b + gam) * inv_a
            tx = apply_T(t, xs)
        lam = lam - beta * (phi_alpha + r - tx)
        change = _relative_change(alpha[:, None], alpha_new[:, None])
        alpha = alpha_new
        history.append(change)
        iters = p + 1
        state = SolverState(alpha[:, None], r[:, None], lam[:, None], t, iters)
        if callback is not None:
            callback(state)
        if change <= params.zeta and alpha.any():
            termination = "tolerance"
            break
    state = SolverState(alpha[:, None] / scale, r[:, None] / scale, lam[:, None] / scale, t, iters)
    return SolveReport(alpha / scale, t, iters, history, termination, state,
                       time.perf_counter() - start)


def align_scale(estimate: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Least-squares complex scalar ``s`` applied to ``estimate`` to best match ``truth``."""
    estimate = np.asarray(estimate)
    s = np.vdot(estimate, truth) / np.vdot(estimate, estimate)
    return s * estimate


def calibration_error(c_est: np.ndarray, c_true: np.ndarray) -> float:
    """Relative error of ``c_est`` after optimal complex scaling."""
    return float(np.linalg.norm(align_scale(c_est, c_true) - c_true) / np.linalg.norm(c_true))
