"""Spatio-Doppler grid and the over-complete space-time steering dictionary.

Column ``q = k_d * N_s + k_s`` of the dictionary is ``v_d(f_d[k_d]) (x) v_s(f_s[k_s])``
(Doppler-major enumeration). Columns are raw steering vectors with norm
``sqrt(N*M)``.

Because every column is a Kronecker product, ``Phi @ alpha`` equals
``vec(V_d A V_s^T)`` with ``A`` the profile reshaped to ``(N_d, N_s)``; the
dictionary is applied that way when it is too large to materialize.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import RadarConfig, steering_matrix

DENSE_COLUMN_LIMIT = 4096


@dataclass(frozen=True)
class AngleDopplerGrid:
    num_elements: int
    num_pulses: int
    n_s: int
    n_d: int

    @property
    def rho_s(self) -> float:
        return self.n_s / self.num_elements

    @property
    def rho_d(self) -> float:
        return self.n_d / self.num_pulses

    @property
    def size(self) -> int:
        return self.n_d * self.n_s

    @property
    def doppler_spacing(self) -> float:
        return 1.0 / self.n_d

    @property
    def spatial_spacing(self) -> float:
        return 1.0 / self.n_s

    @property
    def doppler_values(self) -> np.ndarray:
        return np.arange(self.n_d) / self.n_d - 0.5

    @property
    def spatial_values(self) -> np.ndarray:
        return np.arange(self.n_s) / self.n_s - 0.5

    def column(self, k_d: int, k_s: int) -> int:
        return k_d * self.n_s + k_s

    def frequencies(self, q: int) -> tuple[float, float]:
        k_d, k_s = divmod(q, self.n_s)
        return float(self.doppler_values[k_d]), float(self.spatial_values[k_s])

    def nearest_doppler_index(self, f_d: float) -> int:
        d = (self.doppler_values - f_d + 0.5) % 1.0 - 0.5
        return int(np.argmin(np.abs(d)))

    def nearest_spatial_index(self, f_s: float) -> int:
        d = (self.spatial_values - f_s + 0.5) % 1.0 - 0.5
        return int(np.argmin(np.abs(d)))

    def snap(self, f_d: float, f_s: float) -> tuple[float, float]:
        """Nearest grid frequencies to ``(f_d, f_s)``."""
        return (float(self.doppler_values[self.nearest_doppler_index(f_d)]),
                float(self.spatial_values[self.nearest_spatial_index(f_s)]))

    def to_dict(self) -> dict:
        return {
            "num_elements": self.num_elements,
            "num_pulses": self.num_pulses,
            "n_s": self.n_s,
            "n_d": self.n_d,
            "rho_s": self.rho_s,
            "rho_d": self.rho_d,
            "doppler_spacing": self.doppler_spacing,
            "spatial_spacing": self.spatial_spacing,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _grid_count(rho: float, n: int, name: str) -> int:
    if not rho > 1:
        raise ValueError(f"{name} must exceed 1, got {rho}")
    count = rho * n
    if not math.isclose(count, round(count), abs_tol=1e-9):
        raise ValueError(f"{name} * {n} = {count} is not an integer")
    return int(round(count))


def build_grid(cfg: RadarConfig | tuple[int, int], rho_s: float,
               rho_d: float) -> AngleDopplerGrid:
    """Grid for a config or an explicit ``(num_elements, num_pulses)`` pair."""
    if isinstance(cfg, RadarConfig):
        m, n = cfg.num_elements, cfg.num_pulses
    else:
        m, n = cfg
    return AngleDopplerGrid(m, n, _grid_count(rho_s, m, "rho_s"), _grid_count(rho_d, n, "rho_d"))


class SteeringDictionary:
    """The ``NM x (N_d N_s)`` steering dictionary with forward/adjoint products.

    Immutable after construction. The dense matrix is kept only when the
    number of columns is at most ``dense_limit``; otherwise products go
    through the Kronecker factors.
    """

    def __init__(self, grid: AngleDopplerGrid, dense_limit: int = DENSE_COLUMN_LIMIT):
        self.grid = grid
        self.M = grid.num_elements
        self.N = grid.num_pulses
        self.shape = (self.M * self.N, grid.size)
        self._vd = steering_matrix(grid.doppler_values, self.N)
        self._vs = steering_matrix(grid.spatial_values, self.M)
        self._vd_h = self._vd.conj().T.copy()
        self._vs_h = self._vs.conj().T.copy()
        self._vs_t = self._vs.T.copy()
        self._vs_c = self._vs.conj()
        if grid.size <= dense_limit:
            self._dense = (self._vd[:, None, :, None] * self._vs[None, :, None, :]).reshape(self.shape)
            self._dense_h = self._dense.conj().T.copy()
        else:
            self._dense = None
            self._dense_h = None
        for arr in (self._vd, self._vs, self._vd_h, self._vs_h, self._vs_t, self._vs_c,
                    self._dense, self._dense_h):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        return (self._vd[:, None, :, None] * self._vs[None, :, None, :]).reshape(self.shape)

    def column(self, q: int) -> np.ndarray:
        k_d, k_s = divmod(q, self.grid.n_s)
        return (self._vd[:, k_d][:, None] * self._vs[:, k_s][None, :]).ravel()

    def apply(self, alpha: np.ndarray) -> np.ndarray:
        """``Phi @ alpha`` for a profile vector or a ``K x L`` profile matrix."""
        alpha = np.asarray(alpha)
        if alpha.shape[0] != self.shape[1]:
            raise ValueError(f"profile length {alpha.shape[0]} != {self.shape[1]} columns")
        vec = alpha.ndim == 1
        a = alpha[:, None] if vec else alpha
        if self._dense is not None:
            out = self._dense @ a
        else:
            lcols = a.shape[1]
            # (N_d, N_s, L) -> V_d over Doppler, then V_s over space
            b = (self._vd @ a.reshape(self.grid.n_d, -1)).reshape(self.N, self.grid.n_s, lcols)
            out = np.matmul(self._vs, b).reshape(self.shape[0], lcols)
        return out[:, 0] if vec else out

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``Phi^H @ y`` for a snapshot vector or an ``NM x L`` matrix."""
        y = np.asarray(y)
        if y.shape[0] != self.shape[0]:
            raise ValueError(f"snapshot length {y.shape[0]} != {self.shape[0]} rows")
        vec = y.ndim == 1
        a = y[:, None] if vec else y
        if self._dense_h is not None:
            out = self._dense_h @ a
        else:
            lcols = a.shape[1]
            b = np.matmul(self._vs_h, a.reshape(self.N, self.M, lcols))
            out = (self._vd_h @ b.reshape(self.N, -1)).reshape(self.shape[1], lcols)
        return out[:, 0] if vec else out

    def max_eigenvalue(self, num_iter: int = 50, seed: int = 0) -> float:
        """Power-iteration estimate of the largest eigenvalue of ``Phi^H Phi``."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.shape[1]) + 1j * rng.standard_normal(self.shape[1])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(num_iter):
            w = self.adjoint(self.apply(v))
            lam = float(np.real(np.vdot(v, w)))
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return 0.0
            v = w / nrm
        return lam


def apply_T(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``(I_N (x) diag(t)) x`` for a snapshot vector or ``NM x L`` matrix."""
    t = np.asarray(t)
    x = np.asarray(x)
    m = t.shape[0]
    if x.shape[0] % m:
        raise ValueError(f"snapshot length {x.shape[0]} is not a multiple of {m}")
    shaped = x.reshape(x.shape[0] // m, m, *x.shape[1:])
    tt = t.reshape(m, *([1] * (x.ndim - 1)))
    return (shaped * tt).reshape(x.shape)


class QOperator:
    """``Q = diag(x) (1_N (x) I_M)``, so that ``Q t = T x``."""

    def __init__(self, x: np.ndarray, num_elements: int):
        x = np.asarray(x)
        if x.ndim != 1 or x.shape[0] % num_elements:
            raise ValueError("x must be a snapshot vector whose length is a multiple of M")
        self.x = x
        self.M = num_elements
        self.N = x.shape[0] // num_elements
        self.shape = (x.shape[0], num_elements)

    def matvec(self, t: np.ndarray) -> np.ndarray:
        return apply_T(t, self.x)

    def rmatvec(self, z: np.ndarray) -> np.ndarray:
        """``Q^H z``: entry m is ``sum_n conj(x_{nM+m}) z_{nM+m}``."""
        return (self.x.conj() * z).reshape(self.N, self.M).sum(axis=0)

    def gram_diagonal(self) -> np.ndarray:
        """Diagonal of ``Q^H Q``: entry m is ``sum_n |x_{nM+m}|^2``."""
        return (np.abs(self.x) ** 2).reshape(self.N, self.M).sum(axis=0)

    def dense(self) -> np.ndarray:
        sel = np.tile(np.eye(self.M), (self.N, 1))
        return self.x[:, None] * sel


def q_operator(x: np.ndarray, num_elements: int) -> QOperator:
    return QOperator(x, num_elements)


def write_profile_csv(path, grid: AngleDopplerGrid, profile: np.ndarray) -> None:
    """Write ``f_d, f_s, magnitude`` rows, one per grid point, Doppler-major."""
    profile = np.asarray(profile)
    if profile.shape != (grid.size,):
        raise ValueError(f"profile shape {profile.shape} does not match grid size {grid.size}")
    fd = np.repeat(grid.doppler_values, grid.n_s)
    fs = np.tile(grid.spatial_values, grid.n_d)
    mag = np.abs(profile)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_d", "f_s", "magnitude"])
        for row in zip(fd, fs, mag):
            w.writerow([repr(float(v)) for v in row])


def read_profile_csv(path) -> np.ndarray:
    """Rows of ``(f_d, f_s, magnitude)`` as a float array."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
