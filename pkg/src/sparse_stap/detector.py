"""Median-CFAR detection on reconstructed spatio-Doppler profiles.

For a candidate Doppler frequency the test window spans one resolution cell,
``(f_d - 1/2N, f_d + 1/2N) x (f_s0 - 1/2M, f_s0 + 1/2M)``, at the mainlobe
spatial frequency ``f_s0``. The window statistic is the sum of magnitudes of
the profile entries inside it; the CUT statistic is compared, in dB, with
the median statistic of the secondary range bins.

Degenerate windows follow extended-real arithmetic: an empty CUT window
gives ``-inf`` dB (always H0) and a zero secondary median with a nonzero CUT
gives ``+inf`` dB (always H1).
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .dictionary import AngleDopplerGrid

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    mainlobe_spatial: float = 0.0
    num_secondary: int = 10
    num_guard: int = 2
    threshold_db: float = 10.0

    def __post_init__(self):
        if self.num_secondary < 1:
            raise ValueError("num_secondary must be >= 1")
        if self.num_guard < 0:
            raise ValueError("num_guard must be >= 0")

    @staticmethod
    def doppler_half_width(grid: AngleDopplerGrid) -> float:
        return 1.0 / (2 * grid.num_pulses)

    @staticmethod
    def spatial_half_width(grid: AngleDopplerGrid) -> float:
        return 1.0 / (2 * grid.num_elements)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown DetectorConfig field(s): {sorted(unknown)}")
        return cls(**data)


def _inside(values: np.ndarray, center: float, half_width: float) -> np.ndarray:
    return np.abs(values - center) < half_width - _EDGE_TOL


def window_masks(grid: AngleDopplerGrid, f_d: float, f_s0: float) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks over Doppler and spatial grid values inside the open window."""
    return (_inside(grid.doppler_values, f_d, DetectorConfig.doppler_half_width(grid)),
            _inside(grid.spatial_values, f_s0, DetectorConfig.spatial_half_width(grid)))


def extract_window(profile: np.ndarray, grid: AngleDopplerGrid, f_d: float,
                   f_s0: float = 0.0) -> np.ndarray:
    """Profile entries whose grid frequencies lie strictly inside the window."""
    dmask, smask = window_masks(grid, f_d, f_s0)
    p = np.asarray(profile).reshape(grid.n_d, grid.n_s)
    return p[np.ix_(dmask, smask)].ravel()


def test_statistic(entries) -> float:
    """Sum of magnitudes; 0 for an empty window."""
    entries = np.asarray(entries)
    return float(np.abs(entries).sum()) if entries.size else 0.0


test_statistic.__test__ = False  # not a pytest test


def window_statistics(profiles: np.ndarray, grid: AngleDopplerGrid,
                      f_s0: float = 0.0) -> np.ndarray:
    """Window statistic at every grid Doppler value.

    ``profiles`` is a profile vector or a ``K x L`` matrix; the result has
    shape ``(N_d,)`` or ``(N_d, L)``.
    """
    profiles = np.asarray(profiles)
    vec = profiles.ndim == 1
    p = np.abs(profiles).reshape(grid.n_d, grid.n_s, -1)
    _, smask = window_masks(grid, 0.0, f_s0)
    rows = p[:, smask, :].sum(axis=1)
    fd = grid.doppler_values
    band = np.abs(fd[:, None] - fd[None, :]) < DetectorConfig.doppler_half_width(grid) - _EDGE_TOL
    out = band.astype(float) @ rows
    return out[:, 0] if vec else out


def secondary_median(stats) -> float:
    """Median with the mean of the two central order statistics for even counts."""
    return float(np.median(np.asarray(stats, dtype=float)))


def cfar_statistic_db(theta_cut, theta_secondary) -> np.ndarray | float:
    """``20 log10(theta_cut) - 20 log10(median)`` with the degenerate conventions.

    ``theta_secondary`` has the secondary index on its last axis; vectorizes
    over leading axes.
    """
    cut = np.asarray(theta_cut, dtype=float)
    med = np.median(np.asarray(theta_secondary, dtype=float), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = 20 * np.log10(cut) - 20 * np.log10(med)
    stat = np.where(cut <= 0, -np.inf, np.where(med <= 0, np.inf, stat))
    return float(stat) if stat.ndim == 0 else stat


def median_cfar(theta_cut: float, theta_secondary: Sequence[float], threshold_db: float) -> bool:
    """True (H1) when the CUT exceeds the secondary median by more than ``threshold_db``."""
    if theta_cut <= 0:
        return False
    if secondary_median(theta_secondary) <= 0:
        return True
    return bool(cfar_statistic_db(theta_cut, theta_secondary) > threshold_db)


def decide(stat_db, threshold_db: float):
    """Vectorized decision on precomputed statistics (``+inf`` always H1)."""
    stat_db = np.asarray(stat_db, dtype=float)
    return (stat_db > threshold_db) | np.isposinf(stat_db)


@dataclass
class DetectionReport:
    doppler: np.ndarray
    theta_cut: np.ndarray
    median_secondary: np.ndarray
    statistic_db: np.ndarray
    decisions: np.ndarray
    threshold_db: float

    def __len__(self) -> int:
        return len(self.doppler)

    def detections(self) -> np.ndarray:
        return self.doppler[self.decisions]

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f_d", "statistic_db", "decision"])
            for f, s, d in zip(self.doppler, self.statistic_db, self.decisions):
                w.writerow([repr(float(f)), repr(float(s)), "H1" if d else "H0"])


def detect_doppler_sweep(cut_profile: np.ndarray, secondary_profiles: np.ndarray,
                         grid: AngleDopplerGrid, cfg: DetectorConfig) -> DetectionReport:
    """Median-CFAR decision at the mainlobe for every grid Doppler value.

    ``secondary_profiles`` is ``K x L`` (one column per secondary range bin,
    guard cells already excluded).
    """
    sec = np.asarray(secondary_profiles)
    if sec.ndim == 1:
        sec = sec[:, None]
    theta_cut = window_statistics(cut_profile, grid, cfg.mainlobe_spatial)
    theta_sec = window_statistics(sec, grid, cfg.mainlobe_spatial)
    stat = cfar_statistic_db(theta_cut, theta_sec)
    return DetectionReport(grid.doppler_values, theta_cut, np.median(theta_sec, axis=1),
                           stat, decide(stat, cfg.threshold_db), cfg.threshold_db)


def select_secondary(num_bins: int, cut_index: int, num_guard: int, num_secondary: int) -> list[int]:
    """Range-bin indices nearest the CUT, skipping ``num_guard`` bins on each side."""
    picks: list[int] = []
    offset = num_guard + 1
    while len(picks) < num_secondary:
        grew = False
        for idx in (cut_index - offset, cut_index + offset):
            if 0 <= idx < num_bins and len(picks) < num_secondary:
                picks.append(idx)
                grew = True
        if not grew and (cut_index - offset < 0 and cut_index + offset >= num_bins):
            raise ValueError("not enough range bins for the requested secondary data")
        offset += 1
    return sorted(picks)


# -- threshold calibration -------------------------------------------------------

def threshold_rank(num_trials: int, pfa: float) -> int:
    """1-based order statistic used as the threshold: ``ceil((1 - pfa) n)``."""
    if not 0 < pfa <= 1:
        raise ValueError("pfa must lie in (0, 1]")
    return max(math.ceil((1 - pfa) * num_trials - 1e-9), 0)


def empirical_threshold(h0_stats, pfa: float) -> float:
    """Empirical ``(1 - pfa)`` quantile of H0 statistics (an order statistic).

    ``pfa = 1`` returns ``-inf``.
    """
    stats = np.sort(np.asarray(h0_stats, dtype=float))
    if stats.size == 0:
        raise ValueError("no H0 statistics")
    if stats.size * pfa < 10:
        warnings.warn(f"only {stats.size} trials for pfa={pfa}; the quantile is unstable",
                      RuntimeWarning, stacklevel=2)
    k = threshold_rank(stats.size, pfa)
    return -np.inf if k == 0 else float(stats[k - 1])


class Scenario(Protocol):
    def h0_statistic(self, rng: np.random.Generator) -> float: ...


def calibrate_threshold(scenario: Scenario | Callable[[np.random.Generator], float],
                        pfa: float, num_trials: int, rng: np.random.Generator) -> float:
    """Run ``num_trials`` H0 trials and return the empirical threshold in dB."""
    draw = scenario.h0_statistic if hasattr(scenario, "h0_statistic") else scenario
    stats = [draw(rng) for _ in range(num_trials)]
    return empirical_threshold(stats, pfa)


def false_alarm_rate(h0_stats, threshold_db: float) -> float:
    return float(np.mean(decide(h0_stats, threshold_db)))


def calibration_record(pfa: float, num_trials: int, threshold_db: float, seed) -> str:
    return json.dumps({"pfa": pfa, "trials": num_trials, "threshold_db": threshold_db,
                       "seed": seed}, indent=2)
