"""Synthetic airborne radar scenes for a side-looking uniform linear array.

Snapshots are length ``N*M`` complex vectors ordered pulse-major,
element-minor: sample ``(n, m)`` lives at index ``n*M + m`` (0-based), which
matches the Kronecker convention ``v_d (x) v_s``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def _half_wavelength_default() -> float:
    return SPEED_OF_LIGHT / 1.24e9 / 2


@dataclass(frozen=True)
class RadarConfig:
    """Array, waveform and platform parameters.

    Defaults are the side-looking L-band system used throughout the
    experiments (10 elements, 10 pulses, 1.24 GHz, PRF 1984 Hz, 100 m/s).
    ``cnr_db`` is the clutter-to-noise ratio of a single patch at a single
    element and pulse.
    """

    num_elements: int = 10
    num_pulses: int = 10
    carrier_wavelength: float = SPEED_OF_LIGHT / 1.24e9
    element_spacing: float = dataclasses.field(default_factory=_half_wavelength_default)
    prf: float = 1984.0
    platform_velocity: float = 100.0
    platform_height: float = 3000.0
    cnr_db: float = 30.0
    noise_power: float = 1.0
    num_clutter_patches: int = 361

    def __post_init__(self):
        if self.num_elements < 2 or self.num_pulses < 2:
            raise ValueError("need at least 2 elements and 2 pulses")
        if self.num_clutter_patches < 1:
            raise ValueError("num_clutter_patches must be >= 1")
        for name in ("carrier_wavelength", "element_spacing", "prf",
                     "platform_velocity", "platform_height", "noise_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def size(self) -> int:
        return self.num_elements * self.num_pulses

    @property
    def clutter_slope(self) -> float:
        """Ratio f_d / f_s along the clutter ridge."""
        return 2 * self.platform_velocity / (self.prf * self.element_spacing)

    @property
    def patch_power(self) -> float:
        return self.noise_power * 10 ** (self.cnr_db / 10)

    def with_updates(self, **changes) -> "RadarConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RadarConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown RadarConfig field(s): {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RadarConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GainPhaseError:
    """Per-element multiplicative error ``c_m = (1 + eps_m) exp(j phi_m)``."""

    c: np.ndarray
    eps_max: float = 0.0
    phi_max: float = 0.0

    @property
    def t(self) -> np.ndarray:
        """Inverse errors ``1 / c_m``, the calibration unknowns."""
        return 1.0 / self.c

    @classmethod
    def identity(cls, num_elements: int) -> "GainPhaseError":
        return cls(np.ones(num_elements, dtype=complex))


@dataclass(frozen=True)
class TargetSpec:
    normalized_doppler: float
    normalized_spatial: float = 0.0
    snr_db: float = 0.0


def wrap_frequency(f):
    """Map normalized frequencies onto [-0.5, 0.5)."""
    return (np.asarray(f) + 0.5) % 1.0 - 0.5


def spatial_steering(f_s: float, num_elements: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(num_elements) * f_s)


def temporal_steering(f_d: float, num_pulses: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(num_pulses) * f_d)


def space_time_steering(f_d: float, f_s: float, num_pulses: int,
                        num_elements: int) -> np.ndarray:
    vd = temporal_steering(f_d, num_pulses)
    vs = spatial_steering(f_s, num_elements)
    return (vd[:, None] * vs[None, :]).ravel()


def steering_matrix(freqs, length: int) -> np.ndarray:
    """Columns ``exp(j 2 pi k f)`` for k = 0..length-1, one per frequency."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    return np.exp(2j * np.pi * np.outer(np.arange(length), freqs))


def error_matrix_diag(c: np.ndarray, num_pulses: int) -> np.ndarray:
    """Diagonal of ``I_N (x) diag(c)``."""
    return np.tile(np.asarray(c), num_pulses)


def draw_gp_errors(eps_max: float, phi_max: float, num_elements: int,
                   rng: np.random.Generator) -> GainPhaseError:
    if not 0 <= eps_max < 1:
        raise ValueError("eps_max must lie in [0, 1) so that every gain is nonzero")
    if phi_max < 0:
        raise ValueError("phi_max must be nonnegative")
    eps = rng.uniform(-eps_max, eps_max, num_elements)
    phi = rng.uniform(-phi_max, phi_max, num_elements)
    return GainPhaseError((1 + eps) * np.exp(1j * phi), eps_max, phi_max)


def patch_angles(cfg: RadarConfig) -> np.ndarray:
    n = cfg.num_clutter_patches
    if n == 1:
        return np.zeros(1)
    return np.linspace(-np.pi / 2, np.pi / 2, n)


def patch_frequencies(cfg: RadarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (Doppler, spatial) frequency of every clutter patch."""
    s = np.sin(patch_angles(cfg))
    f_s = cfg.element_spacing / cfg.carrier_wavelength * s
    f_d = 2 * cfg.platform_velocity * s / (cfg.carrier_wavelength * cfg.prf)
    return wrap_frequency(f_d), wrap_frequency(f_s)


@lru_cache(maxsize=16)
def _clutter_steering(cfg: RadarConfig) -> np.ndarray:
    f_d, f_s = patch_frequencies(cfg)
    vd = steering_matrix(f_d, cfg.num_pulses)
    vs = steering_matrix(f_s, cfg.num_elements)
    v = (vd[:, None, :] * vs[None, :, :]).reshape(cfg.size, -1)
    v.setflags(write=False)
    return v


def clutter_steering(cfg: RadarConfig) -> np.ndarray:
    """Error-free space-time steering vectors of all patches, ``NM x N_c``."""
    return _clutter_steering(cfg)


def _complex_normal(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    scale = np.sqrt(var / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_clutter(cfg: RadarConfig, c: GainPhaseError | None,
                       rng: np.random.Generator, num_snapshots: int | None = None) -> np.ndarray:
    """Clutter returns ``C sum_k alpha_k v_k`` with fresh patch amplitudes.

    Returns a vector, or an ``NM x L`` matrix when ``num_snapshots`` is given
    (amplitudes redrawn independently per snapshot).
    """
    v = clutter_steering(cfg)
    shape = (v.shape[1],) if num_snapshots is None else (v.shape[1], num_snapshots)
    amps = _complex_normal(rng, shape, cfg.patch_power)
    x = v @ amps
    if c is not None:
        d = error_matrix_diag(c.c, cfg.num_pulses)
        x = d * x if num_snapshots is None else d[:, None] * x
    return x


def clutter_covariance(cfg: RadarConfig, c: GainPhaseError | None = None) -> np.ndarray:
    v = clutter_steering(cfg)
    if c is not None:
        v = error_matrix_diag(c.c, cfg.num_pulses)[:, None] * v
    r = cfg.patch_power * (v @ v.conj().T)
    return (r + r.conj().T) / 2


def target_return(cfg: RadarConfig, c: GainPhaseError | None, target: TargetSpec,
                  rng: np.random.Generator) -> np.ndarray:
    amp = np.sqrt(cfg.noise_power * 10 ** (target.snr_db / 10))
    phase = np.exp(2j * np.pi * rng.uniform())
    v = space_time_steering(target.normalized_doppler, target.normalized_spatial,
                            cfg.num_pulses, cfg.num_elements)
    if c is not None:
        v = error_matrix_diag(c.c, cfg.num_pulses) * v
    return amp * phase * v


def synthesize_snapshot(cfg: RadarConfig, c: GainPhaseError | None,
                        targets: Sequence[TargetSpec], rng: np.random.Generator) -> np.ndarray:
    """One range bin: targets + clutter + noise. Empty ``targets`` is H0.

    Noise is added after the array errors and is therefore not multiplied by c.
    """
    x = synthesize_clutter(cfg, c, rng)
    for tgt in targets:
        x = x + target_return(cfg, c, tgt, rng)
    return x + _complex_normal(rng, cfg.size, cfg.noise_power)


def synthesize_batch(cfg: RadarConfig, c: GainPhaseError | None, num_snapshots: int,
                     rng: np.random.Generator,
                     cut_targets: Sequence[TargetSpec] = ()) -> np.ndarray:
    """``NM x L`` range-bin stack sharing one GP error; targets go in column 0."""
    x = synthesize_clutter(cfg, c, rng, num_snapshots)
    x = x + _complex_normal(rng, x.shape, cfg.noise_power)
    for tgt in cut_targets:
        x[:, 0] += target_return(cfg, c, tgt, rng)
    return x
