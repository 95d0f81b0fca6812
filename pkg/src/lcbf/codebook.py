"""Radiation patterns, the LC steering codebook and analog pattern selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEG = np.pi / 180.0

LC_STEERED = "lc_steered"
GPP_ELEMENT = "gpp_element"
ISOTROPIC = "isotropic"

# TR 38.901 single-element constants
GPP_HPBW = 65.0 * DEG
GPP_PEAK_DB = 8.0
GPP_FLOOR_DB = -30.0


@dataclass(frozen=True)
class RadiationPattern:
    """Directional power gain of one analog state.

    For ``lc_steered`` the gain in dB is a parabola in azimuth offset,
    ``peak - 12 (offset / hpbw)^2``, clipped at ``peak + floor_dB``.
    """

    steer_azimuth: float = 0.0
    peak_gain_dB: float = 0.0
    hpbw: float = 2 * np.pi
    floor_dB: float = -30.0
    kind: str = ISOTROPIC

    def __post_init__(self):
        if self.hpbw <= 0:
            raise ValueError("hpbw must be positive")
        if self.floor_dB >= 0:
            raise ValueError("floor_dB must be negative")
        if self.kind not in (LC_STEERED, GPP_ELEMENT, ISOTROPIC):
            raise ValueError(f"unknown pattern kind {self.kind!r}")


@dataclass(frozen=True)
class Codebook:
    patterns: tuple[RadiationPattern, ...]

    def __post_init__(self):
        if len(self.patterns) < 1:
            raise ValueError("codebook must hold at least one pattern")
        steer = [p.steer_azimuth for p in self.patterns]
        if len(steer) > 1 and not all(a < b for a, b in zip(steer, steer[1:])):
            raise ValueError("steering angles must be strictly increasing")

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __getitem__(self, i):
        return self.patterns[i]


def build_lc_codebook(n_p: int = 19, steer_min: float = -45 * DEG, steer_max: float = 45 * DEG,
                      peak_gain_dB: float = 6.87, hpbw: float = 5 * DEG,
                      floor_dB: float = -20.0) -> Codebook:
    if n_p < 2:
        raise ValueError("n_p must be >= 2; use single_pattern_codebook for one state")
    if steer_max <= steer_min:
        raise ValueError("steer_max must exceed steer_min")
    if hpbw <= 0:
        raise ValueError("hpbw must be positive")
    angles = np.linspace(steer_min, steer_max, n_p)
    return Codebook(tuple(RadiationPattern(float(a), peak_gain_dB, hpbw, floor_dB, LC_STEERED) for a in angles))


def gain_matched_hpbw(peak_gain_dB: float) -> float:
    """Azimuth HPBW giving ``peak_gain_dB`` the same gain-beamwidth product as
    the TR 38.901 element (8 dBi at 65 degrees)."""
    return GPP_HPBW * 10.0 ** ((GPP_PEAK_DB - peak_gain_dB) / 10.0)


def build_3gpp_element() -> RadiationPattern:
    return RadiationPattern(0.0, GPP_PEAK_DB, GPP_HPBW, GPP_FLOOR_DB, GPP_ELEMENT)


def isotropic_pattern() -> RadiationPattern:
    return RadiationPattern(kind=ISOTROPIC)


def single_pattern_codebook(pattern: RadiationPattern) -> Codebook:
    return Codebook((pattern,))


def _wrap(x):
    return np.angle(np.exp(1j * np.asarray(x, dtype=float)))


def pattern_gain_db(pattern: RadiationPattern, theta, phi):
    """Gain in dBi; vectorized over ``theta``/``phi``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    if pattern.kind == ISOTROPIC:
        g = np.zeros(phi.shape)
        return g if g.ndim else 0.0
    off = _wrap(phi - pattern.steer_azimuth)
    if pattern.kind == LC_STEERED:
        g = pattern.peak_gain_dB - np.minimum(12.0 * (off / pattern.hpbw) ** 2, -pattern.floor_dB)
    else:
        # TR 38.901 Table 7.3-1: horizontal and vertical cuts combined, 30 dB cap
        a_h = -np.minimum(12.0 * (off / GPP_HPBW) ** 2, -GPP_FLOOR_DB)
        a_v = -np.minimum(12.0 * ((theta - np.pi / 2) / GPP_HPBW) ** 2, -GPP_FLOOR_DB)
        g = pattern.peak_gain_dB - np.minimum(-(a_h + a_v), -pattern.floor_dB)
    return g if np.ndim(g) else float(g)


def pattern_gain(pattern: RadiationPattern, theta, phi):
    """Linear power gain."""
    g = 10.0 ** (np.asarray(pattern_gain_db(pattern, theta, phi)) / 10.0)
    return g if g.ndim else float(g)


def frobenius_gain(H: np.ndarray) -> float:
    return float(np.linalg.norm(H) ** 2)


def select_pattern(codebook: Codebook, channel_provider: Callable[[int], np.ndarray],
                   W_provider: Callable[[np.ndarray], np.ndarray], sigma2: float,
                   criterion: str = "se") -> tuple[int, float]:
    """Exhaustive analog selection.

    Returns the 1-based index of the best pattern and its score. Ties go to
    the lowest index. With ``criterion="frobenius"`` the score is the
    channel's squared Frobenius norm and ``W_provider`` is not called.
    """
    from .bf_core import spectral_efficiency

    scores = []
    for p in range(1, len(codebook) + 1):
        H = channel_provider(p)
        if criterion == "se":
            scores.append(spectral_efficiency(H, W_provider(H), sigma2))
        elif criterion == "frobenius":
            scores.append(frobenius_gain(H))
        else:
            raise ValueError(f"unknown selection criterion {criterion!r}")
    return argmax_first(scores) + 1, float(max(scores))


def argmax_first(values: Sequence[float]) -> int:
    """0-based index of the first maximum."""
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def dump_rows(codebook: Codebook, resolution_deg: float = 0.5, span_deg: float = 180.0):
    """Rows of ``(pattern_idx, steer_deg, gain_dB...)`` over an azimuth grid."""
    grid = np.arange(-span_deg, span_deg + resolution_deg / 2, resolution_deg)
    header = ["pattern_idx", "steer_deg"] + [f"{a:g}" for a in grid]
    rows = []
    for i, p in enumerate(codebook, start=1):
        g = pattern_gain_db(p, np.pi / 2, grid * DEG)
        rows.append([i, f"{p.steer_azimuth / DEG:.6g}"] + [f"{v:.6f}" for v in g])
    return header, rows
