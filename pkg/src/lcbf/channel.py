"""Synthetic multipath channels, pattern-weighted channel matrices and
channel-estimation error.

Angle conventions
-----------------
All azimuths stored on a :class:`Path` or a radiation pattern are measured
from the BS boresight (broadside of the linear array), so the codebook's
-45..+45 degree steering grid and the user sector share one frame. The
elevation ``theta`` is the polar angle, ``pi/2`` being the horizontal plane.
:func:`array_response` keeps the textbook ``sin(theta) cos(phi)`` phase law
with ``phi`` taken from the array axis; :func:`assemble_channel` rotates
boresight azimuths onto the axis frame before calling it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Link-level constants shared by every stage.

    ``P`` and ``sigma2`` are in watts; spacings in wavelengths.
    """

    M: int = 48
    K: int = 4
    N_k: int = 4
    f_c: float = 108e9
    d_t_over_lambda: float = 0.5
    d_r_over_lambda: float = 0.5
    P: float = 1.0
    sigma2: float = 1e-12

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.N_k < 1:
            raise ValueError("M, K and N_k must be positive")
        if self.M < self.N:
            raise ValueError(f"need M >= N, got M={self.M}, N={self.N}")
        if self.f_c <= 0 or self.P <= 0 or self.sigma2 <= 0:
            raise ValueError("f_c, P and sigma2 must be positive")

    @property
    def N(self) -> int:
        return self.K * self.N_k

    @property
    def user_slices(self) -> list[slice]:
        return [slice(k * self.N_k, (k + 1) * self.N_k) for k in range(self.K)]


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of the synthetic path generator (angles in degrees)."""

    L_max: int = 6
    los_prob: float = 0.8
    sector_deg: tuple[float, float] = (-60.0, 60.0)
    distance_m: tuple[float, float] = (30.0, 300.0)
    nlos_excess_loss_db: tuple[float, float] = (15.0, 5.0)  # (mean, std)
    nlos_extra_distance_m: tuple[float, float] = (5.0, 100.0)
    aoa_deg: tuple[float, float] = (-180.0, 180.0)
    elevation_deg: float = 90.0
    snapshot_phase_drift: float = 0.1  # rad std per path per snapshot

    def __post_init__(self):
        def _range(name, lo, hi, strict=True):
            if not (lo < hi if strict else lo <= hi):
                raise ValueError(f"{name}: empty range ({lo}, {hi})")

        if self.L_max < 1:
            raise ValueError("L_max must be >= 1")
        if not 0.0 <= self.los_prob <= 1.0:
            raise ValueError("los_prob must lie in [0, 1]")
        _range("sector_deg", *self.sector_deg)
        _range("distance_m", *self.distance_m, strict=False)
        if self.distance_m[0] <= 0:
            raise ValueError("distances must be positive")
        _range("nlos_extra_distance_m", *self.nlos_extra_distance_m, strict=False)
        _range("aoa_deg", *self.aoa_deg)
        if self.nlos_excess_loss_db[1] < 0:
            raise ValueError("excess-loss std must be non-negative")
        if not 0.0 <= self.elevation_deg <= 180.0:
            raise ValueError("elevation_deg must lie in [0, 180]")
        if self.snapshot_phase_drift < 0:
            raise ValueError("snapshot_phase_drift must be non-negative")


@dataclass(frozen=True)
class Path:
    amplitude: float
    delay: float
    aod: tuple[float, float]  # (theta, phi)
    aoa: tuple[float, float]

    def __post_init__(self):
        if self.amplitude < 0 or self.delay < 0:
            raise ValueError("amplitude and delay must be non-negative")


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]
    user_index: int = 0

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a PathSet needs at least one path")

    def __len__(self):
        return len(self.paths)

    def __add__(self, other: "PathSet") -> "PathSet":
        return PathSet(self.paths + other.paths, self.user_index)


@dataclass
class ChannelEstimate:
    H_true: np.ndarray
    E: np.ndarray
    H_hat: np.ndarray
    cee_target_dB: float
    cee_realized_dB: float = field(default=-math.inf)


def fspl_db(distance_m: float, f_c: float) -> float:
    """Free-space path loss in dB."""
    return 20.0 * math.log10(4.0 * math.pi * distance_m * f_c / SPEED_OF_LIGHT)


def array_response(theta, phi, n_elements: int, spacing_over_lambda: float) -> np.ndarray:
    """Linear-array response ``exp(j 2 pi d w sin(theta) cos(phi))``, w = 0..n-1.

    ``phi`` is measured from the array axis here.
    """
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    w = np.arange(n_elements)
    return np.exp(1j * 2.0 * np.pi * spacing_over_lambda * w * np.sin(theta) * np.cos(phi))


def _axis_azimuth(phi_boresight):
    return np.pi / 2.0 - phi_boresight


def steering_vector(theta, phi, n_elements: int, spacing_over_lambda: float) -> np.ndarray:
    """Array response for a boresight-frame azimuth."""
    return array_response(theta, _axis_azimuth(phi), n_elements, spacing_over_lambda)


def path_gain(path: Path, f_c: float) -> complex:
    """Complex gain ``|a| exp(-j 2 pi f_c tau)``."""
    return path.amplitude * np.exp(-1j * 2.0 * np.pi * f_c * path.delay)


def synthesize_paths(scenario: ScenarioConfig, user_index: int, rng: np.random.Generator,
                     f_c: float = 108e9) -> PathSet:
    """Draw one user's path set.

    The first path is line-of-sight with probability ``scenario.los_prob``;
    NLOS paths travel a longer route and carry a normally distributed excess
    loss in dB on top of free-space loss.
    """
    deg = np.pi / 180.0
    theta = scenario.elevation_deg * deg
    n_paths = int(rng.integers(1, scenario.L_max + 1))
    los = bool(rng.random() < scenario.los_prob)
    dist = float(rng.uniform(*scenario.distance_m))
    paths = []
    for ell in range(n_paths):
        aod_phi = float(rng.uniform(*scenario.sector_deg)) * deg
        aoa_phi = float(rng.uniform(*scenario.aoa_deg)) * deg
        if ell == 0 and los:
            length, loss_db = dist, fspl_db(dist, f_c)
        else:
            length = dist + float(rng.uniform(*scenario.nlos_extra_distance_m))
            mu, sd = scenario.nlos_excess_loss_db
            loss_db = fspl_db(length, f_c) + max(0.0, float(rng.normal(mu, sd)))
        paths.append(Path(amplitude=10.0 ** (-loss_db / 20.0), delay=length / SPEED_OF_LIGHT,
                          aod=(theta, _wrap(aod_phi)), aoa=(theta, _wrap(aoa_phi))))
    return PathSet(tuple(paths), user_index)


def _wrap(phi: float) -> float:
    """Map an angle into (-pi, pi]."""
    out = math.remainder(phi, 2.0 * math.pi)
    return math.pi if out == -math.pi else out


def evolve_paths(path_set: PathSet, n_snapshots: int, phase_drift: float, f_c: float,
                 rng: np.random.Generator) -> list[PathSet]:
    """Abstract snapshot sequence: each path's phase random-walks between
    snapshots. The last element is the evaluation snapshot."""
    out = [path_set]
    delays = np.array([p.delay for p in path_set.paths])
    for _ in range(n_snapshots - 1):
        delays = np.maximum(delays + rng.normal(0.0, phase_drift, len(delays)) / (2 * np.pi * f_c), 0.0)
        out.append(PathSet(tuple(replace(p, delay=float(d)) for p, d in zip(path_set.paths, delays)),
                           path_set.user_index))
    return out


def assemble_channel(path_set: PathSet, pattern, cfg: SystemConfig) -> np.ndarray:
    """Pattern-weighted ``N_k x M`` channel of one user.

    ``pattern`` is a :class:`~lcbf.codebook.RadiationPattern`; its power gain
    enters in the amplitude domain as ``sqrt(G)``.
    """
    from .codebook import pattern_gain

    H = np.zeros((cfg.N_k, cfg.M), dtype=complex)
    for path in path_set.paths:
        th_t, ph_t = path.aod
        th_r, ph_r = path.aoa
        amp = path_gain(path, cfg.f_c) * np.sqrt(pattern_gain(pattern, th_t, ph_t))
        a_r = steering_vector(th_r, ph_r, cfg.N_k, cfg.d_r_over_lambda)
        a_t = steering_vector(th_t, ph_t, cfg.M, cfg.d_t_over_lambda)
        H += amp * np.outer(a_r, a_t.conj())
    return H


def stack_channels(path_sets: Iterable[PathSet], pattern, cfg: SystemConfig) -> np.ndarray:
    """Stacked ``N x M`` channel of all users for one pattern."""
    return np.vstack([assemble_channel(ps, pattern, cfg) for ps in path_sets])


def inject_estimation_error(H_true: np.ndarray, cee_dB: float, rng: np.random.Generator) -> ChannelEstimate:
    """Add i.i.d. CN(0, v) error with ``v = 10^(cee/10) ||H||_F^2 / (N M)``.

    The standard normals are always drawn, so a fixed stream gives error
    matrices that differ across ``cee_dB`` only by scale.
    """
    H_true = np.asarray(H_true, dtype=complex)
    Z = (rng.standard_normal(H_true.shape) + 1j * rng.standard_normal(H_true.shape)) / np.sqrt(2.0)
    if cee_dB == -math.inf:
        E = np.zeros_like(H_true)
        realized = -math.inf
    else:
        var = 10.0 ** (cee_dB / 10.0) * np.linalg.norm(H_true) ** 2 / H_true.size
        E = np.sqrt(var) * Z
        realized = 10.0 * math.log10(np.linalg.norm(E) ** 2 / np.linalg.norm(H_true) ** 2)
    return ChannelEstimate(H_true=H_true, E=E, H_hat=H_true + E, cee_target_dB=cee_dB,
                           cee_realized_dB=realized)


def normalize_channel(H_hat: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return H_hat / sigma


CSV_COLUMNS = ["user", "path_idx", "amp", "delay_s", "aod_theta", "aod_phi", "aoa_theta", "aoa_phi"]


def write_paths_csv(path_sets: Iterable[PathSet], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for ps in path_sets:
        for i, p in enumerate(ps.paths):
            writer.writerow([ps.user_index, i, repr(p.amplitude), repr(p.delay),
                             repr(p.aod[0]), repr(p.aod[1]), repr(p.aoa[0]), repr(p.aoa[1])])


def read_paths_csv(fh) -> list[PathSet]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected path CSV header: {reader.fieldnames}")
    by_user: dict[int, list[tuple[int, Path]]] = {}
    for row in reader:
        p = Path(amplitude=float(row["amp"]), delay=float(row["delay_s"]),
                 aod=(float(row["aod_theta"]), float(row["aod_phi"])),
                 aoa=(float(row["aoa_theta"]), float(row["aoa_phi"])))
        by_user.setdefault(int(row["user"]), []).append((int(row["path_idx"]), p))
    return [PathSet(tuple(p for _, p in sorted(v, key=lambda t: t[0])), u) for u, v in sorted(by_user.items())]
