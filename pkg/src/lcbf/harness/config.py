"""Experiment configuration, read from JSON.

Every key is optional; omitted keys take the defaults below. Angles in the
file are in degrees, powers in dBm. Example::

    {
      "system": {"M": 48, "K": 4, "N_k": 4, "f_c": 108e9, "noise_dBm": -90},
      "scenario": {"L_max": 6, "los_prob": 0.8},
      "codebook": {"n_p": 19, "steer_min_deg": -45, "steer_max_deg": 45},
      "methods": ["lnn", "gru", "gd", "mrt"],
      "antennas": ["lc", "gpp", "isotropic"],
      "P_grid_dBm": [10, 15, 20, 25, 30],
      "CEE_grid_dB": [-20, -15, -10, -5, 0],
      "seeds": [0, 1, 2],
      "train": {"n_steps": 200, "lr": 0.01},
      "gd": {"n_iters": 100, "step_size": 0.05}
    }

``"-inf"`` is accepted wherever a CEE value is expected.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from ..baselines import GDConfig
from ..channel import ScenarioConfig, SystemConfig
from ..codebook import DEG, Codebook, build_3gpp_element, build_lc_codebook, gain_matched_hpbw, \
    isotropic_pattern, single_pattern_codebook
from ..lnn.train import TrainConfig

METHODS = ("lnn", "gru", "gd", "mrt")
ANTENNAS = ("lc", "gpp", "isotropic")
LEARNED = {"lnn": "cfc", "gru": "gru"}


def dbm_to_watt(x):
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * math.log10(w) + 30.0


def parse_db(x) -> float:
    if isinstance(x, str):
        return float(x.strip().lower().replace("infinity", "inf"))
    return float(x)


@dataclass(frozen=True)
class CodebookConfig:
    n_p: int = 19
    steer_min_deg: float = -45.0
    steer_max_deg: float = 45.0
    peak_gain_dB: float = 6.87
    hpbw_deg: float | None = None  # None: gain-matched element width
    floor_dB: float = -20.0
    criterion: str = "se"

    def build(self, antenna: str) -> Codebook:
        if antenna == "lc":
            hpbw = gain_matched_hpbw(self.peak_gain_dB) if self.hpbw_deg is None else self.hpbw_deg * DEG
            return build_lc_codebook(self.n_p, self.steer_min_deg * DEG, self.steer_max_deg * DEG,
                                     self.peak_gain_dB, hpbw, self.floor_dB)
        if antenna == "gpp":
            return single_pattern_codebook(build_3gpp_element())
        if antenna == "isotropic":
            return single_pattern_codebook(isotropic_pattern())
        raise ValueError(f"unknown antenna {antenna!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    noise_dBm: float = -90.0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    methods: tuple[str, ...] = METHODS
    antennas: tuple[str, ...] = ANTENNAS
    P_grid_dBm: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0)
    CEE_grid_dB: tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0)
    power_sweep_cee_dB: float = -10.0
    cee_sweep_P_dBm: float = 30.0
    seeds: tuple[int, ...] = tuple(range(10))
    train: TrainConfig = field(default_factory=TrainConfig)
    gd: GDConfig = field(default_factory=GDConfig)
    episode_T: int = 4
    stateful_inference: bool = True
    n_train_episodes: int = 8
    init_checkpoints: dict = field(default_factory=dict)
    record_timing: bool = False
    out_dir: str = "out"

    def __post_init__(self):
        if not self.P_grid_dBm or not self.CEE_grid_dB or not self.seeds:
            raise ValueError("P_grid_dBm, CEE_grid_dB and seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        for a in self.antennas:
            if a not in ANTENNAS:
                raise ValueError(f"unknown antenna {a!r}")
        if self.episode_T < 1:
            raise ValueError("episode_T must be >= 1")

    @property
    def sigma2(self) -> float:
        return dbm_to_watt(self.noise_dBm)

    def system_at(self, P_dBm: float) -> SystemConfig:
        return replace(self.system, P=dbm_to_watt(P_dBm), sigma2=self.sigma2)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d, default=str))


_NESTED = {"system": SystemConfig, "scenario": ScenarioConfig, "codebook": CodebookConfig,
           "train": TrainConfig, "gd": GDConfig}
_TUPLES = {"methods", "antennas", "P_grid_dBm", "CEE_grid_dB", "seeds"}


def _build(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    return cls(**kw)


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    noise = data.pop("noise_dBm", None)
    sysd = dict(data.pop("system", {}))
    if "noise_dBm" in sysd:
        noise = sysd.pop("noise_dBm")
    if "P_dBm" in sysd:
        sysd["P"] = dbm_to_watt(sysd.pop("P_dBm"))
    kw = {"system": _build(SystemConfig, sysd)}
    if noise is not None:
        kw["noise_dBm"] = float(noise)
    for key, cls in _NESTED.items():
        if key in data and key != "system":
            kw[key] = _build(cls, data.pop(key))
    for key, v in data.items():
        if key in ("CEE_grid_dB",):
            v = [parse_db(x) for x in v]
        if key == "power_sweep_cee_dB":
            v = parse_db(v)
        kw[key] = tuple(v) if key in _TUPLES else v
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(kw) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return from_dict(json.load(fh))
