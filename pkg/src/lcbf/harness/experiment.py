"""Seeded sweep execution.

A *cell* is one ``(method, antenna, P, CEE, seed)`` combination. Channels
depend only on ``(seed, antenna, CEE)`` so every method in a cell sees the
same channels, and every randomized step draws from a stream named after the
parts of the cell it depends on.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import bf_core
from ..baselines import gd_ascent
from ..channel import evolve_paths, inject_estimation_error, stack_channels, synthesize_paths
from ..codebook import argmax_first
from ..lnn import checkpoint
from ..lnn.train import Episode, new_model, run_episode, train
from ..rng import stream
from .config import LEARNED, ExperimentConfig, dbm_to_watt

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COLUMNS = ["method", "antenna", "P_dBm", "CEE_dB", "seed", "p_star", "se_true", "se_est",
           "rates_true", "wall_time_ms"]
PUBLISHED_REDUCTION_PCT = {"lnn": 31.7, "gd": 55.4}


@dataclass(frozen=True)
class ResultRow:
    method: str
    antenna: str
    P_dBm: float
    CEE_dB: float
    seed: int
    p_star: int
    se_true: float
    se_est: float
    rates_true: tuple[float, ...]
    wall_time_ms: float | None = None

    def sort_key(self):
        return (self.method, self.antenna, self.P_dBm, self.CEE_dB, self.seed)

    def to_csv(self) -> list[str]:
        return [self.method, self.antenna, repr(float(self.P_dBm)), repr(float(self.CEE_dB)), str(self.seed),
                str(self.p_star), repr(float(self.se_true)), repr(float(self.se_est)),
                ";".join(repr(float(r)) for r in self.rates_true),
                "" if self.wall_time_ms is None else f"{self.wall_time_ms:.3f}"]

    @classmethod
    def from_csv(cls, row: dict) -> "ResultRow":
        return cls(method=row["method"], antenna=row["antenna"], P_dBm=float(row["P_dBm"]),
                   CEE_dB=float(row["CEE_dB"]), seed=int(row["seed"]), p_star=int(row["p_star"]),
                   se_true=float(row["se_true"]), se_est=float(row["se_est"]),
                   rates_true=tuple(float(x) for x in row["rates_true"].split(";") if x),
                   wall_time_ms=float(row["wall_time_ms"]) if row["wall_time_ms"] else None)


# channels ------------------------------------------------------------------------

def episode_paths(cfg: ExperimentConfig, seed: int):
    """``[T][K]`` path sets of one seed; the last snapshot is evaluated."""
    sysc = cfg.system
    per_user = []
    for k in range(sysc.K):
        ps = synthesize_paths(cfg.scenario, k, stream(seed, "paths", k), sysc.f_c)
        per_user.append(evolve_paths(ps, cfg.episode_T, cfg.scenario.snapshot_phase_drift, sysc.f_c,
                                     stream(seed, "drift", k)))
    return [[per_user[k][t] for k in range(sysc.K)] for t in range(cfg.episode_T)]


def build_episode(cfg: ExperimentConfig, seed: int, antenna: str, cee_dB: float, paths=None) -> Episode:
    paths = episode_paths(cfg, seed) if paths is None else paths
    codebook = cfg.codebook.build(antenna)
    T, n_p = len(paths), len(codebook)
    shape = (T, n_p, cfg.system.N, cfg.system.M)
    H_true = np.empty(shape, dtype=complex)
    H_hat = np.empty(shape, dtype=complex)
    for t in range(T):
        for p, pattern in enumerate(codebook):
            H = stack_channels(paths[t], pattern, cfg.system)
            est = inject_estimation_error(H, cee_dB, stream(seed, "cee", antenna, p, t))
            H_true[t, p], H_hat[t, p] = H, est.H_hat
    return Episode(H_true, H_hat)


# methods ---------------------------------------------------------------------------

def _select_and_score(episode: Episode, X, P, sigma2):
    """Analog selection on the final snapshot given one base matrix per pattern."""
    H_hat, H_true = episode.H_hat[-1], episode.H_true[-1]
    se_est = []
    Ws = []
    for p in range(episode.n_p):
        W = bf_core.apply_power_constraint(H_hat[p], X[p], P).W
        Ws.append(W)
        se_est.append(float(bf_core.spectral_efficiency(H_hat[p], W, sigma2)))
    p0 = argmax_first(se_est)
    rates = bf_core.per_user_rates(H_true[p0], Ws[p0], sigma2)
    return p0 + 1, se_est[p0], rates


def _init_model(cfg: ExperimentConfig, method: str, seed: int):
    ckpt = cfg.init_checkpoints.get(method)
    if ckpt:
        model, _ = checkpoint.load(ckpt)
        return model
    tc = replace(cfg.train, cell=LEARNED[method], seed=seed)
    return new_model(cfg.system.N, cfg.system.M, cfg.system.K, tc, rng=stream(seed, "init", method))


def run_method(cfg: ExperimentConfig, method: str, antenna: str, P_dBm: float, cee_dB: float, seed: int,
               episode: Episode):
    """Return ``(p_star, se_est, rates_true)`` for one cell."""
    P, sigma2, K = dbm_to_watt(P_dBm), cfg.sigma2, cfg.system.K
    if method == "mrt":
        X = [bf_core.user_block_identity(cfg.system.N, K)] * episode.n_p
        return _select_and_score(episode, X, P, sigma2)
    if method == "gd":
        X, _, _ = gd_ascent(episode.H_hat[-1], sigma2, P, K, cfg.gd,
                            rng=stream(seed, "gd", antenna, P_dBm, cee_dB))
        return _select_and_score(episode, X, P, sigma2)
    if method in LEARNED:
        tc = replace(cfg.train, cell=LEARNED[method], seed=seed)
        model = _init_model(cfg, method, seed)
        model, _ = train([episode], sigma2, P, K, tc, model)
        inf = run_episode(model, episode, sigma2, P, tc.t_step, cfg.stateful_inference)
        return inf.p_star, inf.se_est, inf.rates_true
    raise ValueError(f"unknown method {method!r}")


def _group(cfg: ExperimentConfig, seed: int, antenna: str, P_grid, cee_grid):
    paths = episode_paths(cfg, seed)
    rows = []
    for cee in cee_grid:
        episode = build_episode(cfg, seed, antenna, cee, paths)
        for P_dBm in P_grid:
            for method in cfg.methods:
                t0 = time.perf_counter()
                p_star, se_est, rates = run_method(cfg, method, antenna, P_dBm, cee, seed, episode)
                ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else None
                rows.append(ResultRow(method, antenna, float(P_dBm), float(cee), int(seed), int(p_star),
                                      float(np.sum(rates)), float(se_est), tuple(float(r) for r in rates), ms))
    return rows


def _group_star(args):
    return _group(*args)


def run_sweep(cfg: ExperimentConfig, P_grid, cee_grid, out_csv=None, jobs: int = 1) -> list[ResultRow]:
    """Evaluate every cell; rows are streamed to ``<out_csv>.partial`` as
    they finish and the final file is written sorted."""
    tasks = [(cfg, seed, antenna, tuple(P_grid), tuple(cee_grid)) for seed in cfg.seeds for antenna in cfg.antennas]
    rows: list[ResultRow] = []
    partial = None
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        partial = open(str(out_csv) + ".partial", "w", newline="")
        pw = csv.writer(partial, lineterminator="\n")
        pw.writerow(COLUMNS)
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = ex.map(_group_star, tasks)
                for group in results:
                    rows.extend(group)
                    if partial:
                        _flush(pw, partial, group)
        else:
            for task in tasks:
                group = _group(*task)
                rows.extend(group)
                if partial:
                    _flush(pw, partial, group)
    finally:
        if partial:
            partial.close()
    rows.sort(key=ResultRow.sort_key)
    if out_csv is not None:
        write_rows(out_csv, rows)
        os.remove(str(out_csv) + ".partial")
    return rows


def _flush(writer, fh, group):
    for r in group:
        writer.writerow(r.to_csv())
    fh.flush()


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(r.to_csv())


def read_rows(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [ResultRow.from_csv(r) for r in reader]


def run_power_sweep(cfg: ExperimentConfig, out_csv=None, jobs=1):
    return run_sweep(cfg, cfg.P_grid_dBm, (cfg.power_sweep_cee_dB,), out_csv, jobs)


def run_cee_sweep(cfg: ExperimentConfig, out_csv=None, jobs=1):
    rows = run_sweep(cfg, (cfg.cee_sweep_P_dBm,), cfg.CEE_grid_dB, out_csv, jobs)
    return rows, degradation(rows)


def degradation(rows) -> dict:
    """Per method/antenna ratio ``se(CEE_max) / se(CEE_min)`` over paired seeds."""
    out = {}
    keys = sorted({(r.method, r.antenna) for r in rows})
    for method, antenna in keys:
        sel = [r for r in rows if r.method == method and r.antenna == antenna]
        ceev = sorted({r.CEE_dB for r in sel})
        lo, hi = ceev[0], ceev[-1]
        by_seed = {}
        for r in sel:
            by_seed.setdefault(r.seed, {})[r.CEE_dB] = r.se_true
        ratios = [v[hi] / v[lo] for v in by_seed.values() if lo in v and hi in v and v[lo] > 0]
        se_lo = float(np.median([v[lo] for v in by_seed.values() if lo in v]))
        se_hi = float(np.median([v[hi] for v in by_seed.values() if hi in v]))
        ratio = float(np.median(ratios)) if ratios else math.nan
        entry = {"cee_min_dB": lo, "cee_max_dB": hi, "median_se_at_min": se_lo, "median_se_at_max": se_hi,
                 "ratio_median_over_seeds": ratio, "reduction_pct": 100.0 * (1.0 - ratio)}
        if method in PUBLISHED_REDUCTION_PCT and antenna == "lc":
            entry["published_reduction_pct"] = PUBLISHED_REDUCTION_PCT[method]
        out[f"{method}/{antenna}"] = entry
    return out


# training command -------------------------------------------------------------------

def train_command(cfg: ExperimentConfig, seed: int, out_dir, antenna: str | None = None):
    """Train each learned method on freshly drawn episodes; write checkpoints
    and per-epoch metrics. Returns ``{method: metrics_dict}``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    antenna = antenna or cfg.antennas[0]
    P = dbm_to_watt(cfg.cee_sweep_P_dBm)
    episodes = [build_episode(cfg, int(stream(seed, "train-episode", i).integers(2**31)), antenna,
                              cfg.power_sweep_cee_dB) for i in range(cfg.n_train_episodes)]
    results = {}
    for method in cfg.methods:
        if method not in LEARNED:
            continue
        tc = replace(cfg.train, cell=LEARNED[method], seed=seed)
        model = new_model(cfg.system.N, cfg.system.M, cfg.system.K, tc, rng=stream(seed, "init", method))
        model, metrics = train(episodes, cfg.sigma2, P, cfg.system.K, tc, model)
        checkpoint.save(out_dir / f"checkpoint_{method}.ckpt", model, method)
        md = metrics.to_dict(episodes[0].n_p)
        md.update(method=method, antenna=antenna, seed=seed, n_params=int(sum(v.size for v in model.params.values())))
        with open(out_dir / f"metrics_{method}.json", "w") as fh:
            json.dump(md, fh, indent=1, sort_keys=True)
        results[method] = md
    return results


def rows_to_csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.to_csv())
    return buf.getvalue()
