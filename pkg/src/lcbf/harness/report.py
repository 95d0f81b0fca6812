"""Aggregation of result CSVs into plot-ready tables and a summary JSON."""
from __future__ import annotations

import csv
import json
from collections import defaultdict

import numpy as np

from .experiment import SCHEMA_VERSION, ResultRow, degradation, read_rows

AGG_COLUMNS = ["method", "antenna", "P_dBm", "CEE_dB", "n", "se_true_mean", "se_true_std",
               "se_est_mean", "se_est_std"]


def aggregate(rows: list[ResultRow]) -> list[dict]:
    """Mean and population std over seeds per grid point."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.method, r.antenna, r.P_dBm, r.CEE_dB)].append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        st = np.array([r.se_true for r in g])
        se = np.array([r.se_est for r in g])
        out.append(dict(zip(AGG_COLUMNS[:4], key), n=len(g),
                        se_true_mean=float(st.mean()), se_true_std=float(st.std()),
                        se_est_mean=float(se.mean()), se_est_std=float(se.std())))
    return out


def write_aggregate(path, agg) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(AGG_COLUMNS)
        for a in agg:
            w.writerow([a["method"], a["antenna"]] + [repr(float(a[c])) for c in ("P_dBm", "CEE_dB")]
                       + [str(a["n"])] + [repr(float(a[c])) for c in AGG_COLUMNS[5:]])


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != AGG_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for r in reader:
            d = {"method": r["method"], "antenna": r["antenna"], "n": int(r["n"])}
            d.update({c: float(r[c]) for c in AGG_COLUMNS if c not in d})
            out.append(d)
        return out


def summarize(rows: list[ResultRow]) -> dict:
    agg = aggregate(rows)
    summary = {"schema_version": SCHEMA_VERSION, "n_rows": len(rows), "grid": agg}
    cee_counts = defaultdict(set)
    for r in rows:
        cee_counts[(r.method, r.antenna, r.P_dBm)].add(r.CEE_dB)
    if any(len(v) > 1 for v in cee_counts.values()):
        summary["degradation"] = degradation(rows)
    medians = defaultdict(dict)
    for key, vals in _by(rows, lambda r: (r.method, r.antenna, r.CEE_dB, r.P_dBm)).items():
        m, a, c, p = key
        medians[f"{m}/{a}/CEE={c:g}"][f"{p:g}"] = float(np.median(vals))
    summary["median_se_true_vs_P"] = dict(sorted(medians.items()))
    return summary


def _by(rows, key):
    out = defaultdict(list)
    for r in rows:
        out[key(r)].append(r.se_true)
    return out


def report_command(csv_paths, out_csv, out_json) -> dict:
    rows = []
    for p in csv_paths:
        rows.extend(read_rows(p))
    summary = summarize(rows)
    write_aggregate(out_csv, summary["grid"])
    with open(out_json, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary
