"""Command-line entry point: ``lcbf <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..channel import write_paths_csv
from .config import ExperimentConfig, load_config
from .experiment import episode_paths, run_cee_sweep, run_power_sweep, train_command
from .report import report_command

log = logging.getLogger("lcbf")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seeds"] = (args.seed,)
    if getattr(args, "methods", None):
        over["methods"] = tuple(args.methods.split(","))
    if getattr(args, "antennas", None):
        over["antennas"] = tuple(args.antennas.split(","))
    if getattr(args, "timing", False):
        over["record_timing"] = True
    if getattr(args, "out", None):
        over["out_dir"] = args.out
    return replace(cfg, **over) if over else cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_scenario(args):
    cfg = _config(args)
    out = _out(cfg)
    for seed in cfg.seeds:
        paths = episode_paths(cfg, seed)[-1]
        with open(out / f"paths_seed{seed}.csv", "w", newline="") as fh:
            write_paths_csv(paths, fh)
    log.info("wrote %d path files to %s", len(cfg.seeds), out)


def cmd_train(args):
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    results = train_command(cfg, seed, _out(cfg))
    for m, md in results.items():
        log.info("%s: first-epoch SE %.3f, final-epoch SE %.3f", m, md["epoch_se"][0], md["epoch_se"][-1])


def cmd_sweep_power(args):
    cfg = _config(args)
    rows = run_power_sweep(cfg, _out(cfg) / "results_power.csv", jobs=args.jobs)
    log.info("wrote %d rows", len(rows))


def cmd_sweep_cee(args):
    cfg = _config(args)
    out = _out(cfg)
    rows, deg = run_cee_sweep(cfg, out / "results_cee.csv", jobs=args.jobs)
    with open(out / "degradation_cee.json", "w") as fh:
        json.dump(deg, fh, indent=1, sort_keys=True)
    log.info("wrote %d rows", len(rows))


def cmd_codebook_dump(args):
    from ..codebook import dump_rows

    cfg = _config(args)
    header, rows = dump_rows(cfg.codebook.build(args.antenna), args.resolution)
    fh = open(args.file, "w", newline="") if args.file else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.file:
            fh.close()


def cmd_report(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_command(args.csv, out / "aggregate.csv", out / "summary.json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lcbf", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", help="experiment JSON file")
        p.add_argument("--seed", type=int, help="run this seed only")
        p.add_argument("--out", help="output directory")
        p.add_argument("--methods", help="comma list from lnn,gru,gd,mrt")
        p.add_argument("--antennas", help="comma list from lc,gpp,isotropic")
        if jobs:
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--timing", action="store_true", help="record wall_time_ms")
        return p

    common(sub.add_parser("gen-scenario", help="export synthetic path sets")).set_defaults(func=cmd_gen_scenario)
    common(sub.add_parser("train", help="train learned precoders")).set_defaults(func=cmd_train)
    common(sub.add_parser("sweep-power", help="SE vs transmit power"), jobs=True).set_defaults(func=cmd_sweep_power)
    common(sub.add_parser("sweep-cee", help="SE vs estimation error"), jobs=True).set_defaults(func=cmd_sweep_cee)

    cb = sub.add_parser("codebook", help="codebook utilities")
    cbsub = cb.add_subparsers(dest="action", required=True)
    dump = cbsub.add_parser("dump", help="gain table in dB over azimuth")
    dump.add_argument("--config")
    dump.add_argument("--antenna", default="lc")
    dump.add_argument("--resolution", type=float, default=0.5)
    dump.add_argument("--file", help="CSV path (default stdout)")
    dump.set_defaults(func=cmd_codebook_dump)

    rep = sub.add_parser("report", help="aggregate result CSVs")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--out", default="report")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
