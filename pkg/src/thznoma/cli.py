"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 scenario failure (empty drops, exhausted power budget, missing pair).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import flops_epsilon, matvec_mults, multiplication_saving, savings_table
from .channel import optimal_sa_separation, rayleigh_distance
from .config import Scenario, draw_plan, load, noma_sim
from .errors import (BudgetExhausted, ConfigError, EmptyDrop, InvalidArgument, PatternExplosion,
                     RankDeficient, SearchSpaceTooLarge, ThzNomaError)
from .harness import (read_csv, records_to_csv, run_ber_sweep, theory_records, with_overrides,
                      write_atomic)
from .svgplot import render

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SCENARIO = 0, 2, 3, 4
log = logging.getLogger("thznoma")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _overrides(args) -> dict:
    ov = {}
    for flag, key in (("snr_min", "sweep.snr_min"), ("snr_max", "sweep.snr_max"),
                      ("snr_step", "sweep.snr_step"), ("max_trials", "sweep.max_trials"),
                      ("min_errors", "sweep.min_errors"), ("seed", "sweep.seed")):
        v = getattr(args, flag, None)
        if v is not None:
            ov[key] = v
    if getattr(args, "detectors", None):
        ov["sweep.detectors"] = args.detectors
    return ov


def _load(args) -> tuple[Scenario, dict]:
    ov = _overrides(args)
    return load(args.config, ov), ov


def _manifest(args, sc: Scenario, overrides, seed, outputs, source) -> dict:
    return {
        "command": args.command,
        "source": source,
        "config_name": sc.name,
        "config_text": sc.text,
        "overrides": overrides,
        "effective_config": sc.sections,
        "seed": seed,
        "workers": getattr(args, "workers", 1),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": [os.fspath(p) for p in outputs],
    }


def _emit(args, sc, overrides, seed, name, text, source):
    out_dir = Path(args.out)
    path = out_dir / name
    write_atomic(path, text)
    man = _manifest(args, sc, overrides, seed, [path], source)
    write_atomic(path.with_suffix(".manifest.json"), json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(path)
    return path


def cmd_simulate(args) -> int:
    sc, ov = _load(args)
    if sc.noma is not None:
        cfg, _ = noma_sim(sc)
    else:
        cfg = sc.sim
    cfg = with_overrides(cfg, block_size=args.block_size)
    records = run_ber_sweep(cfg, workers=args.workers)
    _emit(args, sc, ov, cfg.seed, f"{sc.name}_sim.csv", records_to_csv(records), "simulation")
    return EXIT_OK


def cmd_theory(args) -> int:
    sc, ov = _load(args)
    if sc.sim is None:
        raise CliError("theory curves need a [streams] scenario", EXIT_CONFIG)
    records = theory_records(sc.sim)
    if not records:
        raise CliError("none of the configured detectors has a closed form (NC, PNC, CD, PCD)",
                       EXIT_CONFIG)
    _emit(args, sc, ov, sc.sim.seed, f"{sc.name}_theory.csv", records_to_csv(records), "theory")
    return EXIT_OK


def cmd_channel_info(args) -> int:
    sc, ov = _load(args)
    lines = [f"config: {sc.name}"]
    for sec, items in sc.sections.items():
        lines.append(f"[{sec}]")
        lines += [f"  {k} = {v}" for k, v in items.items()]
    spec = sc.channel
    g = sc.geometry
    if g is not None:
        lines.append(f"wavelength_m = {g.wavelength:.9g}")
        for z in (1, 3, 5):
            lines.append(f"delta_opt_z{z}_m = {optimal_sa_separation(g.D, g.wavelength, g.M, z):.9g}")
        for z in (1, 3, 5):
            lines.append(f"delta_grid_z{z}_m = "
                         f"{optimal_sa_separation(g.D, g.wavelength, g.side, z):.9g}")
        eff = spec.effective_geometry() if spec is not None else g
        lines.append(f"pitch_used_m = {eff.Delta:.9g}")
        lines.append(f"rayleigh_distance_m = {rayleigh_distance(eff.Delta, g.side, g.wavelength):.9g}")
    if spec.random:
        rng = np.random.default_rng(sc.sweep["seed"] if args.seed is None else args.seed)
        H = spec.draw(rng, 1)[0]
        lines.append("channel = one random draw")
    elif spec.kind == "los" or spec.kind in ("fixed", "diagonal"):
        H = spec.fixed_matrix()
    else:  # pragma: no cover - every kind is handled above
        raise InvalidArgument(spec.kind)
    if not np.all(np.isfinite(H)):
        raise RankDeficient("channel generation produced non-finite entries")
    s = np.linalg.svd(H, compute_uv=False)
    cond = s[0] / s[-1] if s[-1] > 0 else float("inf")
    lines.append(f"shape = {H.shape[0]}x{H.shape[1]}")
    lines.append(f"condition_number = {cond:.9g}")
    lines.append("singular_values = " + ", ".join(f"{v:.9g}" for v in s))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        write_atomic(Path(args.out) / f"{sc.name}_channel.txt", text)
    return EXIT_OK


def plan_csv(plan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("pair_id", "d1_m", "d2_m", "p1_W", "p2_W"))
    for k, d1, d2, p1, p2 in plan.rows():
        w.writerow((k, f"{d1:.9g}", f"{d2:.9g}", f"{p1:.9g}", f"{p2:.9g}"))
    return buf.getvalue()


def cmd_noma_plan(args) -> int:
    sc, ov = _load(args)
    if sc.noma is None:
        raise CliError("noma-plan needs a [noma] section", EXIT_CONFIG)
    seed = sc.sweep["seed"]
    _, plan = draw_plan(sc, seed)
    _emit(args, sc, ov, seed, f"{sc.name}_pairs.csv", plan_csv(plan), "noma-plan")
    return EXIT_OK


def cmd_complexity(args) -> int:
    try:
        Ns = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"--n expects integers, got {args.n!r}", EXIT_CONFIG) from None
    if not Ns or min(Ns) < 2 or min(args.order, args.streams, args.frames) < 1:
        raise CliError("need N >= 2 and positive order, stream count and frame count", EXIT_CONFIG)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("N", "item", "RAD", "RML", "flops", "note"))
    text = []
    for N in Ns:
        sav = multiplication_saving(N)
        full = matvec_mults(N, False)
        ratio = f"{full - matvec_mults(N, True)}/{full}"
        text.append(f"N = {N}: product-phase multiplication saving {ratio} = {100 * float(sav):.1f}%")
        w.writerow((N, "mult_saving", "", "", f"{100 * float(sav):.1f}%", ratio))
        for k in (1, 2, 3):
            e = flops_epsilon(k, N)
            text.append(f"  eps{k} = {e.RAD} RAD + {e.RML} RML ({e.flops} flops)")
            w.writerow((N, f"eps{k}", e.RAD, e.RML, e.flops, ""))
        for row in savings_table(args.frames, args.streams, N, args.order):
            text.append(f"  {row.detectors}: saves {row.savings} flops "
                        f"(QRD {row.decomposition}, puncturing {row.puncturing})")
            w.writerow((N, row.detectors, "", "", row.savings,
                        f"qrd={row.decomposition};puncturing={row.puncturing}"))
    sys.stdout.write("\n".join(text) + "\n")
    if args.out:
        path = Path(args.out) / "complexity.csv"
        write_atomic(path, buf.getvalue())
        print(path)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        records = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise CliError(f"{args.csv}: {exc}", EXIT_CONFIG) from None
    if not records:
        raise CliError(f"{args.csv}: no data rows", EXIT_CONFIG)
    out = Path(args.output) if args.output else Path(args.csv).with_suffix(".svg")
    write_atomic(out, render(records, title=Path(args.csv).stem))
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thznoma", description="THz SC/NOMA link-level simulator")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, sweep=True):
        sp.add_argument("--config", required=True,
                        help="INI file or bundled profile name (fig3a, fig6d, table1, ...)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=".", help="output directory")
        if sweep:
            sp.add_argument("--snr-min", type=float)
            sp.add_argument("--snr-max", type=float)
            sp.add_argument("--snr-step", type=float)
            sp.add_argument("--detectors", help="comma-separated, e.g. NC,LORD,SSD")

    sp = sub.add_parser("simulate", help="Monte Carlo BER sweep")
    scenario_args(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--max-trials", type=int)
    sp.add_argument("--min-errors", type=int)
    sp.add_argument("--block-size", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("theory", help="closed-form BER curves")
    scenario_args(sp)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("channel-info", help="tuning, Rayleigh distance and conditioning report")
    scenario_args(sp, sweep=False)
    sp.set_defaults(func=cmd_channel_info)

    sp = sub.add_parser("noma-plan", help="drop users and run JDCP")
    scenario_args(sp, sweep=False)
    sp.set_defaults(func=cmd_noma_plan)

    sp = sub.add_parser("complexity", help="flop-count model and savings table")
    sp.add_argument("--n", default="16,32", help="comma-separated SA counts")
    sp.add_argument("--order", type=int, default=16, help="constellation size |X|")
    sp.add_argument("--streams", type=int, default=3, help="number of streams |S|")
    sp.add_argument("--frames", type=int, default=1, help="frames J sharing one decomposition")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_complexity)

    sp = sub.add_parser("plot", help="render a BER CSV to SVG")
    sp.add_argument("csv")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmptyDrop, BudgetExhausted, InvalidArgument) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (RankDeficient, PatternExplosion, SearchSpaceTooLarge, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ThzNomaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
