"""Command-line front end.

Exit codes: 0 on success, 2 for unreadable or invalid input, 3 when a
computation cannot be carried out (for example an unattainable QoS target).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, ParameterError, SingularChainError
from .scenario import ProfitCosts, dump_scenario, load_preset, load_scenario, preset_names
from .sim import (
    METRICS_SCHEMA_VERSION,
    compare_tiers,
    metrics_csv,
    metrics_summary,
    run_simulation,
    scenario_shares,
    theta_sweep,
    tier_allocation,
)
from .station import StationConfig, blocking_probability, loss_probability, max_admissible_rate, weighted_blocking

__all__ = ["main", "build_parser", "parse_range", "profit_rows", "blocking_grid_rows"]

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class CliInputError(ParameterError):
    pass


def parse_range(text: str, kind=float) -> list:
    """``"a:b:step"`` (inclusive), ``"a:b"`` (step 1) or ``"x,y,z"``."""
    text = text.strip()
    if not text:
        raise CliInputError("empty range")
    try:
        if ":" in text:
            parts = [kind(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(kind(1))
            if len(parts) != 3:
                raise CliInputError(f"bad range {text!r}")
            lo, hi, step = parts
            if step <= 0 or hi < lo:
                raise CliInputError(f"bad range {text!r}: need start <= stop and step > 0")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            values = [lo + k * step for k in range(n)]
            return [kind(round(v, 10)) if kind is float else kind(v) for v in values]
        return [kind(p) for p in text.split(",")]
    except ValueError as exc:
        raise CliInputError(f"bad range {text!r}: {exc}") from None


def _csv_text(header, rows, comment=None) -> str:
    buf = io.StringIO()
    buf.write(f"# evnet {comment or 'table'} schema_version={METRICS_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".10g")
    return str(v)


def blocking_grid_rows(s_values, r_values, lam_values, mu, nu) -> list[tuple]:
    rows = []
    for s in s_values:
        for r in r_values:
            for lam in lam_values:
                rows.append((s, r, lam, loss_probability(int(s), int(r), float(lam), mu, nu)))
    return rows


def profit_rows(cfg: StationConfig, lam_values, costs: ProfitCosts, p_normal=None, p_block=None) -> list[tuple]:
    """Expected profit per unit time across arrival rates.

    Revenue from served customers minus blocking penalties minus the fixed
    cost of the grid slots and storage units.
    """
    pn = cfg.price_normal if p_normal is None else p_normal
    pb = cfg.price_block_penalty if p_block is None else p_block
    fixed = costs.grid_slot_cost * cfg.grid_slots + costs.storage_unit_cost * cfg.storage_units
    rows = []
    for lam in lam_values:
        b = blocking_probability(cfg, lam)
        rows.append((lam, b, pn * lam * (1 - b) - pb * lam * b - fixed))
    return rows


def _scenario(args):
    if args.scenario and args.preset:
        raise CliInputError("give either --scenario or --preset, not both")
    if args.scenario:
        path = Path(args.scenario)
        if not path.is_file():
            raise CliInputError(f"{path}: no such scenario file")
        return load_scenario(path)
    return load_preset(args.preset or "paper-network")


def _emit(args, name, text):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
        print(f"wrote {out / name}")
    else:
        sys.stdout.write(text)


def _stations_arg(text, n):
    if text is None:
        return None
    idx = parse_range(text, int)
    for i in idx:
        if not 0 <= i < n:
            raise CliInputError(f"station index {i} out of range 0..{n - 1}")
    return idx


def cmd_blocking_grid(args):
    s_vals = parse_range(args.slots, int)
    r_vals = parse_range(args.storage, int)
    lam_vals = parse_range(args.rates, float)
    if min(s_vals) < 0 or min(r_vals) < 0 or min(lam_vals) < 0:
        raise CliInputError("slots, storage and rates must be nonnegative")
    if not (args.mu > 0 and args.nu > 0):
        raise CliInputError("--mu and --nu must be positive")
    rows = blocking_grid_rows(s_vals, r_vals, lam_vals, args.mu, args.nu)
    _emit(args, "blocking_grid.csv", _csv_text(["slots", "storage", "rate", "blocking"], rows, "blocking-grid"))


def cmd_profit_curve(args):
    cfg = StationConfig(
        args.slots,
        args.storage,
        args.mu,
        args.nu,
        price_normal=args.p_normal,
        price_block_penalty=args.p_block,
    )
    costs = ProfitCosts(args.grid_cost, args.storage_cost)
    rows = profit_rows(cfg, parse_range(args.rates, float), costs)
    _emit(args, "profit_curve.csv", _csv_text(["rate", "blocking", "profit"], rows, "profit-curve"))


def _apply_overrides(sc, args):
    changes = {}
    for key in ("seed", "replications", "horizon", "start"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "tier", None):
        changes["tier"] = args.tier
    return sc.with_run(**changes) if changes else sc


def cmd_run(args):
    sc = _apply_overrides(_scenario(args), args)
    m = run_simulation(sc)
    measure = (sc.run.measure_start, sc.run.measure_end)
    if args.out:
        _emit(args, "metrics.csv", metrics_csv(m))
        _emit(args, "summary.json", metrics_summary(m, measure))
    elif args.format == "csv":
        sys.stdout.write(metrics_csv(m))
    else:
        sys.stdout.write(metrics_summary(m, measure))


def cmd_compare(args):
    sc = _apply_overrides(_scenario(args), args)
    cmp = compare_tiers(sc)
    rows = cmp.rows()
    if args.format == "json":
        _emit(args, "compare.json", json.dumps(rows, indent=2) + "\n")
    else:
        header = list(rows[0]) if rows else ["hour"]
        _emit(args, "compare.csv", _csv_text(header, [list(r.values()) for r in rows], "compare"))


def _lambda_star(cfg, gamma):
    # a station that blocks everyone admits nothing
    try:
        return float(max_admissible_rate(cfg, gamma=gamma))
    except InfeasibleError:
        return 0.0


def cmd_allocate(args):
    sc = _scenario(args)
    gamma = (sc.game.gamma1, sc.game.gamma2)
    lam = float(sc.profile.rates(sc.allocation_time)) * scenario_shares(sc)
    slots, report = tier_allocation(sc, "allocation_only")
    if args.strict and report.phase1.violations:
        raise InfeasibleError(f"stations {report.phase1.violations} stay above qos_max after Phase I")
    before = sc.baseline_slots

    def p_bt(vec):
        out = []
        for c, s, r in zip(sc.stations, vec, lam):
            b = loss_probability(int(s), c.storage_units, float(r), c.charge_rate, c.storage_recharge_rate)
            out.append(weighted_blocking(b, b, *gamma))
        return out

    doc = {
        "allocation_time": sc.allocation_time,
        "rates": lam.tolist(),
        "s_max": sc.s_max,
        "s_limit": sc.s_limit,
        "baseline_slots": [int(v) for v in before],
        "phase1_slots": [int(v) for v in report.phase1.slots],
        "saturated": report.phase1.saturated,
        "excess": {str(k): v for k, v in report.phase1.excess.items()},
        "unclaimed": report.phase1.unclaimed,
        "grants": {str(k): {str(i): u for i, u in g.items()} for k, g in report.phase2.grants.items()},
        "undistributed": report.phase2.undistributed,
        "final_slots": [int(v) for v in slots],
        "total": int(slots.sum()),
        "violations": report.phase1.violations,
        "p_bt_baseline": p_bt(before),
        "p_bt_final": p_bt(slots),
        "lambda_star": [_lambda_star(replace(c, grid_slots=int(s)), gamma) for c, s in zip(sc.stations, slots)],
    }
    if args.format == "json":
        _emit(args, "allocation.json", json.dumps(doc, indent=2, default=int) + "\n")
        return
    rows = [
        (i, lam[i], before[i], report.phase1.slots[i], slots[i], doc["p_bt_baseline"][i], doc["p_bt_final"][i], doc["lambda_star"][i])
        for i in range(len(sc.stations))
    ]
    header = ["station", "rate", "slots_baseline", "slots_phase1", "slots_final", "p_bt_baseline", "p_bt_final", "lambda_star"]
    text = _csv_text(header, rows, "allocation")
    text += f"# excess={doc['excess']} unclaimed={doc['unclaimed']} undistributed={doc['undistributed']} total={doc['total']}\n"
    _emit(args, "allocation.csv", text)


def cmd_theta_sweep(args):
    sc = _apply_overrides(_scenario(args), args)
    grid = parse_range(args.grid, float) if args.grid else None
    stations = _stations_arg(args.stations, len(sc.stations))
    measure = tuple(parse_range(args.measure, float)) if args.measure else None
    if measure is not None and len(measure) != 2:
        raise CliInputError("--measure takes two times, e.g. 16,17")
    sw = theta_sweep(sc, grid=grid, stations=stations, mode=args.mode, measure=measure)
    rows = sw.rows()
    if args.format == "json":
        _emit(args, "theta_sweep.json", json.dumps({"best_theta": sw.best_theta, "rows": rows}, indent=2) + "\n")
    else:
        text = _csv_text(list(rows[0]), [list(r.values()) for r in rows], "theta-sweep")
        text += f"# best_theta={sw.best_theta} mode={args.mode} stations={sw.stations}\n"
        _emit(args, "theta_sweep.csv", text)


def cmd_presets(args):
    if args.name:
        sys.stdout.write(dump_scenario(load_preset(args.name)))
    else:
        for name in preset_names():
            print(name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evnet", description="EV charging network planning and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_opts(p, sim=True):
        p.add_argument("--scenario", help="scenario YAML file")
        p.add_argument("--preset", help=f"built-in scenario ({', '.join(preset_names())})")
        if sim:
            p.add_argument("--seed", type=int)
            p.add_argument("--replications", type=int)
            p.add_argument("--horizon", type=float, help="simulated hours")
            p.add_argument("--start", type=float, help="simulation start time")

    def output_opts(p, default="csv"):
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=default)

    p = sub.add_parser("blocking-grid", help="analytic blocking over an S x R x rate grid")
    p.add_argument("--slots", default="1:10", help="grid slot counts, e.g. 1:10 or 2,4,8")
    p.add_argument("--storage", default="0:8")
    p.add_argument("--rates", default="1:20")
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--nu", type=float, default=4.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_blocking_grid)

    p = sub.add_parser("profit-curve", help="expected station profit against arrival rate")
    p.add_argument("--slots", type=int, default=5)
    p.add_argument("--storage", type=int, default=5)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--nu", type=float, default=4.0)
    p.add_argument("--rates", default="1:20")
    p.add_argument("--p-normal", type=float, default=4.0)
    p.add_argument("--p-block", type=float, default=5.0)
    p.add_argument("--grid-cost", type=float, default=ProfitCosts.grid_slot_cost)
    p.add_argument("--storage-cost", type=float, default=ProfitCosts.storage_unit_cost)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profit_curve)

    p = sub.add_parser("run", help="simulate one tier and write metrics")
    scenario_opts(p)
    p.add_argument("--tier", choices=("baseline", "allocation", "full"))
    output_opts(p, default="json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="hourly comparison of all three tiers")
    scenario_opts(p)
    output_opts(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("allocate", help="two-phase grid power allocation report")
    scenario_opts(p, sim=False)
    p.add_argument("--strict", action="store_true", help="fail when a station stays above qos_max")
    output_opts(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("theta-sweep", help="QoS and revenue against the pricing parameter")
    scenario_opts(p)
    p.add_argument("--grid", help="theta values, e.g. 0:1:0.05")
    p.add_argument("--stations", help="0-based station indices to sweep, e.g. 1,2")
    p.add_argument("--measure", help="measurement window start,end")
    p.add_argument("--mode", choices=("payoff", "qos"), default="payoff")
    output_opts(p)
    p.set_defaults(func=cmd_theta_sweep)

    p = sub.add_parser("presets", help="list built-in scenarios, or print one as YAML")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (InfeasibleError, SingularChainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
