"""
Command-line front end::

    curvyaqm curve|solve|provision|simulate [--config FILE] [flags]

Configuration is one JSON document; any flag given on the command line
overrides the matching config field. Human units live here only: ms,
bytes, %, Mb/s on the outside, SI inside.

Exit codes: 0 ok, 1 usage/validation, 2 I/O, 3 saturation, 4 unstable
simulation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import model, provisioning, sim, steady_state
from .errors import DomainError, SaturationError, SimulationUnstable

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SATURATION, EXIT_UNSTABLE = 0, 1, 2, 3, 4

SEED_ENV = "CURVYAQM_SEED"

LANDMARK_RATES_MBPS = (0.25, 0.5, 1, 2, 4, 8, 16)

DEFAULTS = {
    "traffic": {"preset": "reno", "tcp_constant": None, "mss_bytes": 1500, "base_rtt_ms": 20},
    "aqm": {
        "curviness": [1, 2, 4, 8],
        "clamp": True,
        "design_point": {"delay_ms": 20, "drop_pct": 2},
        "scale_delay_ms": None,
        "clamp_target_ms": None,
    },
    "link": {"capacity_mbps": None},
    "grid": {"load_min": 0.02, "load_max": 2.0, "points": 200},
    "output": {"dir": ".", "prefix": "dilemma"},
    "provision": {"flows": None, "aggregation": list(provisioning.DEFAULT_AGGREGATION)},
    "sim": {"n_flows": None, "duration_rtts": sim.DEFAULT_DURATION, "warmup_rtts": None,
            "seed": 1, "seeds": 1},
}

# flag dest -> config path
FLAG_PATHS = {
    "preset": ("traffic", "preset"),
    "tcp_constant": ("traffic", "tcp_constant"),
    "mss_bytes": ("traffic", "mss_bytes"),
    "base_rtt_ms": ("traffic", "base_rtt_ms"),
    "u": ("aqm", "curviness"),
    "clamp": ("aqm", "clamp"),
    "design_delay_ms": ("aqm", "design_point", "delay_ms"),
    "design_drop_pct": ("aqm", "design_point", "drop_pct"),
    "scale_delay_ms": ("aqm", "scale_delay_ms"),
    "clamp_target_ms": ("aqm", "clamp_target_ms"),
    "capacity_mbps": ("link", "capacity_mbps"),
    "load_min": ("grid", "load_min"),
    "load_max": ("grid", "load_max"),
    "points": ("grid", "points"),
    "out_dir": ("output", "dir"),
    "prefix": ("output", "prefix"),
    "flows": ("provision", "flows"),
    "m": ("provision", "aggregation"),
    "n_flows": ("sim", "n_flows"),
    "duration_rtts": ("sim", "duration_rtts"),
    "warmup_rtts": ("sim", "warmup_rtts"),
    "seed": ("sim", "seed"),
    "seeds": ("sim", "seeds"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _number_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _rtt_arg(text):
    values = _number_list(text)
    return values[0] if len(values) == 1 else values


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    g = common.add_argument_group("traffic")
    g.add_argument("--preset", choices=["reno", "cubic-reno"])
    g.add_argument("--tcp-constant", type=float, help="K, overrides the preset")
    g.add_argument("--mss-bytes", type=float)
    g.add_argument("--base-rtt-ms", type=_rtt_arg,
                   help="base RTT; a comma list gives one family per value (curve only)")
    g = common.add_argument_group("aqm")
    g.add_argument("--u", type=_number_list, help="comma-separated curviness values")
    g.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--design-delay-ms", type=float)
    g.add_argument("--design-drop-pct", type=float)
    g.add_argument("--scale-delay-ms", type=float, help="explicit D_q instead of anchoring")
    g.add_argument("--clamp-target-ms", type=float, help="defaults to the design delay")
    g = common.add_argument_group("link / output")
    g.add_argument("--capacity-mbps", type=_capacity_arg)
    g.add_argument("--out-dir")
    g.add_argument("--prefix")

    parser = _Parser(prog="curvyaqm", description="Curvy RED steady-state delay/loss analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("curve", parents=[common], help="delay and drop against normalized load")
    p.add_argument("--load-min", type=float)
    p.add_argument("--load-max", type=float)
    p.add_argument("--points", type=int)

    p = sub.add_parser("solve", parents=[common], help="one operating point")
    p.add_argument("--load", type=float, required=True)
    p.add_argument("--curve", help="curviness value or 'clamp' when the config lists several")
    p.add_argument("--format", choices=["text", "csv"], default="text")

    p = sub.add_parser("provision", parents=[common], help="capacity for flows or flows for capacity")
    p.add_argument("--flows", type=float)
    p.add_argument("--m", type=_number_list, help="aggregation factors, default 4,25,100")

    p = sub.add_parser("simulate", parents=[common], help="AIMD simulation against the model")
    p.add_argument("--curve", help="curviness value or 'clamp' when the config lists several")
    p.add_argument("--n-flows", type=int)
    p.add_argument("--duration-rtts", type=int)
    p.add_argument("--warmup-rtts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds to average")
    return parser


def _capacity_arg(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected Mb/s or 'auto', got {text!r}")


def _merge(base, update):
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_settings(args):
    """Defaults, then config file, then environment, then flags."""
    settings = copy.deepcopy(DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        _merge(settings, doc)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            settings["sim"]["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}")
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = settings
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return settings


def traffic_models(settings):
    t = settings["traffic"]
    if t.get("tcp_constant") is not None:
        k = float(t["tcp_constant"])
    elif t.get("preset") == "reno":
        k = model.RENO_K
    elif t.get("preset") == "cubic-reno":
        k = model.CUBIC_RENO_K
    else:
        raise UsageError(f"unknown traffic preset {t.get('preset')!r}")
    rtts = t["base_rtt_ms"]
    rtts = rtts if isinstance(rtts, list) else [rtts]
    if not rtts:
        raise UsageError("no base RTT given")
    mss = float(t["mss_bytes"]) * model.BITS_PER_BYTE
    return [model.TrafficModel(k, mss, float(ms) / 1000) for ms in rtts]


def traffic_model(settings):
    tms = traffic_models(settings)
    if len(tms) != 1:
        raise UsageError("this command takes a single base RTT")
    return tms[0]


def design_point(settings):
    dp = settings["aqm"]["design_point"]
    return model.DesignPoint(float(dp["delay_ms"]) / 1000, float(dp["drop_pct"]) / 100)


def curviness_values(settings):
    us = settings["aqm"].get("curviness") or []
    if not isinstance(us, list):
        us = [us]
    return [float(u) for u in us]


def clamp_target(settings):
    ms = settings["aqm"].get("clamp_target_ms")
    return design_point(settings).delay if ms is None else float(ms) / 1000


def build_curve(settings, u):
    if math.isinf(u):
        return model.Clamp(clamp_target(settings))
    scale_ms = settings["aqm"].get("scale_delay_ms")
    if scale_ms is not None:
        return model.CurvyRed(u, float(scale_ms) / 1000)
    return model.anchored_curve(design_point(settings), u)


def single_curve(settings, choice):
    """Pick the one AQM curve a command acts on."""
    if choice is not None:
        u = math.inf if choice.strip().lower() in ("clamp", "inf") else float(choice)
        return build_curve(settings, u)
    members = curviness_values(settings)
    if settings["aqm"].get("clamp"):
        members.append(math.inf)
    if len(members) != 1:
        raise UsageError(
            "config describes %d curves; pick one with --curve" % len(members)
        )
    return build_curve(settings, members[0])


def _note_concave(curve):
    if isinstance(curve, model.CurvyRed) and curve.concave:
        print(f"note: curviness {curve.curviness:g} < 1 gives a concave curve, "
              "a regime without published characterisation", file=sys.stderr)


def _fmt(v):
    return f"{v:.10g}"


def _u_label(u):
    return "inf" if math.isinf(u) else _fmt(u)


def _open_out(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_family_csv(fh, family):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["L", "u", "dq_ms", "p", "saturated"])
    for u in family.curviness:
        for pt in family.points[u]:
            w.writerow([_fmt(pt.load), _u_label(u), _fmt(pt.delay * 1000), _fmt(pt.drop),
                        int(pt.saturated)])


def rate_landmarks(tm, lo, hi, rates_mbps=LANDMARK_RATES_MBPS):
    """(rate in Mb/s, load) pairs that fall inside [lo, hi]."""
    marks = []
    for r in rates_mbps:
        load = model.load_for_rate(tm, r * 1e6)
        if lo <= load <= hi:
            marks.append((r, load))
    return marks


def write_landmarks_csv(fh, marks):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x_mbps", "L"])
    for r, load in marks:
        w.writerow([_fmt(r), _fmt(load)])


def gnuplot_script(csv_name, family, tm, marks, image_name):
    rtt_ms = tm.base_rtt * 1000
    tics = ", ".join(f'"{_fmt(r)}" {_fmt(load)}' for r, load in marks)
    lines = [
        "# delay (left axis) and drop (right axis) against normalized load",
        'set datafile separator ","',
        "set terminal pngcairo size 900,600",
        f'set output "{image_name}"',
        f'set title "Curvy RED, base RTT {_fmt(rtt_ms)} ms"',
        'set xlabel "normalized load L"',
        'set ylabel "queuing delay [ms]"',
        'set y2label "drop probability"',
        "set ytics nomirror",
        "set y2tics",
        f"set xrange [{_fmt(family.grid[0])}:{_fmt(family.grid[-1])}]",
        "set yrange [0:*]",
        "set y2range [0:1]",
        'set key top left',
    ]
    if tics:
        lines += [f"set x2tics ({tics})", "set link x2",
                  'set x2label "rate per flow [Mb/s]"']
    plots = []
    for i, u in enumerate(family.curviness, start=1):
        label = "clamp" if math.isinf(u) else f"u={_fmt(u)}"
        sel = f'(strcol(2) eq "{_u_label(u)}" ? ${{col}} : 1/0)'
        plots.append(f'"{csv_name}" using 1:{sel.format(col=3)} axes x1y1 '
                     f'with lines lc {i} dt 1 title "{label} delay"')
        plots.append(f'"{csv_name}" using 1:{sel.format(col=4)} axes x1y2 '
                     f'with lines lc {i} dt 2 title "{label} drop"')
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_curve(args, settings):
    tms = traffic_models(settings)
    us = curviness_values(settings)
    if not us:
        raise UsageError("no curviness values given")
    g = settings["grid"]
    grid = steady_state.log_grid(float(g["load_min"]), float(g["load_max"]), int(g["points"]))
    out_dir = Path(settings["output"]["dir"])
    prefix = settings["output"]["prefix"]
    include_clamp = bool(settings["aqm"].get("clamp"))
    written = []
    for tm in tms:
        curves = {u: build_curve(settings, u) for u in us + ([math.inf] if include_clamp else [])}
        for curve in curves.values():
            _note_concave(curve)
        family = steady_state.solve_family(tm, curves, grid)
        stem = prefix if len(tms) == 1 else f"{prefix}_rtt{_fmt(tm.base_rtt * 1000)}ms"
        marks = rate_landmarks(tm, grid[0], grid[-1])
        with _open_out(out_dir / f"{stem}.csv") as fh:
            write_family_csv(fh, family)
        with _open_out(out_dir / f"{stem}_landmarks.csv") as fh:
            write_landmarks_csv(fh, marks)
        with _open_out(out_dir / f"{stem}.gp") as fh:
            fh.write(gnuplot_script(f"{stem}.csv", family, tm, marks, f"{stem}.png"))
        written += [f"{stem}.csv", f"{stem}_landmarks.csv", f"{stem}.gp"]
    for name in written:
        print(out_dir / name)
    return EXIT_OK


def cmd_solve(args, settings):
    tm = traffic_model(settings)
    if not args.load > 0:
        raise UsageError("--load must be positive")
    curve = single_curve(settings, args.curve)
    _note_concave(curve)
    if isinstance(curve, model.CurvyRed):
        delay = steady_state.solve_delay(tm, curve, args.load)
        drop = model.drop_prob(curve, delay)
    else:
        pt = steady_state.clamp_point(tm, curve.target, args.load)
        if pt.saturated:
            max_load = (tm.base_rtt + curve.target) / tm.base_rtt
            raise SaturationError(args.load, max_load)
        delay, drop = pt
    rate = model.rate_for_load(tm, args.load)
    row = {
        "L": args.load,
        "dq_ms": delay * 1000,
        "p_pct": drop * 100,
        "x_mbps": rate / 1e6,
        "dR_ms": model.rtt(tm, delay) * 1000,
    }
    cap = settings["link"].get("capacity_mbps")
    if cap is not None and cap != "auto":
        row["n"] = float(cap) * 1e6 / rate
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(row.keys())
        w.writerow(_fmt(v) for v in row.values())
    else:
        for key, value in row.items():
            print(f"{key:<7}{_fmt(value)}")
    return EXIT_OK


def cmd_provision(args, settings):
    tm = traffic_model(settings)
    dp = design_point(settings)
    flows = settings["provision"].get("flows")
    cap = settings["link"].get("capacity_mbps")
    if cap == "auto":
        cap = None
    if (flows is None) == (cap is None):
        raise UsageError("give exactly one of --flows or --capacity-mbps")
    if flows is not None:
        inp = provisioning.ProvisioningInput(tm, dp, float(flows))
        capacity = provisioning.required_capacity(inp)
    else:
        capacity = float(cap) * 1e6
        inp = provisioning.ProvisioningInput(
            tm, dp, provisioning.supportable_flows(tm, capacity, dp))
    factors = [float(m) for m in settings["provision"]["aggregation"]]
    rows = provisioning.aggregation_table(inp, factors)
    print(f"design point   {_fmt(dp.delay * 1000)} ms, {_fmt(dp.drop * 100)} %")
    print(f"base RTT       {_fmt(tm.base_rtt * 1000)} ms")
    print(f"flows          {inp.flows:.6g}")
    print(f"capacity_mbps  {capacity / 1e6:.6g}")
    print()
    print(f"{'m':>6} {'target_ms':>10} {'factor':>8} {'flows':>10} {'capacity_mbps':>14}")
    for r in rows:
        flag = "  below buffer floor" if r.below_floor else ""
        print(f"{r.factor:>6g} {r.delay_target * 1000:>10.4g} {r.overprovision:>8.4f} "
              f"{r.factor * inp.flows:>10.6g} {r.capacity / 1e6:>14.6g}{flag}")
    return EXIT_OK


def cmd_simulate(args, settings):
    tm = traffic_model(settings)
    s = settings["sim"]
    if s.get("n_flows") is None:
        raise UsageError("simulate needs n_flows (--n-flows)")
    n_flows = int(s["n_flows"])
    curve = single_curve(settings, args.curve)
    cap = settings["link"].get("capacity_mbps")
    if cap is None:
        raise UsageError("simulate needs a link capacity (--capacity-mbps, or 'auto')")
    if cap == "auto":
        capacity = provisioning.required_capacity(
            provisioning.ProvisioningInput(tm, design_point(settings), n_flows))
    else:
        capacity = float(cap) * 1e6
    n_seeds = int(s.get("seeds") or 1)
    if n_seeds < 1:
        raise UsageError("seeds must be at least 1")
    try:
        cfg = sim.SimConfig(tm, capacity, n_flows, curve,
                            duration_rtts=int(s["duration_rtts"]),
                            warmup_rtts=None if s.get("warmup_rtts") is None else int(s["warmup_rtts"]),
                            seed=int(s["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc))

    trace = sim.Trace()
    results = [sim.run(cfg, trace)]
    results += sim.run_seeds(replace(cfg, seed=(cfg.seed + 1) % 2**64), n_seeds - 1)
    analytic = steady_state.solve_point(tm, curve, cfg.load)

    mean = lambda attr: sum(getattr(r, attr) for r in results) / len(results)
    summary = {
        "load": cfg.load,
        "capacity_mbps": capacity / 1e6,
        "n_flows": n_flows,
        "aqm": "clamp" if isinstance(curve, model.Clamp) else _fmt(curve.curviness),
        "seed": cfg.seed,
        "seeds": n_seeds,
        "rng": sim.RNG_NAME,
        "rounds": cfg.duration_rtts,
        "warmup_rounds": cfg.warmup_rtts,
        "sim": {
            "dq_ms": mean("mean_delay") * 1000,
            "p": mean("mean_drop"),
            "rate_per_flow_mbps": mean("mean_rate_per_flow") / 1e6,
            "utilization": mean("utilization"),
        },
        "analytic": {
            "dq_ms": analytic.delay * 1000,
            "p": analytic.drop,
            "rate_per_flow_mbps": analytic.rate / 1e6,
            "saturated": analytic.saturated,
        },
    }
    summary["rel_error"] = {
        key: abs(summary["sim"][key] - summary["analytic"][key]) / summary["analytic"][key]
        for key in ("dq_ms", "p", "rate_per_flow_mbps")
        if summary["analytic"][key] > 0
    }

    out_dir = Path(settings["output"]["dir"])
    prefix = settings["output"]["prefix"]
    with _open_out(out_dir / f"{prefix}_trace.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "dq_ms", "p", "rate_total"])
        for k, (dq, p, rate) in enumerate(zip(trace.delay, trace.drop, trace.rate_total)):
            w.writerow([k, _fmt(dq * 1000), _fmt(p), _fmt(rate / 1e6)])
    with _open_out(out_dir / f"{prefix}_summary.json") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"load {cfg.load:.6g}, {n_flows} flows, {capacity / 1e6:.6g} Mb/s, "
          f"{n_seeds} seed(s) from {cfg.seed}")
    print(f"{'':<20}{'sim':>12}{'analytic':>12}{'rel_err':>10}")
    for key in ("dq_ms", "p", "rate_per_flow_mbps"):
        err = summary["rel_error"].get(key)
        err_s = f"{err:>10.4f}" if err is not None else f"{'-':>10}"
        print(f"{key:<20}{summary['sim'][key]:>12.6g}{summary['analytic'][key]:>12.6g}{err_s}")
    print(f"{'utilization':<20}{summary['sim']['utilization']:>12.6g}")
    return EXIT_OK


COMMANDS = {
    "curve": cmd_curve,
    "solve": cmd_solve,
    "provision": cmd_provision,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args)
        return COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(f"curvyaqm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SaturationError as exc:
        print(f"curvyaqm: saturated: {exc}", file=sys.stderr)
        print(f"max_load {_fmt(exc.max_load)}")
        return EXIT_SATURATION
    except SimulationUnstable as exc:
        print(f"curvyaqm: unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (DomainError, ValueError, TypeError, KeyError) as exc:
        print(f"curvyaqm: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"curvyaqm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
