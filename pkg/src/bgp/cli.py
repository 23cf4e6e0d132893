"""``bgp`` command line: simulate, ode, sweep, verify-coupling.

Every command writes into ``--out`` (created if missing) and finishes by
writing ``manifest.json`` there. Exit status: 0 success, 1 usage error,
2 numerical or verification failure.

Settings resolve as command-line flag > ``--config`` file (key=value lines)
> built-in default. ``BGP_SEED`` replaces the built-in default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction
from typing import Optional, Sequence

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get("BGP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"BGP_SEED must be an integer, got {raw!r}") from None


def _k_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# defaults per command; "seed" is filled in at resolve time
DEFAULTS = {
    "simulate": {"n": None, "K": None, "mode": "exact", "seed": None, "seeds": 1,
                 "t_max": 1.0, "stride": None, "jobs": None},
    "ode": {"K": None, "rtol": 1e-10, "atol": 1e-12, "z_switch": 1e3, "grid_step": 1e-3},
    "sweep": {"k_min": None, "k_max": None, "k_step": None, "k_list": None,
              "rtol": 1e-10, "atol": 1e-12, "simulate": False, "n": 100_000,
              "seeds": 10, "alpha": 0.01, "seed": None, "mode": "exact",
              "rule": "auto", "jobs": None},
    "verify-coupling": {"n": None, "K": None, "t": None, "property": None, "flow": None},
}
REQUIRED = {"simulate": ("n", "K"), "ode": ("K",), "sweep": (), "verify-coupling": ()}


def build_parser() -> _Parser:
    parser = _Parser(prog="bgp", description="Biased graph process toolkit.")
    parser.add_argument("--version", action="version", version=f"bgp {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--out", default="bgp-out", help="output directory (default: bgp-out)")
        p.add_argument("--config", help="key=value file of default settings")

    p = sub.add_parser("simulate", help="run the graph process and write traces")
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=float)
    p.add_argument("--mode", choices=("exact", "approximate"))
    p.add_argument("--seed", type=int, help="first seed (default 0, or $BGP_SEED)")
    p.add_argument("--seeds", type=_positive_int, help="number of runs, seeds seed..seed+seeds-1")
    p.add_argument("--t-max", type=float)
    p.add_argument("--stride", type=_positive_int, help="steps between trace rows")
    p.add_argument("--jobs", type=_positive_int)
    common(p)

    p = sub.add_parser("ode", help="solve the (y, z) system up to the blowup")
    p.add_argument("--K", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--z-switch", type=float)
    p.add_argument("--grid-step", type=float)
    common(p)

    p = sub.add_parser("sweep", help="critical time over a grid of K")
    p.add_argument("--k-min", type=float)
    p.add_argument("--k-max", type=float)
    p.add_argument("--k-step", type=float)
    p.add_argument("--k-list", type=_k_list, help="comma-separated K values")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--simulate", action="store_const", const=True,
                   help="add simulated critical times per K")
    p.add_argument("--n", type=int)
    p.add_argument("--seeds", type=_positive_int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("exact", "approximate"))
    p.add_argument("--rule", choices=("auto", "threshold", "derivative"))
    p.add_argument("--jobs", type=_positive_int)
    common(p)

    p = sub.add_parser("verify-coupling", help="exact domination or flow-coupling checks")
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=_fraction)
    p.add_argument("--t", type=int)
    p.add_argument("--property", help="contains-edge:a,b | min-component-size:k | "
                                      "edge-count-at-least:m")
    p.add_argument("--flow", help="coupling problem JSON file")
    common(p)
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _convert(parser: argparse.ArgumentParser, key: str, raw: str):
    for action in parser._actions:
        if action.dest == key:
            if action.const is True:
                return raw.lower() in ("1", "true", "yes", "on")
            if action.choices and raw not in action.choices:
                raise UsageError(f"config: {key} must be one of {list(action.choices)}")
            conv = action.type or str
            try:
                return conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config: bad value for {key}: {exc}") from None
    raise UsageError(f"config: unknown key {key!r}")


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Merge flags, config file and defaults into one settings dict."""
    cmd = args.command
    settings = dict(DEFAULTS[cmd])
    if "seed" in settings:
        settings["seed"] = _default_seed()
    if "jobs" in settings:
        settings["jobs"] = os.cpu_count() or 1
    sub = parser._subparsers._group_actions[0].choices[cmd]
    if args.config:
        for key, raw in _read_config(args.config).items():
            if key in ("out", "config"):
                continue
            settings[key] = _convert(sub, key, raw)
    for key in DEFAULTS[cmd]:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    missing = [k for k in REQUIRED[cmd] if settings[k] is None]
    if missing:
        raise UsageError(f"{cmd}: missing required setting(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    settings["out"] = args.out
    return settings


class _Writer:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, out: str):
        self.out = out
        self.paths: list[str] = []

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def text(self, name: str, text: str) -> str:
        from .process import _atomic_write
        os.makedirs(self.out, exist_ok=True)
        p = self.path(name)
        self.paths.append(p)
        _atomic_write(p, text)
        return p

    def record(self, *paths: str) -> None:
        self.paths.extend(paths)

    def rollback(self) -> None:
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)
        self.paths.clear()


def _jsonable(settings: dict) -> dict:
    return {k: (str(v) if isinstance(v, Fraction) else v) for k, v in settings.items()}


def _k_tag(K) -> str:
    return format(float(K), "g") if not isinstance(K, Fraction) else str(K).replace("/", "_")


# -- commands ------------------------------------------------------------------

def _simulate_one(config):
    from .process import run
    return run(config)


def cmd_simulate(s: dict, w: _Writer) -> tuple[int, dict]:
    from .process import RNG_NAME, ProcessConfig

    try:
        configs = [ProcessConfig(s["n"], s["K"], s["mode"], s["seed"] + i, s["t_max"], s["stride"])
                   for i in range(s["seeds"])]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if s["jobs"] > 1 and len(configs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(min(s["jobs"], len(configs))) as pool:
            traces = list(pool.map(_simulate_one, configs))
    else:
        traces = [_simulate_one(c) for c in configs]

    os.makedirs(w.out, exist_ok=True)
    summary = []
    for cfg, trace in zip(configs, traces):
        name = f"trace_n{cfg.n}_K{_k_tag(cfg.K)}_{cfg.mode}_seed{cfg.seed}.csv"
        paths = trace.write(w.path(name))
        w.record(*paths)
        summary.append({"seed": cfg.seed, "final_t": float(trace.t[-1]),
                        "I": float(trace.I[-1]), "S": float(trace.S[-1]),
                        "Lmax": float(trace.Lmax[-1]), "rows": len(trace)})
        print(f"seed {cfg.seed}: t={trace.t[-1]:.6f} I={trace.I[-1]:.6f} "
              f"S={trace.S[-1]:.6f} Lmax={trace.Lmax[-1]:.6f} -> {paths[0]}")
    return EXIT_OK, {"rng": RNG_NAME, "seeds": [c.seed for c in configs], "runs": summary}


def cmd_ode(s: dict, w: _Writer) -> tuple[int, dict]:
    from .ode import OdeError, SolverConfig, solve

    if s["K"] < 0:
        raise UsageError("ode: K must be non-negative")
    try:
        cfg = SolverConfig(rtol=s["rtol"], atol=s["atol"], z_switch=s["z_switch"],
                           grid_step=s["grid_step"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        sol = solve(s["K"], cfg)
    except OdeError as exc:
        print(f"ode: solver failed for K={s['K']} with {cfg}: {exc}", file=sys.stderr)
        return EXIT_FAILURE, {"error": str(exc)}
    os.makedirs(w.out, exist_ok=True)
    paths = sol.write(w.path(f"ode_K{_k_tag(s['K'])}.csv"))
    w.record(*paths)
    print(f"K={s['K']:g} t_c={sol.t_c!r} method={sol.method} "
          f"bracket=[{sol.blowup_bracket[0]!r}, {sol.blowup_bracket[1]!r}]")
    return EXIT_OK, {"result": sol.summary()}


def _compare_one(args):
    from .critical import compare_simulation_vs_ode
    from .process import ThresholdNotReached
    K, s = args
    try:
        return compare_simulation_vs_ode(K, s["n"], s["seeds"], s["alpha"], s["seed"],
                                         s["rule"], s["mode"]).to_dict()
    except (ThresholdNotReached, ValueError) as exc:
        return {"error": str(exc)}


def cmd_sweep(s: dict, w: _Writer) -> tuple[int, dict]:
    from .critical import k_grid, sweep
    from .ode import SolverConfig

    grid_flags = [s[k] is not None for k in ("k_min", "k_max", "k_step")]
    if s["k_list"] is not None:
        if any(grid_flags):
            raise UsageError("sweep: give either --k-list or --k-min/--k-max/--k-step")
        grid = s["k_list"]
    elif all(grid_flags):
        try:
            grid = k_grid(s["k_min"], s["k_max"], s["k_step"])
        except ValueError as exc:
            raise UsageError(f"sweep: {exc}") from None
    else:
        raise UsageError("sweep: need --k-list or all of --k-min, --k-max, --k-step")
    try:
        cfg = SolverConfig(rtol=s["rtol"], atol=s["atol"])
        report = sweep(grid, cfg, require_monotone=False, jobs=s["jobs"])
    except ValueError as exc:
        raise UsageError(f"sweep: {exc}") from None

    lines = report.csv_text().splitlines()
    flagged = len(report.failed)
    if s["simulate"]:
        work = [(r.K, s) for r in report.rows]
        if s["jobs"] > 1 and len(work) > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(min(s["jobs"], len(work))) as pool:
                records = list(pool.map(_compare_one, work))
        else:
            records = [_compare_one(x) for x in work]
        lines[0] += ",tc_sim,tc_sim_se,difference,rule"
        for i, (row, rec) in enumerate(zip(report.rows, records), 1):
            if "error" in rec:
                if row.estimate is not None:
                    flagged += 1
                cells = lines[i].split(",")
                note = "simulation failed: " + rec["error"].replace(",", ";")
                cells[6] = note if cells[6] == "ok" else cells[6] + "; " + note
                lines[i] = ",".join(cells) + ",,,,"
            else:
                lines[i] += (f",{rec['simulated']!r},{rec['simulated_se']!r},"
                             f"{rec['difference']!r},{rec['rule']}")

    w.text("sweep.csv", "\n".join(lines) + "\n")
    monotone = report.strictly_decreasing()
    print(f"{len(report.rows)} K values, {flagged} flagged, "
          f"strictly decreasing: {monotone} -> {w.path('sweep.csv')}")
    return (EXIT_FAILURE if flagged else EXIT_OK), {
        "grid": grid, "strictly_decreasing": monotone, "flagged": flagged,
        "seeds": [s["seed"] + i for i in range(s["seeds"])] if s["simulate"] else []}


def cmd_verify_coupling(s: dict, w: _Writer) -> tuple[int, dict]:
    from . import coupling as cp

    if s["flow"] is not None:
        if any(s[k] is not None for k in ("n", "K", "t", "property")):
            raise UsageError("verify-coupling: --flow excludes --n/--K/--t/--property")
        try:
            problem = cp.load_problem(s["flow"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"verify-coupling: bad problem file: {exc}") from None
        plan = cp.build_coupling(problem)
        ok = plan.feasible and cp.check_plan(problem, plan)
        result = {"mode": "flow", "pass": ok, "plan": cp.plan_to_dict(plan, problem)}
        if ok:
            print("PASS: coupling found")
        else:
            cut = sorted(plan.cut) if plan.cut is not None else []
            print(f"FAIL: no coupling; violating cut {{{', '.join(cut)}}}")
            result["problem"] = cp.problem_to_dict(problem)
    else:
        missing = [k for k in ("n", "K", "t", "property") if s[k] is None]
        if missing:
            raise UsageError("verify-coupling: need --flow, or all of "
                             + ", ".join("--" + k for k in missing))
        try:
            prop = cp.parse_property(s["property"])
            report = cp.domination_report(s["n"], s["K"], s["t"], prop)
        except cp.NonMonotoneProperty as exc:
            raise UsageError(f"verify-coupling: {exc}") from None
        except (ValueError, TypeError, KeyError, IndexError) as exc:
            raise UsageError(f"verify-coupling: {exc}") from None
        ok = report.holds
        result = {"mode": "domination", "pass": ok, **report.to_dict()}
        print(f"{'PASS' if ok else 'FAIL'}: n={report.n} K={report.K} t={report.t} "
              f"M={report.M} {report.property_name}")
        print(f"  Pr[biased^t]={report.biased_t} <= Pr[uniform^Mt]={report.uniform_Mt}: "
              f"{report.upper_holds}")
        print(f"  Pr[uniform^t]={report.uniform_t} <= Pr[biased^Mt]={report.biased_Mt}: "
              f"{report.lower_holds}")
    w.text("verify.json", json.dumps(result, indent=2) + "\n")
    if not ok:
        print(json.dumps(result), file=sys.stderr)
    return (EXIT_OK if ok else EXIT_FAILURE), {"pass": ok}


COMMANDS = {"simulate": cmd_simulate, "ode": cmd_ode, "sweep": cmd_sweep,
            "verify-coupling": cmd_verify_coupling}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = resolve(args, parser)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    w = _Writer(settings["out"])
    start = time.perf_counter()
    try:
        code, extra = COMMANDS[args.command](settings, w)
    except UsageError as exc:
        w.rollback()
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except BaseException:
        w.rollback()
        raise

    outputs = list(w.paths)
    manifest = {
        "command": args.command,
        "config": _jsonable(settings),
        "version": __version__,
        "rng": extra.pop("rng", None),
        "seeds": extra.pop("seeds", [settings["seed"]] if "seed" in settings else []),
        "outputs": outputs,
        "duration_s": time.perf_counter() - start,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "argv": argv,
        "exit_code": code,
        **extra,
    }
    w.text("manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
