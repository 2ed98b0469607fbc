"""Command-line driver: ``chanbond <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure (e.g. a validation threshold missed),
2 bad input (unparseable scenario or flags), 3 solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import experiments as ex
from .ctmn import feasible_states, solve_fixed_point
from .metrics import metrics_report
from .scenario import ScenarioError, bundled_scenario, bundled_scenarios, load_scenario
from .simcore import compare_model_sim, sim_mode

log = logging.getLogger("chanbond")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NOCONV = 0, 1, 2, 3

RESULT_COLUMNS = ["scenario_id", "realization", "wlan", "node", "rho", "throughput_mbps", "saturated"]
SUMMARY_COLUMNS = ["axis_value", "mean_throughput_mbps", "stderr_mbps", "jfi", "spectrum_utilization"]


class InputError(Exception):
    pass


def _load(path: str | None):
    if not path:
        raise InputError("--scenario is required")
    try:
        if not Path(path).exists() and path in bundled_scenarios():
            return bundled_scenario(path)
        return load_scenario(path)
    except (OSError, ScenarioError) as e:
        raise InputError(f"cannot load scenario {path!r}: {e}") from e


def _emit(args, rows: list[dict], columns: Sequence[str] | None = None, extra: dict | None = None) -> None:
    """Write ``rows`` as CSV or JSON to ``--out`` (or stdout)."""
    if args.format == "json":
        doc = {"rows": rows}
        if extra:
            doc.update(extra)
        text = json.dumps(doc, indent=2, default=_jsonable) + "\n"
    else:
        buf = io.StringIO()
        cols = list(columns) if columns else (list(rows[0]) if rows else [])
        for r in rows:
            cols += [k for k in r if k not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        text = buf.getvalue()
        if extra:
            # summary rows as trailing comment lines keep the table machine-readable
            text += "".join(f"# {k}={_fmt(v)}\n" for k, v in extra.items() if not isinstance(v, (list, dict)))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return v


def _jsonable(o):
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)


# --- subcommands ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    sc = _load(args.scenario)
    res = solve_fixed_point(sc, mode=args.mode, tol=args.tol, max_iter=args.max_iter)
    if args.report == "states":
        space = feasible_states(sc, mode=args.mode)
        rows = [{"state": k, "members": "{" + ",".join(s) + "}"} for k, s in enumerate(space.states())]
        _emit(args, rows, ["state", "members"], {"n_states": len(rows)})
    else:
        rows = [dict(r, realization=0) for r in res.rows()]
        rep = metrics_report(res, sc, per=args.fairness)
        _emit(args, rows, RESULT_COLUMNS + ["theta", "iterations", "converged"], rep.as_dict())
    if not res.converged:
        log.error("fixed point did not converge after %d iterations", res.iterations)
        return EXIT_NOCONV
    return EXIT_OK


def _spec_from(args) -> ex.SweepSpec:
    template = _load(args.scenario) if args.scenario else None
    return ex.SweepSpec(axis=args.axis, values=ex.parse_range(args.range), m=args.m, n=args.n,
                        cw=args.cw, width_policy=ex.WidthPolicy.parse(args.width_policy),
                        scheme=args.scheme, w_max=args.wmax, realizations=args.realizations,
                        base_seed=args.seed, nodes_per_wlan=args.nodes, scenario=template)


def cmd_sweep(args) -> int:
    spec = _spec_from(args)
    rows = ex.run_sweep(spec, workers=args.workers,
                        progress=lambda v: log.info("axis %s=%s done", spec.axis, v))
    _emit(args, rows, SUMMARY_COLUMNS)
    return EXIT_OK


def cmd_histogram(args) -> int:
    h = ex.histogram(args.m, args.n, ex.WidthPolicy.parse(args.width_policy), args.scheme,
                     args.realizations, args.seed, args.bins, args.hi, args.cw, args.wmax, args.workers)
    _emit(args, h.rows())
    return EXIT_OK


def cmd_compare(args) -> int:
    m_list = ex.parse_range(args.m_list)
    w_list = [int(w) for w in args.wmax_list.split(",")]
    rows = ex.compare_channelisation(args.n, m_list, w_list, args.realizations, args.seed,
                                     args.cw, args.workers)
    _emit(args, rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    if not args.duration > 0:
        raise InputError("--duration must be positive")
    rows = []
    worst = 0.0
    for name in args.modes.split(","):
        mode = sim_mode(name.strip())
        for r in compare_model_sim(sc, mode, args.duration, args.seed):
            rows.append(dict(mode=mode.name, wlan=r.wlan, node=r.node, model_mbps=r.model_mbps,
                             sim_mbps=r.sim_mbps, rel_error=r.rel_error))
            if mode.name == "sim3":
                worst = max(worst, abs(r.rel_error))
    _emit(args, rows, extra={"max_sim3_rel_error": worst})
    if args.threshold is not None and worst > args.threshold:
        log.error("max Sim3 relative error %.4f exceeds %.4f", worst, args.threshold)
        return EXIT_FAIL
    return EXIT_OK


def cmd_allocate(args) -> int:
    sc = _load(args.scenario)
    out = ex.allocate(sc, args.scheme, args.wmax, args.seed)
    rows = [dict(wlan=w, low=ch.low, high=ch.high, throughput_mbps=out.throughput_mbps[w])
            for w, ch in zip(sc.wlan_ids, out.plan.channels)]
    extra: dict = {"scheme": args.scheme, "degraded": out.plan.degraded}
    if out.classes:
        extra["classes"] = out.classes
    if out.schedule is not None:
        extra["schedule"] = out.schedule.to_list()
        extra["kkt_residual"] = out.schedule.kkt_residual
        extra["waterfilling_support"] = out.support.holds
    _emit(args, rows, ["wlan", "low", "high", "throughput_mbps"], extra)
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanbond", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="scenario file, or the name of a bundled scenario")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--realizations", type=int, default=2000)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--workers", type=int, default=1)

    def study(sp):
        sp.add_argument("--m", type=int, default=6, help="number of WLANs")
        sp.add_argument("--n", type=int, default=8, help="number of basic channels")
        sp.add_argument("--cw", type=int, default=16)
        sp.add_argument("--nodes", type=int, default=2, help="nodes per WLAN")
        sp.add_argument("--width-policy", default="fixed:1")
        sp.add_argument("--scheme", choices=ex.SCHEMES, default="random")
        sp.add_argument("--wmax", type=int, default=8)

    a = sub.add_parser("analyze", help="solve one scenario")
    common(a)
    a.add_argument("--mode", choices=("node", "wlan"), default="node")
    a.add_argument("--report", choices=("nodes", "states"), default="nodes")
    a.add_argument("--fairness", choices=("wlan", "node"), default="wlan")
    a.add_argument("--tol", type=float, default=1e-6)
    a.add_argument("--max-iter", type=int, default=10_000)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="Monte Carlo sweep over N, M or CW")
    common(s)
    study(s)
    s.add_argument("--axis", choices=ex.AXES, required=True)
    s.add_argument("--range", required=True, help="LO:HI:STEP, inclusive")
    s.set_defaults(func=cmd_sweep)

    h = sub.add_parser("histogram", help="per-WLAN throughput histogram")
    common(h)
    study(h)
    h.add_argument("--bins", type=int, default=50)
    h.add_argument("--hi", type=float, default=500.0, help="upper bin edge in Mbps")
    h.set_defaults(func=cmd_histogram)

    c = sub.add_parser("compare-channelisation", help="random versus aligned channel selection")
    common(c)
    c.add_argument("--n", type=int, default=16)
    c.add_argument("--m-list", default="8:16:4")
    c.add_argument("--wmax-list", default="1,2,4,8")
    c.add_argument("--cw", type=int, default=16)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="compare the model with the simulator")
    common(v)
    v.add_argument("--modes", default="sim3")
    v.add_argument("--duration", type=float, default=1000.0)
    v.add_argument("--threshold", type=float, default=None,
                   help="fail if the Sim3 relative error exceeds this")
    v.set_defaults(func=cmd_validate)

    al = sub.add_parser("allocate", help="run a channel allocation scheme on a scenario")
    common(al)
    al.add_argument("--scheme", choices=ex.SCHEMES, default="waterfilling")
    al.add_argument("--wmax", type=int, default=8)
    al.set_defaults(func=cmd_allocate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ScenarioError) as e:
        log.error("%s", e)
        return EXIT_INPUT
    except ValueError as e:
        log.error("invalid input: %s", e)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
