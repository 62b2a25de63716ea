"""Command-line front end: ``rollup-game {solve,simulate,thresholds,verify,audit}``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 parameter
region not viable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, Sequence, TextIO

from . import equilibria as eq
from .game_engine import Number, regret_audit
from .montecarlo import DEFAULT_K_SIGMA, convergence_check, simulate_game2, simulate_game3
from .rollup_games import (
    MixPoint,
    ParamsError,
    ProtocolParams,
    aggregator_utility,
    build_game1,
    build_game2,
    game1_profile,
    game2_profile,
    load_params_text,
    parse_number,
    validator_utility,
)
from .verify import run_suite

log = logging.getLogger("rollup_incentives")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NONVIABLE = 0, 1, 2, 3

# flag -> ProtocolParams field
PARAM_FLAGS = {"sA": "s_A", "sV": "s_V", "x": "x", "z": "z", "f": "f", "w": "w", "y": "y", "uT": "u_T", "p": "p"}
DEFAULT_SCENARIO = {"s_A": "1", "s_V": "1", "x": "1/24", "z": "24"}
CURVE_TOL = 1e-6


class UsageError(Exception):
    pass


def _fmt(v: Any) -> str:
    if isinstance(v, Fraction):
        return str(v) if v.denominator == 1 else f"{v} ({float(v):.17g})"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _table(rows: Sequence[tuple[str, Any]]) -> str:
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {_fmt(v)}" for k, v in rows)


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def parse_grid(text: str, exact: bool = False) -> list[Number]:
    """``start:stop:step`` inclusive of ``stop`` when it lands on the grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be start:stop:step, got {text!r}")
    start, stop, step = (Fraction(parse_number(p, exact=True)) for p in parts)
    if step <= 0 or stop < start:
        raise UsageError(f"grid {text!r} is not strictly increasing")
    n = int((stop - start) / step) + 1
    values = [start + k * step for k in range(n)]
    if values[0] < 0 or values[-1] > 1:
        raise UsageError(f"grid {text!r} leaves [0, 1]")
    return values if exact else [float(v) for v in values]


def _number(text: str | None, exact: bool) -> Number | None:
    return None if text is None else parse_number(text, exact)


def params_from_args(args: argparse.Namespace) -> ProtocolParams:
    raw: dict[str, Number] = {}
    if args.config:
        raw.update(load_params_text(Path(args.config).read_text(encoding="utf-8"), args.exact))
    for flag, name in PARAM_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            raw[name] = parse_number(value, args.exact)
    for name, default in DEFAULT_SCENARIO.items():
        raw.setdefault(name, parse_number(default, args.exact))
    params = ProtocolParams(**raw)
    for problem in params.ordinal_check(args.much_larger).problems:
        log.warning("ordinal constraint: %s", problem)
    return params


def mix_from_args(args: argparse.Namespace, need: str = "bgh") -> MixPoint:
    values = {}
    for name in "bgh":
        v = _number(getattr(args, name), args.exact)
        if v is None and name in need:
            raise UsageError(f"--{name} is required")
        values[name] = 0 if v is None else v
    return MixPoint(**values)


def cmd_solve(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    if (args.b is None) == (args.b_grid is None):
        raise UsageError("give exactly one of --b or --b-grid")
    if args.b_grid is not None:
        points = eq.sweep(params, parse_grid(args.b_grid, args.exact))
        with _output(args.out) as out:
            if args.format == "json":
                json.dump([p.to_dict() for p in points], out, indent=2)
                out.write("\n")
            else:
                eq.write_csv(points, out)
        return EXIT_OK

    pt = eq.solve_point(params, parse_number(args.b, args.exact))
    with _output(args.out) as out:
        if args.format == "json":
            json.dump(pt.to_dict(), out, indent=2)
            out.write("\n")
        elif args.format == "csv":
            eq.write_csv([pt], out)
        else:
            rows: list[tuple[str, Any]] = [("b", pt.b), ("g", pt.g), ("h", pt.h)]
            rows += [("residual_A", pt.residual_A), ("residual_V", pt.residual_V)]
            for player, r in (pt.regrets or {}).items():
                rows.append((f"regret_{player}", r))
            rows += [(k, v) for k, v in pt.flags.items()]
            rows.append(("viable", pt.viable))
            out.write(_table(rows) + "\n")
    if not pt.viable:
        for v in pt.violations:
            print(f"non-viable: {v}", file=sys.stderr)
        return EXIT_NONVIABLE
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    if args.game == 2:
        m = mix_from_args(args)
        report = simulate_game2(params, m, args.rounds, args.seed, args.workers)
        analytic = (aggregator_utility(params, m), validator_utility(params, m))
        g_curve = eq.indifference_g(params, m.b).value if m.b > 0 else None
        h_curve = eq.combined_h(params, m.b).value if g_curve is not None else None
        on_curve = (
            g_curve is not None and h_curve is not None
            and abs(g_curve - m.g) <= CURVE_TOL and abs(h_curve - m.h) <= CURVE_TOL
        )
    else:
        if params.p is None:
            raise UsageError("--p is required for game 3")
        h = _number(args.h, args.exact)
        if h is None:
            raise UsageError("--h is required")
        report = simulate_game3(params, h, args.rounds, args.seed, args.workers)
        analytic = ((1 - h) * eq.dishonest_check_value(params, params.p), 0)
        on_curve = False

    doc: dict[str, Any] = report.to_dict()
    doc["analytic_means"] = dict(zip(report.players, (float(a) + 0.0 for a in analytic)))
    doc["on_indifference_curve"] = on_curve
    status = EXIT_OK
    if report.rounds >= 100:
        checks = convergence_check(report, analytic, args.k_sigma)
        doc["convergence"] = {
            "k_sigma": args.k_sigma,
            "players": {c.player: {"passed": c.passed, "deviation": c.deviation, "stderr": c.stderr,
                                   "exact_mismatch": c.exact_mismatch} for c in checks},
        }
        if not all(c.passed for c in checks):
            status = EXIT_FAILED
    else:
        doc["convergence"] = None

    with _output(args.out) as out:
        if args.format == "json":
            json.dump(doc, out, indent=2)
            out.write("\n")
        else:
            rows: list[tuple[str, Any]] = [("rounds", report.rounds), ("seed", report.seed)]
            for player in report.players:
                rows.append((f"mean_{player}", report.mean(player)))
                rows.append((f"stderr_{player}", report.stderr(player)))
                rows.append((f"analytic_{player}", doc["analytic_means"][player]))
            rows.append(("burned_stake", report.burned_stake))
            rows += [(f"leaf {lab}", n) for lab, n in zip(report.leaf_labels, report.leaf_counts)]
            if doc["convergence"] is not None:
                for player, c in doc["convergence"]["players"].items():
                    rows.append((f"converged_{player}", c["passed"]))
            out.write(_table(rows) + "\n")
    return status


def cmd_thresholds(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    bounds = eq.viability_b_lower(params)
    doc: dict[str, Any] = {
        "random_check_p_star": eq.random_check_threshold(params),
        "easter_egg_y_min": eq.easter_egg_min_reward(params),
        "b_min_from_g": bounds.b_min_from_g,
        "b_min_from_h_window": bounds.b_min_from_h_window,
        "h_window_bound_always_satisfied": bounds.h_bound_always_satisfied,
        "ordinal_ratio_z_over_sA": params.ordinal_check(args.much_larger).strictness_ratio,
    }
    if args.h is not None:
        m = mix_from_args(args, need="h")
        doc["transactor_u_T_min"] = eq.transactor_min_utility(params, m)
    with _output(args.out) as out:
        if args.format == "json":
            json.dump(_jsonable(doc), out, indent=2)
            out.write("\n")
        else:
            out.write(_table(list(doc.items())) + "\n")
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    if args.game == 1:
        h = _number(args.h, args.exact)
        tree, profile = build_game1(params), game1_profile(1 if h is None else h)
    else:
        tree, profile = build_game2(params), game2_profile(mix_from_args(args))
    audit = regret_audit(tree, profile)
    doc = {
        "values": audit.values,
        "best_response_values": audit.best_values,
        "regrets": audit.regrets,
        "best_responses": {p: br.strategy for p, br in audit.best_responses.items()},
        "max_regret": audit.max_regret,
    }
    with _output(args.out) as out:
        if args.format == "json":
            json.dump(_jsonable(doc), out, indent=2)
            out.write("\n")
        else:
            rows: list[tuple[str, Any]] = []
            for p in tree.players:
                rows += [(f"value_{p}", audit.values[p]), (f"best_value_{p}", audit.best_values[p]),
                         (f"regret_{p}", audit.regrets[p])]
                picks = {s: max(d, key=d.get) for s, d in audit.best_responses[p].strategy.items()}
                rows.append((f"best_response_{p}", ", ".join(f"{s}->{a}" for s, a in picks.items())))
            out.write(_table(rows) + "\n")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_suite(rounds=args.rounds, seed=args.seed, inject_fault=args.inject_fault)
    ok = all(r.passed for r in results)
    with _output(args.out) as out:
        if args.json:
            json.dump({"passed": ok, "checks": [r.to_dict() for r in results],
                       "failures": [r.name for r in results if not r.passed]}, out, indent=2)
            out.write("\n")
        else:
            width = max(len(r.name) for r in results)
            for r in results:
                out.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.detail}\n")
                for f in r.failures[:5]:
                    out.write(f"      {f}\n")
            out.write(f"{sum(r.passed for r in results)}/{len(results)} checks passed\n")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    scen = common.add_argument_group("scenario (defaults: sA=1, sV=1, x=1/24, z=24)")
    for flag, name in PARAM_FLAGS.items():
        scen.add_argument(f"--{flag}", metavar=name, help=f"value of {name}; accepts 0.2 or 1/24")
    common.add_argument("--config", help="key=value or JSON parameter file; flags override it")
    common.add_argument("--exact", action="store_true", help="rational arithmetic throughout")
    common.add_argument("--much-larger", type=float, default=10.0, help="z/s_A ratio treated as 'much larger'")
    common.add_argument("--out", help="write output here instead of stdout")

    mix = argparse.ArgumentParser(add_help=False)
    mix.add_argument("--b", help="probability the validator skips the search")
    mix.add_argument("--g", help="probability a blind validator challenges")
    mix.add_argument("--h", help="probability the aggregator is honest")

    ap = argparse.ArgumentParser(prog="rollup-game", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, mix], help="points on both indifference curves")
    p.add_argument("--b-grid", help="start:stop:step sweep over b (emits CSV)")
    p.add_argument("--format", choices=("table", "json", "csv"), default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common, mix], help="Monte Carlo rounds of game 2 or 3")
    p.add_argument("--game", type=int, choices=(2, 3), default=2)
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-sigma", type=float, default=DEFAULT_K_SIGMA)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("table", "json"), default="json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("thresholds", parents=[common, mix], help="mechanism thresholds and b bounds")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("audit", parents=[common, mix], help="best-response regrets at a profile")
    p.add_argument("--game", type=int, choices=(1, 2), default=2)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("verify", help="run the self-check suite")
    p.add_argument("--json", action="store_true")
    p.add_argument("--rounds", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--inject-fault", action="store_true", help="perturb a leaf payoff; the suite must fail")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "solve" and args.format is None:
        args.format = "csv" if args.b_grid else "table"
    try:
        return args.func(args)
    except (UsageError, ParamsError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
