"""Command-line entry point: ``greente <subcommand> ...``.

Exit codes: 0 success, 1 domain error (bad instance, infeasible, size limit),
2 usage error. Instances are read from a file argument or from stdin (``-``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from greente.errors import GreenTeError
from greente.harness.generate import GenParams, generate_instance
from greente.harness.sweep import format_table, sweep, table_summary
from greente.heuristic import LbConfig, ete_run
from greente.model import OperatorRequest, max_link_utilization, saved_energy_percent
from greente.optimal import DEFAULT_MAX_MILP_LINKS, solve_opt_es, solve_opt_lb
from greente.serialize import dumps_instance, loads_instance, state_to_dict
from greente.simcoord import SimConfig, simulate


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_gen_flags(p: argparse.ArgumentParser) -> None:
    d = GenParams()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--n-ingress", type=int, default=d.n_ingress)
    p.add_argument("--n-egress", type=int, default=d.n_egress)
    p.add_argument("--n-core", type=int, default=d.n_core)
    p.add_argument("--core-degree", type=float, default=d.core_avg_degree)
    p.add_argument("--access-degree", type=int, default=d.access_degree)
    p.add_argument("--k-paths", type=int, default=d.k_paths)
    p.add_argument("--idle-fraction", type=float, default=d.idle_fraction)


def _gen_params(args, **extra) -> GenParams:
    return GenParams(
        n_ingress=args.n_ingress,
        n_egress=args.n_egress,
        n_core=args.n_core,
        core_avg_degree=args.core_degree,
        access_degree=args.access_degree,
        k_paths=args.k_paths,
        seed=args.seed,
        idle_fraction=args.idle_fraction,
        **extra,
    )


def _add_lb_flags(p: argparse.ArgumentParser) -> None:
    d = LbConfig()
    p.add_argument("--delta", type=float, default=d.delta_fraction, help="step as a fraction of x_ip")
    p.add_argument("--tolerance", type=float, default=d.tolerance)
    p.add_argument("--max-rounds", type=int, default=d.max_rounds)
    p.add_argument("--patience", type=int, default=d.patience)


def _lb_config(args) -> LbConfig:
    return LbConfig(args.delta, args.tolerance, args.max_rounds, args.patience)


def _read_instance(source: str):
    if source == "-":
        return loads_instance(sys.stdin.read(), "<stdin>")
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise GreenTeError(f"cannot read {source}: {exc.strerror}") from exc
    return loads_instance(text, source)


def _write(text: str, dest: str | None) -> None:
    if dest is None or dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def cmd_generate(args) -> None:
    params = _gen_params(args, demand_total=args.demand_total)
    _write(dumps_instance(generate_instance(params)), args.output)


def cmd_solve_lb(args) -> None:
    inst = _read_instance(args.instance)
    splits, util = solve_opt_lb(inst)
    _write(_dump({"max_util": util, "splits": splits}), args.output)


def cmd_solve_es(args) -> None:
    inst = _read_instance(args.instance)
    res = solve_opt_es(inst, max_links=args.max_links, force=args.force, method=args.method)
    state = res.state(inst)
    doc = {
        "energy": res.energy,
        "max_util": res.max_utilization,
        "saving_percent": saved_energy_percent(inst, state),
        "mask": res.mask,
        "splits": res.splits,
    }
    _write(_dump(doc), args.output)


def cmd_ete(args) -> None:
    inst = _read_instance(args.instance)
    res = ete_run(inst, OperatorRequest(args.target), _lb_config(args))
    if args.csv:
        _write(res.trace_csv(), args.output)
    else:
        _write(_dump(res.to_dict(inst)), args.output)


def cmd_simulate(args) -> None:
    inst = _read_instance(args.instance)
    config = SimConfig(
        seed=args.seed,
        interval=(args.interval_min, args.interval_max),
        horizon=args.horizon,
        claim_ttl=args.claim_ttl,
        lb=_lb_config(args),
    )
    state, trace = simulate(inst, OperatorRequest(args.target), config)
    _write(trace.to_jsonl(), args.output)
    if args.state:
        doc = state_to_dict(state) | {
            "max_util": max_link_utilization(inst, state),
            "saving_percent": saved_energy_percent(inst, state),
        }
        Path(args.state).write_text(_dump(doc))


def cmd_sweep(args) -> None:
    params = _gen_params(args)
    res = sweep(params, args.demands, args.levels, _lb_config(args), es_max_links=args.es_max_links)
    if args.out:
        Path(f"{args.out}.csv").write_text(res.to_csv())
        Path(f"{args.out}.dat").write_text(res.to_dat())
        Path(f"{args.out}.table.csv").write_text(format_table(table_summary(res)))
    else:
        sys.stdout.write(res.to_csv())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greente", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random instance as JSON")
    _add_gen_flags(p)
    p.add_argument("--demand-total", type=float, default=GenParams().demand_total)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve-lb", help="optimal load balancing with every link awake")
    p.add_argument("instance", nargs="?", default="-")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve_lb)

    p = sub.add_parser("solve-es", help="minimum-energy sleep mask (exact)")
    p.add_argument("instance", nargs="?", default="-")
    p.add_argument("--force", action="store_true", help="ignore the link-count limit")
    p.add_argument("--max-links", type=int, default=DEFAULT_MAX_MILP_LINKS)
    p.add_argument("--method", choices=("bnb", "exhaustive"), default="bnb")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve_es)

    p = sub.add_parser("ete", help="run the ETE heuristic for an energy target")
    p.add_argument("instance", nargs="?", default="-")
    p.add_argument("--target", type=float, required=True, help="requested saving in percent")
    p.add_argument("--csv", action="store_true", help="emit the per-iteration trace as CSV")
    _add_lb_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ete)

    p = sub.add_parser("simulate", help="distributed ETE simulation; writes a JSON-lines trace")
    p.add_argument("instance", nargs="?", default="-")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interval-min", type=float, default=1.0)
    p.add_argument("--interval-max", type=float, default=10.0)
    p.add_argument("--horizon", type=float, default=SimConfig().horizon)
    p.add_argument("--claim-ttl", type=float, default=None)
    p.add_argument("--state", help="also write the final state JSON here")
    _add_lb_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="OptLB/OptES/ETE over a demand grid")
    _add_gen_flags(p)
    p.add_argument("--demands", type=_floats, required=True, help="e.g. 5,10,15")
    p.add_argument("--levels", type=_floats, default=[10.0, 20.0, 30.0, 40.0, 50.0])
    p.add_argument("--es-max-links", type=int, default=DEFAULT_MAX_MILP_LINKS)
    _add_lb_flags(p)
    p.add_argument("--out", help="write OUT.csv, OUT.dat and OUT.table.csv instead of CSV on stdout")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (GreenTeError, ValueError) as exc:
        print(f"greente {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
