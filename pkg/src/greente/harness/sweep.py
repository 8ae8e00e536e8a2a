"""Demand sweeps: OptLB, OptES and ETE side by side for utilization and saving curves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from greente.errors import GreenTeError
from greente.harness.generate import GenParams, generate_instance
from greente.heuristic import LbConfig, ete_run
from greente.model import OperatorRequest, saved_energy_percent
from greente.optimal import DEFAULT_MAX_MILP_LINKS, solve_opt_es, solve_opt_lb

HEADER = (
    "demand_total",
    "e_level",
    "opt_lb_util",
    "ete_util",
    "ete_saving",
    "iterations",
    "sleeping_pct",
    "excluded_pct",
    "target_met",
)
NA = "NA"


@dataclass(frozen=True)
class SweepRow:
    demand_total: float
    e_level: float
    opt_lb_util: float | None
    ete_util: float | None
    ete_saving: float | None
    iterations: int | None
    sleeping_pct: float | None
    excluded_pct: float | None
    target_met: bool | None


def _cell(value) -> str:
    if value is None:
        return NA
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name: str, text: str):
    if text == NA:
        return None
    if name == "target_met":
        if text not in ("true", "false"):
            raise ValueError(f"target_met must be true/false, got {text!r}")
        return text == "true"
    if name == "iterations":
        return int(text)
    return float(text)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    #: OptES saving per demand total; None where the exact search was skipped or failed
    opt_es_saving: dict[float, float | None] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for row in self.rows:
            w.writerow([_cell(getattr(row, name)) for name in HEADER])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(HEADER):
                raise ValueError(f"line {n}: expected {len(HEADER)} fields, got {len(rec)}")
            rows.append(SweepRow(*(_parse(name, text) for name, text in zip(HEADER, rec))))
        return cls(rows)

    def e_levels(self) -> list[float]:
        return sorted({r.e_level for r in self.rows})

    def demands(self) -> list[float]:
        return sorted({r.demand_total for r in self.rows})

    def to_dat(self) -> str:
        """Whitespace-separated columns for plotting, one line per demand total."""
        levels = self.e_levels()
        cols = ["demand_total", "opt_lb_util"]
        cols += [f"ete_util_E{e:g}" for e in levels]
        cols += ["opt_es_saving"] + [f"ete_saving_E{e:g}" for e in levels]
        lines = ["# " + " ".join(cols)]
        by_key = {(r.demand_total, r.e_level): r for r in self.rows}
        for d in self.demands():
            cells = [d]
            first = by_key.get((d, levels[0]))
            cells.append(first.opt_lb_util if first else None)
            cells += [getattr(by_key.get((d, e)), "ete_util", None) for e in levels]
            cells.append(self.opt_es_saving.get(d))
            cells += [getattr(by_key.get((d, e)), "ete_saving", None) for e in levels]
            lines.append(" ".join(NA if c is None else repr(float(c)) for c in cells))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TableRow:
    e_level: float
    sleeping_pct: float
    excluded_pct: float
    iterations: float
    target_met_rate: float
    runs: int


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else math.nan


def table_summary(results: SweepResult | Iterable[SweepResult]) -> list[TableRow]:
    """Per-E averages of sleeping links, excluded routes and iterations over all successful cells."""
    if isinstance(results, SweepResult):
        results = [results]
    cells: dict[float, list[SweepRow]] = {}
    for res in results:
        for r in res.rows:
            if r.iterations is not None:
                cells.setdefault(r.e_level, []).append(r)
    return [
        TableRow(
            e,
            _mean([r.sleeping_pct for r in rows]),
            _mean([r.excluded_pct for r in rows]),
            _mean([float(r.iterations) for r in rows]),
            _mean([float(r.target_met) for r in rows]),
            len(rows),
        )
        for e, rows in sorted(cells.items())
    ]


def format_table(rows: Sequence[TableRow]) -> str:
    names = [f.name for f in fields(TableRow)]
    lines = [",".join(names)]
    for r in rows:
        lines.append(",".join(_cell(getattr(r, n)) for n in names))
    return "\n".join(lines) + "\n"


def sweep(
    params: GenParams,
    demand_grid: Sequence[float],
    e_levels: Sequence[float],
    config: LbConfig = LbConfig(),
    *,
    es_max_links: int = DEFAULT_MAX_MILP_LINKS,
) -> SweepResult:
    """One instance per demand total (same seed, so same topology); a row per (demand, E).

    Failed cells become NA and the sweep carries on.
    """
    if not demand_grid or not e_levels:
        raise ValueError("demand_grid and e_levels must be non-empty")
    result = SweepResult()
    for demand in demand_grid:
        demand = float(demand)
        instance = generate_instance(params.replace(demand_total=demand))
        try:
            _, opt_util = solve_opt_lb(instance)
        except GreenTeError:
            opt_util = None

        opt_es = None
        if instance.index.n_links <= es_max_links:
            try:
                es = solve_opt_es(instance, max_links=es_max_links)
                opt_es = saved_energy_percent(instance, es.state(instance))
            except GreenTeError:
                pass
        result.opt_es_saving[demand] = opt_es

        for e in e_levels:
            e = float(e)
            try:
                run = ete_run(instance, OperatorRequest(e), config)
            except GreenTeError:
                result.rows.append(SweepRow(demand, e, opt_util, *([None] * 6)))
                continue
            result.rows.append(
                SweepRow(
                    demand,
                    e,
                    opt_util,
                    run.max_utilization,
                    run.achieved_saving_percent,
                    run.iterations,
                    run.sleeping_link_percent(),
                    run.excluded_route_percent(instance),
                    run.target_met,
                )
            )
    return result
