"""Energy-aware traffic engineering: exact benchmarks, the ETE heuristic and its simulation."""

from greente.errors import GreenTeError
from greente.heuristic import EteResult, LbConfig, ete_run, lb_converge
from greente.model import (
    IePair,
    Link,
    NetworkInstance,
    Node,
    OperatorRequest,
    Path,
    PowerModel,
    TeState,
    energy_consumption,
    initial_state,
    link_loads,
    max_link_utilization,
    saved_energy_percent,
    validate,
)
from greente.optimal import energy_objective, solve_opt_es, solve_opt_lb

__version__ = "0.1.0"
