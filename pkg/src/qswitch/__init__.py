"""Capacity analysis and scheduling for a single quantum switch.

Clients share link-level entanglements (LLEs) with a central switch, which
serves end-to-end requests by swapping two LLEs.  The package covers the
capacity region when LLEs decohere after one slot, a max-weight dual policy
for that model, and a congestion-controlled policy when LLEs can be stored.
"""

__version__ = "0.1.0"

from .topology import SwitchTopology, build_topology, enumerate_matchings, max_weight_matching  # noqa: E402
from .lp import LinearProgram, LPSolution, lp_feasible, lp_solve  # noqa: E402
from .capacity import (  # noqa: E402
    LinkModel, boundary_scaling, capacity_membership, dual_supergradient, dual_value, max_scaling, pdga_run,
)
from .arrivals import ArrivalModel, LoadProfile, generate_arrivals  # noqa: E402
from .decoherent import run_decoherent, slot_step  # noqa: E402
from .congestion import (  # noqa: E402
    CongestionParams, congestion_step, lemma1_check, run_congestion, static_congestion_solve,
)
from .experiments import RunMetrics, experiment1, experiment2  # noqa: E402

__all__ = [
    "SwitchTopology", "build_topology", "enumerate_matchings", "max_weight_matching",
    "LinearProgram", "LPSolution", "lp_solve", "lp_feasible",
    "LinkModel", "capacity_membership", "boundary_scaling", "max_scaling", "dual_value",
    "dual_supergradient", "pdga_run",
    "ArrivalModel", "LoadProfile", "generate_arrivals",
    "slot_step", "run_decoherent",
    "CongestionParams", "congestion_step", "run_congestion", "static_congestion_solve", "lemma1_check",
    "RunMetrics", "experiment1", "experiment2",
]
