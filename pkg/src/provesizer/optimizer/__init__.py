"""Cost-minimal fleet and epoch selection through an external SMT solver."""

from __future__ import annotations

from typing import Optional, Sequence, Union

from ..cost_model import Accounting, CostBreakdown, DerivedConfig, PipelineParams, monthly_cost
from ..errors import FinalityInfeasible
from .encode import FREE_FLEET, Encoding, FixedFleet, Mode, SearchBounds, encode
from .oracle import brute_force_oracle
from .solver import DEFAULT_SOLVER, SOLVER_ENV, SolverOutcome, Status, solve

__all__ = [
    "FREE_FLEET", "Encoding", "FixedFleet", "Mode", "SearchBounds", "SolverOutcome", "Status",
    "DEFAULT_SOLVER", "SOLVER_ENV", "encode", "solve", "brute_force_oracle", "optimize",
]

DEFAULT_TIMEOUT_S = 6000.0


def optimize(params: PipelineParams, mode: Mode = FREE_FLEET, solver_cmd: Union[str, Sequence[str], None] = None,
             timeout_s: float = DEFAULT_TIMEOUT_S, bounds: Optional[SearchBounds] = None,
             accounting: Accounting = Accounting.PER_PROVER, native_minimize: Optional[bool] = None,
             options: Sequence[str] = ()) -> tuple[Optional[DerivedConfig], Optional[CostBreakdown], SolverOutcome]:
    """Solve for the cheapest plan and price it through the cost model.

    The returned breakdown always comes from ``monthly_cost``; the solver's own
    objective is only kept on the outcome for cross-checking. Lag-freedom is not
    checked here. Raises ``FinalityInfeasible`` when the proof times alone exceed
    the finality target.
    """
    if bounds is None:
        bounds = SearchBounds.default(params)
    enc = encode(params, bounds, mode, accounting)
    outcome = solve(enc, solver_cmd, timeout_s, native_minimize=native_minimize, options=options)
    if outcome.status is Status.INFEASIBLE:
        raise FinalityInfeasible("no fleet within the search bounds meets capacity and finality")
    if outcome.config is None:
        return None, None, outcome
    return outcome.config, monthly_cost(params, outcome.config, accounting), outcome
