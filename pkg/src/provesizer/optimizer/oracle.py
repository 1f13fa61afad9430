"""Exhaustive grid search used to cross-check the solver.

The search walks the same grid as the encoding (counts up to the bounds, epochs
``lo + k * granularity``) but evaluates feasibility and cost directly from the
cost model, never from the SMT constraints. Integer terms (rounds, demand
ceilings, batch ticks) are computed exactly per epoch value; the count
dimensions are then swept with numpy.
"""

from __future__ import annotations

import time

import numpy as np

from .. import cost_model as cm
from ..cost_model import Accounting, DerivedConfig, PipelineParams
from ..errors import BoundsTooLarge
from .encode import FREE_FLEET, FixedFleet, Mode, SearchBounds
from .solver import SolverOutcome, Status

MAX_GRID_POINTS = 10**7


def _count_range(mode: Mode, name: str, upper: int) -> np.ndarray:
    if isinstance(mode, FixedFleet):
        return np.array([getattr(mode, name)], dtype=np.int64)
    return np.arange(upper + 1, dtype=np.int64)


def brute_force_oracle(params: PipelineParams, bounds: SearchBounds, mode: Mode = FREE_FLEET,
                       accounting: Accounting = Accounting.PER_PROVER) -> SolverOutcome:
    start = time.monotonic()
    accounting = Accounting(accounting)
    ns = _count_range(mode, "n_super", bounds.n_super_max)
    nb = _count_range(mode, "n_batch", bounds.n_batch_max)
    nu = _count_range(mode, "n_bundle", bounds.n_bundle_max)
    steps_b, steps_u = bounds.epoch_steps("batch"), bounds.epoch_steps("bundle")
    grid = len(ns) * len(nb) * len(nu) * (steps_b + 1) * (steps_u + 1)
    if grid > MAX_GRID_POINTS:
        raise BoundsTooLarge(f"grid has {grid} points, more than {MAX_GRID_POINTS}")

    spb, bpb = params.max_super_proofs_per_batch, params.max_batch_proofs_per_bundle
    month = cm.exact(params.month_seconds)
    da_unit, ver_unit = cm.l1_unit_costs(params)
    c_super, c_batch, c_bundle = params.machine_cost_usd_month

    thr_ok = np.array([cm.throughput_ok(params, int(n)) for n in ns])
    machine_s = ns * float(c_super)

    best_key, best = None, None
    for ib in range(steps_b + 1):
        be = bounds.epoch_value("batch", ib)
        if cm.exact(be) < max(cm.exact(params.t_batch_s), cm.exact(params.t_super_s)):
            continue
        rounds_b = cm.proving_rounds(be, params.t_batch_s)
        demand = cm.super_proofs_needed(params, be)
        batches = cm.batches_per_batch_epoch(params, be)
        batch_ok = nb * rounds_b * spb >= demand
        da_posts = nb if accounting is Accounting.PER_PROVER else np.full_like(nb, batches)
        da_cost = da_posts * float(month / cm.exact(be) * da_unit)

        for iu in range(steps_u + 1):
            ue = bounds.epoch_value("bundle", iu)
            cfg = DerivedConfig(1, 1, 1, be, ue)
            if cm.exact(ue) < cm.exact(be) or cm.exact(ue) < cm.exact(params.t_bundle_s):
                continue
            if not cm.finality_ok(params, cfg):
                continue
            rounds_u = cm.proving_rounds(ue, params.t_bundle_s)
            bundle_demand = cm.batch_proof_demand_per_bundle_epoch(params, be, ue)
            bundle_ok = nu * rounds_u * bpb >= bundle_demand
            if accounting is Accounting.PER_PROVER:
                ver_posts = nu
            else:
                ver_posts = np.full_like(nu, -(-bundle_demand // bpb))
            ver_cost = ver_posts * float(month / cm.exact(ue) * ver_unit)

            feasible = thr_ok[:, None, None] & batch_ok[None, :, None] & bundle_ok[None, None, :]
            if not feasible.any():
                continue
            total = (machine_s[:, None, None] + (nb * float(c_batch) + da_cost)[None, :, None]
                     + (nu * float(c_bundle) + ver_cost)[None, None, :])
            total = np.where(feasible, total, np.inf)
            # lexicographic tie-break on (n_super, n_batch, n_bundle) within this epoch pair
            flat = int(np.argmin(total))
            i, j, k = np.unravel_index(flat, total.shape)
            cost = float(total[i, j, k])
            key = (round(cost, 6), int(ns[i]), int(nb[j]), int(nu[k]), ib, iu)
            if best_key is None or key < best_key:
                best_key, best = key, DerivedConfig(int(ns[i]), int(nb[j]), int(nu[k]), be, ue)

    elapsed = time.monotonic() - start
    if best is None:
        return SolverOutcome(Status.INFEASIBLE, solve_time_s=elapsed, solver_identity="brute-force")
    priced = cm.monthly_cost(params, best, accounting)
    return SolverOutcome(Status.OPTIMAL, config=best, objective_usd=priced.total_usd_month,
                         solve_time_s=elapsed, solver_identity="brute-force")

