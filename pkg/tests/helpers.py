"""Shared builders for tests."""

import random

from provesizer.cost_model import Blob, FlatUsdPerBatch, PipelineParams
from provesizer.optimizer import SearchBounds


def small_instance(seed: int, granularity: float = 60.0):
    """A random pipeline whose optimum lies on a small grid (counts <= 5, epochs <= 4000 s)."""
    rng = random.Random(seed)
    t_super = rng.choice([120.0, 250.5, 400.0, 610.25, 800.0])
    t_batch = rng.choice([150.0, 333.3, 500.0, 720.0])
    t_bundle = rng.choice([60.0, 118.0, 200.0, 350.0])
    tx_max = rng.choice([32, 64, 128])
    tps = round(rng.uniform(0.01, 4 * tx_max / t_super), 3)
    da = FlatUsdPerBatch(round(rng.uniform(1, 400), 2)) if rng.random() < 0.5 else Blob(rng.randrange(10**5, 10**6))
    params = PipelineParams(
        tps=tps, t_super_s=t_super, t_batch_s=t_batch, t_bundle_s=t_bundle, da_model=da,
        gas_verification_per_bundle=rng.randrange(10**5, 2 * 10**6), gas_price_gwei=rng.choice([5, 10, 30]),
        eth_price_usd=rng.choice([1800, 2500, 3200]),
        machine_cost_usd_month=tuple(rng.choice([300, 1000, 2839]) for _ in range(3)),
        tx_max_per_super=tx_max, max_super_proofs_per_batch=rng.choice([4, 8, 45]),
        max_batch_proofs_per_bundle=rng.choice([2, 5, 15]), target_finality_s=rng.choice([4000, 6000, 8000]),
    )
    lo_b = max(t_super, t_batch)
    lo_u = max(t_bundle, lo_b)
    bounds = SearchBounds(5, 5, 5, (lo_b, 4000.0), (lo_u, 4000.0), granularity)
    return params, bounds


def cost_step(params: PipelineParams, bounds: SearchBounds) -> float:
    """Largest monthly cost change from moving one epoch by one grid step at the smallest epochs."""
    from provesizer import cost_model as cm

    da, ver = (float(x) for x in cm.l1_unit_costs(params))
    g = bounds.granularity_s
    month = params.month_seconds
    lo_b, lo_u = bounds.batch_epoch_range[0], bounds.bundle_epoch_range[0]
    step_b = bounds.n_batch_max * da * month * (1 / lo_b - 1 / (lo_b + g))
    step_u = bounds.n_bundle_max * ver * month * (1 / lo_u - 1 / (lo_u + g))
    return step_b + step_u
