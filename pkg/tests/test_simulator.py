import io

import pytest
from hypothesis import given, strategies as st

from provesizer import cost_model as cm
from provesizer.cost_model import DerivedConfig, FlatUsdPerBatch, PipelineParams
from provesizer.errors import InvalidConfig, InvalidParameter, UnknownScenario
from provesizer.simulator import (TRACE_HEADER, BatchProverLag, BundleProverLag, ThroughputViolation,
                                  bundle_epochs_for, replay, replay_scenario, simulate, throughput_guard)

STEADY_OPT = DerivedConfig(2, 1, 1, 5773.2, 7033.2)
SURGE_OPT = DerivedConfig(1245, 30, 2, 5183.2, 7623.2)
SURGE_BASE = DerivedConfig(1245, 30, 2, 1718.2, 1718.2)


def params(**kw):
    base = dict(tps=100, t_super_s=1592.81, t_batch_s=1718.2, t_bundle_s=518, da_model=FlatUsdPerBatch(18.11),
                gas_verification_per_bundle=1077478, gas_price_gwei=10, eth_price_usd=2500,
                machine_cost_usd_month=(1000, 1000, 1000))
    base.update(kw)
    return PipelineParams(**base)


def test_throughput_guard():
    assert throughput_guard(params(), SURGE_BASE) is None
    v = throughput_guard(params(), DerivedConfig(1244, 30, 2, 1718.2, 1718.2))
    assert isinstance(v, ThroughputViolation)
    assert (v.required_tx, v.capacity_tx) == (pytest.approx(159281), 159232)
    assert throughput_guard(params(tps=0), DerivedConfig(0, 0, 0, 1718.2, 1718.2)) is None


def test_throughput_violation_returns_immediately():
    res = simulate(params(), DerivedConfig(1244, 30, 2, 1718.2, 1718.2), 100)
    assert res.lag_kind == "throughput_violation"
    assert res.bundle_epochs_completed == 0


def test_steady_thirty_days_lag_free():
    res = replay_scenario("steady", STEADY_OPT, 30)
    assert res.lag_free
    assert res.max_observed_finality_s <= 14400
    assert res.bundle_epochs_completed == bundle_epochs_for(30, STEADY_OPT.bundle_epoch_s)


def test_surge_halved_batch_fleet_lags_early():
    res = simulate(params(), DerivedConfig(1245, 15, 2, 1718.2, 1718.2), 100)
    assert isinstance(res.lag, BatchProverLag)
    assert res.lag.time_s <= 3 * 1718.2
    assert res.lag.pool_size > 15 * 45


def test_bundle_lag_detected():
    res = simulate(params(), DerivedConfig(1245, 30, 1, 1718.2, 518), 100)
    assert isinstance(res.lag, BundleProverLag)


def test_zero_epochs_is_empty():
    res = simulate(params(), SURGE_BASE, 0)
    assert res.lag_free and res.bundle_epochs_completed == 0
    assert res.final_proof_pool == 0 and res.final_batch_pool == 0
    assert res.simulated_time_s == 0


def test_negative_epochs_rejected():
    with pytest.raises(InvalidConfig):
        simulate(params(), SURGE_BASE, -1)
    with pytest.raises(InvalidParameter):
        DerivedConfig(1, 1, 1, 0, 10)


def test_surge_baseline_replay_lag_free():
    res = replay_scenario("surge", SURGE_BASE, 30)
    assert res.lag_free
    assert res.max_observed_finality_s <= 14400


def test_replay_zero_days_and_unknown_scenario():
    res = replay_scenario("steady", STEADY_OPT, 0)
    assert res.bundle_epochs_completed == 0 and res.cost.total_usd_month == 0
    with pytest.raises(UnknownScenario):
        replay_scenario("nope", STEADY_OPT, 1)


def test_replay_prorates_cost():
    p = params()
    res = replay(p, SURGE_OPT, 30)
    monthly = cm.monthly_cost(p, SURGE_OPT)
    assert res.cost.total_usd_month == pytest.approx(monthly.total_usd_month * res.simulated_time_s / 2592000)


def test_simultaneous_ticks_batch_first():
    lines = []
    simulate(params(tps=0.1), DerivedConfig(2, 1, 1, 6337, 6337), 2, trace=lines.append)
    kinds = [line.split("\t")[1] for line in lines]
    assert kinds == ["batch", "bundle", "batch", "bundle"]
    # the bundle at the shared tick finds the batch made a moment before
    assert lines[1].split("\t")[3] == "0" and lines[1].split("\t")[6] == "1"


def test_trace_format():
    buf = io.StringIO()
    simulate(params(), SURGE_OPT, 3, trace=buf)
    rows = buf.getvalue().splitlines()
    assert rows and all(len(r.split("\t")) == len(TRACE_HEADER.split("\t")) for r in rows)


def test_strict_lag_ignores_rounds():
    p = params(tps=2.12)
    cfg = DerivedConfig(27, 1, 1, 6337, 6337)  # 3 rounds per batch epoch, 105 proofs of demand
    assert simulate(p, cfg, 50).lag_free
    strict = simulate(p, cfg, 50, strict_lag=True)
    assert isinstance(strict.lag, BatchProverLag)


def test_trajectory_recording():
    res = simulate(params(), SURGE_OPT, 4, record_trajectory=True)
    assert len(res.pool_trajectory) >= 4
    assert all(pool >= 0 and batches >= 0 for _, pool, batches in res.pool_trajectory)


# --- properties --------------------------------------------------------------

feasible_params = st.builds(
    lambda tps, ts, tb, tu, txmax, spb, bpb: params(
        tps=tps, t_super_s=ts, t_batch_s=tb, t_bundle_s=tu, tx_max_per_super=txmax,
        max_super_proofs_per_batch=spb, max_batch_proofs_per_bundle=bpb),
    st.floats(0.01, 150), st.floats(50, 2500), st.floats(50, 2500), st.floats(20, 1500),
    st.integers(16, 256), st.integers(2, 60), st.integers(2, 20))


@given(feasible_params, st.integers(1, 60))
def test_capacity_implies_no_lag(p, epochs):
    cfg = cm.derive_config(p)
    res = simulate(p, cfg, epochs)
    assert res.lag_free
    assert res.max_observed_finality_s <= p.target_finality_s


@given(feasible_params, st.integers(1, 40))
def test_conservation(p, epochs):
    cfg = cm.derive_config(p)
    res = simulate(p, cfg, epochs)
    assert abs(res.super_proofs_produced - (res.super_proofs_consumed + res.final_proof_pool)) <= 1e-9
    assert res.batch_proofs_produced == res.batch_proofs_consumed + res.final_batch_pool


@given(feasible_params, st.integers(1, 30))
def test_determinism(p, epochs):
    cfg = cm.derive_config(p)
    a, b = [], []
    ra = simulate(p, cfg, epochs, trace=a.append, record_trajectory=True)
    rb = simulate(p, cfg, epochs, trace=b.append, record_trajectory=True)
    assert ra == rb and a == b


@given(st.integers(1, 30), st.integers(1, 29), st.floats(1718.2, 5000))
def test_monotone_lag(n_batch, drop, epoch):
    p = params()
    smaller = max(n_batch - drop, 1)
    if smaller == n_batch:
        return
    big = simulate(p, DerivedConfig(1245, n_batch, 8, epoch, epoch), 40)
    if isinstance(big.lag, BatchProverLag):
        small = simulate(p, DerivedConfig(1245, smaller, 8, epoch, epoch), 40)
        assert isinstance(small.lag, BatchProverLag)
        assert small.lag.time_s <= big.lag.time_s
