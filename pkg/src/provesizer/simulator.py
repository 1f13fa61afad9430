"""Discrete-event replay of the proving pipeline.

Two kinds of events drive the run: the end of a batch epoch, where batch provers
drain the super-proof pool, and the end of a bundle epoch, where bundle provers
drain the batch-proof pool. Super proofs accrue continuously between events, so
pools hold fractional amounts.

Event times and pools are exact rationals; the run is deterministic and the
conservation identities hold exactly. Lag is declared when a pool holds more
than its consumers can process in one epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, TextIO, Union

from . import cost_model as cm
from .cost_model import CostBreakdown, DerivedConfig, PipelineParams, exact
from .errors import InvalidConfig

TRACE_HEADER = "time_s\tevent\tproof_pool\tbatch_pool\te_batch\te_bundle\tbundles_finalized"


@dataclass(frozen=True)
class BatchProverLag:
    time_s: float
    pool_size: float
    kind = "batch_prover_lag"


@dataclass(frozen=True)
class BundleProverLag:
    time_s: float
    pool_size: float
    kind = "bundle_prover_lag"


@dataclass(frozen=True)
class ThroughputViolation:
    required_tx: float
    capacity_tx: float
    kind = "throughput_violation"


Lag = Union[None, BatchProverLag, BundleProverLag, ThroughputViolation]


@dataclass
class SimState:
    simulation_time_s: Fraction = Fraction(0)
    e_batch: int = 0
    e_bundle: int = 0
    proof_pool: Fraction = Fraction(0)
    batch_pool: int = 0
    bundles_finalized: int = 0
    last_accumulation_time_s: Fraction = Fraction(0)


@dataclass
class SimulationResult:
    lag: Lag
    bundle_epochs_completed: int
    batch_epochs_completed: int
    max_observed_finality_s: float
    simulated_time_s: float
    super_proofs_produced: float
    super_proofs_consumed: float
    final_proof_pool: float
    batch_proofs_produced: int
    batch_proofs_consumed: int
    final_batch_pool: int
    bundles_produced: int
    cost: Optional[CostBreakdown] = None
    pool_trajectory: list[tuple[float, float, int]] = field(default_factory=list)

    @property
    def lag_free(self) -> bool:
        return self.lag is None

    @property
    def lag_kind(self) -> str:
        return "none" if self.lag is None else self.lag.kind


def throughput_guard(params: PipelineParams, config: DerivedConfig) -> Optional[ThroughputViolation]:
    """``None`` when the super tier keeps up with ``tps``, else the violation."""
    need = exact(params.tps) * exact(params.t_super_s)
    have = config.n_super * params.tx_max_per_super
    if need <= have:
        return None
    return ThroughputViolation(required_tx=float(need), capacity_tx=float(have))


def _capacity(n: int, epoch: Fraction, t_proof, per_proof: int, strict: bool) -> int:
    if strict:
        return n * per_proof
    return n * math.floor(epoch / exact(t_proof)) * per_proof


def simulate(params: PipelineParams, config: DerivedConfig, max_bundle_epochs: int, *,
             strict_lag: bool = False, trace: Union[TextIO, Callable[[str], None], None] = None,
             record_trajectory: bool = False) -> SimulationResult:
    """Run until ``max_bundle_epochs`` bundle epochs complete or a tier lags.

    ``strict_lag`` compares pools against one proof per prover per epoch
    (``n * max_proofs``) instead of the rounds-aware capacity.
    ``trace`` receives one tab-separated line per event (see ``TRACE_HEADER``).
    """
    if max_bundle_epochs < 0:
        raise InvalidConfig("max_bundle_epochs must be non-negative")
    if not (config.batch_epoch_s > 0 and config.bundle_epoch_s > 0):
        raise InvalidConfig("epochs must be positive")

    emit = None
    if trace is not None:
        emit = trace if callable(trace) else (lambda line: trace.write(line + "\n"))

    violation = throughput_guard(params, config)
    if violation is not None:
        return SimulationResult(violation, 0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, 0, 0)

    be, ue = exact(config.batch_epoch_s), exact(config.bundle_epoch_s)
    t_super = exact(params.t_super_s)
    rate = min(exact(params.tps) / params.tx_max_per_super, Fraction(config.n_super) / t_super)
    spb, bpb = params.max_super_proofs_per_batch, params.max_batch_proofs_per_bundle
    batch_cap = _capacity(config.n_batch, be, params.t_batch_s, spb, strict_lag)
    bundle_cap = _capacity(config.n_bundle, ue, params.t_bundle_s, bpb, strict_lag)

    st = SimState()
    accumulated = Fraction(0)
    consumed = Fraction(0)
    batches_made = batches_used = 0
    # arrival time of the oldest transaction whose batch proof awaits a bundle
    oldest_pending: Optional[Fraction] = None
    batch_window_start = Fraction(0)
    worst_finality = Fraction(0)
    lag: Lag = None
    trajectory = []

    def log_event(kind):
        if emit is not None:
            emit(f"{float(st.simulation_time_s)!r}\t{kind}\t{float(st.proof_pool)!r}\t{st.batch_pool}"
                 f"\t{st.e_batch}\t{st.e_bundle}\t{st.bundles_finalized}")
        if record_trajectory:
            trajectory.append((float(st.simulation_time_s), float(st.proof_pool), st.batch_pool))

    while st.e_bundle < max_bundle_epochs:
        t_batch = (st.e_batch + 1) * be
        t_bundle = (st.e_bundle + 1) * ue
        t_next = min(t_batch, t_bundle)

        produced = rate * (t_next - st.last_accumulation_time_s)
        st.proof_pool += produced
        accumulated += produced
        st.last_accumulation_time_s = t_next
        st.simulation_time_s = t_next

        if t_next == t_batch:
            st.e_batch += 1
            if st.proof_pool > batch_cap:
                lag = BatchProverLag(float(t_next), float(st.proof_pool))
                log_event("batch_lag")
                break
            take = st.proof_pool
            made = math.ceil(take / spb)
            st.proof_pool -= take
            consumed += take
            st.batch_pool += made
            batches_made += made
            if made and oldest_pending is None:
                oldest_pending = batch_window_start
            batch_window_start = t_next
            log_event("batch")

        if t_next == t_bundle:
            st.e_bundle += 1
            if st.batch_pool > bundle_cap:
                lag = BundleProverLag(float(t_next), float(st.batch_pool))
                log_event("bundle_lag")
                break
            take = st.batch_pool
            st.batch_pool -= take
            batches_used += take
            st.bundles_finalized += math.ceil(Fraction(take, bpb))
            if oldest_pending is not None:
                worst_finality = max(worst_finality, t_next - oldest_pending + t_super)
                oldest_pending = None
            log_event("bundle")

    return SimulationResult(
        lag=lag,
        bundle_epochs_completed=st.e_bundle,
        batch_epochs_completed=st.e_batch,
        max_observed_finality_s=float(worst_finality),
        simulated_time_s=float(st.simulation_time_s),
        super_proofs_produced=float(accumulated),
        super_proofs_consumed=float(consumed),
        final_proof_pool=float(st.proof_pool),
        batch_proofs_produced=batches_made,
        batch_proofs_consumed=batches_used,
        final_batch_pool=st.batch_pool,
        bundles_produced=st.bundles_finalized,
        pool_trajectory=trajectory,
    )


def bundle_epochs_for(days: float, bundle_epoch_s: float) -> int:
    return math.ceil(exact(days) * 86400 / exact(bundle_epoch_s))


def replay(params: PipelineParams, config: DerivedConfig, days: float, *, strict_lag: bool = False,
           accounting: cm.Accounting = cm.Accounting.PER_PROVER, trace=None) -> SimulationResult:
    """Simulate ``days`` of constant load and attach the cost pro-rated to the simulated span."""
    if days < 0:
        raise InvalidConfig("days must be non-negative")
    result = simulate(params, config, bundle_epochs_for(days, config.bundle_epoch_s),
                      strict_lag=strict_lag, trace=trace)
    monthly = cm.monthly_cost(params, config, accounting)
    result.cost = monthly.scaled(result.simulated_time_s / params.month_seconds)
    return result


def replay_scenario(scenario, config: DerivedConfig, days: float, *, machine=None,
                    strict_lag: bool = False, accounting: cm.Accounting = cm.Accounting.PER_PROVER,
                    trace=None) -> SimulationResult:
    """``replay`` for a catalog scenario (by name or object) on ``machine`` (default: first catalog entry)."""
    from . import scenarios as sc

    if isinstance(scenario, str):
        scenario = sc.get_scenario(scenario)
    if machine is None:
        machine = sc.machine_catalog()[0]
    elif isinstance(machine, str):
        machine = sc.get_machine(machine)
    return replay(scenario.params(machine), config, days, strict_lag=strict_lag,
                  accounting=accounting, trace=trace)
