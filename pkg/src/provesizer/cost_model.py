"""Fleet sizing, epoch derivation and monthly cost for a three-tier proving pipeline.

The pipeline has three prover tiers:

* super (chunk) provers turn groups of at most ``tx_max_per_super`` transactions
  into super proofs;
* batch provers aggregate up to ``max_super_proofs_per_batch`` super proofs into a
  batch proof, each batch being posted to L1 for data availability;
* bundle provers aggregate up to ``max_batch_proofs_per_bundle`` batch proofs into
  a bundle proof that is verified on L1.

Every function here is pure. Integer quantities (counts, rounds, demand
ceilings) are computed with exact rationals built from the decimal form of the
inputs, so ``1592.81`` behaves as the decimal it was written as and the ceilings
and floors never flip because of binary rounding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Union

from .errors import FinalityInfeasible, InvalidParameter

GWEI = Fraction(1, 10**9)

# Peak resident memory per proving step (GB): super, batch, bundle.
STEP_MEMORY_GB = (140.65, 138.37, 48.30)

DEFAULT_MONTH_SECONDS = 30 * 86400


def exact(x) -> Fraction:
    """Exact rational for a number, reading floats through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InvalidParameter(f"expected a number, got {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _ceil(q: Fraction) -> int:
    return math.ceil(q)


def _floor(q: Fraction) -> int:
    return math.floor(q)


def _float_at_most(q: Fraction) -> float:
    """Nearest float not above ``q``, so capped epochs never overshoot their cap once re-read."""
    f = float(q)
    if exact(f) > q:
        f = math.nextafter(f, -math.inf)
    return f


# --- data availability models ------------------------------------------------


@dataclass(frozen=True)
class Blob:
    gas_da_per_batch: int

    kind = "blob"


@dataclass(frozen=True)
class Calldata:
    gas_da_per_byte: int
    batch_len_bytes: int

    kind = "calldata"


@dataclass(frozen=True)
class FlatUsdPerBatch:
    usd: float

    kind = "flat_usd"


DAModel = Union[Blob, Calldata, FlatUsdPerBatch]

DA_MODELS = {cls.kind: cls for cls in (Blob, Calldata, FlatUsdPerBatch)}


def da_model_to_dict(model: DAModel) -> dict:
    out = {"kind": model.kind}
    out.update({f.name: getattr(model, f.name) for f in fields(model)})
    return out


def da_model_from_dict(d: dict) -> DAModel:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in DA_MODELS:
        raise InvalidParameter(f"unknown da_model kind {kind!r}; expected one of {sorted(DA_MODELS)}")
    cls = DA_MODELS[kind]
    names = {f.name for f in fields(cls)}
    if set(d) != names:
        raise InvalidParameter(f"da_model {kind!r} takes exactly {sorted(names)}, got {sorted(d)}")
    return cls(**d)


# --- domain types ------------------------------------------------------------


class Accounting(str, enum.Enum):
    """How many L1 postings a batch (bundle) epoch pays for.

    ``PER_PROVER`` charges one DA submission per batch prover per batch epoch and
    one verification per bundle prover per bundle epoch. ``DEMAND`` charges one
    DA submission per batch actually formed from the epoch's super-proof demand.
    The two agree whenever each prover runs a single round per epoch.
    """

    PER_PROVER = "per_prover"
    DEMAND = "demand"


@dataclass(frozen=True, kw_only=True)
class PipelineParams:
    tps: float
    t_super_s: float
    t_batch_s: float
    t_bundle_s: float
    da_model: DAModel
    gas_verification_per_bundle: int
    gas_price_gwei: float
    eth_price_usd: float
    machine_cost_usd_month: tuple[float, float, float]
    tx_max_per_super: int = 128
    max_super_proofs_per_batch: int = 45
    max_batch_proofs_per_bundle: int = 15
    target_finality_s: float = 14400.0
    gas_per_tx: int = 100_000
    total_block_gas: int = 10_000_000
    month_seconds: float = DEFAULT_MONTH_SECONDS

    def __post_init__(self):
        object.__setattr__(self, "machine_cost_usd_month", tuple(self.machine_cost_usd_month))
        for name in ("tx_max_per_super", "max_super_proofs_per_batch", "max_batch_proofs_per_bundle",
                     "gas_per_tx", "total_block_gas"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InvalidParameter(f"{name} must be a positive integer, got {v!r}")
        for name in ("t_super_s", "t_batch_s", "t_bundle_s", "target_finality_s", "month_seconds"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("tps", "gas_price_gwei", "eth_price_usd"):
            if not getattr(self, name) >= 0:
                raise InvalidParameter(f"{name} must be non-negative, got {getattr(self, name)!r}")
        g = self.gas_verification_per_bundle
        if not isinstance(g, int) or isinstance(g, bool) or g < 0:
            raise InvalidParameter(f"gas_verification_per_bundle must be a non-negative integer, got {g!r}")
        if len(self.machine_cost_usd_month) != 3 or any(not c >= 0 for c in self.machine_cost_usd_month):
            raise InvalidParameter("machine_cost_usd_month needs three non-negative costs (super, batch, bundle)")
        if not isinstance(self.da_model, (Blob, Calldata, FlatUsdPerBatch)):
            raise InvalidParameter(f"unsupported da_model {self.da_model!r}")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["da_model"] = da_model_to_dict(self.da_model)
        out["machine_cost_usd_month"] = list(self.machine_cost_usd_month)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameter(f"unknown pipeline keys: {sorted(unknown)}")
        d = dict(d)
        if "da_model" in d and isinstance(d["da_model"], dict):
            d["da_model"] = da_model_from_dict(d["da_model"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidParameter(str(exc)) from None


@dataclass(frozen=True)
class DerivedConfig:
    n_super: int
    n_batch: int
    n_bundle: int
    batch_epoch_s: float
    bundle_epoch_s: float

    def __post_init__(self):
        for name in ("n_super", "n_batch", "n_bundle"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise InvalidParameter(f"{name} must be a non-negative integer, got {v!r}")
        for name in ("batch_epoch_s", "bundle_epoch_s"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)!r}")

    @property
    def fleet(self) -> str:
        return f"{self.n_super}/{self.n_batch}/{self.n_bundle}"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class CostBreakdown:
    da_usd_month: float
    verification_usd_month: float
    machine_usd_month: float
    total_usd_month: float
    da_usd_per_batch: float
    verification_usd_per_bundle: float
    batches_per_month: float
    bundles_per_month: float

    def scaled(self, factor: float) -> "CostBreakdown":
        """Pro-rate the period totals and counts by ``factor``; unit prices are kept."""
        da = self.da_usd_month * factor
        ver = self.verification_usd_month * factor
        mach = self.machine_usd_month * factor
        return CostBreakdown(da, ver, mach, da + ver + mach, self.da_usd_per_batch,
                             self.verification_usd_per_bundle, self.batches_per_month * factor,
                             self.bundles_per_month * factor)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Feasibility(enum.Enum):
    OK = "ok"
    FINALITY_INFEASIBLE = "finality_infeasible"
    MEMORY_INFEASIBLE = "memory_infeasible"

    def __bool__(self):
        return self is Feasibility.OK


# --- derivations -------------------------------------------------------------


def _check_tx_max(tx_max_per_super):
    if not isinstance(tx_max_per_super, int) or tx_max_per_super < 1:
        raise InvalidParameter(f"tx_max_per_super must be a positive integer, got {tx_max_per_super!r}")


def derive_num_super_provers(tps, t_super_s, tx_max_per_super) -> int:
    """Super provers needed so that ``tps * t_super_s`` transactions fit in one proving round."""
    _check_tx_max(tx_max_per_super)
    if tps < 0 or t_super_s < 0:
        raise InvalidParameter("tps and t_super_s must be non-negative")
    return _ceil(exact(tps) * exact(t_super_s) / tx_max_per_super)


def _batch_epoch_cap(params: PipelineParams) -> Fraction:
    return exact(params.target_finality_s) - exact(params.t_super_s) - exact(params.t_bundle_s)


def derive_batch_epoch(params: PipelineParams, n_super: int) -> float:
    """Time to gather a full batch of super proofs, capped so the pipeline meets finality."""
    if n_super < 1:
        raise InvalidParameter(f"n_super must be >= 1, got {n_super}")
    t_super, t_batch = exact(params.t_super_s), exact(params.t_batch_s)
    cap = _batch_epoch_cap(params)
    if cap < t_batch:
        raise FinalityInfeasible(
            f"target finality {params.target_finality_s}s leaves {float(cap)}s for a batch epoch, "
            f"below the batch proving time {params.t_batch_s}s")
    spread = _ceil(params.max_super_proofs_per_batch * t_super / n_super)
    return _float_at_most(min(max(t_super, t_batch, Fraction(spread)), cap))


def _demand(tps, epoch_s, tx_max_per_super) -> Fraction:
    return exact(tps) * exact(epoch_s) / tx_max_per_super


def super_proof_demand_per_epoch(tps, epoch_s, tx_max_per_super) -> float:
    """Super proofs the incoming transactions fill during one epoch (fractional)."""
    _check_tx_max(tx_max_per_super)
    return float(_demand(tps, epoch_s, tx_max_per_super))


def _provers_for(demand, per_proof, epoch_s, t_proof_s, what) -> int:
    need = _ceil(exact(demand))
    if need == 0:
        return 0
    rounds = _floor(exact(epoch_s) / exact(t_proof_s))
    if rounds == 0:
        raise InvalidParameter(f"{what} epoch {epoch_s}s is shorter than one proof ({t_proof_s}s)")
    return _ceil(Fraction(need, per_proof * rounds))


def derive_num_batch_provers(demand_proofs, max_super_proofs_per_batch, batch_epoch_s, t_batch_s) -> int:
    return _provers_for(demand_proofs, max_super_proofs_per_batch, batch_epoch_s, t_batch_s, "batch")


def derive_bundle_epoch(params: PipelineParams, batch_epoch_s, n_batch: int) -> float:
    """Time to gather a full bundle of batch proofs, never below one bundle proof, capped for finality."""
    if n_batch < 1:
        raise InvalidParameter(f"n_batch must be >= 1, got {n_batch}")
    be = exact(batch_epoch_s)
    cap = exact(params.target_finality_s) - be - exact(params.t_super_s)
    if cap < exact(params.t_bundle_s):
        raise FinalityInfeasible(
            f"only {float(cap)}s remain for the bundle epoch, below the bundle proving time {params.t_bundle_s}s")
    spread = _ceil(params.max_batch_proofs_per_bundle * be / n_batch)
    return _float_at_most(min(max(be, exact(params.t_bundle_s), Fraction(spread)), cap))


def batches_per_bundle_epoch(bundle_epoch_s, batch_epoch_s) -> float:
    if not batch_epoch_s > 0:
        raise InvalidParameter("batch_epoch_s must be positive")
    return float(exact(bundle_epoch_s) / exact(batch_epoch_s))


def derive_num_bundle_provers(batch_proof_demand, max_batch_proofs_per_bundle, bundle_epoch_s, t_bundle_s) -> int:
    return _provers_for(batch_proof_demand, max_batch_proofs_per_bundle, bundle_epoch_s, t_bundle_s, "bundle")


def proving_rounds(epoch_s, t_proof_s) -> int:
    """Proofs one machine completes back to back within an epoch."""
    return _floor(exact(epoch_s) / exact(t_proof_s))


def super_proofs_needed(params: PipelineParams, batch_epoch_s) -> int:
    """Whole super proofs covering one batch epoch of transactions."""
    return _ceil(_demand(params.tps, batch_epoch_s, params.tx_max_per_super))


def batches_per_batch_epoch(params: PipelineParams, batch_epoch_s) -> int:
    """Batches formed per batch epoch when every batch is filled before opening the next."""
    return _ceil(Fraction(super_proofs_needed(params, batch_epoch_s), params.max_super_proofs_per_batch))


def batch_ticks_per_bundle_epoch(batch_epoch_s, bundle_epoch_s) -> int:
    """Upper bound on batch epochs ending inside one bundle epoch.

    A bundle epoch that is not a multiple of the batch epoch can straddle one
    extra batch boundary, so the ratio is rounded up.
    """
    return _ceil(exact(bundle_epoch_s) / exact(batch_epoch_s))


def batch_proof_demand_per_bundle_epoch(params: PipelineParams, batch_epoch_s, bundle_epoch_s) -> int:
    return batch_ticks_per_bundle_epoch(batch_epoch_s, bundle_epoch_s) * batches_per_batch_epoch(params, batch_epoch_s)


def derive_config(params: PipelineParams) -> DerivedConfig:
    """Chain the five derivations: super count, batch epoch, batch count, bundle epoch, bundle count."""
    if check_feasibility(params) is not Feasibility.OK:
        raise FinalityInfeasible(
            f"t_super + t_batch + t_bundle = {params.t_super_s + params.t_batch_s + params.t_bundle_s}s "
            f"exceeds the finality target {params.target_finality_s}s")
    n_super = derive_num_super_provers(params.tps, params.t_super_s, params.tx_max_per_super)
    if n_super == 0:
        be = min(max(exact(params.t_super_s), exact(params.t_batch_s)), _batch_epoch_cap(params))
        ue_cap = exact(params.target_finality_s) - be - exact(params.t_super_s)
        ue = min(max(be, exact(params.t_bundle_s)), ue_cap)
        return DerivedConfig(0, 0, 0, _float_at_most(be), _float_at_most(ue))

    be = derive_batch_epoch(params, n_super)
    demand = _demand(params.tps, be, params.tx_max_per_super)
    n_batch = derive_num_batch_provers(demand, params.max_super_proofs_per_batch, be, params.t_batch_s)
    ue = derive_bundle_epoch(params, be, n_batch)
    bundle_demand = batch_proof_demand_per_bundle_epoch(params, be, ue)
    n_bundle = derive_num_bundle_provers(bundle_demand, params.max_batch_proofs_per_bundle, ue, params.t_bundle_s)
    return DerivedConfig(n_super, n_batch, n_bundle, be, ue)


# --- feasibility checks ------------------------------------------------------


def check_feasibility(params: PipelineParams, memory_gb=None) -> Feasibility:
    """Report the first violated hard limit.

    ``memory_gb`` is either one capacity applied to every tier or a
    ``(super, batch, bundle)`` triple.
    """
    total = exact(params.t_super_s) + exact(params.t_batch_s) + exact(params.t_bundle_s)
    if total > exact(params.target_finality_s):
        return Feasibility.FINALITY_INFEASIBLE
    if memory_gb is not None:
        caps = tuple(memory_gb) if isinstance(memory_gb, (tuple, list)) else (memory_gb,) * 3
        if any(exact(c) < exact(need) for c, need in zip(caps, STEP_MEMORY_GB)):
            return Feasibility.MEMORY_INFEASIBLE
    return Feasibility.OK


def throughput_ok(params: PipelineParams, n_super: int) -> bool:
    return exact(params.tps) * exact(params.t_super_s) <= n_super * params.tx_max_per_super


def finality_ok(params: PipelineParams, config: DerivedConfig) -> bool:
    """``t_super + batch_epoch + bundle_epoch <= target_finality``, compared exactly."""
    return (exact(params.t_super_s) + exact(config.batch_epoch_s) + exact(config.bundle_epoch_s)
            <= exact(params.target_finality_s))


def batch_capacity(params: PipelineParams, config: DerivedConfig) -> int:
    """Super proofs the batch tier can absorb per batch epoch."""
    rounds = proving_rounds(config.batch_epoch_s, params.t_batch_s)
    return config.n_batch * rounds * params.max_super_proofs_per_batch


def bundle_capacity(params: PipelineParams, config: DerivedConfig) -> int:
    rounds = proving_rounds(config.bundle_epoch_s, params.t_bundle_s)
    return config.n_bundle * rounds * params.max_batch_proofs_per_bundle


def capacity_ok(params: PipelineParams, config: DerivedConfig) -> bool:
    """Both aggregation tiers can absorb their worst-case per-epoch demand."""
    if batch_capacity(params, config) < super_proofs_needed(params, config.batch_epoch_s):
        return False
    bundle_need = batch_proof_demand_per_bundle_epoch(params, config.batch_epoch_s, config.bundle_epoch_s)
    return bundle_capacity(params, config) >= bundle_need


def is_feasible(params: PipelineParams, config: DerivedConfig) -> bool:
    """Throughput, capacity, finality and the proving-time floors on both epochs."""
    return (throughput_ok(params, config.n_super)
            and exact(config.batch_epoch_s) >= exact(params.t_batch_s)
            and exact(config.bundle_epoch_s) >= exact(params.t_bundle_s)
            and finality_ok(params, config)
            and capacity_ok(params, config))


# --- costs -------------------------------------------------------------------


def _da_cost_exact(da_model: DAModel, gas_price_gwei, eth_price_usd) -> Fraction:
    usd_per_gas = exact(gas_price_gwei) * GWEI * exact(eth_price_usd)
    if isinstance(da_model, Blob):
        return da_model.gas_da_per_batch * usd_per_gas
    if isinstance(da_model, Calldata):
        return da_model.batch_len_bytes * da_model.gas_da_per_byte * usd_per_gas
    if isinstance(da_model, FlatUsdPerBatch):
        return exact(da_model.usd)
    raise InvalidParameter(f"unsupported da_model {da_model!r}")


def da_cost_per_batch(da_model: DAModel, gas_price_gwei, eth_price_usd) -> float:
    return float(_da_cost_exact(da_model, gas_price_gwei, eth_price_usd))


def verification_cost_per_bundle(gas_verification_per_bundle, gas_price_gwei, eth_price_usd) -> float:
    return float(exact(gas_verification_per_bundle) * exact(gas_price_gwei) * GWEI * exact(eth_price_usd))


def l1_unit_costs(params: PipelineParams) -> tuple[Fraction, Fraction]:
    """Exact (USD per batch, USD per bundle)."""
    da = _da_cost_exact(params.da_model, params.gas_price_gwei, params.eth_price_usd)
    ver = exact(params.gas_verification_per_bundle) * exact(params.gas_price_gwei) * GWEI * exact(params.eth_price_usd)
    return da, ver


def postings_per_epoch(params: PipelineParams, config: DerivedConfig,
                       accounting: Accounting = Accounting.PER_PROVER) -> tuple[int, int]:
    """(DA submissions per batch epoch, verifications per bundle epoch)."""
    accounting = Accounting(accounting)
    if accounting is Accounting.PER_PROVER:
        return config.n_batch, config.n_bundle
    batches = batches_per_batch_epoch(params, config.batch_epoch_s)
    bundle_demand = batch_proof_demand_per_bundle_epoch(params, config.batch_epoch_s, config.bundle_epoch_s)
    return batches, _ceil(Fraction(bundle_demand, params.max_batch_proofs_per_bundle))


def machine_cost(params: PipelineParams, config: DerivedConfig) -> float:
    c_super, c_batch, c_bundle = (exact(c) for c in params.machine_cost_usd_month)
    return float(config.n_super * c_super + config.n_batch * c_batch + config.n_bundle * c_bundle)


def monthly_cost(params: PipelineParams, config: DerivedConfig,
                 accounting: Accounting = Accounting.PER_PROVER) -> CostBreakdown:
    da_unit, ver_unit = l1_unit_costs(params)
    per_batch_epoch, per_bundle_epoch = postings_per_epoch(params, config, accounting)
    month = exact(params.month_seconds)
    batches = month / exact(config.batch_epoch_s) * per_batch_epoch
    bundles = month / exact(config.bundle_epoch_s) * per_bundle_epoch
    da = float(batches * da_unit)
    ver = float(bundles * ver_unit)
    mach = machine_cost(params, config)
    return CostBreakdown(
        da_usd_month=da,
        verification_usd_month=ver,
        machine_usd_month=mach,
        total_usd_month=da + ver + mach,
        da_usd_per_batch=float(da_unit),
        verification_usd_per_bundle=float(ver_unit),
        batches_per_month=float(batches),
        bundles_per_month=float(bundles),
    )
