"""Machine catalog, reference workloads, the naive baseline policy and unit-cost calibration."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import dataclass, field, fields
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import cost_model as cm
from .cost_model import CostBreakdown, DerivedConfig, PipelineParams, exact
from .errors import FinalityInfeasible, InsufficientRows, InvalidParameter, UnknownMachine, UnknownScenario

DATA = resources.files("provesizer") / "data"


# --- machines ----------------------------------------------------------------


@dataclass(frozen=True)
class MachineSpec:
    name: str
    monthly_cost_usd: float
    t_super_s: float
    t_batch_s: float
    t_bundle_s: float
    memory_gb: float
    label: str = ""

    def __post_init__(self):
        for f in ("monthly_cost_usd", "t_super_s", "t_batch_s", "t_bundle_s", "memory_gb"):
            if not float(getattr(self, f)) > 0:
                raise InvalidParameter(f"machine {self.name!r}: {f} must be positive")

    @property
    def fits_all_steps(self) -> bool:
        return all(exact(self.memory_gb) >= exact(need) for need in cm.STEP_MEMORY_GB)

    @classmethod
    def from_dict(cls, d: dict) -> "MachineSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameter(f"unknown machine keys: {sorted(unknown)}")
        return cls(**{k: (float(v) if isinstance(v, Decimal) else v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _read_json(path) -> object:
    text = Path(path).read_text() if not hasattr(path, "read_text") else path.read_text()
    if not text.strip():
        return None
    return json.loads(text, parse_float=Decimal)


def machine_catalog(user_path: Union[str, Path, None] = None) -> list[MachineSpec]:
    """The shipped machines, with entries from ``user_path`` added or replaced by name."""
    merged = {m["name"]: m for m in _read_json(DATA / "machines.json")}
    if user_path is not None:
        extra = _read_json(user_path) or []
        if isinstance(extra, dict):
            extra = extra.get("machines", [])
        for m in extra:
            merged[m["name"]] = {**merged.get(m["name"], {}), **m}
    return [MachineSpec.from_dict(m) for m in merged.values()]


def get_machine(name: str, catalog: Optional[Iterable[MachineSpec]] = None) -> MachineSpec:
    for m in catalog if catalog is not None else machine_catalog():
        if m.name == name:
            return m
    raise UnknownMachine(name)


# --- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    tps: float
    da_model: cm.DAModel
    gas_price_gwei: float
    eth_price_usd: float
    gas_verification_per_bundle: int
    description: str = ""
    quoted_blob_fee_usd: Optional[float] = None
    expected_baseline: Optional[dict] = None
    expected_optimized: Optional[dict] = None

    def params(self, machine: MachineSpec, **overrides) -> PipelineParams:
        base = dict(
            tps=self.tps,
            t_super_s=machine.t_super_s,
            t_batch_s=machine.t_batch_s,
            t_bundle_s=machine.t_bundle_s,
            da_model=self.da_model,
            gas_verification_per_bundle=self.gas_verification_per_bundle,
            gas_price_gwei=self.gas_price_gwei,
            eth_price_usd=self.eth_price_usd,
            machine_cost_usd_month=(machine.monthly_cost_usd,) * 3,
        )
        base.update(overrides)
        return PipelineParams(**base)

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "Scenario":
        allowed = {f.name for f in fields(cls)} - {"name"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidParameter(f"scenario {name!r}: unknown keys {sorted(unknown)}")
        d = dict(d)
        da = {k: (float(v) if isinstance(v, Decimal) else v) for k, v in d.pop("da_model").items()}
        for k in ("tps", "gas_price_gwei", "eth_price_usd", "quoted_blob_fee_usd"):
            if isinstance(d.get(k), Decimal):
                d[k] = float(d[k])
        return cls(name=name, da_model=cm.da_model_from_dict(da), **d)


def scenario_catalog(user_path: Union[str, Path, None] = None) -> dict[str, Scenario]:
    raw = dict(_read_json(DATA / "scenarios.json"))
    if user_path is not None:
        extra = _read_json(user_path) or {}
        for name, body in extra.items():
            raw[name] = {**raw.get(name, {}), **body}
    return {name: Scenario.from_dict(name, body) for name, body in sorted(raw.items())}


def get_scenario(name: str, catalog: Optional[dict[str, Scenario]] = None) -> Scenario:
    catalog = catalog if catalog is not None else scenario_catalog()
    try:
        return catalog[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {sorted(catalog)}") from None


# --- baseline policy ---------------------------------------------------------


def baseline_config(params: PipelineParams, literal: bool = False) -> DerivedConfig:
    """Naive sizing: super provers linear in TPS, both epochs pinned to the batch proving time.

    The default reads "one batch prover per 45 super proofs" as 45 super proofs
    *per batch epoch* and adds a bundle prover per ``max_batch_proofs_per_bundle``
    batch provers; counts are then raised until both aggregation tiers keep up.
    ``literal=True`` takes the text at face value: one batch prover per 45 super
    provers and exactly one bundle prover, with no scaling.
    """
    n_super = cm.derive_num_super_provers(params.tps, params.t_super_s, params.tx_max_per_super)
    batch_epoch = params.t_batch_s
    bundle_epoch = max(params.t_batch_s, params.t_bundle_s)
    fin = exact(params.t_super_s) + exact(batch_epoch) + exact(bundle_epoch)
    if fin > exact(params.target_finality_s):
        raise FinalityInfeasible(f"baseline epochs imply {float(fin)}s finality, above the target")

    if literal:
        n_batch = math.ceil(Fraction(n_super, params.max_super_proofs_per_batch))
        return DerivedConfig(n_super, n_batch, 1, batch_epoch, bundle_epoch)

    n_batch = cm.batches_per_batch_epoch(params, batch_epoch)
    n_bundle = max(1, math.ceil(Fraction(n_batch, params.max_batch_proofs_per_bundle)))
    cfg = DerivedConfig(n_super, n_batch, n_bundle, batch_epoch, bundle_epoch)
    need_batch = cm.super_proofs_needed(params, batch_epoch)
    while cm.batch_capacity(params, cfg) < need_batch:
        cfg = DerivedConfig(cfg.n_super, cfg.n_batch + 1, cfg.n_bundle, batch_epoch, bundle_epoch)
    need_bundle = cm.batch_proof_demand_per_bundle_epoch(params, batch_epoch, bundle_epoch)
    while cm.bundle_capacity(params, cfg) < need_bundle:
        cfg = DerivedConfig(cfg.n_super, cfg.n_batch, cfg.n_bundle + 1, batch_epoch, bundle_epoch)
    return cfg


def baseline_policy(scenario: Scenario, machine: MachineSpec, literal: bool = False) -> DerivedConfig:
    return baseline_config(scenario.params(machine), literal=literal)


# --- calibration -------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    """One monthly L1 cost cell: ``postings`` submissions every ``epoch_s`` seconds."""

    kind: str  # "da" or "verification"
    monthly_usd: float
    epoch_s: float
    postings: int = 1
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("da", "verification"):
            raise InvalidParameter(f"row kind must be 'da' or 'verification', got {self.kind!r}")
        if not (self.monthly_usd > 0 and self.epoch_s > 0 and self.postings > 0):
            raise InvalidParameter("rows need positive monthly cost, epoch and postings")


@dataclass
class UnitCostFit:
    da_usd_per_batch: Optional[float]
    verification_usd_per_bundle: Optional[float]
    residuals: list[tuple[str, float]] = field(default_factory=list)

    def __iter__(self):
        yield self.da_usd_per_batch
        yield self.verification_usd_per_bundle


def back_derive_unit_costs(rows: Sequence[TableRow], month_seconds: float = cm.DEFAULT_MONTH_SECONDS) -> UnitCostFit:
    """Least-squares per-posting USD prices minimising relative error over the given cells.

    Each row predicts ``unit * postings * month / epoch``; the residual reported
    per row is ``predicted / observed - 1``. A kind without rows yields ``None``.
    """
    if not rows:
        raise InsufficientRows("need at least one table row")
    kinds = [k for k in ("da", "verification") if any(r.kind == k for r in rows)]
    design = np.zeros((len(rows), len(kinds)))
    for i, r in enumerate(rows):
        postings_per_month = r.postings * month_seconds / r.epoch_s
        design[i, kinds.index(r.kind)] = postings_per_month / r.monthly_usd
    solution, *_ = np.linalg.lstsq(design, np.ones(len(rows)), rcond=None)
    units = dict(zip(kinds, (float(x) for x in solution)))
    residuals = [(r.label or f"{r.kind}@{r.epoch_s}", float(design[i] @ solution - 1.0)) for i, r in enumerate(rows)]
    return UnitCostFit(units.get("da"), units.get("verification"), residuals)


def _fleet(row: dict) -> tuple[int, int, int]:
    a, b, c = (int(x) for x in str(row["fleet"]).split("/"))
    return a, b, c


def reference_calibration_rows(catalog: dict[str, Scenario], machine: MachineSpec) -> dict[str, list[TableRow]]:
    """Row sets used to calibrate the shipped scenarios.

    * ``da``: the steady pair (baseline at the batch proving time, optimised epoch);
    * ``da_blob_spike``: the blob-fee-spike pair;
    * ``verification``: the optimised verification cells of the steady, TGE and
      blob-spike rows. Baseline verification cells depend on an unstated bundle
      cadence and surge's optimised L1 cells disagree with every other row, so
      neither is used.
    """
    def da_rows(name):
        sc = catalog[name]
        base, opt = sc.expected_baseline, sc.expected_optimized
        return [
            TableRow("da", float(base["da"]), machine.t_batch_s, _fleet(base)[1], f"{name}/baseline/da"),
            TableRow("da", float(opt["da"]), float(opt["batch_epoch"]), _fleet(opt)[1], f"{name}/optimized/da"),
        ]

    verification = []
    for name in ("steady", "tge", "blob_spike"):
        opt = catalog[name].expected_optimized
        verification.append(TableRow("verification", float(opt["verification"]), float(opt["bundle_epoch"]),
                                     _fleet(opt)[2], f"{name}/optimized/verification"))
    return {"da": da_rows("steady"), "da_blob_spike": da_rows("blob_spike"), "verification": verification}


# --- reporting ---------------------------------------------------------------


@dataclass(frozen=True)
class ReductionReport:
    total_before: float
    total_after: float
    saved_usd: float
    reduction_pct: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _total(x) -> float:
    return x.total_usd_month if isinstance(x, CostBreakdown) else float(x)


def compare(baseline, optimized) -> ReductionReport:
    """Relative saving of ``optimized`` over ``baseline``, as a percentage with one decimal."""
    before, after = _total(baseline), _total(optimized)
    if not (before > 0 and after > 0):
        raise InvalidParameter("both totals must be positive")
    return ReductionReport(before, after, before - after, round((1 - after / before) * 100, 1))
