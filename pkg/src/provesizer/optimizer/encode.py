"""SMT-LIB2 encoding of the fleet sizing problem.

Everything is expressed in quantifier-free linear integer arithmetic:

* epochs live on a grid ``lo + granularity * idx`` with a bounded integer index;
* ``cost * epoch`` products are linearised by bit-decomposing the epoch index
  (``cost * idx = sum 2^j * ite(bit_j, cost, 0)``);
* products of two small bounded integers (prover count times rounds, batch ticks
  times batches) are case-split over the smaller factor;
* floors and ceilings use the usual division witnesses (``b*q <= a < b*(q+1)``);
* rational coefficients are scaled per constraint to integers.

Costs are integers in ``1 / scale`` USD, rounded up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from ..cost_model import (Accounting, DerivedConfig, PipelineParams, check_feasibility, exact,
                          l1_unit_costs, Feasibility)
from ..errors import BoundsTooLarge, EncodingOverflow, FinalityInfeasible, InvalidParameter

COEFF_LIMIT = 2**127
MAX_CASES = 20_000
COST_SCALE = 100  # cents

CONFIG_FIELDS = ("n_super", "n_batch", "n_bundle", "batch_epoch", "bundle_epoch")


@dataclass(frozen=True)
class FixedFleet:
    """Pin the three prover counts; only the epochs are optimised."""

    n_super: int
    n_batch: int
    n_bundle: int

    @classmethod
    def of(cls, config: DerivedConfig) -> "FixedFleet":
        return cls(config.n_super, config.n_batch, config.n_bundle)


FREE_FLEET = "free_fleet"
Mode = Union[str, FixedFleet]


@dataclass(frozen=True)
class SearchBounds:
    n_super_max: int
    n_batch_max: int
    n_bundle_max: int
    batch_epoch_range: tuple[float, float]
    bundle_epoch_range: tuple[float, float]
    granularity_s: float = 1.0

    def __post_init__(self):
        if not self.granularity_s > 0:
            raise InvalidParameter("epoch granularity must be positive")
        for name in ("n_super_max", "n_batch_max", "n_bundle_max"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be non-negative")
        for name in ("batch_epoch_range", "bundle_epoch_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidParameter(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")

    @classmethod
    def default(cls, params: PipelineParams, granularity_s: float = 1.0,
                n_super_max: Optional[int] = None, n_batch_max: Optional[int] = None,
                n_bundle_max: Optional[int] = None) -> "SearchBounds":
        """Epoch ranges spanning everything the finality target allows.

        Count ceilings default to twice the counts needed at the shortest
        admissible epochs, which is never binding for a cost minimum.
        """
        t_super, t_batch, t_bundle = (exact(params.t_super_s), exact(params.t_batch_s), exact(params.t_bundle_s))
        fin = exact(params.target_finality_s)
        lo_b = max(t_super, t_batch)
        hi_b = fin - t_super - t_bundle
        lo_u = max(t_bundle, lo_b)
        hi_u = fin - t_super - lo_b
        if hi_b < lo_b or hi_u < lo_u:
            raise FinalityInfeasible("finality target leaves no admissible epochs")
        tps = exact(params.tps)
        n_s = math.ceil(tps * t_super / params.tx_max_per_super)
        demand = math.ceil(tps * lo_b / params.tx_max_per_super)
        n_b = math.ceil(Fraction(demand, params.max_super_proofs_per_batch))
        batches = math.ceil(hi_u / lo_b) * n_b
        n_u = math.ceil(Fraction(batches, params.max_batch_proofs_per_bundle))
        return cls(
            n_super_max=n_super_max if n_super_max is not None else max(2 * n_s, 1),
            n_batch_max=n_batch_max if n_batch_max is not None else max(2 * n_b, 1),
            n_bundle_max=n_bundle_max if n_bundle_max is not None else max(2 * n_u, 1),
            batch_epoch_range=(float(lo_b), float(hi_b)),
            bundle_epoch_range=(float(lo_u), float(hi_u)),
            granularity_s=granularity_s,
        )

    def epoch_steps(self, which: str) -> int:
        lo, hi = self.batch_epoch_range if which == "batch" else self.bundle_epoch_range
        return math.floor((exact(hi) - exact(lo)) / exact(self.granularity_s))

    def epoch_value(self, which: str, idx: int) -> float:
        lo = self.batch_epoch_range[0] if which == "batch" else self.bundle_epoch_range[0]
        return float(exact(lo) + idx * exact(self.granularity_s))


@dataclass
class Encoding:
    text: str
    variable_names: dict[str, str]
    scale: int
    bounds: SearchBounds
    mode: Mode
    accounting: Accounting
    objective: str = "total_cost"
    fixed_counts: Optional[FixedFleet] = field(default=None)

    def decode(self, values: dict[str, int]) -> DerivedConfig:
        """Turn solver values (keyed by symbol) into a configuration."""
        v = {name: values[sym] for name, sym in self.variable_names.items() if sym in values}
        return DerivedConfig(
            n_super=int(v["n_super"]),
            n_batch=int(v["n_batch"]),
            n_bundle=int(v["n_bundle"]),
            batch_epoch_s=self.bounds.epoch_value("batch", int(v["batch_epoch"])),
            bundle_epoch_s=self.bounds.epoch_value("bundle", int(v["bundle_epoch"])),
        )

    def objective_usd(self, values: dict[str, int]) -> float:
        return values[self.variable_names["total_cost"]] / self.scale


def smt_int(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"


class _Writer:
    def __init__(self):
        self.decls: list[str] = []
        self.asserts: list[str] = []

    def int_var(self, name, lo=None, hi=None):
        self.decls.append(f"(declare-const {name} Int)")
        if lo is not None:
            self.asserts.append(f"(assert (>= {name} {smt_int(lo)}))")
        if hi is not None:
            self.asserts.append(f"(assert (<= {name} {smt_int(hi)}))")
        return name

    def bool_var(self, name):
        self.decls.append(f"(declare-const {name} Bool)")
        return name

    def linear(self, terms, op, rhs=0) -> str:
        """Render ``sum(coef * sym) op rhs`` with rational coefficients scaled to integers.

        ``terms`` is a list of ``(coef, sym)``; ``sym=None`` marks a constant.
        """
        const = -exact(rhs)
        coefs: dict[str, Fraction] = {}
        for coef, sym in terms:
            coef = exact(coef)
            if sym is None:
                const += coef
            else:
                coefs[sym] = coefs.get(sym, Fraction(0)) + coef
        coefs = {s: c for s, c in coefs.items() if c != 0}
        denoms = [c.denominator for c in coefs.values()] + [const.denominator]
        mult = math.lcm(*denoms)
        ints = {s: int(c * mult) for s, c in coefs.items()}
        k = int(-const * mult)
        if any(abs(c) > COEFF_LIMIT for c in ints.values()) or abs(k) > COEFF_LIMIT:
            raise EncodingOverflow(f"fixed-point scaling by {mult} exceeds the representable coefficient range")
        parts = [s if c == 1 else f"(* {smt_int(c)} {s})" for s, c in ints.items()]
        if not parts:
            lhs = "0"
        elif len(parts) == 1:
            lhs = parts[0]
        else:
            lhs = "(+ " + " ".join(parts) + ")"
        return f"({op} {lhs} {smt_int(k)})"

    def assert_(self, expr: str):
        self.asserts.append(f"(assert {expr})")


def _bits_index(w: _Writer, name: str, steps: int) -> tuple[str, list[str]]:
    """Declare ``name`` in ``[0, steps]`` together with its binary digits."""
    nbits = max(steps.bit_length(), 1)
    bits = [w.bool_var(f"{name}_bit{j}") for j in range(nbits)]
    w.int_var(name, 0, steps)
    digits = " ".join(f"(ite {b} {1 << j} 0)" for j, b in enumerate(bits))
    w.assert_(f"(= {name} (+ {digits}))" if nbits > 1 else f"(= {name} {digits})")
    return name, bits


def _product_with_index(w: _Writer, name: str, var: str, bits: list[str]) -> str:
    """Declare ``name = var * index`` where ``index`` is given by its bits; ``var >= 0``."""
    w.int_var(name, 0)
    parts = [f"(ite {b} {var} 0)" if j == 0 else f"(ite {b} (* {1 << j} {var}) 0)" for j, b in enumerate(bits)]
    w.assert_(f"(= {name} (+ {' '.join(parts)}))" if len(parts) > 1 else f"(= {name} {parts[0]})")
    return name


def encode(params: PipelineParams, bounds: SearchBounds, mode: Mode = FREE_FLEET,
           accounting: Accounting = Accounting.PER_PROVER, logic: str = "QF_LIA") -> Encoding:
    """Build the SMT-LIB2 document whose minimum ``total_cost`` is the cheapest feasible plan."""
    if check_feasibility(params) is not Feasibility.OK:
        raise FinalityInfeasible("proof times alone exceed the finality target")
    accounting = Accounting(accounting)
    fixed = mode if isinstance(mode, FixedFleet) else None
    if fixed is None and mode != FREE_FLEET:
        raise InvalidParameter(f"unknown mode {mode!r}")

    g = exact(bounds.granularity_s)
    t_super, t_batch, t_bundle = exact(params.t_super_s), exact(params.t_batch_s), exact(params.t_bundle_s)
    fin, tps, tx = exact(params.target_finality_s), exact(params.tps), params.tx_max_per_super
    spb, bpb = params.max_super_proofs_per_batch, params.max_batch_proofs_per_bundle
    lo_b, lo_u = exact(bounds.batch_epoch_range[0]), exact(bounds.bundle_epoch_range[0])
    steps_b, steps_u = bounds.epoch_steps("batch"), bounds.epoch_steps("bundle")
    hi_u = lo_u + steps_u * g
    ratio_max = math.ceil(hi_u / lo_b)
    if ratio_max > MAX_CASES:
        raise BoundsTooLarge(f"bundle/batch epoch ratio up to {ratio_max} needs too many case splits")

    w = _Writer()
    names = {f: f for f in ("n_super", "n_batch", "n_bundle")}
    names["batch_epoch"] = "batch_epoch_idx"
    names["bundle_epoch"] = "bundle_epoch_idx"

    if fixed is not None:
        for f in ("n_super", "n_batch", "n_bundle"):
            w.int_var(f, getattr(fixed, f), getattr(fixed, f))
    else:
        w.int_var("n_super", 0, bounds.n_super_max)
        w.int_var("n_batch", 0, bounds.n_batch_max)
        w.int_var("n_bundle", 0, bounds.n_bundle_max)

    ib, bits_b = _bits_index(w, "batch_epoch_idx", steps_b)
    iu, bits_u = _bits_index(w, "bundle_epoch_idx", steps_u)
    be = [(lo_b, None), (g, ib)]
    ue = [(lo_u, None), (g, iu)]

    def neg(terms):
        return [(-c, s) for c, s in terms]

    # Super tier must keep up with the transaction rate.
    w.assert_(w.linear([(tx, "n_super")], ">=", tps * t_super))

    # Ordering and proving-time floors.
    w.assert_(w.linear(be, ">=", max(t_super, t_batch)))
    w.assert_(w.linear(ue, ">=", t_bundle))
    w.assert_(w.linear(ue + neg(be), ">=", 0))
    # Finality.
    w.assert_(w.linear(be + ue, "<=", fin - t_super))

    # rounds = floor(epoch / proof time)
    w.int_var("batch_rounds", 1)
    w.assert_(w.linear([(t_batch, "batch_rounds")] + neg(be), "<=", 0))
    w.assert_(w.linear([(t_batch, "batch_rounds")] + neg(be), ">", -t_batch))
    w.int_var("bundle_rounds", 1)
    w.assert_(w.linear([(t_bundle, "bundle_rounds")] + neg(ue), "<=", 0))
    w.assert_(w.linear([(t_bundle, "bundle_rounds")] + neg(ue), ">", -t_bundle))

    # super proofs per batch epoch = ceil(tps * batch_epoch / tx_max)
    w.int_var("super_demand", 0)
    demand_terms = [(tps * c / tx, s) for c, s in be]
    w.assert_(w.linear([(1, "super_demand")] + neg(demand_terms), ">=", 0))
    w.assert_(w.linear([(1, "super_demand")] + neg(demand_terms), "<", 1))
    # batches formed per batch epoch = ceil(super_demand / spb)
    w.int_var("batches_per_epoch", 0)
    w.assert_(w.linear([(spb, "batches_per_epoch"), (-1, "super_demand")], ">=", 0))
    w.assert_(w.linear([(spb, "batches_per_epoch"), (-1, "super_demand")], "<", spb))

    # batch capacity: n_batch * rounds * spb >= super_demand
    if fixed is not None:
        w.assert_(w.linear([(fixed.n_batch * spb, "batch_rounds"), (-1, "super_demand")], ">=", 0))
    else:
        for i in range(bounds.n_batch_max + 1):
            w.assert_(f"(=> (= n_batch {i}) "
                      f"{w.linear([(i * spb, 'batch_rounds'), (-1, 'super_demand')], '>=', 0)})")

    # batch ticks per bundle epoch = ceil(bundle_epoch / batch_epoch), case-split
    w.int_var("batch_ticks", 1, ratio_max)
    w.int_var("batch_demand", 0)
    for i in range(1, ratio_max + 1):
        lower = w.linear(ue + [(-(i - 1) * c, s) for c, s in be], ">", 0)
        upper = w.linear(ue + [(-i * c, s) for c, s in be], "<=", 0)
        dem = w.linear([(1, "batch_demand"), (-i, "batches_per_epoch")], "=", 0)
        w.assert_(f"(=> (= batch_ticks {i}) (and {lower} {upper} {dem}))")

    # bundle capacity: n_bundle * rounds * bpb >= batch_demand
    if fixed is not None:
        w.assert_(w.linear([(fixed.n_bundle * bpb, "bundle_rounds"), (-1, "batch_demand")], ">=", 0))
    else:
        for i in range(bounds.n_bundle_max + 1):
            w.assert_(f"(=> (= n_bundle {i}) "
                      f"{w.linear([(i * bpb, 'bundle_rounds'), (-1, 'batch_demand')], '>=', 0)})")

    # L1 postings per epoch
    if accounting is Accounting.PER_PROVER:
        da_posts, ver_posts = "n_batch", "n_bundle"
    else:
        da_posts = "batches_per_epoch"
        ver_posts = w.int_var("bundles_per_epoch", 0)
        w.assert_(w.linear([(bpb, ver_posts), (-1, "batch_demand")], ">=", 0))
        w.assert_(w.linear([(bpb, ver_posts), (-1, "batch_demand")], "<", bpb))

    da_unit, ver_unit = l1_unit_costs(params)
    month = exact(params.month_seconds)
    scale = COST_SCALE

    # da_cost * batch_epoch >= month * posts * da_unit * scale
    w.int_var("da_cost", 0)
    _product_with_index(w, "da_cost_x_idx", "da_cost", bits_b)
    w.assert_(w.linear([(lo_b, "da_cost"), (g, "da_cost_x_idx"), (-month * da_unit * scale, da_posts)], ">=", 0))
    w.int_var("verification_cost", 0)
    _product_with_index(w, "verification_cost_x_idx", "verification_cost", bits_u)
    w.assert_(w.linear([(lo_u, "verification_cost"), (g, "verification_cost_x_idx"),
                        (-month * ver_unit * scale, ver_posts)], ">=", 0))

    c_super, c_batch, c_bundle = (exact(c) * scale for c in params.machine_cost_usd_month)
    w.int_var("machine_cost", 0)
    w.assert_(w.linear([(1, "machine_cost"), (-c_super, "n_super"), (-c_batch, "n_batch"),
                        (-c_bundle, "n_bundle")], ">=", 0))
    w.int_var("total_cost", 0)
    w.assert_(w.linear([(1, "total_cost"), (-1, "da_cost"), (-1, "verification_cost"), (-1, "machine_cost")],
                       ">=", 0))

    for sym in ("da_cost", "verification_cost", "machine_cost", "total_cost"):
        names[sym] = sym

    text = "\n".join([f"(set-logic {logic})", *w.decls, *w.asserts]) + "\n"
    return Encoding(text=text, variable_names=names, scale=scale, bounds=bounds, mode=mode,
                    accounting=accounting, fixed_counts=fixed)
