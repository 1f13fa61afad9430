"""Command-line entry point: ``provesizer {derive,optimize,simulate,compare,scenarios}``.

Exit codes: 0 ok, 2 infeasible (or a replay that lags), 3 solver timeout,
4 usage or configuration error (including an unreachable solver).
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

from . import cost_model as cm
from . import scenarios as sc
from .cost_model import Accounting, DerivedConfig, PipelineParams
from .errors import (FinalityInfeasible, InvalidConfig, InvalidParameter, MemoryInfeasible, ProvesizerError,
                     SolverUnavailable, UnknownMachine, UnknownScenario)
from .optimizer import DEFAULT_TIMEOUT_S, FREE_FLEET, FixedFleet, Status, optimize
from .report import FORMATS, render
from .simulator import replay

log = logging.getLogger("provesizer")

EXIT_OK, EXIT_INFEASIBLE, EXIT_TIMEOUT, EXIT_USAGE = 0, 2, 3, 4
DEFAULT_MACHINE = "gpu-8xl4"
DEFAULT_DAYS = 30.0


class _Timeout(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- configuration -----------------------------------------------------------


@dataclass
class RunConfig:
    pipeline: dict = field(default_factory=dict)
    machine: Union[str, dict, None] = None
    scenario: Optional[str] = None
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    plan: Optional[dict] = None

    SOLVER_KEYS = ("command", "args", "timeout_s", "options")
    OUTPUT_KEYS = ("format", "path")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        for name, allowed in (("solver", cls.SOLVER_KEYS), ("output", cls.OUTPUT_KEYS)):
            extra = set(getattr(cfg, name)) - set(allowed)
            if extra:
                raise InvalidConfig(f"unknown {name} keys: {sorted(extra)}")
        fmt = cfg.output.get("format")
        if fmt is not None and fmt not in FORMATS:
            raise InvalidConfig(f"output.format must be one of {FORMATS}")
        return cfg

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from None


@dataclass
class Context:
    args: argparse.Namespace
    config: RunConfig

    @property
    def machine(self) -> sc.MachineSpec:
        if self.args.machine:
            return sc.get_machine(self.args.machine)
        m = self.config.machine
        if isinstance(m, dict):
            return sc.MachineSpec.from_dict(m)
        return sc.get_machine(m or DEFAULT_MACHINE)

    @property
    def scenario_name(self) -> Optional[str]:
        return self.args.scenario or self.config.scenario

    def _overrides(self) -> dict:
        over = dict(self.config.pipeline)
        if isinstance(over.get("da_model"), dict):
            over["da_model"] = cm.da_model_from_dict(over["da_model"])
        if "machine_cost_usd_month" in over:
            over["machine_cost_usd_month"] = tuple(over["machine_cost_usd_month"])
        unknown = set(over) - {f.name for f in fields(PipelineParams)}
        if unknown:
            raise InvalidConfig(f"unknown pipeline keys: {sorted(unknown)}")
        return over

    def params_for(self, scenario: Optional[sc.Scenario]) -> PipelineParams:
        machine = self.machine
        over = self._overrides()
        if scenario is not None:
            try:
                return scenario.params(machine, **over)
            except TypeError as exc:
                raise InvalidParameter(str(exc)) from None
        if "da_model" not in over:
            raise InvalidConfig("pipeline needs a da_model when no scenario is given")
        base = dict(t_super_s=machine.t_super_s, t_batch_s=machine.t_batch_s, t_bundle_s=machine.t_bundle_s,
                    machine_cost_usd_month=(machine.monthly_cost_usd,) * 3)
        base.update(over)
        try:
            return PipelineParams(**base)
        except TypeError as exc:
            raise InvalidConfig(f"incomplete pipeline section: {exc}") from None

    def params(self) -> PipelineParams:
        name = self.scenario_name
        return self.params_for(sc.get_scenario(name) if name else None)

    @property
    def solver_cmd(self):
        if self.args.solver_cmd:
            return shlex.split(self.args.solver_cmd)
        command = self.config.solver.get("command")
        if command:
            return [command, *self.config.solver.get("args", [])]
        return None

    @property
    def timeout_s(self) -> float:
        if self.args.timeout_s is not None:
            return self.args.timeout_s
        return float(self.config.solver.get("timeout_s", DEFAULT_TIMEOUT_S))

    @property
    def fmt(self) -> str:
        return self.args.format or self.config.output.get("format", "json")

    @property
    def accounting(self) -> Accounting:
        return Accounting(self.args.accounting)


# --- rows --------------------------------------------------------------------


def _config_row(config: DerivedConfig) -> dict:
    return {"fleet": config.fleet, "n_super": config.n_super, "n_batch": config.n_batch,
            "n_bundle": config.n_bundle, "batch_epoch_s": config.batch_epoch_s,
            "bundle_epoch_s": config.bundle_epoch_s}


def _cost_row(cost: cm.CostBreakdown) -> dict:
    return {"da_usd_month": cost.da_usd_month, "verification_usd_month": cost.verification_usd_month,
            "machine_usd_month": cost.machine_usd_month, "total_usd_month": cost.total_usd_month}


def _finality(params: PipelineParams, config: DerivedConfig) -> float:
    return float(cm.exact(params.t_super_s) + cm.exact(config.batch_epoch_s) + cm.exact(config.bundle_epoch_s))


def _check_machine(params: PipelineParams, machine: sc.MachineSpec):
    verdict = cm.check_feasibility(params, machine.memory_gb)
    if verdict is cm.Feasibility.MEMORY_INFEASIBLE:
        raise MemoryInfeasible(f"machine {machine.name} has {machine.memory_gb} GB, below a step's peak")
    if verdict is cm.Feasibility.FINALITY_INFEASIBLE:
        raise FinalityInfeasible("proving times alone exceed the finality target")


@dataclass
class PlanResult:
    scenario: Optional[str]
    baseline: DerivedConfig
    baseline_cost: cm.CostBreakdown
    status: Status
    config: Optional[DerivedConfig] = None
    cost: Optional[cm.CostBreakdown] = None
    reduction_pct: Optional[float] = None
    lag: Optional[str] = None
    max_finality_s: Optional[float] = None

    def row(self, params: PipelineParams) -> dict:
        row = {"scenario": self.scenario, "tps": params.tps, "status": self.status.value,
               "baseline_fleet": self.baseline.fleet, "total_before_usd": self.baseline_cost.total_usd_month}
        if self.config is not None:
            row.update(_config_row(self.config))
            row.update(_cost_row(self.cost))
            row["total_after_usd"] = self.cost.total_usd_month
            row["reduction_pct"] = self.reduction_pct
            row["finality_bound_s"] = _finality(params, self.config)
            row["replay_lag"] = self.lag
            row["replay_max_finality_s"] = self.max_finality_s
        return row


def plan(ctx: Context, params: PipelineParams, scenario: Optional[str]) -> PlanResult:
    """Baseline, optimise, replay the result, and compare."""
    _check_machine(params, ctx.machine)
    base = sc.baseline_config(params)
    base_cost = cm.monthly_cost(params, base, ctx.accounting)
    mode = FixedFleet.of(base) if ctx.args.fixed_fleet else FREE_FLEET
    try:
        config, cost, outcome = optimize(params, mode, ctx.solver_cmd, ctx.timeout_s, accounting=ctx.accounting)
    except FinalityInfeasible:
        return PlanResult(scenario, base, base_cost, Status.INFEASIBLE)
    log.info("%s: solver %s, %s in %.2fs", scenario or "config", outcome.solver_identity,
             outcome.status.value, outcome.solve_time_s)
    if outcome.status is Status.SOLVER_ERROR:
        raise ProvesizerError(f"solver error: {outcome.detail}")
    result = PlanResult(scenario, base, base_cost, outcome.status, config, cost)
    if config is not None:
        result.reduction_pct = sc.compare(base_cost, cost).reduction_pct
        sim = replay(params, config, ctx.args.days, strict_lag=ctx.args.strict_paper_lag,
                     accounting=ctx.accounting)
        result.lag = sim.lag_kind
        result.max_finality_s = sim.max_observed_finality_s
    return result


def _status_exit(status: Status) -> int:
    if status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    if status is Status.TIMEOUT:
        return EXIT_TIMEOUT
    return EXIT_OK


# --- commands ----------------------------------------------------------------


def cmd_derive(ctx: Context) -> tuple[dict, int]:
    params = ctx.params()
    _check_machine(params, ctx.machine)
    config = cm.derive_config(params)
    cost = cm.monthly_cost(params, config, ctx.accounting)
    row = {"scenario": ctx.scenario_name, "machine": ctx.machine.name, "tps": params.tps}
    row.update(_config_row(config))
    row.update(_cost_row(cost))
    row["finality_bound_s"] = _finality(params, config)
    return {"command": "derive", "rows": [row]}, EXIT_OK


def cmd_optimize(ctx: Context) -> tuple[dict, int]:
    params = ctx.params()
    result = plan(ctx, params, ctx.scenario_name)
    report = {"command": "optimize", "machine": ctx.machine.name, "rows": [result.row(params)]}
    if result.status is Status.TIMEOUT:
        report["notes"] = ["solver timed out; the row shows the best plan found so far" if result.config
                           else "solver timed out before finding any plan"]
    return report, _status_exit(result.status)


def _simulation_plan(ctx: Context, params: PipelineParams) -> DerivedConfig:
    if ctx.args.plan is None and ctx.config.plan is not None:
        try:
            return DerivedConfig(**ctx.config.plan)
        except TypeError as exc:
            raise InvalidConfig(f"bad plan section: {exc}") from None
    which = ctx.args.plan or "optimized"
    if which == "derived":
        return cm.derive_config(params)
    base = sc.baseline_config(params)
    if which == "baseline":
        return base
    mode = FixedFleet.of(base) if ctx.args.fixed_fleet else FREE_FLEET
    config, _, outcome = optimize(params, mode, ctx.solver_cmd, ctx.timeout_s, accounting=ctx.accounting)
    if config is None:
        raise _Timeout()
    return config


def cmd_simulate(ctx: Context) -> tuple[dict, int]:
    params = ctx.params()
    _check_machine(params, ctx.machine)
    config = _simulation_plan(ctx, params)
    sim = replay(params, config, ctx.args.days, strict_lag=ctx.args.strict_paper_lag,
                 accounting=ctx.accounting)
    row = {"scenario": ctx.scenario_name, "days": ctx.args.days}
    row.update(_config_row(config))
    row.update({
        "lag": sim.lag_kind,
        "lag_time_s": getattr(sim.lag, "time_s", None),
        "lag_pool_size": getattr(sim.lag, "pool_size", None),
        "bundle_epochs_completed": sim.bundle_epochs_completed,
        "max_observed_finality_s": sim.max_observed_finality_s,
        "simulated_time_s": sim.simulated_time_s,
        "bundles_produced": sim.bundles_produced,
    })
    row.update(_cost_row(sim.cost))
    return {"command": "simulate", "rows": [row]}, EXIT_OK if sim.lag_free else EXIT_INFEASIBLE


def cmd_compare(ctx: Context) -> tuple[dict, int]:
    catalog = sc.scenario_catalog()
    names = [ctx.scenario_name] if ctx.scenario_name else sorted(catalog)
    chosen = [sc.get_scenario(n, catalog) for n in names]

    def run(scenario):
        params = ctx.params_for(scenario)
        return params, plan(ctx, params, scenario.name)

    with ThreadPoolExecutor(max_workers=max(1, min(4, len(chosen)))) as pool:
        results = list(pool.map(run, chosen))
    rows = [res.row(params) for params, res in results]
    rows.sort(key=lambda r: r["scenario"])
    code = max((_status_exit(res.status) for _, res in results), default=EXIT_OK)
    return {"command": "compare", "machine": ctx.machine.name, "rows": rows}, code


def cmd_scenarios(ctx: Context) -> tuple[dict, int]:
    rows = []
    for m in sc.machine_catalog():
        rows.append({"type": "machine", "name": m.name, "monthly_cost_usd": m.monthly_cost_usd,
                     "t_super_s": m.t_super_s, "t_batch_s": m.t_batch_s, "t_bundle_s": m.t_bundle_s,
                     "memory_gb": m.memory_gb})
    for name, s in sc.scenario_catalog().items():
        da_unit, ver_unit = cm.l1_unit_costs(s.params(ctx.machine))
        rows.append({"type": "scenario", "name": name, "tps": s.tps, "da_model": s.da_model.kind,
                     "da_usd_per_batch": float(da_unit), "verification_usd_per_bundle": float(ver_unit)})
    return {"command": "scenarios", "rows": rows}, EXIT_OK


COMMANDS = {"derive": cmd_derive, "optimize": cmd_optimize, "simulate": cmd_simulate,
            "compare": cmd_compare, "scenarios": cmd_scenarios}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="provesizer", description="Size and price a three-tier proving fleet.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--scenario", help="catalog scenario name")
    p.add_argument("--machine", help="catalog machine name (default gpu-8xl4)")
    p.add_argument("--days", type=float, default=DEFAULT_DAYS, help="replay length in days")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--solver-cmd", help="solver command line, e.g. 'z3 -in'")
    p.add_argument("--timeout-s", type=float)
    p.add_argument("--fixed-fleet", action="store_true", help="keep the baseline counts, optimise epochs only")
    p.add_argument("--strict-paper-lag", action="store_true", help="lag test without the rounds factor")
    p.add_argument("--plan", choices=("derived", "baseline", "optimized"), help="configuration to simulate")
    p.add_argument("--accounting", choices=[a.value for a in Accounting], default=Accounting.PER_PROVER.value)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    if args.days < 0:
        print("provesizer: error: --days must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = RunConfig.load(args.config)
        ctx = Context(args, config)
        report, code = COMMANDS[args.command](ctx)
    except (FinalityInfeasible, MemoryInfeasible) as exc:
        print(f"provesizer: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _Timeout:
        print("provesizer: solver timed out before finding a plan", file=sys.stderr)
        return EXIT_TIMEOUT
    except (InvalidConfig, InvalidParameter, UnknownScenario, UnknownMachine, SolverUnavailable) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"provesizer: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ProvesizerError as exc:
        print(f"provesizer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = render(report, ctx.fmt)
    target = args.output or config.output.get("path")
    if target:
        Path(target).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
