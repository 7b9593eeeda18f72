"""
Scenario definition and execution: configuration models, initial perturbations,
the preparation gates (background, constants, weights, delta*, mu_delta) and
single runs or sweeps of runs.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from errors import CornerFlowError, GateViolation, PressureOutOfRange
from gas_core import GasParams, GasState
from glimm import (GlimmConstants, GlimmSnapshot, TVEstimate, Weights, WEIGHT_NAMES, build_weights,
                   compute_functional, estimate_constants, np_total_strength, require_weights, tv_estimates,
                   verify_weights)
from riemann import BackgroundSolution, SolverSpeeds, background_solution, sample_solver_speeds
from tracking import FrontField, InitialProfile, TrackingSettings, advance, initialize, mu_delta
from validate import (EntropyReport, InvariantMargins, check_invariant_region, convergence_study,
                      entropy_residuals)
from wave_curves import WaveStrengths, composite_forward

logger = logging.getLogger(__name__)

CONSTANT_NAMES = ("C0", "C1", "C1_prime", "C2", "C_b")


# --- configuration ----------------------------------------------------------

class StateConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    u: float
    v: float = 0.0
    p: float = Field(gt=0.0)
    rho: float = Field(gt=0.0)

    def to_state(self) -> GasState:
        return GasState(self.u, self.v, self.p, self.rho)


class TableRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    y_low: float = Field(gt=0.0)
    y_high: float
    u: float
    v: float
    p: float = Field(gt=0.0)
    rho: float = Field(gt=0.0)


class PerturbationConfig(BaseModel):
    """
    Initial perturbation of the uniform upstream state above the corner.

    step_train: `steps` constant states on [y_start, y_start + width];
    single_bump: one constant state on that interval; table: explicit slabs.
    epsilon is the total variation budget of the generated profile.
    """

    model_config = ConfigDict(extra="forbid")

    shape: Literal["none", "step_train", "single_bump", "table"] = "none"
    epsilon: float = Field(default=0.0, ge=0.0)
    y_start: float = Field(default=0.5, gt=0.0)
    width: float = Field(default=0.5, gt=0.0)
    steps: int = Field(default=4, ge=1)
    direction: Optional[Tuple[float, float, float, float]] = None
    table: List[TableRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_table(self) -> "PerturbationConfig":
        if self.shape == "table" and not self.table:
            raise ValueError("shape 'table' needs at least one table row")
        for row in self.table:
            if row.y_high <= row.y_low:
                raise ValueError(f"table row with y_high <= y_low: {row}")
        for lower, upper in zip(self.table, self.table[1:]):
            if upper.y_low < lower.y_high:
                raise ValueError("table rows must be sorted and non-overlapping")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    gamma: float = 1.4
    U_plus: StateConfig
    p_bar: float = Field(gt=0.0)
    delta: float = Field(gt=0.0)
    delta0: float = Field(default=0.05, gt=0.0)
    epsilon0: float = Field(default=0.5, gt=0.0)
    x_max: float = Field(default=10.0, gt=0.0)
    seed: int = 0
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    audit: Literal["off", "warn", "strict"] = "warn"
    weight_overrides: Dict[str, float] = Field(default_factory=dict)
    constants: Dict[str, float] = Field(default_factory=dict)
    mu_delta: Optional[float] = Field(default=None, gt=0.0)
    allow_gate_override: bool = False
    constant_samples: int = Field(default=200, ge=1)
    max_interactions: int = Field(default=100_000, ge=1)

    @field_validator("gamma")
    @classmethod
    def check_gamma(cls, value: float) -> float:
        if not value > 1.0:
            raise ValueError(f"gamma must be > 1, got {value}")
        return value

    @field_validator("weight_overrides")
    @classmethod
    def check_weight_names(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = set(value) - set(WEIGHT_NAMES) - {"delta_star"}
        if unknown:
            raise ValueError(f"unknown weights {sorted(unknown)}")
        return value

    @field_validator("constants")
    @classmethod
    def check_constant_names(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = set(value) - set(CONSTANT_NAMES)
        if unknown:
            raise ValueError(f"unknown constants {sorted(unknown)}")
        return value

    @model_validator(mode="after")
    def check_upstream(self) -> "ScenarioConfig":
        U = self.U_plus
        c = math.sqrt(self.gamma * U.p / U.rho)
        if U.v != 0.0:
            raise ValueError(f"U_plus must be horizontal (v = 0), got v={U.v}")
        if not U.u > c:
            raise ValueError(f"U_plus must be supersonic: u={U.u} <= c={c}")
        return self

    @property
    def params(self) -> GasParams:
        return GasParams(gamma=self.gamma)


# --- profile ----------------------------------------------------------------

def _direction(config: PerturbationConfig, rng: np.random.Generator) -> np.ndarray:
    if config.direction is not None:
        direction = np.asarray(config.direction, dtype=float)
    else:
        direction = rng.uniform(-1.0, 1.0, size=4)
    norm = np.sum(np.abs(direction))
    if norm == 0.0:
        raise ValueError("perturbation direction must not vanish")
    return direction / norm


def build_profile(config: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> InitialProfile:
    """
    Piecewise-constant initial data for the scenario's perturbation shape.

    Perturbed states are reached from U_plus through waves of total parameter
    size epsilon/2 (single bump) or epsilon/(2 steps) (step train), so the
    profile's variation stays of order epsilon.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    params = config.params
    U_plus = config.U_plus.to_state()
    shape = config.perturbation

    if shape.shape == "none" or (shape.shape != "table" and shape.epsilon == 0.0):
        return InitialProfile.constant(U_plus)

    if shape.shape == "table":
        breakpoints: List[float] = []
        states: List[GasState] = [U_plus]
        for row in shape.table:
            state = GasState(row.u, row.v, row.p, row.rho)
            if breakpoints and math.isclose(breakpoints[-1], row.y_low):
                states[-1] = state
            else:
                breakpoints.append(row.y_low)
                states.append(state)
            breakpoints.append(row.y_high)
            states.append(U_plus)
        return InitialProfile(tuple(breakpoints), tuple(states))

    count = 1 if shape.shape == "single_bump" else shape.steps
    size = shape.epsilon / (2.0 * count)
    edges = np.linspace(shape.y_start, shape.y_start + shape.width, count + 1)
    states = [U_plus]
    for _ in range(count):
        strengths = WaveStrengths.from_array(size * _direction(shape, rng))
        states.append(composite_forward(U_plus, strengths, params)[0])
    states.append(U_plus)
    return InitialProfile(tuple(float(y) for y in edges), tuple(states))


# --- preparation ------------------------------------------------------------

@dataclass
class PreparedScenario:
    config: ScenarioConfig
    background: BackgroundSolution
    speeds: SolverSpeeds
    constants: GlimmConstants
    weights: Weights
    mu: float
    profile: InitialProfile
    field: FrontField
    initial: GlimmSnapshot
    overridden_gates: List[str] = dataclass_field(default_factory=list)

    @property
    def delta_star(self) -> float:
        return self.weights.delta_star


def _gate(config: ScenarioConfig, name: str, holds: bool, detail: str, overridden: List[str]) -> None:
    if holds:
        return
    if config.allow_gate_override:
        logger.warning(f"Gate '{name}' violated but overridden: {detail}")
        overridden.append(name)
        return
    error_msg = f"gate '{name}' violated: {detail}"
    logger.error(error_msg)
    raise GateViolation(error_msg, [name])


def background_for(config: ScenarioConfig) -> BackgroundSolution:
    U_plus = config.U_plus.to_state()
    if not config.p_bar < U_plus.p:
        error_msg = f"gate 'p_bar < p_plus' violated: p_bar={config.p_bar} >= p_plus={U_plus.p}"
        logger.error(error_msg)
        raise GateViolation(error_msg, ["p_bar < p_plus"])
    try:
        return background_solution(U_plus, config.p_bar, config.params)
    except PressureOutOfRange as e:
        raise GateViolation(f"gate 'p_star < p_bar' violated: {e}", ["p_star < p_bar"]) from e


def constants_for(config: ScenarioConfig, bg: BackgroundSolution) -> GlimmConstants:
    if set(config.constants) == set(CONSTANT_NAMES):
        return GlimmConstants(samples=0, **config.constants)
    measured = estimate_constants(bg, config.delta0, samples=config.constant_samples, seed=config.seed)
    if not config.constants:
        return measured
    values = measured.to_dict()
    values.update(config.constants)
    return GlimmConstants(**values)


def gate_report(config: ScenarioConfig) -> Dict[str, float]:
    """The derived gates that need no initial field: p_* < p_bar < p_plus and delta < delta*."""
    bg = background_for(config)
    weights = build_weights(constants_for(config, bg), config.weight_overrides)
    _gate(config, "delta < delta_star", config.delta < weights.delta_star,
          f"delta={config.delta} >= delta*={weights.delta_star:.4g}", [])
    logger.info(f"Gates: p_star={bg.p_star:.6g} < p_bar={config.p_bar} < p_plus={bg.U_plus.p}, "
                f"delta={config.delta} < delta*={weights.delta_star:.4g}")
    return {"p_star": bg.p_star, "p_bar": config.p_bar, "p_plus": bg.U_plus.p,
            "delta": config.delta, "delta_star": weights.delta_star}


def prepare_scenario(config: ScenarioConfig) -> PreparedScenario:
    """
    Build everything a run needs and check every gate.

    Raises:
        GateViolation: p_bar outside (p_*, p_plus), delta >= delta*, F(0+) >= delta*
        WeightInequalityError: a weight inequality fails at the initial L0
    """
    overridden: List[str] = []
    params = config.params
    bg = background_for(config)
    speeds = sample_solver_speeds(bg, config.delta0)
    constants = constants_for(config, bg)
    weights = build_weights(constants, config.weight_overrides)
    _gate(config, "delta < delta_star", config.delta < weights.delta_star,
          f"delta={config.delta} >= delta*={weights.delta_star:.4g}", overridden)

    if config.mu_delta is not None:
        mu = config.mu_delta
    else:
        mu = mu_delta(config.delta, constants.C1, constants.C2, weights.delta_star)

    profile = build_profile(config)
    settings = TrackingSettings(
        delta=config.delta,
        mu=mu,
        lambda_hat=speeds.lambda_hat,
        p_bar=config.p_bar,
        lambda1_star=speeds.lambda1_star,
        lambda3_star=speeds.lambda3_star,
        params=params,
        weights=weights,
        audit_mode=config.audit,
        max_interactions=config.max_interactions,
    )
    field = initialize(profile, settings, tv_limit=config.epsilon0)
    initial = compute_functional(field, weights)

    _gate(config, "F(0+) < delta_star", initial.F < weights.delta_star,
          f"F(0+)={initial.F:.4g} >= delta*={weights.delta_star:.4g}", overridden)
    if not config.allow_gate_override:
        require_weights(weights, initial.L0, config.delta)
    failing = [check.name for check in verify_weights(weights, initial.L0, config.delta) if not check.holds]
    if failing:
        logger.warning(f"Weight inequalities {failing} violated but overridden")
        overridden.extend(failing)

    logger.info(f"Prepared '{config.name}': mu_delta={mu:.4g}, lambda_hat={speeds.lambda_hat:.6g}, "
                f"F(0+)={initial.F:.4g}, {len(field.fronts)} fronts")
    return PreparedScenario(config, bg, speeds, constants, weights, mu, profile, field, initial, overridden)


# --- runs -------------------------------------------------------------------

@dataclass
class RunResult:
    prepared: PreparedScenario
    field: FrontField
    entropy: EntropyReport
    margins: InvariantMargins
    tv: TVEstimate
    np_total: float
    elapsed: float

    @property
    def config(self) -> ScenarioConfig:
        return self.prepared.config

    @property
    def functional_non_increasing(self) -> bool:
        values = [snapshot.F for snapshot in self.field.glimm_trace]
        tol = self.field.settings.audit_tolerance
        return all(b <= a + tol * max(1.0, a) for a, b in zip(values, values[1:]))

    def summary(self) -> dict:
        stats = self.field.stats
        return {
            "name": self.config.name,
            "delta": self.config.delta,
            "epsilon": self.config.perturbation.epsilon,
            "x": self.field.x,
            "mu_delta": self.prepared.mu,
            "delta_star": self.prepared.delta_star,
            "fronts": len(self.field.fronts),
            **stats.to_dict(),
            "np_total": self.np_total,
            "np_within_delta": self.np_total <= self.config.delta,
            "functional_non_increasing": self.functional_non_increasing,
            "tv_deviation": self.tv.deviation,
            "tv_parts": {"fan": self.tv.tv_fan, "weak": self.tv.tv_weak, "np": self.tv.tv_np},
            "region_worst": self.margins.worst,
            "entropy": self.entropy.summary(),
            "overridden_gates": list(self.prepared.overridden_gates),
            "elapsed": self.elapsed,
        }


def run_scenario(config: Union[ScenarioConfig, PreparedScenario], x_max: Optional[float] = None) -> RunResult:
    prepared = config if isinstance(config, PreparedScenario) else prepare_scenario(config)
    cfg = prepared.config
    started = time.perf_counter()
    field = advance(prepared.field, cfg.x_max if x_max is None else x_max)
    elapsed = time.perf_counter() - started
    result = RunResult(
        prepared=prepared,
        field=field,
        entropy=entropy_residuals(field),
        margins=check_invariant_region(field, prepared.background.U_plus, cfg.delta0, cfg.p_bar),
        tv=tv_estimates(field, prepared.background),
        np_total=np_total_strength(field),
        elapsed=elapsed,
    )
    logger.info(f"Run '{cfg.name}' finished at x={field.x:g}: {field.stats.interactions} interactions, "
                f"{len(field.fronts)} fronts, T_NP={result.np_total:.3e}, {elapsed:.2f}s")
    return result


def run_sweep(configs: Sequence[ScenarioConfig], workers: int = 4,
              progress: bool = True) -> List[Union[RunResult, CornerFlowError]]:
    """
    Run independent scenarios on a thread pool, one engine per run.

    Returns:
        list: One RunResult per config, or the error that stopped it, in input order
    """
    results: List[Union[RunResult, CornerFlowError, None]] = [None] * len(configs)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(run_scenario, config): k for k, config in enumerate(configs)}
        for future in tqdm(as_completed(futures), total=len(futures), desc="sweep", disable=not progress):
            k = futures[future]
            try:
                results[k] = future.result()
            except CornerFlowError as e:
                logger.error(f"Sweep run '{configs[k].name}' failed: {e}")
                results[k] = e
    return results


def sweep_configs(base: ScenarioConfig, epsilons: Sequence[float], deltas: Sequence[float],
                  seeds: Sequence[int]) -> List[ScenarioConfig]:
    """The cartesian product of epsilon, delta and seed applied to a base scenario."""
    configs = []
    for epsilon in epsilons:
        for delta in deltas:
            for seed in seeds:
                perturbation = base.perturbation.model_copy(update={"epsilon": epsilon})
                configs.append(base.model_copy(update={
                    "name": f"{base.name}-eps{epsilon:g}-d{delta:g}-s{seed}",
                    "delta": delta,
                    "seed": seed,
                    "perturbation": perturbation,
                }))
    return configs


def study_convergence(config: ScenarioConfig, deltas: Sequence[float], slices: Sequence[float]):
    """convergence_study over delta for one physical setup."""

    def run_for_delta(delta: float) -> FrontField:
        return run_scenario(config.model_copy(update={"delta": delta})).field

    return convergence_study(run_for_delta, deltas, slices)
