"""
Weighted Glimm functional for the front-tracking solution.

F = K L1 + L2 + K3 L3 + L4 + K0 Q0 + K1 Q1 + K2 Q2 + K4 Q4 + K_* |S - S_bar|

The exponential weights W(alpha, x) = exp(K_omega * strong strength below alpha)
and W(eps, x) = exp(K_np * strong strength above eps) let the functional see the
cancellation between weak fronts and the large corner fan.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import CornerFlowError, WeightInequalityError
from gas_core import GasState, eigenvectors, is_supersonic
from riemann import (BackgroundSolution, measured_reflection_coefficient, reflection_coefficient,
                     solve_riemann)
from wave_curves import (WaveFamily, WaveParam, WaveStrengths, composite_forward, pressure_lipschitz_bounds,
                         wave_forward)

if TYPE_CHECKING:
    from tracking import Front, FrontField, InteractionRecord

logger = logging.getLogger(__name__)

CONSTANT_MARGIN = 1.25
MAX_EXPONENT = 700.0
WEIGHT_NAMES = ("K", "K0", "K1", "K2", "K3", "K4", "K_omega", "K_np", "K_star")


def _safe_exp(value: float) -> float:
    return math.exp(min(value, MAX_EXPONENT))


@dataclass(frozen=True)
class GlimmConstants:
    """Constants of the interaction estimates, measured over D(U_plus, delta0)."""

    C0: float
    C1: float
    C1_prime: float
    C2: float
    C_b: float
    samples: int = 0
    margin: float = CONSTANT_MARGIN

    def to_dict(self) -> dict:
        return {"C0": self.C0, "C1": self.C1, "C1_prime": self.C1_prime, "C2": self.C2,
                "C_b": self.C_b, "samples": self.samples, "margin": self.margin}


@dataclass(frozen=True)
class Weights:
    K: float
    K0: float
    K1: float
    K2: float
    K3: float
    K4: float
    K_omega: float
    K_np: float
    K_star: float
    C0: float
    C1: float
    C1_prime: float
    C2: float
    C_b: float
    delta_star: float
    overridden: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        values = {name: getattr(self, name) for name in WEIGHT_NAMES}
        values.update({"C0": self.C0, "C1": self.C1, "C1_prime": self.C1_prime, "C2": self.C2,
                       "C_b": self.C_b, "delta_star": self.delta_star, "overridden": list(self.overridden)})
        return values


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    strict: bool = False

    @property
    def holds(self) -> bool:
        return self.lhs < self.rhs if self.strict else self.lhs <= self.rhs


@dataclass(frozen=True)
class GlimmSnapshot:
    x: float
    L: Tuple[float, float, float, float]
    Q: Tuple[float, float, float, float]
    S: float
    F1: float
    L_w: float
    Q_total: float
    F0: float
    F: float

    @property
    def L0(self) -> float:
        return float(sum(self.L))

    def terms(self) -> Dict[str, float]:
        return {
            "L1": self.L[0], "L2": self.L[1], "L3": self.L[2], "L4": self.L[3],
            "Q0": self.Q[0], "Q1": self.Q[1], "Q2": self.Q[2], "Q4": self.Q[3],
            "S": self.S, "F1": self.F1, "F": self.F,
        }


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    delta_F: float
    bound: float
    tolerance: float
    term_deltas: Dict[str, float] = dataclass_field(default_factory=dict)


# --- weights --------------------------------------------------------------

def delta_star_for(K: float, K0: float, K_omega: float, K_np: float, C0: float, C1: float) -> float:
    """Smallness threshold: the minimum of the four admissibility bounds."""
    e_np = _safe_exp(K_np * C0)
    e_omega = _safe_exp(K_omega * C0)
    return min(
        1.0 / (20.0 * C1 * (1.0 + K0 + K_omega + K_np)),
        1.0 / (4.0 * K0 + 3.0 * K_np * e_np + 6.0 * K_omega * e_omega),
        1.0 / math.sqrt(C1 * (K_np + K_omega)),
        1.0 / (C1 * (K + 8.0 + e_np + 2.0 * e_omega)),
    )


def build_weights(constants: GlimmConstants, overrides: Optional[Dict[str, float]] = None) -> Weights:
    """
    Weights from the recipe K1 = K2 = K4 = K_* = 1, K3 = 5, K_np = 2 + 3 C1 and
    K, K_omega, K0 in that order; any entry of `overrides` replaces the recipe value.

    Args:
        constants (GlimmConstants): Measured constants
        overrides (dict, optional): Weight name (or 'delta_star') to value

    Returns:
        Weights: The weights with delta_star recomputed from the final values
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(WEIGHT_NAMES) - {"delta_star"}
    if unknown:
        raise ValueError(f"unknown weight overrides: {sorted(unknown)}")
    C0, C1, C1p, C_b = constants.C0, constants.C1, constants.C1_prime, constants.C_b

    def pick(name: str, value: float) -> float:
        return float(overrides.get(name, value))

    K1 = pick("K1", 1.0)
    K2 = pick("K2", 1.0)
    K4 = pick("K4", 1.0)
    K_star = pick("K_star", 1.0)
    K3 = pick("K3", 5.0)
    K_np = pick("K_np", 2.0 + 3.0 * C1)
    e_np = _safe_exp(K_np * C0)
    K = pick("K", C1p * C_b * (7.0 + e_np) + 1.0)
    K_omega = pick("K_omega", 2.0 * C1 * (K + 8.0 + e_np))
    K0 = pick("K0", 2.0 + 2.0 * C1 * (K + 10.0 + e_np + 2.0 * _safe_exp(K_omega * C0)))
    delta_star = pick("delta_star", delta_star_for(K, K0, K_omega, K_np, C0, C1))

    weights = Weights(K=K, K0=K0, K1=K1, K2=K2, K3=K3, K4=K4, K_omega=K_omega, K_np=K_np, K_star=K_star,
                      C0=C0, C1=C1, C1_prime=C1p, C2=constants.C2, C_b=C_b, delta_star=delta_star,
                      overridden=tuple(sorted(overrides)))
    if overrides:
        logger.warning(f"Glimm weights overridden: {sorted(overrides)}")
    logger.info(f"Weights: K={K:.4g}, K0={K0:.4g}, K_omega={K_omega:.4g}, K_np={K_np:.4g}, "
                f"delta*={delta_star:.4g}")
    return weights


def verify_weights(w: Weights, L0: float, delta: float) -> List[InequalityCheck]:
    """
    Evaluate every weight inequality the monotonicity argument uses, with strong
    front strength |s| <= delta and weak 3-shock strength |alpha_3| <= L0.
    """
    C0, C1 = w.C0, w.C1
    e_np = _safe_exp(w.K_np * C0)
    e_omega = _safe_exp(w.K_omega * C0)
    weak_block = L0 * (4.0 * w.K0 + 3.0 * w.K4 * w.K_np * e_np + 3.0 * (w.K1 + w.K2) * w.K_omega * e_omega)
    tail = w.K4 * e_np + w.K + 3.0 + w.K_star
    return [
        InequalityCheck("weak_pair_decay", C1 * (w.K + w.K3 + 3.0 + (w.K1 + w.K2) * e_omega + w.K4 * e_np) - 0.5 * w.K0, -0.5),
        InequalityCheck("boundary_reflection", w.C1_prime * w.C_b * (1.0 + w.K3 + w.K4 * e_np + w.K0 * L0) + 0.25, w.K),
        InequalityCheck("strong_crossing_1", weak_block + w.K1 * (1.0 - 0.5 * w.K_omega / C1) + w.K2 + tail, -0.5),
        InequalityCheck("strong_crossing_2", weak_block + w.K2 * (1.0 - 0.5 * w.K_omega / C1) + w.K1 + tail, -0.5),
        InequalityCheck("strong_weak3_delta", 0.25 + 1.5 * w.K_star + (3.0 * C1 * w.K0 * L0 + (w.K1 + w.K2) * C1 * e_omega
                                                       + w.K4 * C1 * e_np + (w.K + 3.0) * C1) * delta,
                        w.K3, strict=True),
        InequalityCheck("strong_weak3_L0", 0.5 + 2.0 * (C1 * L0 * (w.K + 3.0 + 5.0 * w.K0 * L0 + w.K4 * e_np
                                                          + (w.K1 + w.K2) * e_omega) + w.K_star),
                        w.K3, strict=True),
        InequalityCheck("non_physical_weight", 1.0 + C1 + C1 * w.K0 * L0, w.K4 * (w.K_np - C1), strict=True),
        InequalityCheck("weak_total_small", C1 * L0, 1.0 / 20.0, strict=True),
        InequalityCheck("K0_lower_bound", 1.0 + 2.0 * C1 * (1.0 + w.K4 * e_np), w.K0, strict=True),
        InequalityCheck("quadratic_bounded", w.K0 * L0, 1.0),
    ]


def require_weights(w: Weights, L0: float, delta: float) -> List[InequalityCheck]:
    checks = verify_weights(w, L0, delta)
    failing = [check.name for check in checks if not check.holds]
    if failing:
        error_msg = f"weight inequalities violated: {', '.join(failing)} (L0={L0:.4g}, delta={delta:.4g})"
        logger.error(error_msg)
        raise WeightInequalityError(error_msg, failing)
    return checks


# --- functional -----------------------------------------------------------

def approaching_pairs(field: "FrontField") -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """
    Approaching pairs as (lower id, upper id).

    A1: weak physical fronts with the lower family index above, or equal families
    with at least one shock. A2: a weak physical front above a non-physical one.
    """
    A1, A2 = [], []
    fronts = field.fronts
    for a, lower in enumerate(fronts):
        if lower.is_strong:
            continue
        for upper in fronts[a + 1:]:
            if upper.is_strong:
                continue
            if lower.is_physical and upper.is_physical:
                i, j = lower.family.index, upper.family.index
                if i > j or (i == j and (lower.is_shock or upper.is_shock)):
                    A1.append((lower.id, upper.id))
            elif not lower.is_physical and upper.is_physical:
                A2.append((lower.id, upper.id))
    return A1, A2


def _strong_profile(fronts: Sequence["Front"]) -> np.ndarray:
    """Strong strength strictly below each front, in bottom-to-top order."""
    strong = np.array([f.strength if f.is_strong else 0.0 for f in fronts])
    return np.concatenate(([0.0], np.cumsum(strong)[:-1])) if len(fronts) else strong


def front_weight(field: "FrontField", front: "Front", w: Weights) -> float:
    """W(alpha, x) for a weak front, W(eps, x) for a non-physical one."""
    position = next(k for k, f in enumerate(field.fronts) if f.id == front.id)
    strong_below = sum(f.strength for f in field.fronts[:position] if f.is_strong)
    if front.is_physical:
        return _safe_exp(w.K_omega * strong_below)
    strong_above = sum(f.strength for f in field.fronts if f.is_strong) - strong_below
    return _safe_exp(w.K_np * strong_above)


def compute_functional(field: "FrontField", w: Weights) -> GlimmSnapshot:
    fronts = field.fronts
    magnitudes = np.array([f.magnitude for f in fronts])
    family = np.array([f.family.index for f in fronts])
    strong = np.array([f.is_strong for f in fronts], dtype=bool)
    physical = np.array([f.is_physical for f in fronts], dtype=bool)
    shock = np.array([f.is_shock for f in fronts], dtype=bool)
    weak = physical & ~strong
    np_mask = ~physical

    L = tuple(float(magnitudes[weak & (family == k)].sum()) for k in (1, 2, 3)) + (float(magnitudes[np_mask].sum()),)
    S = float(np.sum([f.strength for f in fronts if f.is_strong]))

    Q0 = 0.0
    if len(fronts):
        lower_family = family[:, None]
        upper_family = family[None, :]
        above = np.triu(np.ones((len(fronts), len(fronts)), dtype=bool), k=1)
        weak_pair = weak[:, None] & weak[None, :]
        approaching = (lower_family > upper_family) | ((lower_family == upper_family) & (shock[:, None] | shock[None, :]))
        a1 = above & weak_pair & approaching
        a2 = above & np_mask[:, None] & weak[None, :]
        products = np.outer(magnitudes, magnitudes)
        Q0 = float(products[a1].sum() + products[a2].sum())

    strong_below = _strong_profile(fronts)
    strong_above = S - strong_below - np.array([f.strength if f.is_strong else 0.0 for f in fronts])
    weight_weak = np.array([_safe_exp(w.K_omega * value) for value in strong_below])
    weight_np = np.array([_safe_exp(w.K_np * value) for value in strong_above])
    Q1 = float(np.sum(magnitudes * weight_weak, where=weak & (family == 1))) if len(fronts) else 0.0
    Q2 = float(np.sum(magnitudes * weight_weak, where=weak & (family == 2))) if len(fronts) else 0.0
    Q4 = float(np.sum(magnitudes * weight_np, where=np_mask)) if len(fronts) else 0.0

    F1 = abs(S - field.S_bar)
    L_w = w.K * L[0] + L[1] + w.K3 * L[2] + L[3]
    Q_total = w.K0 * Q0 + w.K1 * Q1 + w.K2 * Q2 + w.K4 * Q4
    F0 = L_w + Q_total
    return GlimmSnapshot(x=field.x, L=L, Q=(Q0, Q1, Q2, Q4), S=S, F1=F1, L_w=L_w, Q_total=Q_total,
                         F0=F0, F=F0 + w.K_star * F1)


def audit_interaction(before: GlimmSnapshot, after: GlimmSnapshot, record: "InteractionRecord",
                      w: Weights, tolerance: float = 1e-12) -> AuditResult:
    """Check F(after) - F(before) <= -E_delta/4 up to tolerance * max(1, F(before))."""
    delta_F = after.F - before.F
    bound = -0.25 * record.E_delta
    tol = tolerance * max(1.0, before.F)
    previous = before.terms()
    term_deltas = {name: value - previous[name] for name, value in after.terms().items()}
    return AuditResult(passed=delta_F <= bound + tol, delta_F=delta_F, bound=bound, tolerance=tol,
                       term_deltas=term_deltas)


def np_total_strength(field: "FrontField") -> float:
    return float(sum(f.magnitude for f in field.fronts if not f.is_physical))


@dataclass(frozen=True)
class TVEstimate:
    """
    Pressure variation across y at the current x.

    tv_fan, tv_weak and tv_np split tv_p by front kind. The background
    variation is the monotone drop p_plus - p_bar, so a weak front whose
    jump runs against that drop adds twice its jump to the deviation and
    one that runs with it is absorbed by the fan.
    """

    tv_p: float
    tv_p_background: float
    deviation: float
    tv_fan: float = 0.0
    tv_weak: float = 0.0
    tv_np: float = 0.0


def tv_estimates(field: "FrontField", bg: BackgroundSolution) -> TVEstimate:
    """Total variation of p across the field against the background value p_plus - p_bar."""
    tv_fan = tv_weak = tv_np = 0.0
    for f in field.fronts:
        jump = abs(f.above.p - f.below.p)
        if not f.is_physical:
            tv_np += jump
        elif f.is_strong:
            tv_fan += jump
        else:
            tv_weak += jump
    tv_p = tv_fan + tv_weak + tv_np
    tv_bg = bg.U_plus.p - bg.p_bar
    return TVEstimate(tv_p, tv_bg, abs(tv_p - tv_bg), tv_fan, tv_weak, tv_np)


# --- constant estimation ----------------------------------------------------

_APPROACHING_FAMILIES = (
    (WaveFamily.F3, WaveFamily.F1),
    (WaveFamily.F3, WaveFamily.F2_VORTEX),
    (WaveFamily.F2_VORTEX, WaveFamily.F1),
    (WaveFamily.F1, WaveFamily.F1),
    (WaveFamily.F3, WaveFamily.F3),
)


def _random_wave(rng: np.random.Generator, family: WaveFamily, low: float, high: float,
                 force_shock: bool = False) -> WaveParam:
    size = rng.uniform(low, high)
    if family.is_contact:
        return WaveParam.contact(size * rng.choice((-1.0, 1.0)), rng.uniform(-high, high))
    sign = -1.0 if force_shock else rng.choice((-1.0, 1.0))
    return WaveParam(family, sign * size)


def estimate_constants(bg: BackgroundSolution, delta0: float, samples: int = 200, seed: int = 0,
                       riemann_samples: int = 20, strength_range: Tuple[float, float] = (1e-3, 1e-2)) -> GlimmConstants:
    """
    Sample D(U_plus, delta0) to bound the constants of the interaction estimates.

    C1 bounds eps/(|alpha||beta|) of the simplified solver on approaching pairs
    (and the accurate solver's |gamma - alpha - beta| on `riemann_samples` pairs),
    C1' the eigenvector norms, C_b the reflection coefficient, C2 the pressure
    Lipschitz constant along 3-curves. Every maximum is multiplied by 1.25.

    Args:
        bg (BackgroundSolution): Background corner solution
        delta0 (float): Radius of the invariant region
        samples (int): Number of sampled interactions
        seed (int): Seed of the numpy Generator
        riemann_samples (int): Number of accurate-solver samples
        strength_range (tuple): Range of sampled weak strengths

    Returns:
        GlimmConstants: Measured constants
    """
    params = bg.params
    rng = np.random.default_rng(seed)
    low, high = strength_range
    J, B, A = bg.invariants

    def sample_state():
        p = rng.uniform(bg.p_bar, bg.U_plus.p)
        state = bg.state_at_pressure(p)
        for _ in range(10):
            shift = rng.uniform(-0.25 * delta0, 0.25 * delta0, size=4)
            candidate = state.as_array() * (1.0 + 0.1 * shift)
            try:
                U = GasState.from_array(candidate)
            except CornerFlowError:
                continue
            if is_supersonic(U, params):
                return U
        return state

    c1 = 1.0
    c1_prime = 1.0
    c2 = 0.0
    used = 0
    for _ in range(samples):
        U = sample_state()
        lower_family, upper_family = _APPROACHING_FAMILIES[rng.integers(len(_APPROACHING_FAMILIES))]
        same = lower_family is upper_family
        beta = _random_wave(rng, lower_family, low, high, force_shock=same)
        alpha = _random_wave(rng, upper_family, low, high)
        try:
            U_M = wave_forward(U, beta, params)
            U_R = wave_forward(U_M, alpha, params)
            U_aux, _ = composite_forward(U, WaveStrengths().add(beta).add(alpha), params)
        except CornerFlowError as e:
            logger.debug(f"skipped constant sample at {U}: {e}")
            continue
        product = beta.strength * alpha.strength
        c1 = max(c1, U_aux.distance(U_R) / product)
        eig = eigenvectors(U, params)
        c1_prime = max(c1_prime, *(float(np.linalg.norm(r)) for r in (eig.r1, eig.r21, eig.r22, eig.r3)))
        c2 = max(c2, pressure_lipschitz_bounds(U, delta0, params, samples=4)[1])
        used += 1

        if used <= riemann_samples:
            try:
                solution = solve_riemann(U, U_R, params)
            except CornerFlowError as e:
                logger.debug(f"skipped Riemann sample at {U}: {e}")
                continue
            expected = WaveStrengths().add(beta).add(alpha).as_array()
            c1 = max(c1, float(np.max(np.abs(solution.strengths.as_array() - expected))) / product)

    c_b = 0.0
    for p in np.linspace(bg.p_bar, bg.U_plus.p, 9):
        c_b = max(c_b, reflection_coefficient(bg.state_at_pressure(float(p)), params))
    for alpha1 in (-0.5 * delta0, 0.5 * delta0):
        try:
            c_b = max(c_b, measured_reflection_coefficient(bg.U_minus, alpha1, params))
        except CornerFlowError as e:
            logger.debug(f"skipped reflection sample alpha1={alpha1}: {e}")

    C1 = CONSTANT_MARGIN * c1
    constants = GlimmConstants(
        C0=CONSTANT_MARGIN * bg.S_bar,
        C1=C1,
        C1_prime=CONSTANT_MARGIN * c1_prime,
        C2=max(CONSTANT_MARGIN * c2, 2.0 * C1),
        C_b=CONSTANT_MARGIN * c_b,
        samples=used,
    )
    logger.info(f"Estimated constants from {used} samples: C0={constants.C0:.4g}, C1={constants.C1:.4g}, "
                f"C1'={constants.C1_prime:.4g}, C2={constants.C2:.4g}, C_b={constants.C_b:.4g}")
    return constants
