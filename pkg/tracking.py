"""
Front-tracking engine for the corner flow.

The approximate solution is piecewise constant between straight fronts in the
(x, y) plane. Fronts move with fixed slopes until two neighbours meet (or the
lowest one meets the free boundary); the meeting is classified into one of six
cases, resolved by the accurate or the simplified Riemann solver, and the
outgoing fronts continue from the meeting point.
"""
from __future__ import annotations

import heapq
import logging
import math
from collections import Counter
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import (AuditFailure, ConstantsInvalid, InvalidState, PressureOutOfRange, SubsonicState,
                    TVTooLarge, UnclassifiableGeometry)
from gas_core import (DEFAULT_GAS, GasParams, GasState, eigenvalue, rarefaction_invariants,
                      require_supersonic, state_from_invariants)
from glimm import Weights, audit_interaction, compute_functional, front_weight
from riemann import (FrontSpec, accurate_solver, fronts_from_strengths, simplified_interaction,
                     simplified_passage, simplified_reflection, solve_boundary_riemann, split_rarefaction)
from wave_curves import WaveFamily, WaveParam, WaveStrengths, wave_forward

logger = logging.getLogger(__name__)

ACCURATE = "accurate"
SIMPLIFIED = "simplified"

AUDIT_MODES = ("off", "warn", "strict")


# --- data types -----------------------------------------------------------

@dataclass
class Front:
    """A straight front born at (x0, y0); it is dead for x >= x_end."""

    id: int
    family: WaveFamily
    strength: float
    speed: float
    below: GasState
    above: GasState
    x0: float
    y0: float
    gen_order: int = 1
    is_strong: bool = False
    alpha22: float = 0.0
    x_end: float = math.inf

    def y_at(self, x: float) -> float:
        return self.y0 + self.speed * (x - self.x0)

    @property
    def intercept(self) -> float:
        return self.y0 - self.speed * self.x0

    @property
    def param(self) -> WaveParam:
        return WaveParam(self.family, self.strength, self.alpha22)

    @property
    def magnitude(self) -> float:
        """|alpha|, with |alpha_21| + |alpha_22| for contacts."""
        return self.param.strength

    @property
    def is_physical(self) -> bool:
        return self.family.is_physical

    @property
    def is_weak(self) -> bool:
        return self.family.is_physical and not self.is_strong

    @property
    def is_shock(self) -> bool:
        return self.param.is_shock

    def alive_at(self, x: float) -> bool:
        return self.x0 <= x < self.x_end


@dataclass
class FreeBoundary:
    """
    Polygonal free boundary y = g(x). Each segment is (x_start, y_start, slope);
    the static gas (0, 0, p_bar, rho_bar) lies below it.
    """

    static: GasState
    segments: List[Tuple[float, float, float]] = dataclass_field(default_factory=list)

    @property
    def revision(self) -> int:
        return len(self.segments)

    @property
    def slope(self) -> float:
        return self.segments[-1][2]

    @property
    def intercept(self) -> float:
        x_start, y_start, slope = self.segments[-1]
        return y_start - slope * x_start

    def segment_at(self, x: float) -> Tuple[float, float, float]:
        current = self.segments[0]
        for segment in self.segments:
            if segment[0] <= x:
                current = segment
            else:
                break
        return current

    def y_at(self, x: float) -> float:
        x_start, y_start, slope = self.segment_at(x)
        return y_start + slope * (x - x_start)

    def slope_at(self, x: float) -> float:
        return self.segment_at(x)[2]

    def bend(self, x: float, slope: float) -> None:
        self.segments.append((x, self.y_at(x), slope))


@dataclass(frozen=True)
class InitialProfile:
    """
    Piecewise-constant data at x = 0 for y > 0: states[k] holds on
    (breakpoints[k-1], breakpoints[k]) and the last state extends to infinity.
    """

    breakpoints: Tuple[float, ...]
    states: Tuple[GasState, ...]

    def __post_init__(self):
        if len(self.states) != len(self.breakpoints) + 1:
            raise ValueError(f"profile needs {len(self.breakpoints) + 1} states, got {len(self.states)}")
        if any(b <= 0.0 for b in self.breakpoints):
            raise ValueError("profile breakpoints must lie above the corner (y > 0)")
        if any(b1 >= b2 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("profile breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, U: GasState) -> "InitialProfile":
        return cls((), (U,))

    @property
    def total_variation(self) -> float:
        return float(sum(a.distance(b) for a, b in zip(self.states, self.states[1:])))

    def l1_distance(self, U_plus: GasState) -> float:
        """L1 distance to U_plus over the bounded part of the profile."""
        edges = (0.0,) + self.breakpoints
        return float(sum(self.states[k].distance(U_plus) * (edges[k + 1] - edges[k])
                         for k in range(len(self.breakpoints))))


@dataclass
class InteractionRecord:
    x: float
    y: float
    case: int
    E_delta: float
    solver: str
    incoming: Tuple[int, ...]
    outgoing: Tuple[int, ...]
    F_before: Optional[float] = None
    F_after: Optional[float] = None
    audit_passed: Optional[bool] = None
    diagnostics: Dict[str, float] = dataclass_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "case": self.case,
            "E_delta": self.E_delta,
            "solver": self.solver,
            "incoming": list(self.incoming),
            "outgoing": list(self.outgoing),
            "F_before": self.F_before,
            "F_after": self.F_after,
            "audit_passed": self.audit_passed,
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class TrackingSettings:
    delta: float
    mu: float
    lambda_hat: float
    p_bar: float
    params: GasParams = DEFAULT_GAS
    weights: Optional[Weights] = None
    audit_mode: str = "warn"
    audit_tolerance: float = 1e-12
    max_interactions: int = 100_000
    tie_tolerance: float = 1e-12
    tie_perturbation: float = 1e-10
    lambda1_star: Optional[float] = None
    lambda3_star: Optional[float] = None

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.audit_mode not in AUDIT_MODES:
            raise ValueError(f"audit_mode must be one of {AUDIT_MODES}, got {self.audit_mode!r}")


@dataclass
class RunStats:
    physical_fronts_initial: int = 0
    max_fronts: int = 0
    interactions: int = 0
    per_case: Counter = dataclass_field(default_factory=Counter)
    per_solver: Counter = dataclass_field(default_factory=Counter)
    audit_failures: int = 0
    tie_breaks: int = 0
    truncated: bool = False

    @property
    def front_bound(self) -> int:
        """2N + 2N^2 with N the number of physical fronts at x = 0+."""
        n = self.physical_fronts_initial
        return 2 * n + 2 * n * n

    def to_dict(self) -> dict:
        return {
            "physical_fronts_initial": self.physical_fronts_initial,
            "max_fronts": self.max_fronts,
            "front_bound": self.front_bound,
            "interactions": self.interactions,
            "per_case": {str(k): v for k, v in sorted(self.per_case.items())},
            "per_solver": dict(self.per_solver),
            "audit_failures": self.audit_failures,
            "tie_breaks": self.tie_breaks,
            "truncated": self.truncated,
        }


@dataclass(order=True, frozen=True)
class ScheduledEvent:
    """lower_id == -1 marks a meeting with the free boundary."""

    x: float
    seq: int
    lower_id: int = dataclass_field(compare=False)
    upper_id: int = dataclass_field(compare=False)
    boundary_revision: int = dataclass_field(compare=False, default=-1)

    @property
    def is_boundary(self) -> bool:
        return self.lower_id < 0


class EventQueue:
    """Priority queue of candidate meetings ordered by x. Stale entries are dropped on pop."""

    def __init__(self):
        self._queue: List[ScheduledEvent] = []
        self._seq = 0

    def schedule(self, x: float, lower_id: int, upper_id: int, boundary_revision: int = -1) -> None:
        self._seq += 1
        heapq.heappush(self._queue, ScheduledEvent(x, self._seq, lower_id, upper_id, boundary_revision))

    def push(self, event: ScheduledEvent) -> None:
        heapq.heappush(self._queue, event)

    def pop(self) -> Optional[ScheduledEvent]:
        if self._queue:
            return heapq.heappop(self._queue)
        return None

    def peek(self) -> Optional[ScheduledEvent]:
        if self._queue:
            return self._queue[0]
        return None

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class FrontField:
    x: float
    fronts: List[Front]
    boundary: FreeBoundary
    U_plus: GasState
    S_bar: float
    settings: TrackingSettings
    event_log: List[InteractionRecord] = dataclass_field(default_factory=list)
    history: List[Front] = dataclass_field(default_factory=list)
    glimm_trace: list = dataclass_field(default_factory=list)
    stats: RunStats = dataclass_field(default_factory=RunStats)
    queue: EventQueue = dataclass_field(default_factory=EventQueue)
    next_id: int = 0

    def index_of(self, front_id: int) -> Optional[int]:
        for k, front in enumerate(self.fronts):
            if front.id == front_id:
                return k
        return None

    def state_above_boundary(self) -> GasState:
        return self.fronts[0].below if self.fronts else self.U_plus

    def top_state(self) -> GasState:
        return self.fronts[-1].above if self.fronts else self.U_plus


Participant = Union[Front, FreeBoundary]


# --- construction ---------------------------------------------------------

def _new_front(field: FrontField, spec: FrontSpec, x: float, y: float, gen_order: int,
               is_strong: bool = False) -> Front:
    front = Front(
        id=field.next_id,
        family=spec.family,
        strength=spec.alpha,
        speed=spec.speed,
        below=spec.below,
        above=spec.above,
        x0=x,
        y0=y,
        gen_order=gen_order,
        is_strong=is_strong,
        alpha22=spec.alpha22,
    )
    field.next_id += 1
    field.history.append(front)
    return front


def _corner_state(U: GasState, p_bar: float, params: GasParams) -> GasState:
    """End state of the 3-rarefaction from U down to the boundary pressure p_bar."""
    J, B, A = rarefaction_invariants(U, 3, params)
    try:
        U_minus = state_from_invariants(3, J, B, A, p_bar, params)
        require_supersonic(U_minus, params, "corner fan")
    except (SubsonicState, InvalidState) as e:
        raise PressureOutOfRange(f"p_bar={p_bar} is below the supersonic limit of the corner fan") from e
    return U_minus


def initialize(profile: InitialProfile, settings: TrackingSettings,
               tv_limit: Optional[float] = None) -> FrontField:
    """
    Build the approximate solution at x = 0+.

    The corner is resolved as a free-boundary problem: the 3-rarefaction fan
    from the state on the boundary (pressure p_bar) up to the lowest profile
    state is split into order-0 strong fronts. Every interior jump of the
    profile is solved accurately and its fronts get order 1.

    Args:
        profile (InitialProfile): Initial data above the corner
        settings (TrackingSettings): delta, mu_delta, lambda_hat, p_bar and audit options
        tv_limit (float, optional): Upper bound on the total variation of the profile

    Returns:
        FrontField: The field at x = 0 with its event queue filled
    """
    params = settings.params
    U_plus = profile.states[-1]
    for U in profile.states:
        require_supersonic(U, params, "initialize")
    tv = profile.total_variation
    if tv_limit is not None and tv > tv_limit:
        error_msg = f"initial total variation {tv:.6g} exceeds the limit {tv_limit:.6g}"
        logger.error(error_msg)
        raise TVTooLarge(error_msg)

    U_0 = profile.states[0]
    if not settings.p_bar < U_0.p:
        error_msg = f"p_bar={settings.p_bar} must be below the pressure {U_0.p} next to the corner"
        logger.error(error_msg)
        raise PressureOutOfRange(error_msg)
    U_minus = _corner_state(U_0, settings.p_bar, params)
    fan_strength = eigenvalue(U_0, 3, params) - eigenvalue(U_minus, 3, params)
    # F1 is measured against the unperturbed fan of U_plus
    S_bar = eigenvalue(U_plus, 3, params) - eigenvalue(_corner_state(U_plus, settings.p_bar, params), 3, params)
    static = GasState(0.0, 0.0, settings.p_bar, U_minus.rho)
    boundary = FreeBoundary(static, [(0.0, 0.0, U_minus.v / U_minus.u)])
    field = FrontField(x=0.0, fronts=[], boundary=boundary, U_plus=U_plus, S_bar=S_bar,
                       settings=settings)

    fan = split_rarefaction(U_minus, WaveFamily.F3, fan_strength, settings.delta, params)
    fan[-1] = FrontSpec(fan[-1].family, fan[-1].alpha, fan[-1].speed, fan[-1].below, U_0)
    field.fronts.extend(_new_front(field, spec, 0.0, 0.0, 0, is_strong=True) for spec in fan)

    physical = 0
    for y, U_low, U_high in zip(profile.breakpoints, profile.states, profile.states[1:]):
        for spec in accurate_solver(U_low, U_high, settings.delta, params):
            field.fronts.append(_new_front(field, spec, 0.0, y, 1))
            physical += 1

    field.stats.physical_fronts_initial = physical + len(fan)
    field.stats.max_fronts = len(field.fronts)
    _schedule_all(field)
    if settings.weights is not None:
        field.glimm_trace.append(compute_functional(field, settings.weights))
    logger.info(f"Initialized field: {len(fan)} fan fronts (strength {fan_strength:.6g}, S_bar={S_bar:.6g}), "
                f"{physical} interior fronts, boundary slope {boundary.slope:.6g}")
    return field


# --- event detection ------------------------------------------------------

def meeting_x(lower: Participant, upper: Front) -> float:
    """x where `upper` comes down onto `lower`; inf if they do not approach."""
    lower_slope = lower.slope if isinstance(lower, FreeBoundary) else lower.speed
    if lower_slope <= upper.speed:
        return math.inf
    return (upper.intercept - lower.intercept) / (lower_slope - upper.speed)


def _schedule_pair(field: FrontField, k: int) -> None:
    """Schedule the pair (fronts[k-1], fronts[k]); k == 0 pairs the boundary with the lowest front."""
    if k < 0 or k >= len(field.fronts):
        return
    upper = field.fronts[k]
    if k == 0:
        x = meeting_x(field.boundary, upper)
        if math.isfinite(x):
            field.queue.schedule(max(x, field.x), -1, upper.id, field.boundary.revision)
        return
    lower = field.fronts[k - 1]
    x = meeting_x(lower, upper)
    if math.isfinite(x):
        field.queue.schedule(max(x, field.x), lower.id, upper.id)


def _schedule_all(field: FrontField) -> None:
    for k in range(len(field.fronts)):
        _schedule_pair(field, k)


def _is_valid(field: FrontField, event: ScheduledEvent) -> bool:
    k = field.index_of(event.upper_id)
    if k is None:
        return False
    if event.is_boundary:
        return k == 0 and event.boundary_revision == field.boundary.revision
    return k > 0 and field.fronts[k - 1].id == event.lower_id


def _pop_valid(field: FrontField) -> Optional[ScheduledEvent]:
    while True:
        event = field.queue.pop()
        if event is None or _is_valid(field, event):
            return event


def _participants(field: FrontField, event: ScheduledEvent) -> Tuple[Participant, Front]:
    k = field.index_of(event.upper_id)
    upper = field.fronts[k]
    lower = field.boundary if event.is_boundary else field.fronts[k - 1]
    return lower, upper


def _perturb(field: FrontField, front: Front) -> None:
    """Replace `front` by a copy born at the current x with its slope raised by tie_perturbation."""
    k = field.index_of(front.id)
    x = field.x
    front.x_end = x
    spec = FrontSpec(front.family, front.strength, front.speed + field.settings.tie_perturbation,
                     front.below, front.above, front.alpha22)
    replacement = _new_front(field, spec, x, front.y_at(x), front.gen_order, front.is_strong)
    field.fronts[k] = replacement
    _schedule_pair(field, k)
    _schedule_pair(field, k + 1)
    field.stats.tie_breaks += 1
    logger.debug(f"Tie at x={x:.12g}: front {front.id} re-issued as {replacement.id} with slope "
                 f"{replacement.speed:.15g}")


def next_interaction(field: FrontField) -> Tuple[float, Tuple[Participant, ...]]:
    """
    The first meeting after field.x, with ties resolved so that exactly two participants meet.

    Returns:
        tuple: (x_next, (lower, upper)) or (inf, ()) when no fronts approach
    """
    for _ in range(1000):
        first = _pop_valid(field)
        if first is None:
            return math.inf, ()
        second = _pop_valid(field)
        while second is not None and (second.lower_id, second.upper_id) == (first.lower_id, first.upper_id):
            second = _pop_valid(field)
        field.queue.push(first)
        if second is None:
            return first.x, _participants(field, first)
        field.queue.push(second)
        if second.x - first.x > field.settings.tie_tolerance:
            return first.x, _participants(field, first)

        # simultaneous meetings: perturb the later-created physical front of the second pair
        lower, upper = _participants(field, second)
        candidates = [f for f in (lower, upper) if isinstance(f, Front) and f.is_physical]
        first_ids = {first.lower_id, first.upper_id}
        outside = [f for f in candidates if f.id not in first_ids]
        target = max(outside or candidates or [upper], key=lambda f: f.id)
        _perturb(field, target)
    raise UnclassifiableGeometry(f"could not separate simultaneous interactions near x={field.x}")


# --- classification -------------------------------------------------------

def classify_case(lower: Participant, upper: Front) -> Tuple[int, float]:
    """
    Case index and interaction magnitude E_delta for two meeting participants.

    Args:
        lower (Front | FreeBoundary): The lower participant
        upper (Front): The upper participant, coming down onto `lower`

    Returns:
        tuple: (case 1..6, E_delta)
    """
    if isinstance(lower, FreeBoundary):
        if upper.family is WaveFamily.F1 and upper.is_weak:
            return 2, upper.magnitude
        raise UnclassifiableGeometry(f"front {upper.id} ({upper.family.value}) reached the free boundary")

    if not lower.is_physical:
        if upper.is_strong:
            return 5, upper.magnitude * lower.magnitude
        if upper.is_physical:
            return 6, upper.magnitude * lower.magnitude
        raise UnclassifiableGeometry(f"non-physical fronts {lower.id} and {upper.id} met")
    if not upper.is_physical:
        raise UnclassifiableGeometry(f"physical front {lower.id} overtook non-physical front {upper.id}")

    if lower.is_strong and upper.is_strong:
        raise UnclassifiableGeometry(f"strong fronts {lower.id} and {upper.id} met")
    if lower.is_strong or upper.is_strong:
        strong, weak = (lower, upper) if lower.is_strong else (upper, lower)
        if weak.family is WaveFamily.F3:
            return 4, min(weak.magnitude, strong.magnitude)
        if weak is upper:
            return 3, weak.magnitude * strong.magnitude
        raise UnclassifiableGeometry(f"{weak.family.value} front {weak.id} overtook strong front {strong.id} from below")
    return 1, lower.magnitude * upper.magnitude


def solver_rule(case: int, E_delta: float, mu: float) -> str:
    if case in (5, 6):
        return SIMPLIFIED
    return ACCURATE if E_delta > mu else SIMPLIFIED


def assign_generation_orders(k1: int, k2: int, i: int, j: int, outgoing: Sequence[int]) -> List[int]:
    """
    Generation orders of outgoing fronts of family indices `outgoing` produced by
    incoming fronts of families i (order k1) and j (order k2).
    """
    orders = []
    for l in outgoing:
        if l != i and l != j:
            orders.append(k1 + k2)
        elif l == i and l == j:
            orders.append(min(k1, k2))
        elif l == i:
            orders.append(k1)
        else:
            orders.append(k2)
    return orders


def mu_delta(delta: float, C1: float, C2: float, delta_star: float, cap: Optional[float] = None) -> float:
    """
    Threshold below which interactions are resolved by the simplified solver.

    k0 is the smallest integer with C1 (C2 delta*)^k0 / (1 - C2 delta*) <= delta/2;
    the result never exceeds `cap` (default delta^2).
    """
    q = C2 * delta_star
    if C1 <= 0.0 or C2 <= 0.0 or delta_star <= 0.0 or not q < 1.0:
        error_msg = f"mu_delta needs positive constants with C2*delta_star < 1, got C1={C1}, C2={C2}, delta*={delta_star}"
        logger.error(error_msg)
        raise ConstantsInvalid(error_msg)
    cap = delta * delta if cap is None else cap
    k0 = 1
    while C1 * q ** k0 / (1.0 - q) > 0.5 * delta:
        k0 += 1
        if k0 > 100_000:
            raise ConstantsInvalid(f"no k0 found for delta={delta}, C1={C1}, q={q}")
    if k0 == 1:
        return cap
    ratio = 3.0 * delta_star / delta
    total = math.fsum(ratio ** (2 * m - 1) for m in range(1, k0))
    return min(0.5 * delta / (C2 * C1 * total), cap)


# --- resolution -----------------------------------------------------------

def _outgoing_specs(field: FrontField, case: int, solver: str, lower: Participant,
                    upper: Front) -> Tuple[List[FrontSpec], Optional[float]]:
    """Outgoing front descriptors and, for an accurate reflection, the new boundary slope."""
    s = field.settings
    if case == 2:
        if solver == ACCURATE:
            solution = solve_boundary_riemann(upper.above, s.p_bar, s.params)
            fronts, _ = fronts_from_strengths(solution.U_m, WaveStrengths(alpha3=solution.beta3), s.delta, s.params)
            if fronts:
                last = fronts[-1]
                fronts[-1] = FrontSpec(last.family, last.alpha, last.speed, last.below, upper.above, last.alpha22)
            return fronts, solution.slope
        return simplified_reflection(upper.above, s.p_bar, s.lambda_hat, s.params)[0], None

    U_L, U_R = lower.below, upper.above
    if case in (5, 6):
        return simplified_passage(U_L, upper.param, U_R, s.lambda_hat, s.params), None
    if solver == ACCURATE:
        return accurate_solver(U_L, U_R, s.delta, s.params), None
    return simplified_interaction(U_L, lower.param, upper.param, U_R, s.delta, s.lambda_hat, s.params), None


def _orders_for(case: int, lower: Participant, upper: Front, specs: List[FrontSpec]) -> List[Tuple[int, bool]]:
    if case == 2:
        k = upper.gen_order
        return [(k if spec.family.is_physical else max(k, 1), False) for spec in specs]
    if case in (5, 6):
        # passing fronts keep their own order and flag
        result = []
        for spec in specs:
            if spec.family.is_physical:
                result.append((upper.gen_order, upper.is_strong))
            else:
                result.append((lower.gen_order, False))
        return result
    incoming_strong = lower.is_strong or upper.is_strong
    orders = assign_generation_orders(lower.gen_order, upper.gen_order, lower.family.index,
                                      upper.family.index, [spec.family.index for spec in specs])
    return [(k, incoming_strong and k == 0 and spec.family is WaveFamily.F3 and spec.alpha > 0.0)
            for k, spec in zip(orders, specs)]


def _resolve(field: FrontField, x: float, lower: Participant, upper: Front) -> InteractionRecord:
    s = field.settings
    case, E_delta = classify_case(lower, upper)
    solver = solver_rule(case, E_delta, s.mu)
    before = compute_functional(field, s.weights) if s.weights is not None else None
    weight_before = front_weight(field, upper, s.weights) if (s.weights is not None and case == 3) else None

    y = upper.y_at(x)
    specs, new_slope = _outgoing_specs(field, case, solver, lower, upper)

    field.x = x
    k = field.index_of(upper.id)
    incoming = [upper] if case == 2 else [lower, upper]
    start = k if case == 2 else k - 1
    for front in incoming:
        front.x_end = x
    outgoing = [_new_front(field, spec, x, y, order, strong)
                for spec, (order, strong) in zip(specs, _orders_for(case, lower, upper, specs))]
    field.fronts[start:start + len(incoming)] = outgoing
    if new_slope is not None:
        field.boundary.bend(x, new_slope)

    for index in range(start, start + len(outgoing) + 1):
        _schedule_pair(field, index)

    record = InteractionRecord(
        x=x, y=y, case=case, E_delta=E_delta, solver=solver,
        incoming=tuple(front.id for front in incoming),
        outgoing=tuple(front.id for front in outgoing),
    )
    if s.weights is not None:
        after = compute_functional(field, s.weights)
        field.glimm_trace.append(after)
        if weight_before is not None:
            partner = next((f for f in outgoing if f.family is upper.family and f.is_weak), None)
            strong = lower.magnitude
            if partner is not None:
                weight_after = front_weight(field, partner, s.weights)
                expected = weight_before / math.exp(s.weights.K_omega * strong)
                record.diagnostics["w_identity_error"] = abs(weight_after - expected) / max(expected, 1e-300)
        _audit(field, before, after, record)
    return record


def _audit(field: FrontField, before, after, record: InteractionRecord) -> None:
    s = field.settings
    result = audit_interaction(before, after, record, s.weights, s.audit_tolerance)
    record.F_before, record.F_after = before.F, after.F
    record.audit_passed = result.passed
    record.diagnostics.update({f"d_{name}": value for name, value in result.term_deltas.items()})
    if result.passed or s.audit_mode == "off":
        return
    field.stats.audit_failures += 1
    message = (f"Glimm functional did not drop at x={record.x:.12g} (case {record.case}, {record.solver}): "
               f"dF={result.delta_F:.6e} > -E/4={result.bound:.6e}")
    if s.audit_mode == "strict":
        logger.error(message)
        raise AuditFailure(message, record)
    logger.warning(message)


def advance(field: FrontField, x_stop: float) -> FrontField:
    """
    Process every interaction with x <= x_stop in increasing order.

    The field is modified in place and returned; afterwards field.x == x_stop and
    the fronts are the right limit at x_stop.
    """
    while field.stats.interactions < field.settings.max_interactions:
        x_next, participants = next_interaction(field)
        if x_next > x_stop:
            break
        _pop_valid(field)
        lower, upper = participants
        record = _resolve(field, x_next, lower, upper)
        field.event_log.append(record)
        field.stats.interactions += 1
        field.stats.per_case[record.case] += 1
        field.stats.per_solver[record.solver] += 1
        field.stats.max_fronts = max(field.stats.max_fronts, len(field.fronts))
        logger.debug(f"x={record.x:.8g}: case {record.case} ({record.solver}), E={record.E_delta:.3e}, "
                     f"{record.incoming} -> {record.outgoing}")
    else:
        field.stats.truncated = True
        logger.warning(f"interaction cap {field.settings.max_interactions} reached at x={field.x:.8g}")
        return field
    field.x = max(field.x, x_stop)
    return field


# --- inspection -----------------------------------------------------------

@dataclass(frozen=True)
class Slab:
    y_low: float
    y_high: float
    state: GasState


def slabs_at(field: FrontField, x: float) -> List[Slab]:
    """
    U^delta(x, .) as constant slabs from the front history, static gas first.
    The top slab extends to +inf.
    """
    if x < 0.0:
        raise ValueError(f"slabs_at needs x >= 0, got {x}")
    alive = sorted((f for f in field.history if f.alive_at(x)), key=lambda f: (f.y_at(x), f.speed))
    g = field.boundary.y_at(x)
    slabs = [Slab(-math.inf, g, field.boundary.static)]
    if not alive:
        slabs.append(Slab(g, math.inf, field.U_plus))
        return slabs
    slabs.append(Slab(g, alive[0].y_at(x), alive[0].below))
    for lower, upper in zip(alive, alive[1:]):
        slabs.append(Slab(lower.y_at(x), upper.y_at(x), lower.above))
    slabs.append(Slab(alive[-1].y_at(x), math.inf, alive[-1].above))
    return slabs


def _separation_excess(front: Front, settings: TrackingSettings) -> float:
    low, high = settings.lambda1_star, settings.lambda3_star
    if low is None or high is None:
        return 0.0
    if front.family is WaveFamily.F1:
        return max(0.0, front.speed - low)
    if front.family is WaveFamily.F3:
        return max(0.0, high - front.speed)
    return max(0.0, low - front.speed, front.speed - high)


def check_consistency(field: FrontField) -> Dict[str, float]:
    """
    Worst residuals of the field invariants at field.x: adjacency of side states,
    reconstruction of physical fronts, ordering in y, and p = p_bar next to the boundary.

    family_separation is the largest amount by which a physical front crosses
    lambda1_star (1-fronts stay below, contacts between) or lambda3_star
    (3-fronts stay above); 0 when the settings carry no pads.
    """
    params = field.settings.params
    adjacency = 0.0
    reconstruction = 0.0
    ordering = 0.0
    separation = 0.0
    for lower, upper in zip(field.fronts, field.fronts[1:]):
        adjacency = max(adjacency, lower.above.distance(upper.below))
        ordering = max(ordering, lower.y_at(field.x) - upper.y_at(field.x))
    for front in field.fronts:
        if front.is_physical:
            rebuilt = wave_forward(front.below, front.param, params)
            reconstruction = max(reconstruction, rebuilt.distance(front.above))
            separation = max(separation, _separation_excess(front, field.settings))
    boundary_pressure = abs(field.state_above_boundary().p - field.settings.p_bar)
    return {
        "adjacency": adjacency,
        "reconstruction": reconstruction,
        "ordering": ordering,
        "boundary_pressure": boundary_pressure,
        "top_state": field.top_state().distance(field.U_plus),
        "family_separation": separation,
    }


def front_count(field: FrontField) -> Dict[str, int]:
    counts = Counter("strong" if f.is_strong else ("np" if not f.is_physical else "weak") for f in field.fronts)
    return {"strong": counts["strong"], "weak": counts["weak"], "np": counts["np"], "total": len(field.fronts)}


def state_samples(field: FrontField) -> np.ndarray:
    """All constant states currently in the field, bottom to top, as rows (u, v, p, rho)."""
    states = [field.state_above_boundary()] + [front.above for front in field.fronts]
    return np.array([U.as_array() for U in states])
