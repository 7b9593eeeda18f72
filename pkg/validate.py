"""
Post-hoc checks on a tracked solution: entropy residuals per front, the weak form
against smooth test functions, invariant-region margins, delta-convergence and
the fitted stability constants.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from gas_core import (DEFAULT_GAS, GasParams, GasState, fluxes, is_supersonic, physical_entropy,
                      riemann_invariant_deviation)
from glimm import tv_estimates
from riemann import BackgroundSolution
from tracking import Front, FrontField, slabs_at, state_samples

logger = logging.getLogger(__name__)

ENTROPY_TOLERANCE = 1e-10
RAREFACTION_ENTROPY_CONSTANT = 10.0
QUADRATURE_POINTS = 32


# --- entropy ----------------------------------------------------------------

def _entropy_pair(U: GasState, params: GasParams) -> Tuple[float, float]:
    """(eta, q) = (-rho u S, -rho v S); the static gas contributes zero flux."""
    if U.u == 0.0 and U.v == 0.0:
        return 0.0, 0.0
    S = physical_entropy(U, params)
    return -U.rho * U.u * S, -U.rho * U.v * S


def front_entropy_residual(below: GasState, above: GasState, speed: float,
                           params: GasParams = DEFAULT_GAS) -> float:
    """h = s [eta] - [q] with [.] = above - below; admissible fronts have h >= 0."""
    eta_below, q_below = _entropy_pair(below, params)
    eta_above, q_above = _entropy_pair(above, params)
    return speed * (eta_above - eta_below) - (q_above - q_below)


@dataclass(frozen=True)
class FrontEntropy:
    front_id: int
    kind: str
    h: float
    ok: bool


@dataclass
class EntropyReport:
    entries: List[FrontEntropy] = dataclass_field(default_factory=list)
    delta: float = 0.0

    def by_kind(self, kind: str) -> List[FrontEntropy]:
        return [entry for entry in self.entries if entry.kind == kind]

    @property
    def all_ok(self) -> bool:
        return all(entry.ok for entry in self.entries)

    @property
    def max_rarefaction(self) -> float:
        return max((entry.h for entry in self.by_kind("rarefaction")), default=0.0)

    @property
    def min_shock(self) -> float:
        return min((entry.h for entry in self.by_kind("shock")), default=0.0)

    @property
    def max_contact(self) -> float:
        return max((abs(entry.h) for entry in self.by_kind("contact")), default=0.0)

    @property
    def np_total(self) -> float:
        return float(sum(abs(entry.h) for entry in self.by_kind("non_physical")))

    def summary(self) -> Dict[str, float]:
        return {
            "fronts": len(self.entries),
            "failures": sum(not entry.ok for entry in self.entries),
            "min_shock_h": self.min_shock,
            "max_contact_h": self.max_contact,
            "max_rarefaction_h": self.max_rarefaction,
            "np_total_h": self.np_total,
        }


def _kind(front: Front) -> str:
    if not front.is_physical:
        return "non_physical"
    if front.family.is_contact:
        return "contact"
    return "shock" if front.is_shock else "rarefaction"


def entropy_residuals(field: FrontField, tolerance: float = ENTROPY_TOLERANCE,
                      rarefaction_constant: float = RAREFACTION_ENTROPY_CONSTANT) -> EntropyReport:
    """Classify every front (and the free boundary, id -1) by its entropy residual."""
    params = field.settings.params
    delta = field.settings.delta
    report = EntropyReport(delta=delta)
    for front in field.fronts:
        h = front_entropy_residual(front.below, front.above, front.speed, params)
        kind = _kind(front)
        if kind == "shock":
            ok = h >= -tolerance
        elif kind == "contact":
            ok = abs(h) <= tolerance
        elif kind == "rarefaction":
            ok = h <= rarefaction_constant * delta * delta + tolerance
        else:
            ok = True
        report.entries.append(FrontEntropy(front.id, kind, h, ok))

    adjacent = field.state_above_boundary()
    h = front_entropy_residual(field.boundary.static, adjacent, field.boundary.slope, params)
    # simplified reflections leave the slope off v/u by at most mu_delta
    report.entries.append(FrontEntropy(-1, "boundary", h, abs(h) <= rarefaction_constant * delta * delta + tolerance))
    failures = [entry for entry in report.entries if not entry.ok]
    if failures:
        logger.warning(f"{len(failures)} fronts fail the entropy classification at x={field.x:.6g}")
    return report


# --- weak form --------------------------------------------------------------

def bump(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - t^2)) on |t| < 1, zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class BumpFunction:
    cx: float
    cy: float
    radius: float

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return bump((x - self.cx) / self.radius) * bump((y - self.cy) / self.radius)


@dataclass(frozen=True)
class WeakResidual:
    max_residual: float
    mean_residual: float
    per_scale: Dict[float, float]
    functions: int


def _segments(field: FrontField, X: float) -> List[Tuple[float, float, float, float, GasState, GasState]]:
    """(x_start, x_end, y_start, slope, below, above) of every front and boundary piece on [0, X]."""
    pieces = []
    for front in field.history:
        xa, xb = max(front.x0, 0.0), min(front.x_end, X)
        if xb > xa:
            pieces.append((xa, xb, front.y_at(xa), front.speed, front.below, front.above))

    # the adjacent state changes at every reflection, also when the slope is kept
    cuts = {0.0, X}
    cuts.update(x for x, _, _ in field.boundary.segments if 0.0 < x < X)
    cuts.update(record.x for record in field.event_log if record.case == 2 and 0.0 < record.x < X)
    grid = sorted(cuts)
    for xa, xb in zip(grid, grid[1:]):
        mid = 0.5 * (xa + xb)
        adjacent = slabs_at(field, mid)[1].state
        pieces.append((xa, xb, field.boundary.y_at(xa), field.boundary.slope_at(mid),
                       field.boundary.static, adjacent))
    return pieces


def bump_grid(field: FrontField, X: float, centers: int = 5,
              scales: Sequence[float] = (0.1, 0.2)) -> List[BumpFunction]:
    """Bumps on a centers x centers grid covering the flow between the boundary and the top front at X/2."""
    functions = []
    slabs = slabs_at(field, 0.5 * X)
    y_low = slabs[0].y_high
    y_high = slabs[-1].y_low if len(slabs) > 2 else y_low + X
    for scale in scales:
        radius = scale * X
        xs = np.linspace(radius, X - radius, centers)
        ys = np.linspace(y_low, y_high + radius, centers)
        functions.extend(BumpFunction(float(cx), float(cy), radius) for cx in xs for cy in ys)
    return functions


def weak_residual(field: FrontField, X: float, functions: Optional[List[BumpFunction]] = None,
                  points: int = QUADRATURE_POINTS) -> WeakResidual:
    """
    Weak-form residual of the tracked solution on [0, X] against smooth bumps.

    Inside each constant polygon the domain integral is a boundary flux, so the
    residual is the sum over front and boundary segments of the integral of
    (s[W] - [H]) phi along the segment in the dx parametrization.
    """
    if X <= 0.0:
        raise ValueError(f"weak_residual needs X > 0, got {X}")
    params = field.settings.params
    functions = functions or bump_grid(field, X)
    nodes, weights = leggauss(points)
    pieces = []
    for xa, xb, ya, slope, below, above in _segments(field, X):
        W_b, H_b = fluxes(below, params)
        W_a, H_a = fluxes(above, params)
        pieces.append((xa, xb, ya, slope, slope * (W_a - W_b) - (H_a - H_b)))

    residuals = []
    per_scale: Dict[float, List[float]] = {}
    for phi in functions:
        total = np.zeros(4)
        for xa, xb, ya, slope, jump in pieces:
            lo, hi = max(xa, phi.cx - phi.radius), min(xb, phi.cx + phi.radius)
            if hi <= lo:
                continue
            xs = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            ys = ya + slope * (xs - xa)
            total += jump * (0.5 * (hi - lo) * np.dot(weights, phi(xs, ys)))
        value = float(np.linalg.norm(total))
        residuals.append(value)
        per_scale.setdefault(phi.radius, []).append(value)

    return WeakResidual(
        max_residual=max(residuals, default=0.0),
        mean_residual=float(np.mean(residuals)) if residuals else 0.0,
        per_scale={radius: max(values) for radius, values in per_scale.items()},
        functions=len(functions),
    )


# --- invariant region -------------------------------------------------------

@dataclass(frozen=True)
class InvariantMargins:
    d_I: float
    d_B: float
    d_A: float
    p_below: float
    p_above: float
    subsonic: int
    inside: bool

    @property
    def worst(self) -> float:
        return max(self.d_I, self.d_B, self.d_A, self.p_below, self.p_above)


def check_invariant_region(field: FrontField, U_plus: GasState, delta0: float, p_bar: float) -> InvariantMargins:
    """Largest deviation of any constant state from D(U_plus, delta0) in each defining inequality."""
    params = field.settings.params
    d_I = d_B = d_A = p_below = p_above = 0.0
    subsonic = 0
    for row in state_samples(field):
        U = GasState.from_array(row)
        if not is_supersonic(U, params):
            subsonic += 1
            continue
        dev_I, dev_B, dev_A = riemann_invariant_deviation(U, U_plus, params)
        d_I, d_B, d_A = max(d_I, abs(dev_I)), max(d_B, abs(dev_B)), max(d_A, abs(dev_A))
        p_below = max(p_below, p_bar - U.p)
        p_above = max(p_above, U.p - U_plus.p)
    inside = (subsonic == 0 and max(d_I, d_B, d_A) < delta0
              and p_below < delta0 and p_above < delta0)
    return InvariantMargins(d_I, d_B, d_A, max(p_below, 0.0), max(p_above, 0.0), subsonic, inside)


# --- convergence ------------------------------------------------------------

def _slab_value(slabs, y: float) -> np.ndarray:
    for slab in slabs:
        if slab.y_low <= y < slab.y_high:
            return slab.state.as_array()
    return slabs[-1].state.as_array()


def l1_distance(field_a: FrontField, field_b: FrontField, X: float,
                window: Optional[Tuple[float, float]] = None) -> float:
    """Integral over y of |U_a(X, y) - U_b(X, y)| on a window covering both solutions."""
    slabs_a, slabs_b = slabs_at(field_a, X), slabs_at(field_b, X)
    if window is None:
        y_low = min(slabs_a[0].y_high, slabs_b[0].y_high)
        y_high = max(slabs_a[-1].y_low, slabs_b[-1].y_low) + 1.0
    else:
        y_low, y_high = window
    edges = {y_low, y_high}
    for slab in slabs_a + slabs_b:
        for y in (slab.y_low, slab.y_high):
            if y_low < y < y_high:
                edges.add(y)
    grid = sorted(edges)
    total = 0.0
    for lo, hi in zip(grid, grid[1:]):
        mid = 0.5 * (lo + hi)
        total += float(np.linalg.norm(_slab_value(slabs_a, mid) - _slab_value(slabs_b, mid))) * (hi - lo)
    return total


def boundary_distance(field_a: FrontField, field_b: FrontField, X: float, samples: int = 101) -> Tuple[float, float]:
    """Sup distances of g and g' on [0, X]."""
    xs = np.linspace(0.0, X, samples)
    g = max(abs(field_a.boundary.y_at(x) - field_b.boundary.y_at(x)) for x in xs)
    slope = max(abs(field_a.boundary.slope_at(x) - field_b.boundary.slope_at(x)) for x in xs)
    return g, slope


@dataclass
class ConvergenceRow:
    delta_coarse: float
    delta_fine: float
    X: float
    l1: float
    boundary_sup: float
    boundary_slope_sup: float


def convergence_study(run_for_delta: Callable[[float], FrontField], deltas: Sequence[float],
                      slices: Sequence[float]) -> List[ConvergenceRow]:
    """
    Run one solution per delta and compare consecutive deltas (sorted from coarse
    to fine) at each slice x = X.
    """
    ordered = sorted(deltas, reverse=True)
    fields = {delta: run_for_delta(delta) for delta in ordered}
    rows = []
    for coarse, fine in zip(ordered, ordered[1:]):
        for X in slices:
            g_sup, slope_sup = boundary_distance(fields[coarse], fields[fine], X)
            rows.append(ConvergenceRow(coarse, fine, X, l1_distance(fields[coarse], fields[fine], X),
                                       g_sup, slope_sup))
            logger.info(f"delta {coarse:g} vs {fine:g} at X={X:g}: L1={rows[-1].l1:.4e}, "
                        f"|g|={g_sup:.3e}, |g'|={slope_sup:.3e}")
    return rows


# --- stability constants ----------------------------------------------------

@dataclass(frozen=True)
class StabilitySample:
    epsilon: float
    boundary_slope_deviation: float
    tv_deviation: float
    region_deviation: float


@dataclass(frozen=True)
class StabilityFit:
    M0: float
    M1: float
    M0_spread: float
    M1_spread: float

    @property
    def stable(self) -> bool:
        """Fitted ratios agree within a factor 2 across the sampled epsilons."""
        return self.M0_spread <= 2.0 and self.M1_spread <= 2.0


def measure_stability(field: FrontField, bg: BackgroundSolution, epsilon: float) -> StabilitySample:
    slope_dev = max(abs(slope - bg.k_b) for _, _, slope in field.boundary.segments)
    margins = check_invariant_region(field, bg.U_plus, math.inf, bg.p_bar)
    return StabilitySample(
        epsilon=epsilon,
        boundary_slope_deviation=slope_dev,
        tv_deviation=tv_estimates(field, bg).deviation,
        region_deviation=max(margins.d_I, margins.d_B, margins.d_A),
    )


def _spread(values: List[float]) -> float:
    positive = [v for v in values if v > 0.0]
    if len(positive) < 2:
        return 1.0
    return max(positive) / min(positive)


def fit_stability_constants(samples: Sequence[StabilitySample]) -> StabilityFit:
    """M0 bounds |g' - k_b|/eps, M1 bounds the TV and invariant-region deviations over eps."""
    if not samples:
        raise ValueError("fit_stability_constants needs at least one sample")
    m0 = [s.boundary_slope_deviation / s.epsilon for s in samples]
    m1 = [max(s.tv_deviation, s.region_deviation) / s.epsilon for s in samples]
    fit = StabilityFit(M0=max(m0), M1=max(m1), M0_spread=_spread(m0), M1_spread=_spread(m1))
    logger.info(f"Stability constants: M0={fit.M0:.4g} (spread {fit.M0_spread:.3g}), "
                f"M1={fit.M1:.4g} (spread {fit.M1_spread:.3g})")
    return fit
