"""
Riemann solvers for the corner flow.

- solve_riemann: the standard four-wave problem between two nearby supersonic states
- solve_boundary_riemann: reflection at the free boundary where p = p_bar
- background_solution: the strong 3-rarefaction fan issued from the corner
- accurate_solver / simplified_solver: the front builders used by the tracking engine
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect, brentq

from errors import (CornerFlowError, InvalidState, LeftSupersonicLost, NoConvergence, NoRoot,
                    OutOfRange, PressureOutOfRange, SubsonicState, Unreachable)
from gas_core import (DEFAULT_GAS, GasParams, GasState, eigenvalue, eigenvalues, eigenvectors,
                      is_supersonic, mach_x, normalization_constants, rarefaction_invariants,
                      require_supersonic, right_eigenvector, state_from_invariants)
from wave_curves import (WaveFamily, WaveParam, WaveStrengths, composite_forward, rarefaction_forward,
                         wave_front, wave_inverse)

logger = logging.getLogger(__name__)

ZERO_WAVE = 1e-12
NEWTON_TOLERANCE = 1e-10
NEWTON_MAX_ITERATIONS = 30
JACOBIAN_STEP = 1e-7
SUPERSONIC_THRESHOLD = 1.0 + 1e-6
NP_SPEED_MARGIN = 0.1


@dataclass(frozen=True)
class FrontSpec:
    """A front produced by a solver, before the tracking engine places it."""

    family: WaveFamily
    alpha: float
    speed: float
    below: GasState
    above: GasState
    alpha22: float = 0.0

    @property
    def param(self) -> WaveParam:
        return WaveParam(self.family, self.alpha, self.alpha22)

    @property
    def strength(self) -> float:
        return self.param.strength


@dataclass(frozen=True)
class RiemannSolution:
    strengths: WaveStrengths
    mid_states: Tuple[GasState, ...]
    fronts: Tuple[FrontSpec, ...]
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class BoundarySolution:
    beta3: float
    U_m: GasState
    slope: float


@dataclass(frozen=True)
class SolverSpeeds:
    """lambda_hat is the slope of every non-physical front."""

    lambda_hat: float
    lambda1_star: float
    lambda3_star: float


# --- standard Riemann problem ---------------------------------------------

def solve_riemann(U_L: GasState, U_R: GasState, params: GasParams = DEFAULT_GAS,
                  tol: float = NEWTON_TOLERANCE,
                  max_iterations: int = NEWTON_MAX_ITERATIONS) -> RiemannSolution:
    """
    Find (alpha_1, alpha_21, alpha_22, alpha_3) with Phi(alpha; U_L) = U_R.

    Newton iteration with a forward-difference Jacobian, started from the
    eigenvector decomposition of U_R - U_L.

    Args:
        U_L (GasState): State below the interaction point
        U_R (GasState): State above the interaction point
        params (GasParams): Gas constants
        tol (float): Residual tolerance per component (scaled by max(1, |U_R|))
        max_iterations (int): Newton iteration cap

    Returns:
        RiemannSolution: Strengths, middle states and unsplit fronts
    """
    require_supersonic(U_L, params, "solve_riemann (left)")
    require_supersonic(U_R, params, "solve_riemann (right)")
    target = U_R.as_array()
    scale = np.maximum(np.abs(target), 1.0)

    def residual(alphas: np.ndarray) -> np.ndarray:
        state, _ = composite_forward(U_L, WaveStrengths.from_array(alphas), params)
        return (state.as_array() - target) / scale

    if np.all(np.abs(U_L.as_array() - target) / scale <= tol):
        return _riemann_solution(U_L, WaveStrengths(), params, 0.0, 0)

    eig = eigenvectors(U_L, params)
    basis = np.column_stack([eig.r1, eig.r21, eig.r22, eig.r3])
    alphas = np.linalg.solve(basis, target - U_L.as_array())
    try:
        F = residual(alphas)
    except CornerFlowError:
        alphas = np.zeros(4)
        F = residual(alphas)

    iterations = 0
    while np.max(np.abs(F)) > tol:
        if iterations >= max_iterations:
            error_msg = f"solve_riemann: no convergence after {iterations} iterations (residual {np.max(np.abs(F)):.3e})"
            logger.error(error_msg)
            raise NoConvergence(error_msg, residual=float(np.max(np.abs(F))))
        iterations += 1
        jacobian = np.empty((4, 4))
        for k in range(4):
            shifted = alphas.copy()
            shifted[k] += JACOBIAN_STEP
            jacobian[:, k] = (residual(shifted) - F) / JACOBIAN_STEP
        step = np.linalg.solve(jacobian, -F)

        damping = 1.0
        while True:
            try:
                F_new = residual(alphas + damping * step)
                if np.linalg.norm(F_new) < np.linalg.norm(F):
                    break
            except CornerFlowError as e:
                logger.debug(f"Newton trial step rejected: {e}")
            damping *= 0.5
            if damping < 1e-4:
                error_msg = f"solve_riemann: line search stalled (residual {np.max(np.abs(F)):.3e})"
                logger.error(error_msg)
                raise NoConvergence(error_msg, residual=float(np.max(np.abs(F))))
        alphas = alphas + damping * step
        F = F_new

    return _riemann_solution(U_L, WaveStrengths.from_array(alphas), params,
                             float(np.max(np.abs(F))), iterations)


def _riemann_solution(U_L: GasState, strengths: WaveStrengths, params: GasParams,
                      residual: float, iterations: int) -> RiemannSolution:
    fronts, _ = fronts_from_strengths(U_L, strengths, None, params)
    _, mids = composite_forward(U_L, strengths, params)
    return RiemannSolution(strengths, tuple(mids), tuple(fronts), residual, iterations)


def fronts_from_strengths(U_L: GasState, strengths: WaveStrengths, delta: Optional[float],
                          params: GasParams = DEFAULT_GAS) -> Tuple[List[FrontSpec], GasState]:
    """
    Fronts of the waves in family order starting from U_L; rarefactions are split
    into pieces of parameter at most delta unless delta is None.

    Returns:
        tuple: (fronts bottom to top, state above the last wave)
    """
    fronts: List[FrontSpec] = []
    state = U_L
    for w in strengths.waves():
        if w.strength <= ZERO_WAVE:
            continue
        if w.is_rarefaction and delta is not None:
            pieces = split_rarefaction(state, w.family, w.alpha, delta, params)
            fronts.extend(pieces)
            state = pieces[-1].above
        else:
            above, speed = wave_front(state, w, params)
            fronts.append(FrontSpec(w.family, w.alpha, speed, state, above, w.alpha22))
            state = above
    return fronts, state


def split_rarefaction(U_l: GasState, family: WaveFamily, alpha: float, delta: float,
                      params: GasParams = DEFAULT_GAS) -> List[FrontSpec]:
    """Split a rarefaction into ceil(alpha/delta) equal fronts moving at the upper-state slope."""
    if alpha <= 0.0:
        raise ValueError(f"split_rarefaction needs alpha > 0, got {alpha}")
    pieces = max(1, math.ceil(alpha / delta - 1e-12))
    piece = alpha / pieces
    fronts = []
    state = U_l
    for _ in range(pieces):
        above = rarefaction_forward(state, family, piece, params)
        fronts.append(FrontSpec(family, piece, eigenvalue(above, family.index, params), state, above))
        state = above
    return fronts


def _snap_top(fronts: List[FrontSpec], U_R: GasState) -> List[FrontSpec]:
    if fronts:
        fronts[-1] = replace(fronts[-1], above=U_R)
    return fronts


def accurate_solver(U_L: GasState, U_R: GasState, delta: float,
                    params: GasParams = DEFAULT_GAS) -> List[FrontSpec]:
    solution = solve_riemann(U_L, U_R, params)
    fronts, _ = fronts_from_strengths(U_L, solution.strengths, delta, params)
    return _snap_top(fronts, U_R)


# --- simplified solver ----------------------------------------------------

def _with_non_physical(fronts: List[FrontSpec], auxiliary: GasState, U_R: GasState,
                       lambda_hat: float) -> List[FrontSpec]:
    eps = auxiliary.distance(U_R)
    if eps > ZERO_WAVE:
        fronts.append(FrontSpec(WaveFamily.NON_PHYSICAL, eps, lambda_hat, auxiliary, U_R))
        return fronts
    return _snap_top(fronts, U_R)


def simplified_interaction(U_L: GasState, lower: WaveParam, upper: WaveParam, U_R: GasState,
                           delta: float, lambda_hat: float,
                           params: GasParams = DEFAULT_GAS) -> List[FrontSpec]:
    """
    Case (a): replace the outgoing waves by the incoming parameters applied to U_L
    in family order, and carry the mismatch on one non-physical front.
    """
    combined = WaveStrengths().add(lower).add(upper)
    fronts, auxiliary = fronts_from_strengths(U_L, combined, delta, params)
    return _with_non_physical(fronts, auxiliary, U_R, lambda_hat)


def simplified_passage(U_L: GasState, physical: WaveParam, U_R: GasState, lambda_hat: float,
                       params: GasParams = DEFAULT_GAS) -> List[FrontSpec]:
    """Case (b): a non-physical front crosses a physical one, which keeps its parameter."""
    above, speed = wave_front(U_L, physical, params)
    fronts = [FrontSpec(physical.family, physical.alpha, speed, U_L, above, physical.alpha22)]
    return _with_non_physical(fronts, above, U_R, lambda_hat)


def simplified_reflection(U_r: GasState, p_bar: float, lambda_hat: float,
                          params: GasParams = DEFAULT_GAS) -> Tuple[List[FrontSpec], BoundarySolution]:
    """Case (c): the boundary keeps its slope and the reflected wave becomes non-physical."""
    solution = solve_boundary_riemann(U_r, p_bar, params)
    eps = solution.U_m.distance(U_r)
    if eps <= ZERO_WAVE:
        return [], solution
    return [FrontSpec(WaveFamily.NON_PHYSICAL, eps, lambda_hat, solution.U_m, U_r)], solution


def simplified_solver(case: str, params: GasParams = DEFAULT_GAS, **inputs) -> List[FrontSpec]:
    """
    Dispatch to the simplified solver of case 'a', 'b' or 'c'.

    Case 'a' takes U_L, lower, upper, U_R, delta, lambda_hat; case 'b' takes
    U_L, physical, U_R, lambda_hat; case 'c' takes U_r, p_bar, lambda_hat.
    """
    if case == "a":
        return simplified_interaction(params=params, **inputs)
    if case == "b":
        return simplified_passage(params=params, **inputs)
    if case == "c":
        return simplified_reflection(params=params, **inputs)[0]
    raise ValueError(f"unknown simplified solver case {case!r}")


# --- free boundary ----------------------------------------------------------

def solve_boundary_riemann(U_r: GasState, p_bar: float,
                           params: GasParams = DEFAULT_GAS) -> BoundarySolution:
    """
    Solve Psi^(3)(0, 0, beta_3; U_r) = p_bar for the wave reflected off the free boundary.

    Args:
        U_r (GasState): State above the reflected 3-wave
        p_bar (float): Pressure of the static gas

    Returns:
        BoundarySolution: beta_3, the state U_m next to the boundary and the boundary slope v_m/u_m
    """
    require_supersonic(U_r, params, "solve_boundary_riemann")
    if abs(U_r.p - p_bar) <= 1e-14 * p_bar:
        return BoundarySolution(0.0, U_r, U_r.v / U_r.u)

    def gap(beta: float) -> float:
        return wave_inverse(U_r, WaveParam(WaveFamily.F3, beta), params).p - p_bar

    # Psi^(3) decreases in beta_3
    step = max(2.0 * abs(p_bar - U_r.p) / right_eigenvector(U_r, 3, params)[2], 1e-3)
    sign = -1.0 if p_bar > U_r.p else 1.0
    edge = sign * step
    for _ in range(60):
        try:
            value = gap(edge)
        except (NoRoot, SubsonicState, LeftSupersonicLost) as e:
            error_msg = f"p_bar={p_bar} is not reachable from {U_r} along the reflected 3-curve: {e}"
            logger.error(error_msg)
            raise Unreachable(error_msg) from e
        if sign * value <= 0.0:
            break
        edge *= 2.0
    else:
        raise Unreachable(f"could not bracket the boundary Riemann problem for {U_r}, p_bar={p_bar}")

    lo, hi = sorted((0.0, edge))
    beta3 = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-14, maxiter=200)
    U_m = wave_inverse(U_r, WaveParam(WaveFamily.F3, beta3), params)
    return BoundarySolution(beta3, U_m, U_m.v / U_m.u)


def reflection_coefficient(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """Limit of K_b1 = -beta_3/alpha_1 for vanishing incoming 1-waves at U."""
    k1, k3 = normalization_constants(U, params)
    lam1, lam2, lam3 = eigenvalues(U, params)
    return -k1 * (lam1 - lam2) / (k3 * (lam3 - lam2))


def measured_reflection_coefficient(U_r: GasState, alpha1: float,
                                    params: GasParams = DEFAULT_GAS) -> float:
    """K_b1 for a finite 1-wave alpha1 whose lower state sits on the boundary."""
    U_l = wave_inverse(U_r, WaveParam(WaveFamily.F1, alpha1), params)
    solution = solve_boundary_riemann(U_r, U_l.p, params)
    return -solution.beta3 / alpha1


# --- background solution --------------------------------------------------

@dataclass(frozen=True)
class BackgroundSolution:
    """
    Self-similar solution of the unperturbed corner problem: static gas below
    y = k_b x, U_minus up to the fan, the 3-rarefaction fan between slopes k2 and
    k1, and U_plus above.
    """

    U_plus: GasState
    U_minus: GasState
    p_bar: float
    p_star: float
    k_b: float
    k1: float
    k2: float
    S_bar: float
    theta_minus: float
    invariants: Tuple[float, float, float]
    tv_constant: float
    params: GasParams = DEFAULT_GAS

    def state_at_pressure(self, p: float) -> GasState:
        J, B, A = self.invariants
        return state_from_invariants(3, J, B, A, p, self.params)

    def fan(self, xi: float) -> GasState:
        """U_ba(xi): the state on the ray y = xi x."""
        if xi <= self.k2:
            return self.U_minus
        if xi >= self.k1:
            return self.U_plus
        p = brentq(lambda pressure: eigenvalue(self.state_at_pressure(pressure), 3, self.params) - xi,
                   self.p_bar, self.U_plus.p, xtol=1e-15, rtol=1e-14, maxiter=200)
        return self.state_at_pressure(p)

    def is_gas(self, x: float, y: float) -> bool:
        return y >= self.k_b * x

    def state_at_point(self, x: float, y: float) -> GasState:
        """Flow state at (x, y) above the boundary; the static gas below it."""
        if not self.is_gas(x, y):
            return GasState(0.0, 0.0, self.p_bar, self.U_minus.rho)
        if x <= 0.0:
            return self.U_plus
        return self.fan(y / x)


def background_solution(U_plus: GasState, p_bar: float,
                        params: GasParams = DEFAULT_GAS) -> BackgroundSolution:
    """
    Construct the background corner solution for upstream state U_plus and static pressure p_bar.

    Args:
        U_plus (GasState): Supersonic upstream state
        p_bar (float): Static-gas pressure, p_* < p_bar < p_plus

    Returns:
        BackgroundSolution: Fan geometry, downstream state and the measured TV constant
    """
    require_supersonic(U_plus, params, "background_solution")
    J, B, A = rarefaction_invariants(U_plus, 3, params)

    def chi_gap(p: float) -> float:
        try:
            return mach_x(state_from_invariants(3, J, B, A, p, params), params) - SUPERSONIC_THRESHOLD
        except (SubsonicState, OutOfRange, InvalidState):
            return -1.0

    p_plus = U_plus.p
    if chi_gap(p_plus) <= 0.0:
        raise PressureOutOfRange(f"U_plus={U_plus} is too close to sonic for a background fan")
    p_low = p_plus
    p_star = 0.0
    for _ in range(80):
        p_low *= 0.5
        if chi_gap(p_low) <= 0.0:
            p_star = bisect(chi_gap, p_low, p_plus, xtol=1e-14 * p_plus, maxiter=500)
            break

    if not p_star < p_bar < p_plus:
        label = "p_bar < p_plus" if p_bar >= p_plus else "p_bar > p_star"
        error_msg = f"static pressure p_bar={p_bar} violates {label} (p_star={p_star}, p_plus={p_plus})"
        logger.error(error_msg)
        raise PressureOutOfRange(error_msg)

    U_minus = state_from_invariants(3, J, B, A, p_bar, params)
    k1 = eigenvalue(U_plus, 3, params)
    k2 = eigenvalue(U_minus, 3, params)

    pressures = np.linspace(p_bar, p_plus, 201)
    samples = np.array([state_from_invariants(3, J, B, A, p, params).as_array() for p in pressures])
    tv = float(np.sum(np.linalg.norm(np.diff(samples, axis=0), axis=1)))
    tv_constant = tv / (p_plus - p_bar)

    bg = BackgroundSolution(
        U_plus=U_plus,
        U_minus=U_minus,
        p_bar=p_bar,
        p_star=p_star,
        k_b=U_minus.v / U_minus.u,
        k1=k1,
        k2=k2,
        S_bar=k1 - k2,
        theta_minus=U_minus.theta,
        invariants=(J, B, A),
        tv_constant=tv_constant,
        params=params,
    )
    logger.info(f"Background fan: p_star={p_star:.6g}, theta_minus={bg.theta_minus:.6g}, "
                f"k_b={bg.k_b:.6g}, fan slopes ({k2:.6g}, {k1:.6g}), S_bar={bg.S_bar:.6g}")
    return bg


def sample_solver_speeds(bg: BackgroundSolution, delta0: float, pressure_samples: int = 25) -> SolverSpeeds:
    """
    lambda_hat and the fan pads lambda_1*, lambda_3* from a grid over D(U_plus, delta0).
    """
    params = bg.params
    J, B, A = bg.invariants
    offsets = (-0.5 * delta0, 0.0, 0.5 * delta0)
    lam1_max = lam2_max = lam3_max = -math.inf
    lam2_min = lam3_min = math.inf
    p_low = max(bg.p_bar - 0.5 * delta0, 0.5 * bg.p_bar)
    for p in np.linspace(p_low, bg.U_plus.p + 0.5 * delta0, pressure_samples):
        for dJ, dB, dA in itertools.product(offsets, repeat=3):
            try:
                U = state_from_invariants(3, J + dJ, B + dB, A + dA, float(p), params)
            except (SubsonicState, OutOfRange, InvalidState):
                continue
            if not is_supersonic(U, params):
                continue
            lam1, lam2, lam3 = eigenvalues(U, params)
            lam1_max = max(lam1_max, lam1)
            lam2_min, lam2_max = min(lam2_min, lam2), max(lam2_max, lam2)
            lam3_min, lam3_max = min(lam3_min, lam3), max(lam3_max, lam3)

    if lam1_max >= lam2_min or lam2_max >= lam3_min:
        logger.warning(f"characteristic families overlap on D(U_plus, {delta0}): "
                       f"max l1={lam1_max:.4g}, l2 in [{lam2_min:.4g}, {lam2_max:.4g}], min l3={lam3_min:.4g}")
    return SolverSpeeds(
        lambda_hat=lam3_max + NP_SPEED_MARGIN,
        lambda1_star=0.5 * (lam1_max + lam2_min),
        lambda3_star=0.5 * (lam2_max + lam3_min),
    )
