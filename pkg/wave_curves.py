"""
Elementary wave curves of the steady Euler system.

Genuinely nonlinear families (1 and 3) use the characteristic slope as the
curve parameter: along a rarefaction lambda_j grows at unit rate, and across a
shock the parameter is the (negative) jump of lambda_j. The 2-family combines a
vortex sheet (velocity scaling) and an entropy wave (density scaling).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, root_scalar

from errors import (EntropyViolation, LeftSupersonicLost, NoRoot, StepFailure,
                    SubsonicState, Unreachable)
from gas_core import (DEFAULT_GAS, GasParams, GasState, _genuinely_nonlinear_vector,
                      eigenvalue, rarefaction_invariants, require_supersonic,
                      right_eigenvector, sonic_speed, state_from_invariants)

logger = logging.getLogger(__name__)

RAREFACTION_RTOL = 1e-10
RAREFACTION_ATOL = 1e-12
SUPERSONIC_MARGIN = 1e-9
SHOCK_TOLERANCE = 1e-12
SHOCK_MAX_ITERATIONS = 50
SHOCK_EXTENSION = 0.05  # delta'_* in lambda units
VORTEX_TAG_THRESHOLD = 1e-12


class WaveFamily(Enum):
    F1 = "F1"
    F2_VORTEX = "F2_vortex"
    F2_ENTROPY = "F2_entropy"
    F3 = "F3"
    NON_PHYSICAL = "NP"

    @property
    def index(self) -> int:
        return _FAMILY_INDEX[self]

    @property
    def is_contact(self) -> bool:
        return self in (WaveFamily.F2_VORTEX, WaveFamily.F2_ENTROPY)

    @property
    def is_genuinely_nonlinear(self) -> bool:
        return self in (WaveFamily.F1, WaveFamily.F3)

    @property
    def is_physical(self) -> bool:
        return self is not WaveFamily.NON_PHYSICAL


_FAMILY_INDEX = {
    WaveFamily.F1: 1,
    WaveFamily.F2_VORTEX: 2,
    WaveFamily.F2_ENTROPY: 2,
    WaveFamily.F3: 3,
    WaveFamily.NON_PHYSICAL: 4,
}


@dataclass(frozen=True)
class WaveParam:
    """
    Curve parameter of one elementary wave.

    For contact families `alpha` is alpha_21 (vortex) and `alpha22` the
    entropy-wave parameter; for NP fronts `alpha` is the magnitude eps.
    """

    family: WaveFamily
    alpha: float = 0.0
    alpha22: float = 0.0

    @classmethod
    def contact(cls, alpha21: float, alpha22: float) -> "WaveParam":
        family = WaveFamily.F2_VORTEX if abs(alpha21) > VORTEX_TAG_THRESHOLD else WaveFamily.F2_ENTROPY
        return cls(family, alpha21, alpha22)

    @property
    def strength(self) -> float:
        if self.family.is_contact:
            return abs(self.alpha) + abs(self.alpha22)
        return abs(self.alpha)

    @property
    def is_shock(self) -> bool:
        return self.family.is_genuinely_nonlinear and self.alpha < 0.0

    @property
    def is_rarefaction(self) -> bool:
        return self.family.is_genuinely_nonlinear and self.alpha > 0.0


@dataclass(frozen=True)
class WaveStrengths:
    """Parameters (alpha_1, alpha_21, alpha_22, alpha_3) of a Riemann solution."""

    alpha1: float = 0.0
    alpha21: float = 0.0
    alpha22: float = 0.0
    alpha3: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha21, self.alpha22, self.alpha3])

    @classmethod
    def from_array(cls, values) -> "WaveStrengths":
        a1, a21, a22, a3 = (float(value) for value in values)
        return cls(a1, a21, a22, a3)

    @property
    def total(self) -> float:
        return abs(self.alpha1) + abs(self.alpha21) + abs(self.alpha22) + abs(self.alpha3)

    def waves(self) -> List[WaveParam]:
        """The three elementary waves in family order."""
        return [
            WaveParam(WaveFamily.F1, self.alpha1),
            WaveParam.contact(self.alpha21, self.alpha22),
            WaveParam(WaveFamily.F3, self.alpha3),
        ]

    def add(self, w: WaveParam) -> "WaveStrengths":
        """Merge one wave into the slot of its family (parameters add)."""
        if w.family is WaveFamily.F1:
            return WaveStrengths(self.alpha1 + w.alpha, self.alpha21, self.alpha22, self.alpha3)
        if w.family.is_contact:
            return WaveStrengths(self.alpha1, self.alpha21 + w.alpha, self.alpha22 + w.alpha22, self.alpha3)
        if w.family is WaveFamily.F3:
            return WaveStrengths(self.alpha1, self.alpha21, self.alpha22, self.alpha3 + w.alpha)
        raise ValueError("non-physical fronts carry no curve parameter")


# --- rarefaction curves ---------------------------------------------------

def integral_curve(U: GasState, family: int, alpha: float, params: GasParams = DEFAULT_GAS) -> GasState:
    """
    Follow dU/dalpha = r_j(U) from 0 to alpha (either sign), then project onto the
    invariant manifold of U so the three Riemann invariants hold exactly.
    """
    if alpha == 0.0:
        return U
    gamma = params.gamma

    def rhs(_, y):
        return _genuinely_nonlinear_vector(y[0], y[1], y[2], y[3], gamma, family)

    def sonic_event(_, y):
        return y[0] - math.sqrt(gamma * max(y[2], 0.0) / y[3]) - SUPERSONIC_MARGIN

    sonic_event.terminal = True
    sonic_event.direction = -1

    sol = solve_ivp(rhs, (0.0, alpha), U.as_array(), method="RK45",
                    rtol=RAREFACTION_RTOL, atol=RAREFACTION_ATOL, events=sonic_event)
    if sol.status == 1:
        raise LeftSupersonicLost(f"{family}-rarefaction from {U} reaches u = c before alpha={alpha}")
    if sol.status != 0:
        raise StepFailure(f"rarefaction integration failed: {sol.message}")

    J, B, A = rarefaction_invariants(U, family, params)
    try:
        projected = state_from_invariants(family, J, B, A, float(sol.y[2, -1]), params)
    except SubsonicState as e:
        raise LeftSupersonicLost(str(e)) from e
    if projected.u <= sonic_speed(projected, params):
        raise LeftSupersonicLost(f"{family}-rarefaction from {U} ends subsonic at alpha={alpha}")
    return projected


def rarefaction_forward(U_l: GasState, family: WaveFamily, alpha: float,
                        params: GasParams = DEFAULT_GAS) -> GasState:
    if not family.is_genuinely_nonlinear:
        raise ValueError(f"rarefaction_forward needs F1 or F3, got {family}")
    if alpha < 0.0:
        raise ValueError(f"rarefaction parameter must be >= 0, got {alpha}")
    require_supersonic(U_l, params, "rarefaction_forward")
    return integral_curve(U_l, family.index, alpha, params)


# --- shock curves ---------------------------------------------------------

def _hugoniot_partner(K: GasState, family: int, known_is_upstream: bool, ratio: float,
                      params: GasParams) -> Tuple[GasState, float]:
    """
    State on the other side of an oblique shock of the given family.

    `ratio` is downstream over upstream density. A 1-shock is crossed from below
    to above, a 3-shock from above to below.
    """
    gamma = params.gamma
    if not 1.0 <= ratio < (gamma + 1.0) / (gamma - 1.0):
        raise NoRoot(f"density ratio {ratio} outside the admissible range")
    mn1_sq = 2.0 * ratio / ((gamma + 1.0) - (gamma - 1.0) * ratio)
    pressure_ratio = 1.0 + 2.0 * gamma / (gamma + 1.0) * (mn1_sq - 1.0)
    if known_is_upstream:
        w_known = math.sqrt(mn1_sq) * sonic_speed(K, params)
    else:
        mn2_sq = (1.0 + 0.5 * (gamma - 1.0) * mn1_sq) / (gamma * mn1_sq - 0.5 * (gamma - 1.0))
        w_known = math.sqrt(mn2_sq) * sonic_speed(K, params)
    q_known = K.q
    if w_known > q_known:
        raise NoRoot(f"detached shock: normal speed {w_known} exceeds flow speed {q_known}")

    if known_is_upstream:
        w_partner, p_partner, rho_partner = w_known / ratio, K.p * pressure_ratio, K.rho * ratio
    else:
        w_partner, p_partner, rho_partner = w_known * ratio, K.p / pressure_ratio, K.rho / ratio

    beta = math.asin(w_known / q_known)
    tangential = q_known * math.cos(beta)
    if family == 1:
        phi = K.theta - beta
        nx, ny = -math.sin(phi), math.cos(phi)
    else:
        phi = K.theta + beta
        nx, ny = math.sin(phi), -math.cos(phi)
    partner = GasState(tangential * math.cos(phi) + w_partner * nx,
                       tangential * math.sin(phi) + w_partner * ny,
                       p_partner, rho_partner)
    return partner, math.tan(phi)


def _shock_curve(U_known: GasState, family: WaveFamily, alpha: float, forward: bool,
                 params: GasParams) -> Tuple[GasState, float]:
    idx = family.index
    known_is_upstream = (idx == 1) == forward
    lam_known = eigenvalue(U_known, idx, params)
    if abs(alpha) <= 1e-15:
        return U_known, lam_known

    def mismatch(ratio: float) -> float:
        partner, _ = _hugoniot_partner(U_known, idx, known_is_upstream, ratio, params)
        lam_partner = eigenvalue(partner, idx, params)
        jump = lam_partner - lam_known if forward else lam_known - lam_partner
        return jump - alpha

    def safe_mismatch(ratio: float) -> float:
        try:
            return mismatch(ratio)
        except (NoRoot, SubsonicState):
            return float("nan")

    r_vec = right_eigenvector(U_known, idx, params)
    guess = 1.0 + abs(alpha * r_vec[3]) / U_known.rho
    ratio = None
    try:
        sol = root_scalar(safe_mismatch, x0=guess, x1=1.0 + 1.01 * (guess - 1.0), method="secant",
                          xtol=1e-15, maxiter=SHOCK_MAX_ITERATIONS)
        if sol.converged and sol.root > 1.0 and abs(safe_mismatch(sol.root)) <= SHOCK_TOLERANCE:
            ratio = sol.root
    except (RuntimeError, ValueError, ZeroDivisionError) as e:
        logger.debug(f"secant iteration raised {e}")
    if ratio is None:
        logger.debug(f"secant failed for {family.value}-shock alpha={alpha}; bracketing")
        upper = guess
        for _ in range(60):
            value = safe_mismatch(upper)
            if math.isnan(value):
                raise NoRoot(f"no admissible {family.value}-shock from {U_known} at alpha={alpha}")
            if value < 0.0:
                break
            upper = 1.0 + 2.0 * (upper - 1.0)
        else:
            raise NoRoot(f"could not bracket {family.value}-shock at alpha={alpha}")
        ratio = brentq(mismatch, 1.0, upper, xtol=1e-15, rtol=4.0 * np.finfo(float).eps,
                       maxiter=200)

    partner, slope = _hugoniot_partner(U_known, idx, known_is_upstream, ratio, params)
    if partner.u <= sonic_speed(partner, params):
        raise NoRoot(f"{family.value}-shock partner state {partner} is not supersonic")
    return partner, slope


def shock_forward(U_l: GasState, family: WaveFamily, alpha: float,
                  params: GasParams = DEFAULT_GAS) -> Tuple[GasState, float]:
    """
    Right state and slope of the admissible shock with parameter alpha < 0.

    Returns:
        tuple: (U_r, s) with lambda_j(U_r) - lambda_j(U_l) = alpha
    """
    if not family.is_genuinely_nonlinear:
        raise ValueError(f"shock_forward needs F1 or F3, got {family}")
    if alpha > 0.0:
        error_msg = f"{family.value}-shock requested with alpha={alpha} > 0 (rarefaction branch)"
        logger.error(error_msg)
        raise EntropyViolation(error_msg)
    require_supersonic(U_l, params, "shock_forward")
    U_r, slope = _shock_curve(U_l, family, alpha, True, params)
    if alpha < 0.0:
        compressive = U_r.p > U_l.p if family is WaveFamily.F1 else U_r.p < U_l.p
        if not compressive:
            raise EntropyViolation(f"{family.value}-shock from {U_l} has the wrong pressure jump")
    return U_r, slope


def shock_inverse(U_r: GasState, family: WaveFamily, alpha: float,
                  params: GasParams = DEFAULT_GAS) -> Tuple[GasState, float]:
    """Left state and slope of the shock with parameter alpha < 0 ending at U_r."""
    if alpha > 0.0:
        raise EntropyViolation(f"{family.value}-shock requested with alpha={alpha} > 0")
    require_supersonic(U_r, params, "shock_inverse")
    return _shock_curve(U_r, family, alpha, False, params)


def rankine_hugoniot_residual(U_l: GasState, U_r: GasState, s: float,
                              params: GasParams = DEFAULT_GAS) -> np.ndarray:
    """
    Residuals of the three jump conditions
    [p] = c_r^2/b [rho], [u] = -s[v], rho_r (s u_r - v_r)[v] = [p].
    """
    gamma = params.gamma
    b = 0.5 * (gamma + 1.0) - 0.5 * (gamma - 1.0) * U_l.rho / U_r.rho
    c_r2 = gamma * U_r.p / U_r.rho
    dp = U_r.p - U_l.p
    du = U_r.u - U_l.u
    dv = U_r.v - U_l.v
    drho = U_r.rho - U_l.rho
    return np.array([
        dp - c_r2 / b * drho,
        du + s * dv,
        U_r.rho * (s * U_r.u - U_r.v) * dv - dp,
    ])


def lax_condition(U_l: GasState, U_r: GasState, s: float, family: WaveFamily,
                  params: GasParams = DEFAULT_GAS) -> bool:
    idx = family.index
    return eigenvalue(U_r, idx, params) < s < eigenvalue(U_l, idx, params)


# --- contact curves -------------------------------------------------------

def contact_forward(U_l: GasState, alpha21: float, alpha22: float) -> GasState:
    """Vortex sheet scales (u, v) by e^alpha21, entropy wave scales rho by e^alpha22."""
    scale = math.exp(alpha21)
    return GasState(U_l.u * scale, U_l.v * scale, U_l.p, U_l.rho * math.exp(alpha22))


# --- dispatch -------------------------------------------------------------

def wave_front(U_l: GasState, w: WaveParam, params: GasParams = DEFAULT_GAS) -> Tuple[GasState, float]:
    """
    Apply one wave to U_l and return the right state together with the slope of
    the front that carries it (upper-state characteristic for rarefactions).
    """
    if w.family.is_contact:
        return contact_forward(U_l, w.alpha, w.alpha22), U_l.v / U_l.u
    if not w.family.is_genuinely_nonlinear:
        raise ValueError("non-physical fronts have no wave curve")
    if w.alpha >= 0.0:
        U_r = rarefaction_forward(U_l, w.family, w.alpha, params)
        return U_r, eigenvalue(U_r, w.family.index, params)
    return shock_forward(U_l, w.family, w.alpha, params)


def wave_forward(U_l: GasState, w: WaveParam, params: GasParams = DEFAULT_GAS) -> GasState:
    if w.family.is_contact:
        return contact_forward(U_l, w.alpha, w.alpha22)
    if not w.family.is_genuinely_nonlinear:
        raise ValueError("non-physical fronts have no wave curve")
    if w.alpha >= 0.0:
        return rarefaction_forward(U_l, w.family, w.alpha, params)
    return shock_forward(U_l, w.family, w.alpha, params)[0]


def wave_inverse(U_r: GasState, w: WaveParam, params: GasParams = DEFAULT_GAS) -> GasState:
    """U_l with wave_forward(U_l, w) = U_r."""
    if w.family.is_contact:
        return contact_forward(U_r, -w.alpha, -w.alpha22)
    if not w.family.is_genuinely_nonlinear:
        raise ValueError("non-physical fronts have no wave curve")
    if w.alpha >= 0.0:
        require_supersonic(U_r, params, "wave_inverse")
        return integral_curve(U_r, w.family.index, -w.alpha, params)
    return shock_inverse(U_r, w.family, w.alpha, params)[0]


def composite_forward(U_L: GasState, strengths: WaveStrengths,
                      params: GasParams = DEFAULT_GAS) -> Tuple[GasState, List[GasState]]:
    """Phi(alpha_1, alpha_2, alpha_3; U_L) and the two intermediate states."""
    mids = []
    state = U_L
    for w in strengths.waves():
        state = wave_forward(state, w, params)
        mids.append(state)
    return mids[-1], mids[:-1]


def composite_inverse(U_R: GasState, strengths: WaveStrengths,
                      params: GasParams = DEFAULT_GAS) -> GasState:
    """Psi(alpha_1, alpha_2, alpha_3; U_R): the left state of a Riemann solution."""
    state = U_R
    for w in reversed(strengths.waves()):
        state = wave_inverse(state, w, params)
    return state


# --- pressure along the 3-curve -------------------------------------------

def strength_from_pressure(U_l: GasState, p_target: float, params: GasParams = DEFAULT_GAS,
                           shock_extension: float = SHOCK_EXTENSION) -> float:
    """
    The alpha_3 with Phi_3^(3)(alpha_3; U_l) = p_target.

    Pressure increases along the 3-curve, so p_target above p_l gives a
    rarefaction parameter and p_target slightly below p_l a weak shock no
    stronger than `shock_extension`.
    """
    if abs(p_target - U_l.p) <= 1e-14 * U_l.p:
        return 0.0

    def pressure_gap(alpha: float) -> float:
        return wave_forward(U_l, WaveParam(WaveFamily.F3, alpha), params).p - p_target

    if p_target < U_l.p:
        try:
            gap_low = pressure_gap(-shock_extension)
            gap_mid = pressure_gap(-0.5 * shock_extension)
        except (NoRoot, SubsonicState) as e:
            raise Unreachable(f"3-shock extension from {U_l} is not admissible: {e}") from e
        if not gap_low < gap_mid < U_l.p - p_target:
            raise Unreachable(f"pressure is not monotone on the 3-shock extension from {U_l}")
        if gap_low > 0.0:
            raise Unreachable(f"p_target={p_target} below the 3-shock extension from {U_l}")
        bracket = (-shock_extension, 0.0)
    else:
        slope = right_eigenvector(U_l, 3, params)[2]
        upper = max(2.0 * (p_target - U_l.p) / slope, 1e-3)
        for _ in range(60):
            try:
                gap = pressure_gap(upper)
            except LeftSupersonicLost as e:
                raise Unreachable(f"p_target={p_target} beyond the supersonic 3-curve from {U_l}") from e
            if gap >= 0.0:
                break
            upper *= 2.0
        else:
            raise Unreachable(f"could not bracket p_target={p_target} on the 3-curve from {U_l}")
        bracket = (0.0, upper)

    return brentq(pressure_gap, *bracket, xtol=1e-15, rtol=1e-14, maxiter=200)


def pressure_lipschitz_bounds(U_l: GasState, alpha: float, params: GasParams = DEFAULT_GAS,
                              samples: int = 9) -> Tuple[float, float]:
    """
    Two-sided bounds C1 |a| <= |Phi_3^(3)(a; U_l) - p_l| <= C2 |a| sampled on [0, alpha].

    Returns:
        tuple: (C1, C2) as the smallest and largest chord slopes
    """
    if alpha == 0.0:
        slope = right_eigenvector(U_l, 3, params)[2]
        return slope, slope
    grid = np.linspace(0.0, alpha, samples + 1)[1:]
    slopes = [abs(wave_forward(U_l, WaveParam(WaveFamily.F3, a), params).p - U_l.p) / abs(a) for a in grid]
    return min(slopes), max(slopes)
