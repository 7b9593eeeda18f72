"""
Gas states, thermodynamic functions and the eigenstructure of the steady
two-dimensional Euler system for a polytropic gas.

The state is U = (u, v, p, rho). All quantities are nondimensional.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import InvalidState, OutOfRange, SubsonicState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GasParams:
    """Polytropic gas constants. kappa and c_v only enter the physical entropy."""

    gamma: float = 1.4
    kappa: float = 1.0
    c_v: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if self.kappa <= 0.0 or self.c_v <= 0.0:
            raise ValueError(f"kappa and c_v must be positive, got {self.kappa}, {self.c_v}")


DEFAULT_GAS = GasParams()


@dataclass(frozen=True)
class GasState:
    """Primitive state (u, v, p, rho)."""

    u: float
    v: float
    p: float
    rho: float

    def __post_init__(self):
        values = (self.u, self.v, self.p, self.rho)
        if not all(math.isfinite(value) for value in values):
            raise InvalidState(f"non-finite gas state {values}")
        if self.p <= 0.0 or self.rho <= 0.0:
            raise InvalidState(f"pressure and density must be positive, got p={self.p}, rho={self.rho}")

    @property
    def q(self) -> float:
        return math.hypot(self.u, self.v)

    @property
    def theta(self) -> float:
        return math.atan2(self.v, self.u)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.p, self.rho], dtype=float)

    @classmethod
    def from_array(cls, values) -> "GasState":
        u, v, p, rho = (float(value) for value in values)
        return cls(u, v, p, rho)

    def distance(self, other: "GasState") -> float:
        """Euclidean distance in (u, v, p, rho)."""
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class EigenStructure:
    lambdas: Tuple[float, float, float]
    r1: np.ndarray
    r3: np.ndarray
    r21: np.ndarray
    r22: np.ndarray
    k1: float
    k3: float


# --- thermodynamics -------------------------------------------------------

def sonic_speed(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    return math.sqrt(params.gamma * U.p / U.rho)


def bernoulli(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """B = q^2 + 2c^2/(gamma-1)."""
    c2 = params.gamma * U.p / U.rho
    return U.u * U.u + U.v * U.v + 2.0 * c2 / (params.gamma - 1.0)


def entropy_constant(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """A = p rho^(-gamma)."""
    return U.p * U.rho ** (-params.gamma)


def physical_entropy(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """S = c_v ln(p rho^(-gamma) / kappa)."""
    return params.c_v * math.log(entropy_constant(U, params) / params.kappa)


def mach_number(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    return U.q / sonic_speed(U, params)


def mach_x(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """M_1 = u/c, the quantity that decides hyperbolicity in x."""
    return U.u / sonic_speed(U, params)


def mach_angle(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    c = sonic_speed(U, params)
    q = U.q
    if q <= c:
        raise SubsonicState(f"mach angle undefined for q={q} <= c={c}")
    return math.asin(c / q)


def total_enthalpy(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """h + q^2/2, equal to B/2."""
    return 0.5 * bernoulli(U, params)


def total_energy(U: GasState, params: GasParams = DEFAULT_GAS) -> float:
    """Energy per unit volume, rho q^2/2 + p/(gamma-1)."""
    return 0.5 * U.rho * (U.u * U.u + U.v * U.v) + U.p / (params.gamma - 1.0)


def fluxes(U: GasState, params: GasParams = DEFAULT_GAS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Conservative fluxes of the steady system W(U)_x + H(U)_y = 0.

    Returns:
        tuple: (W, H) as length-4 arrays (mass, x-momentum, y-momentum, energy)
    """
    rho, u, v, p = U.rho, U.u, U.v, U.p
    h0 = total_enthalpy(U, params)
    W = np.array([rho * u, rho * u * u + p, rho * u * v, rho * u * h0])
    H = np.array([rho * v, rho * u * v, rho * v * v + p, rho * v * h0])
    return W, H


def is_supersonic(U: GasState, params: GasParams = DEFAULT_GAS) -> bool:
    return U.u > sonic_speed(U, params)


def require_supersonic(U: GasState, params: GasParams = DEFAULT_GAS, context: str = "") -> None:
    c = sonic_speed(U, params)
    if not U.u > c:
        error_msg = f"state {U} is not supersonic in x (u={U.u}, c={c}){' in ' + context if context else ''}"
        logger.error(error_msg)
        raise SubsonicState(error_msg)


# --- eigenstructure -------------------------------------------------------

def _lambda_pm(u: float, v: float, c2: float, sign: float) -> float:
    root = math.sqrt(max(u * u + v * v - c2, 0.0))
    return (u * v + sign * math.sqrt(c2) * root) / (u * u - c2)


def eigenvalues(U: GasState, params: GasParams = DEFAULT_GAS) -> Tuple[float, float, float]:
    """(lambda_1, lambda_2, lambda_3) with lambda_1 < v/u < lambda_3."""
    require_supersonic(U, params, "eigenvalues")
    c2 = params.gamma * U.p / U.rho
    return (_lambda_pm(U.u, U.v, c2, -1.0), U.v / U.u, _lambda_pm(U.u, U.v, c2, 1.0))


def eigenvalue(U: GasState, family: int, params: GasParams = DEFAULT_GAS) -> float:
    """Single characteristic slope for family index 1, 2 or 3."""
    require_supersonic(U, params, "eigenvalue")
    if family == 2:
        return U.v / U.u
    c2 = params.gamma * U.p / U.rho
    return _lambda_pm(U.u, U.v, c2, -1.0 if family == 1 else 1.0)


def _genuinely_nonlinear_vector(u: float, v: float, p: float, rho: float,
                                gamma: float, family: int) -> np.ndarray:
    # no supersonic check; callers guard
    c2 = gamma * p / rho
    c = math.sqrt(c2)
    q2 = u * u + v * v
    s = math.sqrt(max(q2 - c2, 0.0))
    sign = -1.0 if family == 1 else 1.0
    lam = (u * v + sign * c * s) / (u * u - c2)
    cos_shifted = (u * s - sign * v * c) / q2
    k = 2.0 * s * cos_shifted ** 3 / (gamma + 1.0)
    dp = rho * (lam * u - v)
    return k * np.array([-lam, 1.0, dp, dp / c2])


def normalization_constants(U: GasState, params: GasParams = DEFAULT_GAS) -> Tuple[float, float]:
    """k_1 and k_3 that make grad(lambda_j) . r_j = 1."""
    require_supersonic(U, params, "normalization_constants")
    c2 = params.gamma * U.p / U.rho
    c = math.sqrt(c2)
    q2 = U.u * U.u + U.v * U.v
    s = math.sqrt(q2 - c2)
    factor = 2.0 * s / (params.gamma + 1.0)
    k1 = factor * ((U.u * s + U.v * c) / q2) ** 3
    k3 = factor * ((U.u * s - U.v * c) / q2) ** 3
    return k1, k3


def right_eigenvector(U: GasState, family: int, params: GasParams = DEFAULT_GAS) -> np.ndarray:
    require_supersonic(U, params, "right_eigenvector")
    if family == 1 or family == 3:
        return _genuinely_nonlinear_vector(U.u, U.v, U.p, U.rho, params.gamma, family)
    raise ValueError(f"right_eigenvector: family must be 1 or 3, got {family}")


def eigenvectors(U: GasState, params: GasParams = DEFAULT_GAS) -> EigenStructure:
    lambdas = eigenvalues(U, params)
    k1, k3 = normalization_constants(U, params)
    return EigenStructure(
        lambdas=lambdas,
        r1=_genuinely_nonlinear_vector(U.u, U.v, U.p, U.rho, params.gamma, 1),
        r3=_genuinely_nonlinear_vector(U.u, U.v, U.p, U.rho, params.gamma, 3),
        r21=np.array([U.u, U.v, 0.0, 0.0]),
        r22=np.array([0.0, 0.0, 0.0, U.rho]),
        k1=k1,
        k3=k3,
    )


# --- Riemann invariants ---------------------------------------------------

def prandtl_meyer(M: float, gamma: float) -> float:
    """Prandtl-Meyer angle nu(M) for M >= 1."""
    if M < 1.0:
        raise OutOfRange(f"Prandtl-Meyer function needs M >= 1, got {M}")
    ratio = (gamma + 1.0) / (gamma - 1.0)
    m2 = M * M - 1.0
    return math.sqrt(ratio) * math.atan(math.sqrt(m2 / ratio)) - math.atan(math.sqrt(m2))


def sonic_limit(B: float, params: GasParams = DEFAULT_GAS) -> float:
    """q_sonic = sqrt((gamma-1) B / (gamma+1)), where q = c."""
    return math.sqrt((params.gamma - 1.0) * B / (params.gamma + 1.0))


def pm_integral(q: float, B: float, params: GasParams = DEFAULT_GAS) -> float:
    """
    I(q, B) = int_{q_sonic}^{q} sqrt(t^2 - c^2)/(t c) dt with c^2 = (gamma-1)(B - t^2)/2.

    The integral equals the Prandtl-Meyer angle of the Mach number q/c(q).

    Args:
        q (float): Flow speed
        B (float): Bernoulli constant
        params (GasParams): Gas constants

    Returns:
        float: I(q, B) >= 0
    """
    gamma = params.gamma
    q_sonic = sonic_limit(B, params)
    q_max = math.sqrt(B)
    if q >= q_max or q < q_sonic * (1.0 - 1e-13):
        raise OutOfRange(f"pm_integral: q={q} outside ({q_sonic}, {q_max}) for B={B}")
    if q <= q_sonic:
        return 0.0
    mach2 = 2.0 * q * q / ((gamma - 1.0) * (B - q * q))
    return prandtl_meyer(math.sqrt(max(mach2, 1.0)), gamma)


def rarefaction_invariants(U: GasState, family: int, params: GasParams = DEFAULT_GAS) -> Tuple[float, float, float]:
    """
    The three quantities conserved along a rarefaction curve of the given family.

    Returns:
        tuple: (I + theta, B, A) for family 3, (I - theta, B, A) for family 1
    """
    B = bernoulli(U, params)
    I = pm_integral(U.q, B, params)
    J = I + U.theta if family == 3 else I - U.theta
    return J, B, entropy_constant(U, params)


def state_from_invariants(family: int, J: float, B: float, A: float, p: float,
                          params: GasParams = DEFAULT_GAS) -> GasState:
    """Rebuild the state with pressure p on the rarefaction manifold (J, B, A) of a family."""
    gamma = params.gamma
    rho = (p / A) ** (1.0 / gamma)
    c2 = gamma * p / rho
    q2 = B - 2.0 * c2 / (gamma - 1.0)
    if q2 <= c2:
        raise SubsonicState(f"no supersonic state at p={p} on invariant manifold (q^2={q2}, c^2={c2})")
    q = math.sqrt(q2)
    I = pm_integral(q, B, params)
    theta = J - I if family == 3 else I - J
    if abs(theta) >= 0.5 * math.pi:
        raise SubsonicState(f"flow angle {theta} leaves the right half-plane at p={p}")
    return GasState(q * math.cos(theta), q * math.sin(theta), p, rho)


def riemann_invariant_deviation(U: GasState, U_ref: GasState,
                                params: GasParams = DEFAULT_GAS) -> Tuple[float, float, float]:
    """Deviations (d_I, d_B, d_A) of the 3-family invariants of U from those of U_ref."""
    J, B, A = rarefaction_invariants(U, 3, params)
    J_ref, B_ref, A_ref = rarefaction_invariants(U_ref, 3, params)
    return J - J_ref, B - B_ref, A - A_ref


def in_invariant_region(U: GasState, U_plus: GasState, delta0: float, p_bar: float,
                        params: GasParams = DEFAULT_GAS) -> bool:
    """Membership in D(U_plus, delta0): a neighbourhood of the 3-rarefaction curve through U_plus."""
    if not is_supersonic(U, params):
        return False
    d_I, d_B, d_A = riemann_invariant_deviation(U, U_plus, params)
    return (abs(d_I) < delta0 and abs(d_B) < delta0 and abs(d_A) < delta0
            and p_bar - delta0 < U.p < U_plus.p + delta0)
