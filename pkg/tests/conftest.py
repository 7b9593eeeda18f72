import copy

import pytest

FLAT_SCENARIO = {
    "name": "flat",
    "gamma": 1.4,
    "U_plus": {"u": 2.0, "v": 0.0, "p": 1.0, "rho": 1.4},
    "p_bar": 0.5,
    "delta": 0.1,
    "x_max": 2.0,
    "mu_delta": 1e-6,
    "constants": {"C0": 0.1, "C1": 1.0, "C1_prime": 1.0, "C2": 2.0, "C_b": 1.0},
    "weight_overrides": {"delta_star": 0.5},
    "allow_gate_override": True,
}


@pytest.fixture
def flat_payload():
    """Unperturbed Mach 2 corner scenario with fixed constants and an overridden delta*."""
    return copy.deepcopy(FLAT_SCENARIO)
