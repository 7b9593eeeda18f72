import math

import pytest

from gas_core import GasParams, GasState
from glimm import (GlimmConstants, GlimmSnapshot, approaching_pairs, audit_interaction, build_weights,
                   compute_functional, delta_star_for, estimate_constants, front_weight, np_total_strength,
                   require_weights, tv_estimates, verify_weights)
from errors import WeightInequalityError
from riemann import background_solution, reflection_coefficient
from tracking import Front, InitialProfile, InteractionRecord, TrackingSettings, initialize
from wave_curves import WaveFamily, WaveParam, contact_forward, wave_forward, wave_inverse

GAS = GasParams(gamma=1.4)
MACH_TWO = GasState(2.0, 0.0, 1.0, 1.4)
P_BAR = 0.5
CONSTANTS = GlimmConstants(C0=0.1, C1=1.0, C1_prime=1.0, C2=2.0, C_b=1.0)


def _background_field(delta=0.1):
    settings = TrackingSettings(delta=delta, mu=1e-12, lambda_hat=1.0, p_bar=P_BAR, params=GAS)
    return initialize(InitialProfile.constant(MACH_TWO), settings)


def _extra_front(field, family, strength, below=MACH_TWO, above=MACH_TWO, y0=5.0, speed=0.0):
    front = Front(id=field.next_id, family=family, strength=strength, speed=speed, below=below, above=above,
                  x0=0.0, y0=y0)
    field.next_id += 1
    return front


def _snapshot(F):
    return GlimmSnapshot(x=0.0, L=(0.0, 0.0, 0.0, 0.0), Q=(0.0, 0.0, 0.0, 0.0), S=0.0, F1=0.0,
                         L_w=F, Q_total=0.0, F0=F, F=F)


def _record(E):
    return InteractionRecord(x=1.0, y=0.0, case=1, E_delta=E, solver="accurate", incoming=(0, 1), outgoing=(2,))


def test_weight_recipe():
    w = build_weights(CONSTANTS)
    assert (w.K1, w.K2, w.K4, w.K_star, w.K3) == (1.0, 1.0, 1.0, 1.0, 5.0)
    assert w.K_np == pytest.approx(5.0)
    e_np = math.exp(0.5)
    assert w.K == pytest.approx(7.0 + e_np + 1.0)
    assert w.K_omega == pytest.approx(2.0 * (w.K + 8.0 + e_np))
    assert w.K0 == pytest.approx(2.0 + 2.0 * (w.K + 10.0 + e_np + 2.0 * math.exp(w.K_omega * 0.1)))
    assert w.delta_star == pytest.approx(delta_star_for(w.K, w.K0, w.K_omega, w.K_np, 0.1, 1.0))
    assert 0.0 < w.delta_star < 1.0
    assert w.overridden == ()


def test_weight_overrides():
    w = build_weights(CONSTANTS, {"K3": 7.0, "delta_star": 0.01})
    assert w.K3 == 7.0
    assert w.delta_star == 0.01
    assert w.overridden == ("K3", "delta_star")
    with pytest.raises(ValueError):
        build_weights(CONSTANTS, {"K9": 1.0})


def test_verify_weights_reports_every_inequality():
    w = build_weights(CONSTANTS)
    checks = verify_weights(w, L0=0.0, delta=0.5 * w.delta_star)
    assert [check.name for check in checks] == [
        "weak_pair_decay", "boundary_reflection", "strong_crossing_1", "strong_crossing_2", "strong_weak3_delta",
        "strong_weak3_L0", "non_physical_weight", "weak_total_small", "K0_lower_bound", "quadratic_bounded"]
    assert all(check.holds for check in checks)
    assert require_weights(w, 0.0, 0.5 * w.delta_star) == checks


def test_weight_inequality_failure_names_inequalities():
    w = build_weights(CONSTANTS, {"K0": 1.0})
    with pytest.raises(WeightInequalityError) as info:
        require_weights(w, 0.0, 0.5 * w.delta_star)
    assert "K0_lower_bound" in info.value.inequalities


def test_approaching_pair_examples():
    field = _background_field()
    one = _extra_front(field, WaveFamily.F1, 0.01, y0=5.0)
    three = _extra_front(field, WaveFamily.F3, 0.01, y0=6.0)
    field.fronts.extend([one, three])
    assert approaching_pairs(field) == ([], [])

    field = _background_field()
    three = _extra_front(field, WaveFamily.F3, 0.01, y0=5.0)
    one = _extra_front(field, WaveFamily.F1, 0.01, y0=6.0)
    field.fronts.extend([three, one])
    assert approaching_pairs(field) == ([(three.id, one.id)], [])

    field = _background_field()
    first = _extra_front(field, WaveFamily.F2_ENTROPY, 0.0, y0=5.0)
    second = _extra_front(field, WaveFamily.F2_ENTROPY, 0.0, y0=6.0)
    first.alpha22, second.alpha22 = 0.01, -0.02
    field.fronts.extend([first, second])
    assert approaching_pairs(field) == ([], [])


def test_background_functional_vanishes():
    field = _background_field()
    snapshot = compute_functional(field, build_weights(CONSTANTS))
    assert snapshot.L == (0.0, 0.0, 0.0, 0.0)
    assert snapshot.Q == (0.0, 0.0, 0.0, 0.0)
    assert snapshot.S == pytest.approx(field.S_bar)
    assert snapshot.F1 == pytest.approx(0.0, abs=1e-14)
    assert snapshot.F == pytest.approx(0.0, abs=1e-12)


def test_weak_front_above_fan_is_weighted_by_whole_fan():
    w = build_weights(CONSTANTS)
    field = _background_field()
    top = field.fronts[-1].above
    one = _extra_front(field, WaveFamily.F1, -0.01, below=top, above=wave_forward(top, WaveParam(WaveFamily.F1, -0.01), GAS))
    field.fronts.append(one)
    snapshot = compute_functional(field, w)
    expected = 0.01 * math.exp(w.K_omega * field.S_bar)
    assert snapshot.Q[1] == pytest.approx(expected)
    assert front_weight(field, one, w) == pytest.approx(math.exp(w.K_omega * field.S_bar))
    assert snapshot.L[0] == pytest.approx(0.01)


def test_non_physical_front_below_fan_is_weighted_by_whole_fan():
    w = build_weights(CONSTANTS)
    field = _background_field()
    ghost = _extra_front(field, WaveFamily.NON_PHYSICAL, 1e-6, y0=-1.0)
    field.fronts.insert(0, ghost)
    snapshot = compute_functional(field, w)
    assert snapshot.Q[3] == pytest.approx(1e-6 * math.exp(w.K_np * field.S_bar))
    assert snapshot.L[3] == pytest.approx(1e-6)
    assert np_total_strength(field) == pytest.approx(1e-6)


def test_audit_interaction_bounds():
    w = build_weights(CONSTANTS)
    assert audit_interaction(_snapshot(1.0), _snapshot(1.0 - 3e-5), _record(1e-4), w).passed
    assert not audit_interaction(_snapshot(1.0), _snapshot(1.0 - 2e-5), _record(1e-4), w).passed
    assert audit_interaction(_snapshot(0.5), _snapshot(0.5 - 2.5e-3), _record(0.01), w).passed
    degenerate = audit_interaction(_snapshot(0.2), _snapshot(0.2), _record(0.0), w)
    assert degenerate.passed
    assert degenerate.term_deltas["F"] == 0.0


def test_tv_estimates_background_and_contact():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    field = _background_field()
    assert tv_estimates(field, bg).deviation == pytest.approx(0.0, abs=1e-9)
    top = field.fronts[-1].above
    contact = _extra_front(field, WaveFamily.F2_VORTEX, 0.02, below=top, above=contact_forward(top, 0.02, 0.0))
    field.fronts.append(contact)
    assert tv_estimates(field, bg).deviation == pytest.approx(0.0, abs=1e-9)


def _field_below_weak_wave(family, alpha):
    U_low = wave_inverse(MACH_TWO, WaveParam(family, alpha), GAS)
    settings = TrackingSettings(delta=0.1, mu=1e-12, lambda_hat=1.0, p_bar=P_BAR, params=GAS)
    return initialize(InitialProfile((1.0,), (U_low, MACH_TWO)), settings), U_low


def test_tv_estimates_split_by_front_kind():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    field, U_low = _field_below_weak_wave(WaveFamily.F3, -0.01)
    tv = tv_estimates(field, bg)
    dp = U_low.p - MACH_TWO.p
    assert dp > 0.0
    assert tv.tv_fan == pytest.approx(U_low.p - P_BAR, rel=1e-8)
    assert tv.tv_weak == pytest.approx(dp, rel=1e-6)
    assert tv.tv_np == 0.0
    assert tv.tv_p == pytest.approx(tv.tv_fan + tv.tv_weak + tv.tv_np)
    assert tv.deviation == pytest.approx(2.0 * dp, rel=1e-6)


def test_tv_estimates_absorb_jumps_along_the_fan():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    field, U_low = _field_below_weak_wave(WaveFamily.F1, -0.01)
    tv = tv_estimates(field, bg)
    assert MACH_TWO.p - U_low.p > 0.0
    assert tv.tv_weak == pytest.approx(MACH_TWO.p - U_low.p, rel=1e-6)
    assert tv.deviation == pytest.approx(0.0, abs=1e-9)


def test_tv_estimates_count_non_physical_jumps():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    field = _background_field()
    top = field.fronts[-1].above
    shifted = GasState(top.u, top.v, top.p + 1e-6, top.rho)
    field.fronts.append(_extra_front(field, WaveFamily.NON_PHYSICAL, 1e-6, below=top, above=shifted))
    tv = tv_estimates(field, bg)
    assert tv.tv_np == pytest.approx(1e-6)
    assert tv.tv_weak == 0.0
    assert tv.deviation == pytest.approx(1e-6, rel=1e-6)


def test_estimate_constants_small_sample():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    constants = estimate_constants(bg, 0.05, samples=8, seed=1, riemann_samples=2)
    assert constants.C0 >= bg.S_bar
    assert constants.C1 >= 1.0
    assert constants.C1_prime >= 1.0
    assert constants.C2 >= 2.0 * constants.C1
    assert constants.C_b >= reflection_coefficient(bg.U_minus, GAS)
    assert constants.samples > 0
    again = estimate_constants(bg, 0.05, samples=8, seed=1, riemann_samples=2)
    assert again == constants
