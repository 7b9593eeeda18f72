import math

import pytest

from errors import ConstantsInvalid, PressureOutOfRange, TVTooLarge, UnclassifiableGeometry
from gas_core import GasParams, GasState
from glimm import GlimmConstants, build_weights
from riemann import background_solution, reflection_coefficient, sample_solver_speeds
from tracking import (ACCURATE, SIMPLIFIED, FreeBoundary, Front, InitialProfile, TrackingSettings, advance,
                      assign_generation_orders, check_consistency, classify_case, front_count, initialize,
                      meeting_x, mu_delta, next_interaction, slabs_at, solver_rule)
from wave_curves import WaveFamily, WaveParam, contact_forward, wave_forward

GAS = GasParams(gamma=1.4)
MACH_TWO = GasState(2.0, 0.0, 1.0, 1.4)
P_BAR = 0.5


def _settings(delta=0.1, mu=1e-12, **overrides):
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    lambda_hat = sample_solver_speeds(bg, 0.05).lambda_hat
    return TrackingSettings(delta=delta, mu=mu, lambda_hat=lambda_hat, p_bar=P_BAR, params=GAS, **overrides)


def _front(front_id, family, strength, speed, y0, strong=False):
    return Front(id=front_id, family=family, strength=strength, speed=speed, below=MACH_TWO, above=MACH_TWO,
                 x0=0.0, y0=y0, is_strong=strong)


def _one_front_profile(alpha=-0.01, y=1.0):
    return InitialProfile((y,), (MACH_TWO, wave_forward(MACH_TWO, WaveParam(WaveFamily.F1, alpha), GAS)))


def test_constant_profile_gives_only_the_fan():
    settings = _settings(delta=0.1)
    field = initialize(InitialProfile.constant(MACH_TWO), settings)
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    count = math.ceil(bg.S_bar / 0.1)
    assert field.S_bar == pytest.approx(bg.S_bar)
    assert len(field.fronts) == count
    assert all(front.is_strong and front.gen_order == 0 for front in field.fronts)
    assert [front.strength for front in field.fronts] == pytest.approx([bg.S_bar / count] * count)
    assert front_count(field) == {"strong": count, "weak": 0, "np": 0, "total": count}
    assert field.boundary.slope == pytest.approx(bg.k_b)
    assert field.fronts[-1].above == MACH_TWO


def test_constant_profile_has_no_interactions():
    field = advance(initialize(InitialProfile.constant(MACH_TWO), _settings()), 10.0)
    assert field.stats.interactions == 0
    assert field.event_log == []
    assert field.x == 10.0
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    slabs = slabs_at(field, 1.0)
    assert slabs[0].y_high == pytest.approx(bg.k_b)
    assert slabs[1].state.distance(bg.U_minus) < 1e-9
    assert slabs[-1].state == MACH_TWO
    assert len(slabs) == len(field.fronts) + 2


def test_single_contact_jump_adds_one_front():
    profile = InitialProfile((1.0,), (MACH_TWO, contact_forward(MACH_TWO, 0.0, 0.02)))
    field = initialize(profile, _settings())
    weak = [front for front in field.fronts if not front.is_strong]
    assert len(weak) == 1
    assert weak[0].family.is_contact
    assert abs(weak[0].alpha22) == pytest.approx(0.02, rel=1e-6)
    assert weak[0].gen_order == 1
    assert weak[0].y0 == 1.0
    assert field.stats.physical_fronts_initial == len(field.fronts)


def test_initialize_rejects_large_variation_and_low_corner_pressure():
    with pytest.raises(TVTooLarge):
        initialize(_one_front_profile(-0.05), _settings(), tv_limit=1e-6)
    bad = TrackingSettings(delta=0.1, mu=1e-12, lambda_hat=1.0, p_bar=1.5, params=GAS)
    with pytest.raises(PressureOutOfRange):
        initialize(InitialProfile.constant(MACH_TWO), bad)


def test_functional_baseline_uses_the_upstream_fan():
    corner = wave_forward(MACH_TWO, WaveParam(WaveFamily.F1, 0.02), GAS)
    field = initialize(InitialProfile((0.5,), (corner, MACH_TWO)), _settings())
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    fan = sum(front.strength for front in field.fronts if front.is_strong)
    assert field.S_bar == pytest.approx(bg.S_bar, rel=1e-9)
    assert abs(fan - bg.S_bar) > 1e-4
    assert field.fronts[0].below.p == pytest.approx(P_BAR)


def test_profile_validation():
    with pytest.raises(ValueError):
        InitialProfile((1.0,), (MACH_TWO,))
    with pytest.raises(ValueError):
        InitialProfile((2.0, 1.0), (MACH_TWO, MACH_TWO, MACH_TWO))
    with pytest.raises(ValueError):
        InitialProfile((0.0,), (MACH_TWO, MACH_TWO))


def test_meeting_point_of_two_fronts():
    lower = _front(0, WaveFamily.F3, 0.01, 0.5, 0.0)
    upper = _front(1, WaveFamily.F1, 0.01, 0.2, 1.0)
    assert meeting_x(lower, upper) == pytest.approx(10.0 / 3.0)


def test_parallel_fronts_never_meet():
    lower = _front(0, WaveFamily.F3, 0.01, 0.3, 0.0)
    upper = _front(1, WaveFamily.F1, 0.01, 0.3, 1.0)
    assert meeting_x(lower, upper) == math.inf


def test_front_reaches_boundary():
    boundary = FreeBoundary(GasState(0.0, 0.0, P_BAR, 1.0), [(0.0, 0.0, -0.2)])
    front = _front(0, WaveFamily.F1, 0.01, -0.5, 1.0)
    x = meeting_x(boundary, front)
    assert x == pytest.approx(1.0 / 0.3)
    assert front.y_at(x) == pytest.approx(boundary.y_at(x))


def test_boundary_bends_keep_continuity():
    boundary = FreeBoundary(GasState(0.0, 0.0, P_BAR, 1.0), [(0.0, 0.0, -0.2)])
    boundary.bend(2.0, -0.1)
    assert boundary.revision == 2
    assert boundary.y_at(2.0) == pytest.approx(-0.4)
    assert boundary.y_at(3.0) == pytest.approx(-0.5)
    assert boundary.slope_at(1.0) == -0.2


def test_classify_case_examples():
    weak1 = _front(1, WaveFamily.F1, 0.01, -0.5, 1.0)
    weak3 = _front(0, WaveFamily.F3, -0.02, 0.5, 0.0)
    case, E = classify_case(weak3, weak1)
    assert case == 1 and E == pytest.approx(2e-4)

    boundary = FreeBoundary(GasState(0.0, 0.0, P_BAR, 1.0), [(0.0, 0.0, -0.2)])
    case, E = classify_case(boundary, weak1)
    assert case == 2 and E == pytest.approx(0.01)

    strong = _front(2, WaveFamily.F3, 0.094, 0.4, 0.0, strong=True)
    shock = _front(3, WaveFamily.F3, -0.03, 0.3, 0.5)
    case, E = classify_case(strong, shock)
    assert case == 4 and E == pytest.approx(0.03)
    case, E = classify_case(shock, strong)
    assert case == 4 and E == pytest.approx(0.03)

    case, E = classify_case(strong, weak1)
    assert case == 3 and E == pytest.approx(0.01 * 0.094)

    ghost = _front(4, WaveFamily.NON_PHYSICAL, 1e-6, 2.0, 0.0)
    assert classify_case(ghost, strong)[0] == 5
    assert classify_case(ghost, weak1)[0] == 6


def test_classify_rejects_impossible_meetings():
    strong = _front(0, WaveFamily.F3, 0.094, 0.4, 0.0, strong=True)
    weak1 = _front(1, WaveFamily.F1, 0.01, 0.5, 0.0)
    with pytest.raises(UnclassifiableGeometry):
        classify_case(weak1, strong)
    boundary = FreeBoundary(GasState(0.0, 0.0, P_BAR, 1.0), [(0.0, 0.0, -0.2)])
    with pytest.raises(UnclassifiableGeometry):
        classify_case(boundary, strong)


def test_solver_rule_examples():
    assert solver_rule(1, 2e-4, 1e-5) == ACCURATE
    assert solver_rule(5, 1.0, 1e-5) == SIMPLIFIED
    assert solver_rule(6, 1.0, 1e-5) == SIMPLIFIED
    assert solver_rule(2, 1e-5, 1e-5) == SIMPLIFIED


def test_generation_order_examples():
    assert assign_generation_orders(1, 0, 1, 3, [1, 2, 3]) == [1, 1, 0]
    assert assign_generation_orders(1, 1, 3, 3, [3]) == [1]
    assert assign_generation_orders(2, 3, 1, 3, [1, 2, 3]) == [2, 5, 3]


def test_mu_delta_recipe():
    assert mu_delta(0.1, 1.0, 2.0, 1e-8) == pytest.approx(0.01)
    small, large = mu_delta(0.001, 1.0, 2.0, 0.01), mu_delta(0.002, 1.0, 2.0, 0.01)
    assert small <= 0.001 ** 2
    assert large <= 0.002 ** 2
    assert small <= large
    with pytest.raises(ConstantsInvalid):
        mu_delta(0.1, 1.0, 200.0, 0.01)


def test_advance_before_first_interaction_only_translates():
    field = initialize(_one_front_profile(), _settings())
    x_first, _ = next_interaction(field)
    assert 0.0 < x_first
    field = advance(field, 0.5 * x_first)
    assert field.event_log == []
    assert field.x == 0.5 * x_first


def test_weak_one_front_crosses_fan_and_reflects():
    field = advance(initialize(_one_front_profile(-0.01), _settings()), 10.0)
    cases = set(field.stats.per_case)
    assert 3 in cases
    assert 2 in cases
    assert field.event_log
    assert [record.x for record in field.event_log] == sorted(record.x for record in field.event_log)
    residuals = check_consistency(field)
    assert residuals["adjacency"] <= 1e-8
    assert residuals["reconstruction"] <= 1e-8
    assert residuals["ordering"] <= 1e-9
    assert residuals["boundary_pressure"] <= 1e-9
    assert field.boundary.revision > 1


def test_fronts_stay_between_the_fan_pads():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    speeds = sample_solver_speeds(bg, 0.05)
    settings = _settings(lambda1_star=speeds.lambda1_star, lambda3_star=speeds.lambda3_star)
    field = advance(initialize(_one_front_profile(-0.01), settings), 10.0)
    assert check_consistency(field)["family_separation"] == 0.0
    assert _settings().lambda1_star is None
    assert check_consistency(initialize(InitialProfile.constant(MACH_TWO), _settings()))["family_separation"] == 0.0
    squeezed = _settings(lambda1_star=speeds.lambda1_star, lambda3_star=speeds.lambda_hat)
    field = initialize(InitialProfile.constant(MACH_TWO), squeezed)
    assert check_consistency(field)["family_separation"] == pytest.approx(
        speeds.lambda_hat - min(front.speed for front in field.fronts))


def test_weak_shock_run_decreases_the_functional():
    bg = background_solution(MACH_TWO, P_BAR, GAS)
    C_b = max(1.0, 1.25 * abs(reflection_coefficient(bg.U_minus, GAS)))
    weights = build_weights(GlimmConstants(C0=0.1, C1=1.0, C1_prime=1.0, C2=2.0, C_b=C_b))
    field = advance(initialize(_one_front_profile(-0.01), _settings(weights=weights, audit_mode="strict")), 10.0)
    assert {2, 3} <= set(field.stats.per_case)
    assert field.stats.audit_failures == 0
    assert all(record.audit_passed for record in field.event_log)
    values = [snapshot.F for snapshot in field.glimm_trace]
    assert len(values) == field.stats.interactions + 1
    assert all(b <= a for a, b in zip(values, values[1:]))
    crossings = [record for record in field.event_log if record.case == 3]
    assert crossings
    assert all(record.diagnostics.get("w_identity_error", 0.0) <= 1e-9 for record in crossings)


def test_slabs_partition_the_half_line():
    field = advance(initialize(_one_front_profile(0.01), _settings()), 3.0)
    slabs = slabs_at(field, field.x)
    assert slabs[0].y_low == -math.inf
    assert slabs[-1].y_high == math.inf
    for lower, upper in zip(slabs, slabs[1:]):
        assert lower.y_high == upper.y_low
        assert lower.y_low <= lower.y_high


def test_interaction_cap_truncates_run():
    field = advance(initialize(_one_front_profile(-0.01), _settings(max_interactions=1)), 10.0)
    assert field.stats.interactions == 1
    assert field.stats.truncated
