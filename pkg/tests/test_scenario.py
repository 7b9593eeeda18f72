import math

import numpy as np
import pytest
from pydantic import ValidationError

from errors import GateViolation, TVTooLarge
from scenario import (PerturbationConfig, ScenarioConfig, build_profile, gate_report, prepare_scenario,
                      run_scenario, run_sweep, sweep_configs)
from tracking import check_consistency
from validate import fit_stability_constants, measure_stability


def test_config_defaults(flat_payload):
    config = ScenarioConfig.model_validate(flat_payload)
    assert config.delta0 == 0.05
    assert config.audit == "warn"
    assert config.perturbation.shape == "none"
    assert config.params.gamma == 1.4


@pytest.mark.parametrize("patch", [
    {"gamma": 1.0},
    {"U_plus": {"u": 0.5, "p": 1.0, "rho": 1.4}},
    {"U_plus": {"u": 2.0, "v": 0.1, "p": 1.0, "rho": 1.4}},
    {"weight_overrides": {"K9": 1.0}},
    {"constants": {"C7": 1.0}},
    {"delta": 0.0},
    {"epsilon0": 0.0},
    {"unknown_key": 1},
])
def test_config_rejects(flat_payload, patch):
    flat_payload.update(patch)
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate(flat_payload)


def test_perturbation_table_validation():
    row = {"y_low": 1.0, "y_high": 2.0, "u": 2.0, "v": 0.0, "p": 1.0, "rho": 1.4}
    with pytest.raises(ValidationError):
        PerturbationConfig(shape="table")
    with pytest.raises(ValidationError):
        PerturbationConfig(shape="table", table=[row, dict(row, y_low=1.5, y_high=3.0)])
    with pytest.raises(ValidationError):
        PerturbationConfig(shape="table", table=[dict(row, y_high=1.0)])


def test_profile_shapes(flat_payload):
    flat = ScenarioConfig.model_validate(flat_payload)
    assert build_profile(flat).breakpoints == ()

    flat_payload["perturbation"] = {"shape": "step_train", "epsilon": 0.02, "steps": 3,
                                    "y_start": 1.0, "width": 0.6}
    train = ScenarioConfig.model_validate(flat_payload)
    profile = build_profile(train)
    assert profile.breakpoints == pytest.approx((1.0, 1.2, 1.4, 1.6))
    assert profile.states[0] == profile.states[-1] == train.U_plus.to_state()
    assert 0.0 < profile.total_variation < 10.0 * 0.02
    assert build_profile(train).states == profile.states

    flat_payload["perturbation"] = {"shape": "single_bump", "epsilon": 0.0}
    assert build_profile(ScenarioConfig.model_validate(flat_payload)).breakpoints == ()


def test_table_profile(flat_payload):
    flat_payload["perturbation"] = {"shape": "table", "table": [
        {"y_low": 1.0, "y_high": 2.0, "u": 2.02, "v": 0.0, "p": 1.0, "rho": 1.4},
        {"y_low": 2.0, "y_high": 2.5, "u": 2.0, "v": 0.0, "p": 1.01, "rho": 1.4},
    ]}
    profile = build_profile(ScenarioConfig.model_validate(flat_payload))
    assert profile.breakpoints == (1.0, 2.0, 2.5)
    assert [U.u for U in profile.states] == [2.0, 2.02, 2.0, 2.0]
    assert profile.states[2].p == 1.01


def test_gate_report(flat_payload):
    gates = gate_report(ScenarioConfig.model_validate(flat_payload))
    assert gates["p_star"] < gates["p_bar"] < gates["p_plus"]
    assert gates["delta_star"] == 0.5


def test_delta_gate_without_override(flat_payload):
    flat_payload["weight_overrides"] = {}
    flat_payload["allow_gate_override"] = False
    with pytest.raises(GateViolation) as info:
        gate_report(ScenarioConfig.model_validate(flat_payload))
    assert info.value.inequalities == ["delta < delta_star"]


def test_pressure_gates(flat_payload):
    flat_payload["p_bar"] = 1.2
    with pytest.raises(GateViolation) as info:
        gate_report(ScenarioConfig.model_validate(flat_payload))
    assert info.value.inequalities == ["p_bar < p_plus"]

    flat_payload["p_bar"] = 1e-7
    with pytest.raises(GateViolation) as info:
        gate_report(ScenarioConfig.model_validate(flat_payload))
    assert info.value.inequalities == ["p_star < p_bar"]


def test_prepare_records_overridden_inequalities(flat_payload):
    prepared = prepare_scenario(ScenarioConfig.model_validate(flat_payload))
    assert prepared.mu == 1e-6
    assert prepared.delta_star == 0.5
    assert prepared.initial.F == pytest.approx(0.0, abs=1e-12)
    assert prepared.overridden_gates == ["strong_weak3_delta"]
    assert prepared.constants.samples == 0


def test_flat_run_summary(flat_payload):
    result = run_scenario(ScenarioConfig.model_validate(flat_payload))
    summary = result.summary()
    assert summary["x"] == 2.0
    assert summary["interactions"] == 0
    assert summary["np_total"] == 0.0
    assert summary["np_within_delta"]
    assert summary["functional_non_increasing"]
    assert summary["entropy"]["failures"] == 0
    assert summary["tv_deviation"] == pytest.approx(0.0, abs=1e-9)
    assert result.margins.inside


def test_sweep_configs_and_run(flat_payload):
    base = ScenarioConfig.model_validate(flat_payload)
    configs = sweep_configs(base, [0.0], [0.1, 0.2], [0, 1])
    assert [c.name for c in configs] == ["flat-eps0-d0.1-s0", "flat-eps0-d0.1-s1",
                                         "flat-eps0-d0.2-s0", "flat-eps0-d0.2-s1"]
    assert base.delta == 0.1
    results = run_sweep(configs[:2] + [configs[0].model_copy(update={"p_bar": 1.5})], workers=2, progress=False)
    assert [r.config.name for r in results[:2]] == ["flat-eps0-d0.1-s0", "flat-eps0-d0.1-s1"]
    assert isinstance(results[2], GateViolation)


def _perturbed(payload, epsilon, seed=5, x_max=3.0, steps=4):
    return ScenarioConfig.model_validate(dict(
        payload, seed=seed, x_max=x_max,
        perturbation={"shape": "step_train", "epsilon": epsilon, "steps": steps, "y_start": 0.5, "width": 1.0}))


def test_variation_above_epsilon0_is_rejected(flat_payload):
    flat_payload["epsilon0"] = 1e-3
    with pytest.raises(TVTooLarge):
        prepare_scenario(_perturbed(flat_payload, 0.05))
    flat_payload["epsilon0"] = 0.5
    assert prepare_scenario(_perturbed(flat_payload, 0.05)).profile.total_variation <= 0.5


def test_perturbed_run_replays_deterministically(flat_payload):
    first = run_scenario(_perturbed(flat_payload, 5e-3))
    second = run_scenario(_perturbed(flat_payload, 5e-3))
    assert first.field.stats.interactions > 0
    assert [r.to_dict() for r in first.field.event_log] == [r.to_dict() for r in second.field.event_log]
    assert [s.F for s in first.field.glimm_trace] == [s.F for s in second.field.glimm_trace]
    assert [(f.family, f.strength, f.y_at(first.field.x)) for f in first.field.fronts] == \
        [(f.family, f.strength, f.y_at(second.field.x)) for f in second.field.fronts]
    first_summary, second_summary = first.summary(), second.summary()
    first_summary.pop("elapsed")
    second_summary.pop("elapsed")
    assert first_summary == second_summary


@pytest.mark.parametrize("epsilon,seed", [(1e-3, 1), (4e-3, 2), (1e-2, 3)])
def test_perturbed_run_bounds_non_physical_total(flat_payload, epsilon, seed):
    summary = run_scenario(_perturbed(flat_payload, epsilon, seed=seed)).summary()
    assert summary["interactions"] > 0
    assert summary["np_total"] <= flat_payload["delta"]
    assert summary["np_within_delta"]


def test_initial_functional_scales_linearly_in_epsilon(flat_payload):
    values = [prepare_scenario(_perturbed(flat_payload, epsilon)).initial.F for epsilon in (1e-3, 2e-3, 4e-3)]
    assert values[0] > 0.0
    assert values[1] / values[0] == pytest.approx(2.0, rel=0.05)
    assert values[2] / values[1] == pytest.approx(2.0, rel=0.05)


def test_perturbed_run_audits_every_interaction(flat_payload):
    rng = np.random.default_rng(11)
    for epsilon in rng.uniform(1e-3, 1e-2, size=2):
        result = run_scenario(_perturbed(flat_payload, float(epsilon), seed=int(rng.integers(100))))
        w = result.prepared.weights
        assert "strong_weak3_delta" in result.prepared.overridden_gates
        assert "F(0+) < delta_star" in result.prepared.overridden_gates
        log = result.field.event_log
        assert log
        assert result.field.stats.audit_failures == sum(1 for record in log if not record.audit_passed)
        for record in log:
            d = record.diagnostics
            tol = 1e-9 * max(1.0, abs(record.F_before))
            assert d["d_F"] == pytest.approx(record.F_after - record.F_before, abs=tol)
            weighted = (w.K * d["d_L1"] + d["d_L2"] + w.K3 * d["d_L3"] + d["d_L4"] + w.K0 * d["d_Q0"]
                        + w.K1 * d["d_Q1"] + w.K2 * d["d_Q2"] + w.K4 * d["d_Q4"] + w.K_star * d["d_F1"])
            assert weighted == pytest.approx(d["d_F"], abs=tol)
            drop_bound = -0.25 * record.E_delta + 1e-12 * max(1.0, record.F_before)
            assert record.audit_passed == (d["d_F"] <= drop_bound)
            if record.case == 3:
                assert d.get("w_identity_error", 0.0) <= 1e-9
        assert check_consistency(result.field)["family_separation"] == 0.0


def test_stability_constants_across_an_epsilon_decade(flat_payload):
    samples = []
    for epsilon in (1e-3, 1e-2):
        result = run_scenario(_perturbed(flat_payload, epsilon))
        samples.append(measure_stability(result.field, result.prepared.background, epsilon))
    fit = fit_stability_constants(samples)
    assert math.isfinite(fit.M0) and math.isfinite(fit.M1)
    assert fit.M1 > 0.0
    assert fit.stable
