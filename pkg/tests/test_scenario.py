import json
from importlib import resources

import numpy as np
import pytest
import yaml

from ctrcac.architectures import AttitudeStack, BicopterAutopilot, CascadedPpiLoop, ServoLoop
from ctrcac.scenario import (
    Scenario,
    ScenarioParseError,
    ScenarioSemanticError,
    build_system,
    load_scenario,
    parse_scenario,
    preset_names,
    scenario_json_schema,
)

from conftest import ALL_PRESETS

MINIMAL = """
plant: {kind: double_integrator}
architecture: {kind: servo}
parameterization: {kind: pid}
hyperparameters: {P0: 0.5, p_f: 1.0}
reference: {kind: step}
"""


def edit(text, **top):
    data = yaml.safe_load(text)
    for key, val in top.items():
        if val is None:
            data.pop(key, None)
        else:
            data[key] = val
    return yaml.safe_dump(data)


def test_bundled_presets_cover_the_example_table():
    assert preset_names() == sorted([
        "double-integrator-tf2", "double-integrator-pid", "double-integrator-ppi",
        "double-integrator-fsfi", "bicopter-pid", "bicopter-ppi", "attitude-fsfi", "attitude-ppi",
    ])


@pytest.mark.parametrize("name, P0, p_f", [
    ("double-integrator-tf2", 10 ** 0.6, 8.15),
    ("double-integrator-pid", 10 ** -1.02, 0.6508),
    ("double-integrator-ppi", 10 ** -3.376, 4.455),
    ("double-integrator-fsfi", 10 ** -1.278, 3.314),
])
def test_preset_hyperparameters(name, P0, p_f):
    hyp = load_scenario(name).hyperparameters
    assert hyp.P0 == pytest.approx(P0, rel=1e-12)
    assert hyp.p_f == p_f


def test_attitude_and_bicopter_presets():
    a = load_scenario("attitude-fsfi")
    assert a.hyperparameters.P0 == 1e4 and a.hyperparameters.R_z == 1e4
    assert a.hyperparameters.p_f == 2.0 and a.architecture.u_limit == 0.2
    assert a.plant.tau_dist == [0.05, 0.05, 0.0]
    b = load_scenario("bicopter-ppi")
    assert (b.plant.m, b.plant.J) == (1.5, 0.03)
    assert (b.reference.a, b.reference.b, b.reference.phi_deg, b.reference.omega) == (5, 3, 45, 0.1)


def test_defaults_filled_and_echoed():
    scn = parse_scenario(MINIMAL)
    assert scn.sim.dt == 1e-3 and scn.sim.T == 50.0
    echo = scn.echo()
    assert echo["sim"]["dt"] == 1e-3
    assert echo["tune"]["log10_P0"] == [-4.0, 4.0] and echo["tune"]["swarm_size"] == 5


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_echo_round_trip(name):
    scn = load_scenario(name)
    again = parse_scenario(scn.to_yaml())
    assert again == scn
    assert again.to_yaml() == scn.to_yaml()


def test_unknown_keys_rejected_with_location():
    with pytest.raises(ScenarioParseError) as info:
        parse_scenario(MINIMAL + "foo: 1\n")
    assert info.value.exit_code == 2 and "foo" in str(info.value)
    bad = MINIMAL.replace("{kind: step}", "{kind: step, valu: 2}")
    with pytest.raises(ScenarioParseError, match="line 6.*valu"):
        parse_scenario(bad)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(ScenarioParseError, match="line"):
        parse_scenario("plant: [1, 2\n")
    with pytest.raises(ScenarioParseError):
        parse_scenario("- just\n- a list\n")


def test_schema_value_errors():
    with pytest.raises(ScenarioParseError, match="P0"):
        parse_scenario(MINIMAL.replace("P0: 0.5", "P0: -1"))
    with pytest.raises(ScenarioParseError, match="exactly one of P0"):
        parse_scenario(MINIMAL.replace("P0: 0.5, ", ""))
    with pytest.raises(ScenarioParseError, match="exactly one of p_f"):
        parse_scenario(MINIMAL.replace("p_f: 1.0", "p_f: 1.0, filter: {A: [[-1]], B: [[1]], C: [[1]], D: [[0]]}"))


@pytest.mark.parametrize("change, message", [
    ({"parameterization": {"kind": "fsfi"}, "architecture": {"kind": "bicopter_autopilot"},
      "plant": {"kind": "bicopter"}, "reference": {"kind": "ellipse"}}, "PID or cascaded PPI"),
    ({"architecture": {"kind": "ppi"}}, "does not accept"),
    ({"plant": {"kind": "bicopter"}}, "needs a 'double_integrator' plant"),
    ({"reference": {"kind": "ellipse"}}, "reference"),
    ({"loops": {"pitch": {}}}, "unknown loop names"),
    ({"sim": {"dt": 0.1, "T": 0.5}}, "10 steps"),
    ({"hyperparameters": {"R_theta": [[1.0, 0.0], [0.0, 1.0]], "p_f": 1.0}}, "R_theta must be 3x3"),
])
def test_semantic_errors(change, message):
    with pytest.raises(ScenarioSemanticError, match=message) as info:
        parse_scenario(edit(MINIMAL, **change))
    assert info.value.exit_code == 3


def test_per_loop_overrides():
    scn = load_scenario("bicopter-pid")
    system = build_system(scn)
    assert isinstance(system, BicopterAutopilot)
    assert [lp.deriv_mode for lp in system.loops] == ["measured", "measured", "filtered"]
    data = scn.echo()
    data["loops"]["r2"] = {"hyperparameters": {"P0": 2.0, "p_f": 3.0}}
    system = build_system(Scenario.model_validate(data))
    np.testing.assert_allclose(system.loops[1].hp.R_theta, 2.0 * np.eye(3))
    assert system.loops[1].filt.A_f[0, 0] == -3.0
    np.testing.assert_allclose(system.loops[0].hp.R_theta, 10 ** -1.02 * np.eye(3))


def test_explicit_matrices():
    text = MINIMAL.replace(
        "hyperparameters: {P0: 0.5, p_f: 1.0}",
        "hyperparameters: {R_theta: [[2, 0, 0], [0, 3, 0], [0, 0, 4]], R_u: 0.1, "
        "filter: {A: [[-2]], B: [[1]], C: [[2]], D: [[0]]}}",
    )
    system = build_system(parse_scenario(text))
    lp = system.loops[0]
    np.testing.assert_array_equal(np.diag(lp.hp.R_theta), [2, 3, 4])
    assert lp.hp.R_u[0, 0] == 0.1 and lp.filt.C_f[0, 0] == 2.0


def test_p0_role_covariance():
    text = MINIMAL.replace("P0: 0.5", "P0: 0.5, P0_role: covariance")
    lp = build_system(parse_scenario(text)).loops[0]
    np.testing.assert_allclose(lp.initial_state()[lp.offsets["P"]:lp.offsets["A"]].reshape(3, 3),
                               0.5 * np.eye(3))


def test_with_hyperparameters_applies_everywhere():
    scn = load_scenario("bicopter-pid").with_hyperparameters(P0=3.0, p_f=2.0)
    system = build_system(scn)
    for lp in system.loops:
        np.testing.assert_allclose(lp.hp.R_theta, 3.0 * np.eye(3))
        assert lp.filt.A_f[0, 0] == -2.0
    assert system.loops[2].deriv_mode == "filtered"


def test_system_types():
    assert isinstance(build_system(load_scenario("double-integrator-tf2")), ServoLoop)
    assert isinstance(build_system(load_scenario("double-integrator-ppi")), CascadedPpiLoop)
    st = build_system(load_scenario("attitude-ppi"))
    assert isinstance(st, AttitudeStack)
    np.testing.assert_allclose(st.x0_plant[:3], np.radians([5, -5, 10]))


def test_published_schema_is_current():
    shipped = json.loads((resources.files("ctrcac") / "schema" / "scenario.schema.json").read_text())
    assert shipped == scenario_json_schema()


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/scenario.yaml")
