import math

import numpy as np
import pytest

from boardpush.model import (InvalidParameterError, JointSpec, ModelParams,
                             build_robot_tree, build_skateboard_tree,
                             make_tree, validate_tree)


@pytest.fixture(scope="module")
def params():
    return ModelParams()


def test_robot_tree_shape(params):
    tree = build_robot_tree(params)
    assert tree.nv == 18
    assert tree.nq == 19
    actuated = [j for j in tree.joints if j.actuated]
    assert len(actuated) == 12
    free = [j for j in tree.joints if j.kind == "free6"]
    assert len(free) == 1


def test_robot_tree_invalid_mass():
    p = ModelParams()
    p.robot.thigh_mass = 0.0
    with pytest.raises(InvalidParameterError) as e:
        build_robot_tree(p)
    assert "thigh_mass" in str(e.value)


def test_skateboard_tree_shape(params):
    tree = build_skateboard_tree(params)
    assert tree.nv == 8
    assert not any(j.actuated for j in tree.joints)
    springs = [j for j in tree.joints if j.stiffness > 0]
    assert len(springs) == 2
    wheels = [g for b in tree.bodies for g in b.geometry
              if g.role.startswith("wheel")]
    assert len(wheels) == 4


def test_skateboard_zero_stiffness_rejected():
    p = ModelParams()
    p.skateboard.truck_stiffness = 0.0
    with pytest.raises(InvalidParameterError):
        build_skateboard_tree(p)


def test_built_trees_validate_clean(params):
    assert validate_tree(build_robot_tree(params)) == []
    assert validate_tree(build_skateboard_tree(params)) == []


def test_validate_detects_cycle(params):
    tree = build_robot_tree(params)
    bad = [j for j in tree.joints]
    # reroute the pelvis's own chain back onto itself
    bad[1] = JointSpec(name="l_hip_yaw", kind="revolute", parent="l_thigh",
                       child="l_hip_yaw_link", axis=(0, 0, 1))
    cyc = make_tree(tree.bodies, bad)
    diags = validate_tree(cyc)
    assert any("cycle" in d for d in diags)


def test_validate_detects_nonunit_axis(params):
    tree = build_robot_tree(params)
    bad = list(tree.joints)
    bad[1] = JointSpec(name="l_hip_yaw", kind="revolute", parent="pelvis",
                       child="l_hip_yaw_link", axis=(0, 0, 2.0))
    diags = validate_tree(make_tree(tree.bodies, bad))
    assert sum("axis" in d for d in diags) == 1
    assert any("l_hip_yaw" in d for d in diags)


def test_total_mass_matches_configured(params):
    tree = build_robot_tree(params)
    r = params.robot
    expect = (r.pelvis_mass + 2 * (r.hip_yaw_mass + r.hip_roll_mass + r.thigh_mass
                                   + r.shank_mass + r.ankle_mass + r.foot_mass))
    assert abs(tree.total_mass - expect) / expect < 1e-12


def test_tree_construction_deterministic(params):
    t1 = build_robot_tree(params)
    t2 = build_robot_tree(params)
    for b1, b2 in zip(t1.bodies, t2.bodies):
        assert b1.name == b2.name
        assert b1.mass == b2.mass
        np.testing.assert_array_equal(b1.inertia, b2.inertia)
    for j1, j2 in zip(t1.joints, t2.joints):
        assert j1 == j2 or (j1.name == j2.name and j1.origin == j2.origin)


def test_friction_ordering_enforced():
    p = ModelParams()
    p.friction.mu_deck_foot = p.friction.mu_ground_foot
    assert any("grip tape" in d for d in p.validate())


def test_rake_angle_bounds():
    p = ModelParams()
    p.skateboard.truck_rake = math.pi / 2
    assert any("truck_rake" in d for d in p.validate())


def test_json_roundtrip(tmp_path, params):
    path = tmp_path / "model.json"
    params.save_json(path)
    loaded = ModelParams.load_json(path)
    assert loaded.to_dict() == params.to_dict()


def test_json_rejects_wrong_schema(tmp_path, params):
    d = params.to_dict()
    d["schema"] = 99
    with pytest.raises(InvalidParameterError):
        ModelParams.from_dict(d)
