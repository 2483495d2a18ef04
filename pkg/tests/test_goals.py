"""Goal list tests.

Oracles: 4x4 matrix folds over hand-listed successor steps for rebuild, the
rigid-action composition identity for propagation, and hand-placed planar
goals for every pruning rule.
"""

from __future__ import annotations

import numpy as np
import pytest

from vtrnav.geometry import Pose3, rotation_exp
from vtrnav.goals import Goal, GoalConfig, GoalList, is_lost, propagate, prune, rebuild
from vtrnav.keyframe_map import ClusterLink, Keyframe, TopoMetricMap


def forward(x: float, y: float = 0.0) -> Pose3:
    return Pose3(np.eye(3), np.array([x, y, 0.0]))


def rot_z(deg: float) -> Pose3:
    return Pose3(rotation_exp(np.array([0.0, 0.0, np.deg2rad(deg)])), np.zeros(3))


def random_pose(rng: np.random.Generator) -> Pose3:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose3(rotation_exp(axis * rng.uniform(-2.0, 2.0)), rng.uniform(-3.0, 3.0, size=3))


def bare_kf(kf_id: int, t_prev: Pose3) -> Keyframe:
    return Keyframe(
        kf_id=kf_id,
        t_prev=t_prev,
        pixels=np.zeros((1, 2), dtype=np.float32),
        descriptors=np.zeros((1, 32), dtype=np.uint8),
        points=np.array([[0.0, 0.0, 3.0]]),
    )


def chain(poses: list[Pose3]) -> TopoMetricMap:
    m = TopoMetricMap()
    m.insert(bare_kf(0, Pose3.identity()))
    for i, p in enumerate(poses, start=1):
        m.insert(bare_kf(i, p))
    return m


def goal_list(translations, staleness: float = 0.0) -> GoalList:
    goals = [Goal(np.array(t, dtype=np.float64), k) for k, t in enumerate(translations)]
    return GoalList(goals, last_match_kf=0, staleness=staleness)


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        GoalConfig(arrival_radius=0.0)
    with pytest.raises(ValueError):
        GoalConfig(bearing_limit_deg=0.0)
    with pytest.raises(ValueError):
        GoalConfig(bearing_limit_deg=200.0)
    with pytest.raises(ValueError):
        GoalConfig(lost_timeout=-1.0)


# ---------------------------------------------------------------- rebuild


def test_rebuild_straight_chain_from_exact_match():
    m = chain([forward(1.0)] * 3)
    gl = rebuild(m, 0, Pose3.identity())
    assert [g.source_kf for g in gl.goals] == [1, 2, 3]
    np.testing.assert_allclose(
        [g.translation for g in gl.goals],
        [[1, 0, 0], [2, 0, 0], [3, 0, 0]], atol=1e-15,
    )
    assert gl.last_match_kf == 0
    assert gl.staleness == 0.0
    assert not gl.tail_arrived


def test_rebuild_accounts_for_robot_offset():
    m = chain([forward(1.0)] * 3)
    gl = rebuild(m, 1, forward(0.0, 0.2))  # robot 0.2 m left of keyframe 1
    assert [g.source_kf for g in gl.goals] == [2, 3]
    np.testing.assert_allclose(
        [g.translation for g in gl.goals], [[1, -0.2, 0], [2, -0.2, 0]], atol=1e-15
    )


def test_rebuild_matches_matrix_fold_oracle():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        steps = [random_pose(rng) for _ in range(7)]
        m = chain(steps)
        kf_from_robot = random_pose(rng)
        gl = rebuild(m, 0, kf_from_robot)

        acc = np.linalg.inv(kf_from_robot.matrix())
        for g, step in zip(gl.goals, steps):
            acc = acc @ step.matrix()
            np.testing.assert_allclose(g.translation, acc[:3, 3], atol=1e-12)


def test_rebuild_follows_cluster_links():
    m = chain([forward(1.0)] * 4)
    m.get(1).cluster_link = ClusterLink(3, forward(2.0))
    m.erase(2)
    gl = rebuild(m, 0, Pose3.identity())
    assert [g.source_kf for g in gl.goals] == [1, 3, 4]
    np.testing.assert_allclose(
        [g.translation for g in gl.goals], [[1, 0, 0], [3, 0, 0], [4, 0, 0]], atol=1e-15
    )


def test_rebuild_last_goal_is_always_the_tail():
    rng = np.random.default_rng(9)
    m = chain([random_pose(rng) for _ in range(5)])
    for start in m.alive_ids()[:-1]:
        gl = rebuild(m, start, random_pose(rng))
        assert gl.goals[-1].source_kf == m.tail_id


def test_rebuild_at_tail_gives_single_terminal_goal():
    m = chain([forward(1.0)] * 2)
    gl = rebuild(m, 2, forward(0.4, 0.1))
    assert len(gl.goals) == 1
    assert gl.goals[0].source_kf == 2
    np.testing.assert_allclose(gl.goals[0].translation, [-0.4, -0.1, 0.0], atol=1e-15)


def test_rebuild_rejects_dead_keyframe():
    m = chain([forward(1.0)] * 3)
    m.get(1).cluster_link = ClusterLink(3, forward(2.0))
    m.erase(2)
    with pytest.raises(KeyError):
        rebuild(m, 2, Pose3.identity())
    with pytest.raises(KeyError):
        rebuild(m, 99, Pose3.identity())


# ---------------------------------------------------------------- propagate


def test_propagate_identity_only_ages_the_list():
    gl = goal_list([[3, 0, 0], [5, 1, 0]])
    out = propagate(gl, Pose3.identity(), 0.1)
    np.testing.assert_allclose([g.translation for g in out.goals], [[3, 0, 0], [5, 1, 0]])
    assert out.staleness == pytest.approx(0.1)
    assert gl.staleness == 0.0  # input untouched


def test_propagate_forward_motion_shortens_goal():
    gl = goal_list([[3, 0, 0]])
    out = propagate(gl, forward(1.0), 0.1)
    np.testing.assert_allclose(out.goals[0].translation, [2, 0, 0], atol=1e-15)


def test_propagate_rotation_swings_bearing():
    gl = goal_list([[2, 0, 0]])
    out = propagate(gl, rot_z(90.0), 0.1)
    np.testing.assert_allclose(out.goals[0].translation, [0, -2, 0], atol=1e-12)


def test_propagate_composes():
    rng = np.random.default_rng(17)
    for _ in range(5):
        gl = goal_list(rng.uniform(-4.0, 4.0, size=(6, 3)))
        a, b = random_pose(rng), random_pose(rng)
        two = propagate(propagate(gl, a, 0.1), b, 0.1)
        one = propagate(gl, a.compose(b), 0.2)
        np.testing.assert_allclose(
            [g.translation for g in two.goals],
            [g.translation for g in one.goals], atol=1e-12,
        )
        assert two.staleness == pytest.approx(one.staleness)


def test_propagate_empty_list():
    out = propagate(GoalList(), Pose3.identity(), 0.5)
    assert out.goals == []
    assert out.staleness == pytest.approx(0.5)
    with pytest.raises(ValueError):
        propagate(GoalList(), Pose3.identity(), -0.1)


# ---------------------------------------------------------------- prune


def test_prune_erases_goal_behind_the_robot():
    gl = goal_list([[-1.0, 0.1, 0], [2.0, 0.0, 0]])
    out = prune(gl)
    assert [g.source_kf for g in out.goals] == [1]
    assert not out.tail_arrived
    assert len(gl.goals) == 2  # input untouched


def test_prune_keeps_goal_inside_scope():
    d = 2.0
    gl = goal_list([[d * np.cos(np.deg2rad(30)), d * np.sin(np.deg2rad(30)), 0]])
    out = prune(gl)
    assert len(out.goals) == 1


def test_prune_bearing_scope_edges():
    just_in = [np.cos(np.deg2rad(59.9)), np.sin(np.deg2rad(59.9)), 0]
    just_out = [np.cos(np.deg2rad(60.1)), -np.sin(np.deg2rad(60.1)), 0]
    assert len(prune(goal_list([just_in])).goals) == 1
    assert len(prune(goal_list([just_out, just_in])).goals) == 1


def test_prune_arrival_radius_rule():
    out = prune(goal_list([[0.1, 0.0, 0], [1.0, 0.0, 0]]), GoalConfig(arrival_radius=0.3))
    assert [g.source_kf for g in out.goals] == [1]
    kept = prune(goal_list([[0.15, 0.0, 0]]), GoalConfig(arrival_radius=0.1))
    assert len(kept.goals) == 1


def test_prune_cascades_until_head_survives():
    gl = goal_list([[-1.0, 0.0, 0], [0.05, 0.0, 0], [1.5, 0.2, 0], [2.5, 0.2, 0]])
    out = prune(gl)
    assert [g.source_kf for g in out.goals] == [2, 3]
    assert out.goals[0] is gl.goals[2]  # survivors keep identity and order
    assert out.goals[1] is gl.goals[3]


def test_prune_is_idempotent():
    rng = np.random.default_rng(23)
    for _ in range(20):
        gl = goal_list(rng.uniform(-3.0, 3.0, size=(5, 3)))
        once = prune(gl)
        twice = prune(once)
        assert [g.source_kf for g in twice.goals] == [g.source_kf for g in once.goals]
        assert twice.tail_arrived == once.tail_arrived


def test_prune_z_is_ignored():
    out = prune(goal_list([[0.05, 0.0, 5.0]]))  # planar distance decides
    assert out.goals == []
    assert out.tail_arrived


def test_tail_arrival_only_via_distance_rule():
    arrived = prune(goal_list([[-2.0, 0.0, 0], [0.05, 0.0, 0]]))
    assert arrived.goals == [] and arrived.tail_arrived

    overshot = prune(goal_list([[0.05, 0.0, 0], [-2.0, 0.0, 0]]))
    assert overshot.goals == [] and not overshot.tail_arrived

    pending = prune(goal_list([[0.05, 0.0, 0], [1.0, 0.0, 0]]))
    assert len(pending.goals) == 1 and not pending.tail_arrived

    latched = GoalList(list(pending.goals), 0, 0.0, True)
    assert prune(latched).tail_arrived  # the flag never clears once set


# ---------------------------------------------------------------- lost


def test_lost_after_timeout():
    assert not is_lost(GoalList(staleness=29.0))
    assert is_lost(GoalList(staleness=31.0))
    assert is_lost(GoalList(staleness=2.0), GoalConfig(lost_timeout=1.5))
