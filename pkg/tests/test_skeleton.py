"""Kinematic tree, normalized adjacency, and rotation representation tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natmotion import skeleton as sk
from natmotion.errors import DataError


# ------------------------------------------------------------ tree shape


def test_tree_accepts_chain():
    tree = sk.KinematicTree(parents=(-1, 0, 1, 2))
    assert tree.joint_count == 4


def test_tree_requires_exactly_one_root():
    with pytest.raises(DataError):
        sk.KinematicTree(parents=(-1, -1, 0))
    with pytest.raises(DataError):
        sk.KinematicTree(parents=(0, 1, 2))


def test_tree_rejects_out_of_range_parent():
    with pytest.raises(DataError):
        sk.KinematicTree(parents=(-1, 5))


def test_tree_rejects_cycle():
    with pytest.raises(DataError):
        sk.KinematicTree(parents=(-1, 2, 1))


# ------------------------------------------------------ adjacency matrix


def test_bidirectional_two_joint_chain_is_half_everywhere():
    tree = sk.KinematicTree(parents=(-1, 0))
    a_hat = sk.normalized_adjacency(tree, "bidirectional")
    assert np.allclose(a_hat, np.full((2, 2), 0.5), atol=1e-15)


def test_none_graph_is_identity():
    tree = sk.KinematicTree(parents=(-1, 0, 1))
    assert np.array_equal(sk.normalized_adjacency(tree, "none"), np.eye(3))


def test_forward_chain_values():
    # chain 0 -> 1 -> 2; forward sends parent information to children
    tree = sk.KinematicTree(parents=(-1, 0, 1))
    a_hat = sk.normalized_adjacency(tree, "forward")
    expected = np.array([
        [1.0, 0.0, 0.0],
        [1.0 / np.sqrt(2.0), 0.5, 0.0],
        [0.0, 0.5, 0.5],
    ])
    assert np.allclose(a_hat, expected, atol=1e-12)


def test_backward_is_forward_transposed_pattern():
    tree = sk.KinematicTree(parents=(-1, 0, 1))
    fwd = sk.adjacency(tree, "forward")
    bwd = sk.adjacency(tree, "backward")
    assert np.array_equal(fwd.T, bwd)


def test_bidirectional_symmetric_entries_in_unit_interval():
    tree = sk.KinematicTree(parents=(-1, 0, 1, 1, 0, 4, 5, 5))
    a_hat = sk.normalized_adjacency(tree, "bidirectional")
    assert np.array_equal(a_hat, a_hat.T)
    assert np.all(a_hat >= 0.0) and np.all(a_hat <= 1.0)


def test_random_graph_deterministic_and_symmetric():
    tree = sk.KinematicTree(parents=(-1, 0, 1, 1, 0, 4, 5, 5))
    a1 = sk.normalized_adjacency(tree, "random", seed=11)
    a2 = sk.normalized_adjacency(tree, "random", seed=11)
    assert np.array_equal(a1, a2)
    assert np.array_equal(a1, a1.T)
    assert np.all(np.diag(sk.adjacency(tree, "random", seed=11)) == 1.0)


def test_unknown_graph_type_rejected():
    tree = sk.KinematicTree(parents=(-1, 0))
    with pytest.raises(ValueError):
        sk.adjacency(tree, "diagonal")


# --------------------------------------------------- exponential map <-> quat


def test_expmap_zero_gives_identity_quaternion():
    q = sk.quat_from_expmap(np.zeros(3))
    assert np.array_equal(q, np.array([1.0, 0.0, 0.0, 0.0]))


def test_expmap_half_pi_about_z():
    q = sk.quat_from_expmap(np.array([0.0, 0.0, np.pi / 2]))
    want = np.array([np.sqrt(2) / 2, 0.0, 0.0, np.sqrt(2) / 2])
    assert np.max(np.abs(q - want)) < 1e-15


def test_expmap_small_angle_series_is_smooth():
    v = np.array([1e-10, 0.0, 0.0])
    q = sk.quat_from_expmap(v)
    assert q[0] == pytest.approx(1.0, abs=1e-15)
    assert q[1] == pytest.approx(5e-11, rel=1e-6)


def test_expmap_vectorized_shape():
    rng = np.random.default_rng(0)
    v = rng.uniform(-1, 1, size=(5, 3, 3))
    q = sk.quat_from_expmap(v)
    assert q.shape == (5, 3, 4)
    assert np.allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_expmap_roundtrip_under_pi(seed):
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    v = direction * rng.uniform(1e-6, np.pi - 1e-3)
    back = sk.expmap_from_quat(sk.quat_from_expmap(v))
    assert np.max(np.abs(back - v)) < 1e-10


# ------------------------------------------------------------ euler angles


def test_yaw_quarter_turn_zyx():
    q = np.array([np.sqrt(2) / 2, 0.0, 0.0, np.sqrt(2) / 2])
    e = sk.quat_to_euler(q, "zyx")
    assert np.max(np.abs(e - np.array([np.pi / 2, 0.0, 0.0]))) < 1e-12


def test_euler_sign_flip_invariance():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(6, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    assert np.allclose(
        sk.quat_to_euler(q, "zyx"), sk.quat_to_euler(-q, "zyx"), atol=1e-12
    )


def test_euler_normalizes_input():
    q = np.array([np.sqrt(2) / 2, 0.0, 0.0, np.sqrt(2) / 2])
    assert np.allclose(
        sk.quat_to_euler(q, "zyx"), sk.quat_to_euler(3.0 * q, "zyx"), atol=1e-12
    )


def test_zero_norm_quaternion_rejected():
    with pytest.raises(DataError):
        sk.quat_to_euler(np.zeros(4), "zyx")


def test_unknown_euler_order_rejected():
    q = np.array([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        sk.quat_to_euler(q, "zzz")
    with pytest.raises(ValueError):
        sk.quat_to_euler(q, "xy")


@pytest.mark.parametrize("order", ["xyz", "xzy", "yxz", "yzx", "zxy", "zyx"])
def test_euler_roundtrip_all_orders(order):
    rng = np.random.default_rng(9)
    for _ in range(40):
        angles = np.array([
            rng.uniform(-np.pi + 0.05, np.pi - 0.05),
            rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05),
            rng.uniform(-np.pi + 0.05, np.pi - 0.05),
        ])
        q = sk.euler_to_quat(angles, order)
        back = sk.quat_to_euler(q, order)
        assert np.max(np.abs(back - angles)) < 1e-9, order


@pytest.mark.parametrize("order", ["xyz", "zyx"])
@pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2])
def test_gimbal_lock_sets_third_angle_zero(order, pitch):
    angles = np.array([0.35, pitch, 0.0])
    q = sk.euler_to_quat(angles, order)
    e = sk.quat_to_euler(q, order)
    assert e[2] == 0.0
    # the recovered angles must still encode the same rotation
    q2 = sk.euler_to_quat(e, order)
    dot = abs(float(np.dot(q, q2)))
    assert dot == pytest.approx(1.0, abs=1e-8)


def test_quat_multiply_identity():
    rng = np.random.default_rng(2)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    ident = np.array([1.0, 0.0, 0.0, 0.0])
    assert np.allclose(sk.quat_multiply(ident, q), q, atol=1e-15)
    assert np.allclose(sk.quat_multiply(q, ident), q, atol=1e-15)


# ------------------------------------------------- hemisphere continuity


def test_canonicalize_fixes_sign_flips():
    rng = np.random.default_rng(5)
    t, j = 12, 3
    v = rng.uniform(-0.5, 0.5, size=(1, j, 3))
    traj = sk.quat_from_expmap(np.repeat(v, t, axis=0) * np.linspace(0.2, 1.0, t)[:, None, None])
    flips = rng.choice([-1.0, 1.0], size=(t, j, 1))
    flipped = traj * flips
    fixed = sk.canonicalize_hemisphere(flipped)
    dots = np.sum(fixed[1:] * fixed[:-1], axis=-1)
    assert np.all(dots >= 0.0)
    assert np.all(fixed[0, :, 0] >= 0.0)
    # same rotations as the input, sign aside
    assert np.allclose(np.abs(np.sum(fixed * flipped, axis=-1)), 1.0, atol=1e-9)


def test_canonicalize_idempotent():
    rng = np.random.default_rng(6)
    q = rng.normal(size=(8, 2, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    once = sk.canonicalize_hemisphere(q)
    twice = sk.canonicalize_hemisphere(once)
    assert np.array_equal(once, twice)
