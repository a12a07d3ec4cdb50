"""Kinematic trees, graph adjacency for joint mixing, and rotation conversions.

Quaternions are stored (w, x, y, z). Euler angles are intrinsic rotations in
a configurable axis order, default "zyx". Axis-angle vectors (exponential
map) are radians times a unit axis.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

GRAPH_TYPES = ("bidirectional", "forward", "backward", "none", "random")
EULER_ORDERS = ("xyz", "xzy", "yxz", "yzx", "zxy", "zyx")

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class KinematicTree:
    """Joint hierarchy given as parent indices; the root has parent -1."""

    parents: tuple

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        j = len(parents)
        if j == 0:
            raise DataError("kinematic tree needs at least one joint")
        roots = [i for i, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise DataError(f"kinematic tree must have exactly one root, found {len(roots)}")
        for i, p in enumerate(parents):
            if p != -1 and not 0 <= p < j:
                raise DataError(f"joint {i} has out-of-range parent {p}")
            if p == i:
                raise DataError(f"joint {i} is its own parent")
        # every joint must reach the root without revisiting a joint
        for i in range(j):
            seen = set()
            cur = i
            while cur != -1:
                if cur in seen:
                    raise DataError(f"cycle in kinematic tree at joint {i}")
                seen.add(cur)
                cur = parents[cur]

    @property
    def joint_count(self):
        return len(self.parents)


def adjacency(tree, graph_type, seed=None):
    """Binary joint adjacency with unit self-loops, before normalization.

    "forward" sends information from a parent toward its children (central
    joint to end effectors), "backward" the reverse, "bidirectional" both.
    "none" keeps only self-loops. "random" draws a symmetric Erdos-Renyi
    graph with edge probability 2/J, deterministic in the seed.
    """
    if graph_type not in GRAPH_TYPES:
        raise ValueError(f"unknown graph type {graph_type!r}, expected one of {GRAPH_TYPES}")
    j = tree.joint_count
    a = np.eye(j)
    if graph_type == "none":
        return a
    if graph_type == "random":
        rng = np.random.default_rng(seed)
        p = 2.0 / j
        for r in range(j):
            for c in range(r + 1, j):
                if rng.random() < p:
                    a[r, c] = a[c, r] = 1.0
        return a
    for child, parent in enumerate(tree.parents):
        if parent == -1:
            continue
        if graph_type in ("forward", "bidirectional"):
            a[child, parent] = 1.0
        if graph_type in ("backward", "bidirectional"):
            a[parent, child] = 1.0
    return a


def normalized_adjacency(tree, graph_type, seed=None):
    """Symmetrically scaled adjacency D^-1/2 A D^-1/2 with D the row sums."""
    a = adjacency(tree, graph_type, seed=seed)
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


# ------------------------------------------------------------ rotations


def quat_from_expmap(v):
    """Axis-angle (..., 3) to unit quaternion (..., 4) wxyz.

    Uses a series for sin(theta/2)/theta below 1e-8 to stay smooth at zero.
    """
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v, axis=-1)
    half = 0.5 * theta
    w = np.cos(half)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    factor = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    xyz = v * factor[..., None]
    return np.concatenate([w[..., None], xyz], axis=-1)


def expmap_from_quat(q):
    """Unit quaternion (..., 4) to axis-angle (..., 3), angle in [0, pi]."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise DataError("zero-norm quaternion")
    q = q / norm
    # flip to the w >= 0 hemisphere so the angle stays at most pi
    q = q * np.where(q[..., :1] < 0.0, -1.0, 1.0)
    w = q[..., 0]
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1)
    theta = 2.0 * np.arctan2(s, w)
    small = s < 1e-8
    w_safe = np.where(w == 0.0, 1.0, w)
    factor = np.where(small, 2.0 / w_safe, theta / np.where(small, 1.0, s))
    return xyz * factor[..., None]


def quat_multiply(a, b):
    """Hamilton product of wxyz quaternions, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def _axis_quat(axis, angle):
    angle = np.asarray(angle, dtype=np.float64)
    q = np.zeros(angle.shape + (4,))
    q[..., 0] = np.cos(angle / 2.0)
    q[..., 1 + _AXIS_INDEX[axis]] = np.sin(angle / 2.0)
    return q


def _check_order(order):
    if len(order) != 3 or set(order) != {"x", "y", "z"}:
        raise ValueError(f"euler order must permute 'xyz', got {order!r}")


def euler_to_quat(angles, order="zyx"):
    """Intrinsic euler angles (..., 3) in the given axis order to quaternion."""
    _check_order(order)
    angles = np.asarray(angles, dtype=np.float64)
    q = _axis_quat(order[0], angles[..., 0])
    q = quat_multiply(q, _axis_quat(order[1], angles[..., 1]))
    return quat_multiply(q, _axis_quat(order[2], angles[..., 2]))


def _quat_to_matrix(q):
    w, x, y, z = (q[..., i] for i in range(4))
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


_LOCK_TOL = 1e-9


def quat_to_euler(q, order="zyx"):
    """Quaternion (..., 4) to intrinsic euler angles (..., 3).

    The input is normalized first; q and -q give the same angles. In gimbal
    lock (middle angle at +-pi/2) the third angle is set to exactly 0.
    """
    _check_order(order)
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise DataError("zero-norm quaternion")
    m = _quat_to_matrix(q / norm)

    i, j, k = (_AXIS_INDEX[c] for c in order)
    cyclic = order in ("xyz", "yzx", "zxy")
    s = 1.0 if cyclic else -1.0

    sin_b = np.clip(s * m[..., i, k], -1.0, 1.0)
    b = np.arcsin(sin_b)
    locked = np.abs(sin_b) >= 1.0 - _LOCK_TOL

    a = np.arctan2(-s * m[..., j, k], m[..., k, k])
    c = np.arctan2(-s * m[..., i, j], m[..., i, i])

    # degenerate axis pair: fold everything into the first angle, zero the third
    t = np.arctan2(m[..., j, i], m[..., j, j])
    a_locked = np.where(b > 0, t, -t)
    a = np.where(locked, a_locked, a)
    c = np.where(locked, 0.0, c)
    return np.stack([a, b, c], axis=-1)


def canonicalize_hemisphere(traj):
    """Sign-canonicalize a (T, J, 4) quaternion trajectory per joint.

    Consecutive frames end up with nonnegative dot product and the first
    frame with nonnegative w. Signs flip whole quaternions only, so every
    frame still encodes the same rotation.
    """
    traj = np.asarray(traj, dtype=np.float64)
    t = traj.shape[0]
    first = np.where(traj[0, :, 0] < 0.0, -1.0, 1.0)
    if t == 1:
        return traj * first[None, :, None]
    dots = np.sum(traj[1:] * traj[:-1], axis=-1)
    flips = np.where(dots < 0.0, -1.0, 1.0)
    signs = np.concatenate([np.ones((1,) + first.shape), np.cumprod(flips, axis=0)], axis=0)
    signs = signs * first[None, :]
    return traj * signs[..., None]
