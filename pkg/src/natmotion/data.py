"""Sequence files, preprocessing, windowing, and synthetic labeled motion.

The on-disk format is a small JSON schema ("natmotion/1") carrying an action
label, frame rate, a kinematic tree, and per-frame per-joint rotations as
either unit quaternions or exponential maps. Everything converges to
hemisphere-canonical quaternions in memory.

The synthetic generator drives each joint with a single sinusoid in
axis-angle space. Classes occupy disjoint frequency bands (all slow enough
that a prediction horizon stays inside a quarter period) and disjoint
amplitude ranges, so both a spectral oracle and a learned classifier have
signal to work with.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .skeleton import (
    KinematicTree,
    canonicalize_hemisphere,
    quat_from_expmap,
)

SCHEMA = "natmotion/1"

FREQ_RANGE = (0.05, 0.24)   # Hz; upper edge keeps quarter periods above 1 s
AMP_RANGE = (0.3, 2.4)      # radians of peak joint rotation
BAND_FILL = 2.0 / 3.0       # occupied fraction of each per-class slot


@dataclass
class MotionSequence:
    action: str
    fps: float
    tree: KinematicTree
    frames: np.ndarray  # (T, J, 4) hemisphere-canonical unit quaternions


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window extraction: N given frames, M target frames."""

    given: int = 50
    horizon: int = 10
    stride: int = 5

    def __post_init__(self):
        if self.given < 1:
            raise ValueError(f"need at least 1 given frame, got {self.given}")
        if self.horizon < 1:
            raise ValueError(f"need at least 1 target frame, got {self.horizon}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")


def _slot_bands(lo, hi, count, fill):
    slot = (hi - lo) / count
    return tuple(
        (lo + c * slot, lo + c * slot + fill * slot) for c in range(count)
    )


def default_freq_bands(class_count):
    """Disjoint per-class frequency bands, all below 0.25 Hz."""
    return _slot_bands(*FREQ_RANGE, class_count, BAND_FILL)


def default_amp_ranges(class_count):
    """Disjoint per-class peak-amplitude ranges in radians."""
    return _slot_bands(*AMP_RANGE, class_count, BAND_FILL)


def _check_bands(bands, count, what, strict=True):
    if len(bands) != count:
        raise DataError(f"need one {what} range per class, got {len(bands)} for {count}")
    for lo, hi in bands:
        if not np.isfinite([lo, hi]).all() or lo < 0:
            raise DataError(f"invalid {what} range ({lo}, {hi})")
        if (strict and not lo < hi) or (not strict and not lo <= hi):
            raise DataError(f"invalid {what} range ({lo}, {hi})")
    ordered = sorted(bands)
    for (_, h1), (l2, _) in zip(ordered[:-1], ordered[1:]):
        if h1 >= l2:
            raise DataError(f"{what} ranges overlap: {bands}")


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 3
    joints: int = 8
    sequences_per_class: int = 60
    frames: int = 120
    fps: float = 25.0
    noise: float = 0.0
    seed: int = 0
    freq_bands: tuple = None
    amp_ranges: tuple = None

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError(f"need at least 2 classes, got {self.class_count}")
        if self.joints < 1 or self.sequences_per_class < 1 or self.frames < 2:
            raise ValueError("joints, sequences_per_class and frames must be positive")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.noise < 0:
            raise ValueError(f"noise must be non-negative, got {self.noise}")
        if self.freq_bands is None:
            object.__setattr__(self, "freq_bands", default_freq_bands(self.class_count))
        if self.amp_ranges is None:
            object.__setattr__(self, "amp_ranges", default_amp_ranges(self.class_count))
        _check_bands(self.freq_bands, self.class_count, "frequency", strict=True)
        # zero-amplitude classes are allowed (constant identity rotations)
        if self.class_count != len(self.amp_ranges):
            raise DataError(
                f"need one amplitude range per class, got {len(self.amp_ranges)}"
            )
        for lo, hi in self.amp_ranges:
            if not np.isfinite([lo, hi]).all() or lo < 0 or lo > hi:
                raise DataError(f"invalid amplitude range ({lo}, {hi})")


def class_label(c):
    return f"class{c:02d}"


def action_index_map(seqs):
    """Stable mapping from action label to class index (sorted labels)."""
    return {a: i for i, a in enumerate(sorted({s.action for s in seqs}))}


# -------------------------------------------------------------- sequence io


def _require(cond, msg):
    if not cond:
        raise DataError(msg)


def load_sequence(path, drop_joints=()):
    """Load one sequence file to canonical quaternions.

    drop_joints removes rows used for global translation or rotation; the
    remaining joints keep their order and reattach to the nearest kept
    ancestor (or become roots).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), f"{path}: top level must be an object")
    for key in ("schema", "action", "fps", "joints", "parents", "repr", "frames"):
        _require(key in doc, f"{path}: missing field {key!r}")
    _require(doc["schema"] == SCHEMA, f"{path}: unsupported schema {doc['schema']!r}")
    _require(doc["repr"] in ("quat", "expmap"), f"{path}: unknown repr {doc['repr']!r}")
    fps = doc["fps"]
    _require(isinstance(fps, (int, float)) and fps > 0, f"{path}: bad fps {fps!r}")

    parents = doc["parents"]
    _require(
        isinstance(parents, list) and doc["joints"] == len(parents),
        f"{path}: joints field disagrees with parents length",
    )
    try:
        tree = KinematicTree(parents=tuple(parents))
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid tree: {exc}") from exc

    try:
        frames = np.asarray(doc["frames"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: ragged or non-numeric frames: {exc}") from exc
    width = 4 if doc["repr"] == "quat" else 3
    _require(
        frames.ndim == 3 and frames.shape[1] == len(parents) and frames.shape[2] == width,
        f"{path}: frames must be (T, {len(parents)}, {width}), got {frames.shape}",
    )
    _require(bool(np.isfinite(frames).all()), f"{path}: frames contain NaN or inf")

    if doc["repr"] == "expmap":
        frames = quat_from_expmap(frames)
    frames = canonicalize_hemisphere(frames)

    if drop_joints:
        keep = [j for j in range(len(parents)) if j not in set(drop_joints)]
        _require(keep, f"{path}: cannot drop every joint")
        remap = {old: new for new, old in enumerate(keep)}
        new_parents = []
        for old in keep:
            p = parents[old]
            while p != -1 and p not in remap:
                p = parents[p]
            new_parents.append(remap[p] if p != -1 else -1)
        try:
            tree = KinematicTree(parents=tuple(new_parents))
        except ValueError as exc:
            raise DataError(f"{path}: dropping joints broke the tree: {exc}") from exc
        frames = frames[:, keep].copy()

    return MotionSequence(action=str(doc["action"]), fps=float(fps), tree=tree,
                          frames=frames)


def save_sequence(path, seq):
    doc = {
        "schema": SCHEMA,
        "action": seq.action,
        "fps": seq.fps,
        "joints": seq.tree.joint_count,
        "parents": list(seq.tree.parents),
        "repr": "quat",
        "frames": np.asarray(seq.frames).tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_dataset(directory, drop_joints=()):
    """All sequence files in a directory, sorted by name; index.json skipped."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory {directory} does not exist")
    out = []
    for path in sorted(directory.glob("*.json")):
        if path.name == "index.json":
            continue
        out.append(load_sequence(path, drop_joints=drop_joints))
    if not out:
        raise DataError(f"no sequence files in {directory}")
    return out


def save_dataset(directory, seqs, index=True):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, seq in enumerate(seqs):
        name = f"{i:04d}_{seq.action}.json"
        save_sequence(directory / name, seq)
        names.append(name)
    if index:
        summary = {
            "schema": SCHEMA,
            "count": len(names),
            "files": names,
            "actions": sorted({s.action for s in seqs}),
        }
        (directory / "index.json").write_text(json.dumps(summary, indent=2))


# ------------------------------------------------------------ preprocessing


def downsample(seq, target_fps):
    """Keep every (fps / target_fps)-th frame starting at frame 0."""
    ratio = seq.fps / target_fps
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
        raise DataError(
            f"cannot downsample {seq.fps} fps to {target_fps} fps (non-integer step)"
        )
    step = int(round(ratio))
    return MotionSequence(action=seq.action, fps=float(target_fps), tree=seq.tree,
                          frames=seq.frames[::step].copy())


def make_windows(seq, spec):
    """(given, target, label) triples at the requested stride; copies, no views."""
    n, m = spec.given, spec.horizon
    t = seq.frames.shape[0]
    out = []
    for start in range(0, t - n - m + 1, spec.stride):
        x = seq.frames[start:start + n].copy()
        y = seq.frames[start + n:start + n + m].copy()
        out.append((x, y, seq.action))
    return out


# --------------------------------------------------------- synthetic motion


def generate_synthetic(spec):
    """Labeled sinusoidal motion, class-major order, deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    tree = _synthetic_tree(spec.joints)
    t_grid = np.arange(spec.frames) / spec.fps
    out = []
    for c in range(spec.class_count):
        f_lo, f_hi = spec.freq_bands[c]
        a_lo, a_hi = spec.amp_ranges[c]
        for _ in range(spec.sequences_per_class):
            freqs = rng.uniform(f_lo, f_hi, size=spec.joints)
            amps = rng.uniform(a_lo, a_hi, size=spec.joints)
            phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.joints)
            axes = rng.normal(size=(spec.joints, 3))
            axes /= np.linalg.norm(axes, axis=1, keepdims=True)
            angle = amps * np.sin(
                2.0 * np.pi * freqs * t_grid[:, None] + phases
            )  # (T, J)
            v = angle[:, :, None] * axes[None, :, :]
            if spec.noise > 0:
                v = v + rng.normal(scale=spec.noise, size=v.shape)
            frames = canonicalize_hemisphere(quat_from_expmap(v))
            out.append(MotionSequence(action=class_label(c), fps=spec.fps,
                                      tree=tree, frames=frames))
    return out


def _synthetic_tree(joints):
    # rough binary tree: parent of j is (j - 1) // 2
    parents = tuple(-1 if j == 0 else (j - 1) // 2 for j in range(joints))
    return KinematicTree(parents=parents)


# ------------------------------------------------------------------- oracle


def dominant_frequency(signal, fps, f_lo, f_hi, step=5e-4):
    """Fine-grid single-sinusoid fit; returns the best-fitting frequency.

    Least squares of a*sin + b*cos + c at each grid frequency; with a clean
    tone the residual vanishes only near the true frequency, which works even
    when the record covers a fraction of one period.
    """
    t = np.arange(len(signal)) / fps
    grid = np.arange(f_lo, f_hi + step / 2, step)
    best_f, best_r = grid[0], np.inf
    for f in grid:
        w = 2.0 * np.pi * f * t
        design = np.column_stack([np.sin(w), np.cos(w), np.ones_like(w)])
        _, res, rank, _ = np.linalg.lstsq(design, signal, rcond=None)
        r = res[0] if rank == 3 and res.size else np.inf
        if r < best_r:
            best_f, best_r = f, r
    return float(best_f)


def _joint_signal(v):
    # project the axis-angle trajectory onto its principal direction
    _, _, vt = np.linalg.svd(v, full_matrices=False)
    return v @ vt[0]


def oracle_classify(seq, freq_bands):
    """Class index by per-joint dominant frequency, majority over joints."""
    from .skeleton import expmap_from_quat

    v = expmap_from_quat(seq.frames)  # (T, J, 3)
    lo = min(b[0] for b in freq_bands)
    hi = max(b[1] for b in freq_bands)
    votes = np.zeros(len(freq_bands), dtype=int)
    for j in range(v.shape[1]):
        s = _joint_signal(v[:, j])
        if np.std(s) < 1e-12:
            continue
        f = dominant_frequency(s, seq.fps, max(lo * 0.5, 1e-3), hi * 1.2)
        dist = [
            0.0 if b_lo <= f <= b_hi else min(abs(f - b_lo), abs(f - b_hi))
            for b_lo, b_hi in freq_bands
        ]
        votes[int(np.argmin(dist))] += 1
    if votes.sum() == 0:
        raise DataError("no oscillating joints to classify")
    return int(np.argmax(votes))
