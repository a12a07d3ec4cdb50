"""Sequence file format, preprocessing, windowing, synthetic generator, and
the frequency-band oracle classifier."""

import json

import numpy as np
import pytest

from natmotion import data as dt
from natmotion import skeleton as sk
from natmotion.errors import DataError

CHAIN4 = (-1, 0, 1, 2)


def _random_quat_frames(rng, t, j):
    v = rng.uniform(-0.8, 0.8, size=(t, j, 3))
    q = sk.quat_from_expmap(v)
    return sk.canonicalize_hemisphere(q)


def _write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return path


def _quat_doc(frames, parents=CHAIN4, action="walk", fps=25.0):
    return {
        "schema": "natmotion/1",
        "action": action,
        "fps": fps,
        "joints": len(parents),
        "parents": list(parents),
        "repr": "quat",
        "frames": np.asarray(frames).tolist(),
    }


# ------------------------------------------------------------ sequence files


def test_roundtrip_is_value_identical(tmp_path):
    rng = np.random.default_rng(0)
    frames = _random_quat_frames(rng, 7, 4)
    seq = dt.MotionSequence(
        action="walk", fps=25.0, tree=sk.KinematicTree(parents=CHAIN4), frames=frames
    )
    path = tmp_path / "seq.json"
    dt.save_sequence(path, seq)
    back = dt.load_sequence(path)
    assert back.action == "walk"
    assert back.fps == 25.0
    assert back.tree.parents == CHAIN4
    assert np.max(np.abs(back.frames - frames)) < 1e-12


def test_expmap_zeros_become_identity_quats(tmp_path):
    doc = _quat_doc(np.zeros((3, 4, 3)))
    doc["repr"] = "expmap"
    path = _write_doc(tmp_path / "e.json", doc)
    seq = dt.load_sequence(path)
    expected = np.zeros((3, 4, 4))
    expected[:, :, 0] = 1.0
    assert np.array_equal(seq.frames, expected)


def test_canonical_quat_input_loaded_verbatim(tmp_path):
    rng = np.random.default_rng(1)
    frames = _random_quat_frames(rng, 5, 4)
    path = _write_doc(tmp_path / "q.json", _quat_doc(frames))
    seq = dt.load_sequence(path)
    assert np.array_equal(seq.frames, frames)


def test_hemisphere_fixed_on_load(tmp_path):
    rng = np.random.default_rng(2)
    frames = _random_quat_frames(rng, 6, 4)
    flipped = frames.copy()
    flipped[3:] *= -1.0
    path = _write_doc(tmp_path / "f.json", _quat_doc(flipped))
    seq = dt.load_sequence(path)
    dots = np.sum(seq.frames[:-1] * seq.frames[1:], axis=-1)
    assert np.all(dots >= 0)
    assert np.allclose(seq.frames, frames, atol=1e-15)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(schema="natmotion/2"),
        lambda d: d.update(joints=3),
        lambda d: d.update(repr="euler"),
        lambda d: d.update(parents=[-1, 0, 1, 1000]),
        lambda d: d.update(parents=[0, 0, 1, 2]),
        lambda d: d.update(fps=0),
        lambda d: d.update(frames=[[[1.0]]]),
        lambda d: d.pop("action"),
    ],
)
def test_schema_violations_rejected(tmp_path, mutate):
    doc = _quat_doc(_random_quat_frames(np.random.default_rng(3), 4, 4))
    mutate(doc)
    path = _write_doc(tmp_path / "bad.json", doc)
    with pytest.raises(DataError):
        dt.load_sequence(path)


def test_expmap_width_must_be_three(tmp_path):
    doc = _quat_doc(_random_quat_frames(np.random.default_rng(4), 4, 4))
    doc["repr"] = "expmap"  # frames still carry 4 numbers per joint
    path = _write_doc(tmp_path / "bad.json", doc)
    with pytest.raises(DataError):
        dt.load_sequence(path)


def test_nan_frames_rejected(tmp_path):
    frames = _random_quat_frames(np.random.default_rng(5), 4, 4)
    frames[2, 1, 0] = np.nan
    path = _write_doc(tmp_path / "nan.json", _quat_doc(frames))
    with pytest.raises(DataError):
        dt.load_sequence(path)


def test_unparseable_json_rejected(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    with pytest.raises(DataError):
        dt.load_sequence(path)


def test_drop_joints_remaps_parents(tmp_path):
    rng = np.random.default_rng(6)
    frames = _random_quat_frames(rng, 5, 4)
    path = _write_doc(tmp_path / "d.json", _quat_doc(frames))
    seq = dt.load_sequence(path, drop_joints=(1,))
    # chain 0-1-2-3 with joint 1 removed: old 2 hangs off 0
    assert seq.tree.parents == (-1, 0, 1)
    assert np.array_equal(seq.frames, frames[:, [0, 2, 3]])


def test_drop_root_rehomes_children(tmp_path):
    frames = _random_quat_frames(np.random.default_rng(7), 4, 4)
    path = _write_doc(tmp_path / "r.json", _quat_doc(frames))
    seq = dt.load_sequence(path, drop_joints=(0,))
    assert seq.tree.parents == (-1, 0, 1)
    assert np.array_equal(seq.frames, frames[:, 1:])


# ------------------------------------------------------------- downsampling


def _make_seq(t=100, j=4, fps=50.0, rng=None, action="walk"):
    rng = rng or np.random.default_rng(8)
    return dt.MotionSequence(
        action=action, fps=fps, tree=sk.KinematicTree(parents=CHAIN4[:j]),
        frames=_random_quat_frames(rng, t, j),
    )


def test_downsample_keeps_every_kth_frame():
    seq = _make_seq(t=100, fps=50.0)
    out = dt.downsample(seq, 25.0)
    assert out.fps == 25.0
    assert out.frames.shape[0] == 50
    assert np.array_equal(out.frames, seq.frames[::2])


def test_downsample_identity_when_rates_match():
    seq = _make_seq(t=40, fps=25.0)
    out = dt.downsample(seq, 25.0)
    assert out.fps == 25.0
    assert np.array_equal(out.frames, seq.frames)


def test_downsample_rejects_non_divisible():
    seq = _make_seq(t=40, fps=50.0)
    with pytest.raises(DataError):
        dt.downsample(seq, 30.0)
    with pytest.raises(DataError):
        dt.downsample(seq, 60.0)


# ---------------------------------------------------------------- windowing


def test_window_counts():
    spec = dt.WindowSpec(given=5, horizon=3, stride=1)
    assert len(dt.make_windows(_make_seq(t=8), spec)) == 1
    assert len(dt.make_windows(_make_seq(t=10), spec)) == 3
    assert dt.make_windows(_make_seq(t=7), spec) == []


def test_window_contents_and_label():
    seq = _make_seq(t=12, action="jump")
    spec = dt.WindowSpec(given=5, horizon=3, stride=2)
    wins = dt.make_windows(seq, spec)
    assert len(wins) == 3  # starts 0, 2, 4
    for k, (x, y, label) in enumerate(wins):
        start = 2 * k
        assert label == "jump"
        assert np.array_equal(x, seq.frames[start:start + 5])
        assert np.array_equal(y, seq.frames[start + 5:start + 8])
        assert np.array_equal(x[-1], seq.frames[start + 4])


def test_windows_do_not_alias():
    seq = _make_seq(t=10)
    spec = dt.WindowSpec(given=5, horizon=3, stride=1)
    wins = dt.make_windows(seq, spec)
    before = wins[1][0].copy()
    keep = seq.frames.copy()
    wins[0][0][:] = 0.0
    assert np.array_equal(wins[1][0], before)
    assert np.array_equal(seq.frames, keep)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        dt.WindowSpec(given=0, horizon=3, stride=1)
    with pytest.raises(ValueError):
        dt.WindowSpec(given=5, horizon=0, stride=1)
    with pytest.raises(ValueError):
        dt.WindowSpec(given=5, horizon=3, stride=0)


# --------------------------------------------------------- synthetic motion


def test_default_bands_disjoint_and_slow():
    for c in (2, 3, 5):
        bands = dt.default_freq_bands(c)
        assert len(bands) == c
        for lo, hi in bands:
            assert 0 < lo < hi < 0.25
        for (l1, h1), (l2, h2) in zip(bands[:-1], bands[1:]):
            assert h1 < l2


def test_synthetic_deterministic_and_shaped():
    spec = dt.SyntheticSpec(class_count=3, joints=8, sequences_per_class=2,
                            frames=40, seed=9)
    a = dt.generate_synthetic(spec)
    b = dt.generate_synthetic(spec)
    assert len(a) == 6
    for sa, sb in zip(a, b):
        assert sa.action == sb.action
        assert np.array_equal(sa.frames, sb.frames)
        assert sa.frames.shape == (40, 8, 4)
        assert sa.fps == 25.0
        assert sa.tree.joint_count == 8
    c = dt.generate_synthetic(dt.SyntheticSpec(class_count=3, joints=8,
                                               sequences_per_class=2, frames=40,
                                               seed=10))
    assert any(not np.array_equal(sa.frames, sc.frames) for sa, sc in zip(a, c))


def test_synthetic_labels_and_invariants():
    spec = dt.SyntheticSpec(class_count=3, joints=4, sequences_per_class=2,
                            frames=30, seed=11)
    seqs = dt.generate_synthetic(spec)
    assert [s.action for s in seqs] == [
        "class00", "class00", "class01", "class01", "class02", "class02",
    ]
    for s in seqs:
        norms = np.linalg.norm(s.frames, axis=-1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12
        dots = np.sum(s.frames[:-1] * s.frames[1:], axis=-1)
        assert np.all(dots >= 0)


def test_zero_amplitude_gives_identity_rotations():
    spec = dt.SyntheticSpec(class_count=2, joints=3, sequences_per_class=1,
                            frames=20, seed=12,
                            amp_ranges=((0.0, 0.0), (0.0, 0.0)))
    for s in dt.generate_synthetic(spec):
        expected = np.zeros((20, 3, 4))
        expected[:, :, 0] = 1.0
        assert np.allclose(s.frames, expected, atol=1e-15)


def test_overlapping_bands_rejected():
    with pytest.raises(DataError):
        dt.SyntheticSpec(class_count=2, freq_bands=((0.05, 0.12), (0.10, 0.2)))
    with pytest.raises(DataError):
        dt.SyntheticSpec(class_count=3, freq_bands=((0.05, 0.1), (0.12, 0.2)))
    with pytest.raises(DataError):
        dt.SyntheticSpec(class_count=2, freq_bands=((0.12, 0.05), (0.2, 0.3)))


def test_noise_perturbs_but_stays_valid():
    base = dt.SyntheticSpec(class_count=2, joints=3, sequences_per_class=1,
                            frames=30, seed=13)
    noisy = dt.SyntheticSpec(class_count=2, joints=3, sequences_per_class=1,
                             frames=30, seed=13, noise=0.05)
    s0 = dt.generate_synthetic(base)[0]
    s1 = dt.generate_synthetic(noisy)[0]
    assert not np.array_equal(s0.frames, s1.frames)
    norms = np.linalg.norm(s1.frames, axis=-1)
    assert np.max(np.abs(norms - 1.0)) < 1e-12


# ------------------------------------------------------------------- oracle


def test_dominant_frequency_recovers_pure_tone():
    t = np.arange(120) / 25.0
    s = 0.7 * np.sin(2 * np.pi * 0.137 * t + 0.4)
    f = dt.dominant_frequency(s, fps=25.0, f_lo=0.02, f_hi=0.24)
    assert abs(f - 0.137) < 1e-3


def test_oracle_classifies_noise_free_data_perfectly():
    spec = dt.SyntheticSpec(class_count=3, joints=6, sequences_per_class=6,
                            frames=120, seed=14)
    seqs = dt.generate_synthetic(spec)
    labels = dt.action_index_map(seqs)
    assert labels == {"class00": 0, "class01": 1, "class02": 2}
    for s in seqs:
        assert dt.oracle_classify(s, spec.freq_bands) == labels[s.action]


def test_oracle_on_second_seed():
    # class bands depend on the class count only, never the seed
    spec = dt.SyntheticSpec(class_count=3, joints=6, sequences_per_class=3,
                            frames=120, seed=4242)
    assert spec.freq_bands == dt.default_freq_bands(3)
    labels = dt.action_index_map(dt.generate_synthetic(spec))
    for s in dt.generate_synthetic(spec):
        assert dt.oracle_classify(s, spec.freq_bands) == labels[s.action]


# ------------------------------------------------------------ dataset dirs


def test_dataset_dir_loads_sorted_and_skips_index(tmp_path):
    rng = np.random.default_rng(15)
    names = ["b.json", "a.json", "c.json"]
    for name in names:
        frames = _random_quat_frames(rng, 4, 4)
        _write_doc(tmp_path / name, _quat_doc(frames, action=name))
    (tmp_path / "index.json").write_text(json.dumps({"count": 3}))
    seqs = dt.load_dataset(tmp_path)
    assert [s.action for s in seqs] == ["a.json", "b.json", "c.json"]


def test_dataset_dir_missing_rejected(tmp_path):
    with pytest.raises(DataError):
        dt.load_dataset(tmp_path / "absent")


def test_save_dataset_roundtrip(tmp_path):
    spec = dt.SyntheticSpec(class_count=2, joints=4, sequences_per_class=2,
                            frames=30, seed=16)
    seqs = dt.generate_synthetic(spec)
    out = tmp_path / "ds"
    dt.save_dataset(out, seqs)
    back = dt.load_dataset(out)
    assert len(back) == len(seqs)
    for s1, s2 in zip(back, sorted(seqs, key=lambda s: s.action)):
        assert s1.action == s2.action
        assert np.max(np.abs(s1.frames - s2.frames)) < 1e-12
