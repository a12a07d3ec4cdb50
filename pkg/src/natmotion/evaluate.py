"""Metrics, the zero-velocity baseline, eval reports, and the
error-accumulation experiment.

The error metric converts poses to Euler angles, concatenates all joints,
and averages the per-window L2 norm of the difference at each horizon's
frame. Horizon milliseconds map to frame indices by exact arithmetic; a
non-integer product is an error, never rounded.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dt
from . import model as md
from . import tensor as nt
from .errors import DataError
from .skeleton import EULER_ORDERS, quat_to_euler

ALLOWED_HORIZONS = (80, 160, 320, 400, 560, 1000)


def horizon_frame(ms, fps):
    """1-based frame index for a horizon in milliseconds; exact or rejected."""
    t = ms * fps / 1000.0
    frame = int(round(t))
    if abs(t - frame) > 1e-9 or frame < 1:
        raise DataError(f"horizon {ms} ms is not a whole frame at {fps} fps (got {t})")
    return frame


def mean_joint_error(pred, truth, horizons, fps, order="zyx"):
    """Per-horizon mean joint error in Euler-angle space.

    pred, truth: (W, M, J, 4) stacks of predicted windows. At each horizon's
    frame both poses become Euler angles, the 3J-dimensional difference is
    reduced to its L2 norm per window, and windows average with equal weight.
    """
    if order not in EULER_ORDERS:
        raise DataError(f"unknown euler order {order!r}")
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.ndim == 3:
        pred = pred[None]
        truth = truth[None]
    w, m = pred.shape[0], pred.shape[1]
    out = {}
    for ms in horizons:
        if ms not in ALLOWED_HORIZONS:
            raise DataError(f"horizon {ms} ms not in {ALLOWED_HORIZONS}")
        frame = horizon_frame(ms, fps)
        if frame > m:
            raise DataError(f"horizon {ms} ms needs frame {frame} but only {m} predicted")
        ep = quat_to_euler(pred[:, frame - 1], order)
        et = quat_to_euler(truth[:, frame - 1], order)
        diff = (ep - et).reshape(w, -1)
        out[ms] = float(np.mean(np.linalg.norm(diff, axis=1)))
    return out


def zero_velocity_predict(x, m):
    """Repeat the last given pose for every future frame."""
    x = np.asarray(x)
    last = x[..., -1:, :, :]
    reps = (1,) * (x.ndim - 3) + (m, 1, 1)
    return np.tile(last, reps)


# ------------------------------------------------------------- model passes


def _batched(fn, xs, chunk):
    parts = [fn(xs[i:i + chunk]) for i in range(0, xs.shape[0], chunk)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


def _nat_forward(params, cfg, m, chunk):
    def fn(xb):
        pred, probs = md.nat_predict(xb, params, cfg, m)
        return pred, probs
    return lambda xs: _batched(fn, xs, chunk)


def recognition_accuracy(xs, labels, params, cfg, horizon, chunk=32):
    """Accuracy of the classifier on real windows (o1) and on re-encoded
    predictions (o2). Argmax ties resolve to the lowest class index."""
    if labels is None:
        raise DataError("recognition accuracy needs labeled windows")
    labels = np.asarray(labels)
    xs = np.asarray(xs)

    def fn(xb):
        mode = md.Mode()
        xt = nt.Tensor(xb)
        c = md.encode_context(xt, params, cfg, mode)
        o1 = md.arc_classify(c, params, cfg, mode)
        pred = md.decode_frames(c, nt.Tensor(xb[:, -1]), params, cfg, mode,
                                range(1, horizon + 1))
        c2 = md.encode_context(pred, params, cfg, mode)
        o2 = md.arc_classify(c2, params, cfg, mode)
        return o1.data, o2.data

    p1, p2 = _batched(fn, xs, chunk)
    acc1 = float(np.mean(np.argmax(p1, axis=1) == labels))
    acc2 = float(np.mean(np.argmax(p2, axis=1) == labels))
    return acc1, acc2


# ------------------------------------------------------------------ report


@dataclass
class EvalReport:
    horizons: dict
    zero_velocity: dict
    per_action: dict
    acc_o1: float
    acc_o2: float
    metadata: dict


def evaluate_model(params, cfg, dataset, horizons, euler_order="zyx", given=50,
                   stride=5, checkpoint_hash=None, chunk=32):
    """Full evaluation over sliding windows of a labeled dataset."""
    if not dataset:
        raise DataError("empty dataset")
    fps = dataset[0].fps
    if any(seq.fps != fps for seq in dataset):
        raise DataError("sequences disagree on fps")
    frames_needed = [horizon_frame(ms, fps) for ms in horizons]
    for ms in horizons:
        if ms not in ALLOWED_HORIZONS:
            raise DataError(f"horizon {ms} ms not in {ALLOWED_HORIZONS}")
    m = max(frames_needed)

    spec = dt.WindowSpec(given=given, horizon=m, stride=stride)
    label_map = dt.action_index_map(dataset)
    xs, ys, actions = [], [], []
    for seq in dataset:
        for x, y, action in dt.make_windows(seq, spec):
            xs.append(x)
            ys.append(y)
            actions.append(action)
    if not xs:
        raise DataError(
            f"no evaluation windows: sequences shorter than {given}+{m} frames"
        )
    xs, ys = np.stack(xs), np.stack(ys)
    labels = np.array([label_map[a] for a in actions])

    pred, _ = _nat_forward(params, cfg, m, chunk)(xs)
    horizons = tuple(horizons)
    overall = mean_joint_error(pred, ys, horizons, fps, euler_order)
    baseline = mean_joint_error(zero_velocity_predict(xs, m), ys, horizons, fps,
                                euler_order)
    per_action = {}
    for action in sorted(set(actions)):
        mask = np.array([a == action for a in actions])
        per_action[action] = mean_joint_error(pred[mask], ys[mask], horizons,
                                              fps, euler_order)
    acc1, acc2 = recognition_accuracy(xs, labels, params, cfg, m, chunk=chunk)

    metadata = {
        "euler_order": euler_order,
        "fps": fps,
        "checkpoint_sha256": checkpoint_hash,
        "averaging": "per-window",
        "given": given,
        "stride": stride,
        "windows": int(xs.shape[0]),
        "horizon_frames": dict(zip(map(str, horizons), frames_needed)),
    }
    return EvalReport(horizons=overall, zero_velocity=baseline,
                      per_action=per_action, acc_o1=acc1, acc_o2=acc2,
                      metadata=metadata)


def report_to_dict(report):
    return {
        "horizons": {str(k): v for k, v in report.horizons.items()},
        "zero_velocity": {str(k): v for k, v in report.zero_velocity.items()},
        "per_action": {
            a: {str(k): v for k, v in errs.items()}
            for a, errs in report.per_action.items()
        },
        "acc_o1": report.acc_o1,
        "acc_o2": report.acc_o2,
        "metadata": report.metadata,
    }


def save_report(path, report):
    Path(path).write_text(
        json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"
    )


# -------------------------------------------------------- error accumulation


@dataclass
class DeviationCurves:
    frames: list
    nat: np.ndarray
    ar: np.ndarray


def error_accumulation(nat_params, nat_cfg, ar_params, ar_cfg, xs, delta, m,
                       chunk=32):
    """Per-frame deviation caused by perturbing the first generated frame.

    The non-autoregressive model is decoded twice in eval mode; the copy has
    delta added to its first frame's output. The autoregressive baseline is
    rolled out twice, the copy with delta injected into the first regressor
    output so it feeds forward through the recurrence. Curves report the mean
    absolute deviation per frame.
    """
    xs = np.asarray(xs)

    nat_fwd = _nat_forward(nat_params, nat_cfg, m, chunk)
    base_nat, _ = nat_fwd(xs)
    pert_nat, _ = nat_fwd(xs)  # fresh pass, then perturb its first frame
    pert_nat = pert_nat.copy()
    pert_nat[:, 0] += delta
    nat_dev = np.mean(np.abs(pert_nat - base_nat), axis=(0, 2, 3))

    base_ar = _batched(lambda xb: md.ar_rollout(xb, ar_params, ar_cfg, m), xs, chunk)
    pert_ar = _batched(
        lambda xb: md.ar_rollout(xb, ar_params, ar_cfg, m, perturb_first=delta),
        xs, chunk,
    )
    ar_dev = np.mean(np.abs(pert_ar - base_ar), axis=(0, 2, 3))

    return DeviationCurves(frames=list(range(1, m + 1)), nat=nat_dev, ar=ar_dev)


def write_curves_csv(path, curves):
    lines = ["frame,nat,ar"]
    for i, frame in enumerate(curves.frames):
        lines.append(f"{frame},{float(curves.nat[i])!r},{float(curves.ar[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
