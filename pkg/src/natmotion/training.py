"""Losses and the multitask training loop.

Per iteration: sample a minibatch of windows, encode the given frames, decode
all future frames in parallel, classify the context, re-encode the predicted
frames and classify again (the cycle pass), combine the four losses, backprop
through everything including the cycle path, clip the global gradient norm,
and take one ADAM step. The effective learning rate decays once per epoch,
an epoch being dataset-size/batch iterations.

The loop is deterministic for a fixed seed: one generator drives minibatch
sampling and dropout masks in a fixed consumption order, and the loss log
serializes with repr so identical runs produce identical CSV bytes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dt
from . import model as md
from . import tensor as nt
from .errors import DataError, NumericError
from .optim import AdamConfig, adam_init, adam_step, clip_grad_norm, effective_lr

logger = logging.getLogger(__name__)

CLS_FLOOR = 1e-12
CSV_HEADER = "iteration,recst,pnlty,cls1,cls2,total,lr,grad_norm"


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 600
    batch: int = 60
    base_lr: float = 0.001
    decay: float = 0.9995
    clip: float = 0.1
    lambda_pnlty: float = 0.01
    lambda_cls: float = 0.01
    seed: int = 0
    given: int = 50
    horizon: int = 10
    stride: int = 5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"need at least 1 iteration, got {self.iterations}")
        if self.batch < 1:
            raise ValueError(f"batch must be at least 1, got {self.batch}")
        if self.lambda_pnlty < 0 or self.lambda_cls < 0:
            raise ValueError("loss weights must be non-negative")
        if self.clip <= 0:
            raise ValueError(f"clip norm must be positive, got {self.clip}")
        if self.base_lr <= 0 or not 0 < self.decay <= 1:
            raise ValueError("invalid learning-rate schedule")


@dataclass(frozen=True)
class LossBreakdown:
    recst: float
    pnlty: float
    cls1: float
    cls2: float
    total: float


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    recst: float
    pnlty: float
    cls1: float
    cls2: float
    total: float
    lr: float
    grad_norm: float


# ------------------------------------------------------------------- losses


def loss_recst(pred, truth):
    """Mean over frames and joints of the L1 distance between rotations.

    The absolute differences of the four quaternion components are summed per
    joint-frame, then averaged over every joint, frame, and batch sample.
    """
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    diff = nt.absolute(nt.sub(pred, truth))
    return nt.mul(nt.reduce_mean(diff), nt.Tensor(float(pred.shape[-1])))


def loss_pnlty(pred):
    """Mean squared deviation of the squared quaternion norm from one."""
    sq = nt.mul(pred, pred)
    norm2 = nt.reduce_sum(sq, axis=pred.ndim - 1)
    dev = nt.sub(norm2, nt.Tensor(1.0))
    return nt.reduce_mean(nt.mul(dev, dev))


def loss_cls(probs, labels):
    """Mean negative log probability of the true class.

    Returns (loss, clamped); clamped reports whether any picked probability
    hit the log floor, which signals a saturated classifier.
    """
    if probs.ndim == 1:
        probs = nt.reshape(probs, (1,) + probs.shape)
        labels = np.asarray([labels], dtype=np.int64)
    else:
        labels = np.asarray(labels, dtype=np.int64)
    picked = nt.pick(probs, labels)
    clamped = bool(np.any(picked.data < CLS_FLOOR))
    return nt.reduce_mean(nt.neg(nt.log(nt.clip_floor(picked, CLS_FLOOR)))), clamped


def combine_losses(recst, pnlty, cls1, cls2, lambda_pnlty, lambda_cls):
    """Weighted total for backprop plus a plain-float breakdown.

    Terms with a zero weight (or missing tensors) stay out of the objective
    graph entirely; their values are still reported when available.
    """
    total = recst
    if lambda_pnlty > 0 and pnlty is not None:
        total = nt.add(total, nt.mul(pnlty, nt.Tensor(lambda_pnlty)))
    if lambda_cls > 0 and cls1 is not None and cls2 is not None:
        total = nt.add(total, nt.mul(nt.add(cls1, cls2), nt.Tensor(lambda_cls)))
    breakdown = LossBreakdown(
        recst=float(recst.data),
        pnlty=0.0 if pnlty is None else float(pnlty.data),
        cls1=0.0 if cls1 is None else float(cls1.data),
        cls2=0.0 if cls2 is None else float(cls2.data),
        total=float(total.data),
    )
    return total, breakdown


# ------------------------------------------------------------ training loop


def _collect_windows(dataset, cfg):
    spec = dt.WindowSpec(given=cfg.given, horizon=cfg.horizon, stride=cfg.stride)
    xs, ys, labels = [], [], []
    for seq in dataset:
        for x, y, action in dt.make_windows(seq, spec):
            xs.append(x)
            ys.append(y)
            labels.append(action)
    if not xs:
        raise DataError(
            f"no training windows: sequences shorter than given+horizon "
            f"({cfg.given}+{cfg.horizon})"
        )
    return np.stack(xs), np.stack(ys), labels


def _nat_iteration(xb, yb, lb, params, model_cfg, cfg, rng):
    mode = md.Mode(train=True, rng=rng)
    c = md.encode_context(nt.Tensor(xb), params, model_cfg, mode)
    pred = md.decode_frames(c, nt.Tensor(xb[:, -1]), params, model_cfg, mode,
                            range(1, cfg.horizon + 1))
    recst = loss_recst(pred, nt.Tensor(yb))
    pnlty = loss_pnlty(pred)
    cls1 = cls2 = None
    clamped = False
    if cfg.lambda_cls > 0:
        o1 = md.arc_classify(c, params, model_cfg, mode)
        cls1, f1 = loss_cls(o1, lb)
        # cycle pass: the prediction goes back through the same encoder and
        # classifier, and its gradient flows into the decoder
        c2 = md.encode_context(pred, params, model_cfg, mode)
        o2 = md.arc_classify(c2, params, model_cfg, mode)
        cls2, f2 = loss_cls(o2, lb)
        clamped = f1 or f2
    total, bd = combine_losses(recst, pnlty, cls1, cls2,
                               cfg.lambda_pnlty, cfg.lambda_cls)
    return total, bd, clamped


def _ar_iteration(xb, yb, lb, params, model_cfg, cfg, rng):
    del lb
    b, m = xb.shape[0], cfg.horizon
    j = model_cfg.tree.joint_count
    width = md.ENCODER_CHANNELS[-1]
    mode = md.Mode(train=True, rng=rng)
    c = md.encode_context(nt.Tensor(xb), params, model_cfg, mode)
    # teacher forcing: every step conditions on the ground-truth previous pose
    prev = np.concatenate([xb[:, -1:], yb[:, :-1]], axis=1)
    prev_flat = nt.Tensor(prev.reshape(b * m, j * md.QUAT_DIM))
    c_tiled = nt.reshape(
        nt.broadcast_to(nt.reshape(c, (b, 1, width)), (b, m, width)),
        (b * m, width),
    )
    r = md.ar_regressor(prev_flat, c_tiled, params, model_cfg)
    pred = nt.add(nt.reshape(r, (b, m, j, md.QUAT_DIM)), nt.Tensor(prev))
    recst = loss_recst(pred, nt.Tensor(yb))
    pnlty = loss_pnlty(pred)
    total, bd = combine_losses(recst, pnlty, None, None,
                               cfg.lambda_pnlty, 0.0)
    return total, bd, False


def train(dataset, model_cfg, cfg, params=None, log_path=None, model_kind="nat"):
    """Run the training loop; returns (params, per-iteration records)."""
    if model_kind not in ("nat", "ar"):
        raise ValueError(f"unknown model kind {model_kind!r}")
    if not dataset:
        raise DataError("empty dataset")
    label_map = dt.action_index_map(dataset)
    if model_kind == "nat" and cfg.lambda_cls > 0 and len(label_map) > model_cfg.class_count:
        raise DataError(
            f"dataset has {len(label_map)} actions but the model only has "
            f"{model_cfg.class_count} classes"
        )
    xs, ys, actions = _collect_windows(dataset, cfg)
    lb = np.array([label_map[a] for a in actions], dtype=np.int64)

    if params is None:
        init = md.init_params if model_kind == "nat" else md.init_ar_params
        params = init(model_cfg, cfg.seed)
    state = adam_init(AdamConfig(base_lr=cfg.base_lr, decay_per_epoch=cfg.decay))
    rng = np.random.default_rng(cfg.seed)
    step = _nat_iteration if model_kind == "nat" else _ar_iteration
    iters_per_epoch = max(1, xs.shape[0] // cfg.batch)

    records = []
    warned = False
    for it in range(cfg.iterations):
        epoch = it // iters_per_epoch
        idx = rng.integers(0, xs.shape[0], size=cfg.batch)
        with nt.Tape() as tape:
            total, bd, clamped = step(xs[idx], ys[idx], lb[idx], params,
                                      model_cfg, cfg, rng)
        if not np.isfinite(bd.total):
            raise NumericError(
                f"non-finite loss at iteration {it}: recst={bd.recst} "
                f"pnlty={bd.pnlty} cls1={bd.cls1} cls2={bd.cls2}"
            )
        grads = nt.backward(tape, total)
        grads, norm = clip_grad_norm(grads, cfg.clip)
        adam_step(params.weights, grads, state, epoch)
        if clamped and not warned:
            logger.warning("classifier probability clamped at %g", CLS_FLOOR)
            warned = True
        records.append(IterationRecord(
            iteration=it, recst=bd.recst, pnlty=bd.pnlty, cls1=bd.cls1,
            cls2=bd.cls2, total=bd.total,
            lr=effective_lr(state.config, epoch), grad_norm=norm,
        ))
    if log_path is not None:
        write_loss_csv(log_path, records)
    return params, records


def write_loss_csv(path, records):
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.iteration},{r.recst!r},{r.pnlty!r},{r.cls1!r},{r.cls2!r},"
            f"{r.total!r},{r.lr!r},{r.grad_norm!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
