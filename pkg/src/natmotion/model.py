"""Context encoder, frame-parallel decoder, action classifier, AR baseline.

The encoder stacks six graph-convolution + temporal-convolution blocks and
mean-pools over time and joints into a 256-d context feature. The decoder
consumes context plus a per-frame positional embedding, tiled across joints,
through six width-1 blocks; each future frame is the seed pose plus the
decoded residual and depends on nothing but (context, seed pose, frame index).

Parameters live in a flat dict keyed by stable path names, which is also the
checkpoint order. Batch normalization keeps running statistics in a separate
buffer dict; only eval mode (running stats) gives per-frame independence.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as nt
from .posenc import PosEncConfig, positional_embedding
from .skeleton import GRAPH_TYPES, KinematicTree, normalized_adjacency

ENCODER_CHANNELS = (64, 64, 128, 128, 256, 256)
DECODER_CHANNELS = (256, 128, 128, 64, 64, 4)
QUAT_DIM = 4
ARC_HIDDEN = (128, 64)
AR_HIDDEN = 256


@dataclass(frozen=True)
class ModelConfig:
    tree: KinematicTree
    class_count: int
    ks_encoder: int = 9
    graph_type: str = "bidirectional"
    graph_seed: int = 0
    posenc: PosEncConfig = field(default_factory=PosEncConfig)
    dropout_rate: float = 0.5
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError(f"need at least 2 action classes, got {self.class_count}")
        if self.ks_encoder < 1 or self.ks_encoder % 2 == 0:
            raise ValueError(f"encoder kernel size must be odd, got {self.ks_encoder}")
        if self.graph_type not in GRAPH_TYPES:
            raise ValueError(f"unknown graph type {self.graph_type!r}")
        if self.posenc.d_model != ENCODER_CHANNELS[-1]:
            raise ValueError(
                f"positional embedding width {self.posenc.d_model} must match "
                f"the context width {ENCODER_CHANNELS[-1]}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class Mode:
    """Forward-pass mode: training toggles batch-stat BN and dropout.

    bn_identity turns normalization into a passthrough so unit tests can
    assert closed-form layer outputs. rng supplies dropout masks in training.
    """

    train: bool = False
    bn_identity: bool = False
    rng: np.random.Generator = None


@dataclass
class ModelParams:
    """Learnable tensors plus non-learnable buffers, both keyed by path."""

    weights: dict
    buffers: dict


def parameter_count(params):
    return sum(t.data.size for t in params.weights.values())


def _graph_matrix(cfg):
    return nt.Tensor(normalized_adjacency(cfg.tree, cfg.graph_type, seed=cfg.graph_seed))


# ------------------------------------------------------------ initialization


def _uniform(rng, fan_in, shape):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _init_bn(weights, buffers, path, channels):
    weights[f"{path}.scale"] = nt.parameter(f"{path}.scale", np.ones(channels))
    weights[f"{path}.shift"] = nt.parameter(f"{path}.shift", np.zeros(channels))
    buffers[f"{path}.mean"] = np.zeros(channels)
    buffers[f"{path}.var"] = np.ones(channels)


def _init_block(weights, buffers, rng, prefix, c_in, c_out, ks):
    weights[f"{prefix}.gcn.weight"] = nt.parameter(
        f"{prefix}.gcn.weight", _uniform(rng, c_in, (c_in, c_in))
    )
    _init_bn(weights, buffers, f"{prefix}.gcn_bn", c_in)
    weights[f"{prefix}.tcn.weight"] = nt.parameter(
        f"{prefix}.tcn.weight", _uniform(rng, c_in * ks, (c_out, c_in, ks))
    )
    weights[f"{prefix}.tcn.bias"] = nt.parameter(f"{prefix}.tcn.bias", np.zeros(c_out))
    _init_bn(weights, buffers, f"{prefix}.tcn_bn", c_out)
    if c_in != c_out:
        weights[f"{prefix}.shortcut.weight"] = nt.parameter(
            f"{prefix}.shortcut.weight", _uniform(rng, c_in, (c_out, c_in, 1))
        )


def _init_affine(weights, rng, prefix, c_in, c_out):
    weights[f"{prefix}.weight"] = nt.parameter(
        f"{prefix}.weight", _uniform(rng, c_in, (c_in, c_out))
    )
    weights[f"{prefix}.bias"] = nt.parameter(f"{prefix}.bias", np.zeros(c_out))


def _init_encoder(weights, buffers, rng, cfg):
    c_in = QUAT_DIM
    for idx, c_out in enumerate(ENCODER_CHANNELS):
        _init_block(weights, buffers, rng, f"encoder.block{idx}", c_in, c_out, cfg.ks_encoder)
        c_in = c_out


def init_params(cfg, seed):
    """Fan-in scaled uniform weights, zero biases, unit BN scale, zero shift."""
    rng = np.random.default_rng(seed)
    weights, buffers = {}, {}
    _init_encoder(weights, buffers, rng, cfg)
    c_in = DECODER_CHANNELS[0]
    for idx, c_out in enumerate(DECODER_CHANNELS):
        _init_block(weights, buffers, rng, f"decoder.block{idx}", c_in, c_out, 1)
        c_in = c_out
    widths = (ENCODER_CHANNELS[-1],) + ARC_HIDDEN + (cfg.class_count,)
    for idx, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        _init_affine(weights, rng, f"arc.fc{idx}", a, b)
    return ModelParams(weights=weights, buffers=buffers)


def init_ar_params(cfg, seed):
    """Encoder plus a two-layer pose regressor for the autoregressive baseline."""
    rng = np.random.default_rng(seed)
    weights, buffers = {}, {}
    _init_encoder(weights, buffers, rng, cfg)
    j = cfg.tree.joint_count
    flat = j * QUAT_DIM
    _init_affine(weights, rng, "regressor.fc0", flat + ENCODER_CHANNELS[-1], AR_HIDDEN)
    _init_affine(weights, rng, "regressor.fc1", AR_HIDDEN, flat)
    return ModelParams(weights=weights, buffers=buffers)


# ------------------------------------------------------------ layer forwards


def _bn(h, params, path, mode):
    if mode.bn_identity:
        return h
    scale = params.weights[f"{path}.scale"]
    shift = params.weights[f"{path}.shift"]
    mean = params.buffers[f"{path}.mean"]
    var = params.buffers[f"{path}.var"]
    if mode.train:
        return nt.batchnorm_train(h, scale, shift, running_mean=mean, running_var=var)
    return nt.batchnorm_eval(h, scale, shift, mean, var)


def gcn_forward(h, params, prefix, a_hat, cfg, mode):
    """Joint mixing by the normalized graph, channel mixing by a square weight."""
    g = nt.matmul(a_hat, h)
    g = nt.matmul(g, params.weights[f"{prefix}.gcn.weight"])
    g = _bn(g, params, f"{prefix}.gcn_bn", mode)
    return nt.leaky_relu(g, cfg.leaky_slope)


def tcn_forward(h, params, prefix, cfg, mode):
    """Temporal convolution shared across joints, then BN and leaky rectifier."""
    t = nt.conv1d(h, params.weights[f"{prefix}.tcn.weight"], params.weights[f"{prefix}.tcn.bias"])
    t = _bn(t, params, f"{prefix}.tcn_bn", mode)
    return nt.leaky_relu(t, cfg.leaky_slope)


def block_forward(h, params, prefix, a_hat, ks, cfg, mode):
    """Residual GCN + TCN block; 1x1 projection when the width changes."""
    del ks  # kernel size is carried by the stored tcn weights
    g = gcn_forward(h, params, prefix, a_hat, cfg, mode)
    t = tcn_forward(g, params, prefix, cfg, mode)
    sc_name = f"{prefix}.shortcut.weight"
    if sc_name in params.weights:
        shortcut = nt.conv1d(h, params.weights[sc_name], None)
    else:
        shortcut = h
    return nt.add(t, shortcut)


def encode_context(x, params, cfg, mode, prefix="encoder"):
    """Pooled context feature (B, 256) from poses (B, T, J, 4)."""
    j = cfg.tree.joint_count
    if x.ndim != 4 or x.shape[2] != j or x.shape[3] != QUAT_DIM:
        raise ValueError(
            f"expected input shaped (batch, frames, {j}, {QUAT_DIM}), got {x.shape}"
        )
    a_hat = _graph_matrix(cfg)
    h = x
    for idx in range(len(ENCODER_CHANNELS)):
        h = block_forward(h, params, f"{prefix}.block{idx}", a_hat, cfg.ks_encoder, cfg, mode)
    return nt.reduce_mean(h, axis=(1, 2))


def decode_frames(c, y0, params, cfg, mode, frames, posenc_rows=None):
    """Predict poses (B, len(frames), J, 4) for the given 1-based frame indices.

    Every frame is decoded from context + its own positional embedding only;
    in eval mode the frames are therefore independent of each other, bit for
    bit. posenc_rows overrides the embedding table (one row per frame).
    """
    frames = [int(t) for t in frames]
    if not frames:
        raise ValueError("no frames requested")
    if any(t < 1 for t in frames):
        raise ValueError(f"frame indices are 1-based, got {frames}")
    b = c.shape[0]
    j = cfg.tree.joint_count
    d = cfg.posenc.d_model
    if posenc_rows is None:
        posenc_rows = np.stack([positional_embedding(t, cfg.posenc) for t in frames])
    if posenc_rows.shape != (len(frames), d):
        raise ValueError(f"positional rows must be {(len(frames), d)}, got {posenc_rows.shape}")

    mf = len(frames)
    f = nt.add(nt.reshape(c, (b, 1, d)), nt.Tensor(posenc_rows))
    h = nt.broadcast_to(nt.reshape(f, (b, mf, 1, d)), (b, mf, j, d))
    a_hat = _graph_matrix(cfg)
    for idx in range(len(DECODER_CHANNELS)):
        h = block_forward(h, params, f"decoder.block{idx}", a_hat, 1, cfg, mode)
    y0 = y0 if isinstance(y0, nt.Tensor) else nt.Tensor(y0)
    return nt.add(h, nt.reshape(y0, (b, 1, j, QUAT_DIM)))


def arc_classify(c, params, cfg, mode):
    """Class probabilities (B, classes) from a context feature (B, 256)."""
    h = c
    for idx in range(len(ARC_HIDDEN)):
        h = nt.add(nt.matmul(h, params.weights[f"arc.fc{idx}.weight"]),
                   params.weights[f"arc.fc{idx}.bias"])
        if mode.train:
            if mode.rng is None:
                raise ValueError("training mode needs an rng for dropout masks")
            mask = (mode.rng.random(h.shape) >= cfg.dropout_rate).astype(np.float64)
            h = nt.dropout(h, mask, cfg.dropout_rate)
        h = nt.leaky_relu(h, cfg.leaky_slope)
    last = len(ARC_HIDDEN)
    logits = nt.add(nt.matmul(h, params.weights[f"arc.fc{last}.weight"]),
                    params.weights[f"arc.fc{last}.bias"])
    return nt.softmax(logits)


def nat_predict(x, params, cfg, m):
    """Non-autoregressive prediction of m future frames plus class distribution.

    The seed pose is the last given frame. Runs in eval mode; returns numpy
    arrays (B, m, J, 4) and (B, classes).
    """
    x = x if isinstance(x, nt.Tensor) else nt.Tensor(x)
    mode = Mode()
    c = encode_context(x, params, cfg, mode)
    probs = arc_classify(c, params, cfg, mode)
    y0 = nt.Tensor(x.data[:, -1])
    pred = decode_frames(c, y0, params, cfg, mode, range(1, m + 1))
    return pred.data, probs.data


# ------------------------------------------------------------ AR baseline


def ar_regressor(prev_flat, c, params, cfg):
    """Residual head: flattened previous pose and context to a pose delta."""
    h = nt.concat([prev_flat, c], axis=1)
    h = nt.add(nt.matmul(h, params.weights["regressor.fc0.weight"]),
               params.weights["regressor.fc0.bias"])
    h = nt.leaky_relu(h, cfg.leaky_slope)
    return nt.add(nt.matmul(h, params.weights["regressor.fc1.weight"]),
                  params.weights["regressor.fc1.bias"])


def ar_rollout(x, params, cfg, m, perturb_first=0.0):
    """Sequential autoregressive prediction of m frames, eval mode.

    perturb_first is added to the regressor output of the first step, the
    knob the error-accumulation experiment turns.
    """
    x = x if isinstance(x, nt.Tensor) else nt.Tensor(x)
    mode = Mode()
    b = x.shape[0]
    j = cfg.tree.joint_count
    c = encode_context(x, params, cfg, mode)
    prev = nt.Tensor(x.data[:, -1].reshape(b, j * QUAT_DIM))
    out = np.empty((b, m, j, QUAT_DIM))
    for step in range(m):
        r = ar_regressor(prev, c, params, cfg).data
        if step == 0 and perturb_first != 0.0:
            r = r + perturb_first
        nxt = prev.data + r
        out[:, step] = nxt.reshape(b, j, QUAT_DIM)
        prev = nt.Tensor(nxt)
    return out
