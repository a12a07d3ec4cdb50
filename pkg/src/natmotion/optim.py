"""ADAM with per-epoch learning-rate decay, plus global gradient-norm clipping."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class AdamConfig:
    base_lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_per_epoch: float = 0.9995


@dataclass
class AdamState:
    config: AdamConfig
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step_count: int = 0


def adam_init(config):
    return AdamState(config=config)


def effective_lr(config, epoch):
    """Base learning rate decayed once per completed epoch."""
    return config.base_lr * config.decay_per_epoch ** epoch


def adam_step(params, grads, state, epoch):
    """One bias-corrected ADAM update, in place on the parameter tensors.

    params: dict name -> Tensor; grads: dict name -> ndarray (same shapes).
    Parameters without a gradient entry are left untouched.
    """
    cfg = state.config
    lr = effective_lr(cfg, epoch)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t

    for name in sorted(grads):
        g = np.asarray(grads[name], dtype=np.float64)
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        p = params[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} {p.data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
        p.data = p.data - step
    return params, state


def clip_grad_norm(grads, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns (clipped gradients, the norm before clipping). Gradients at or
    under the threshold are returned unscaled.
    """
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    if norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm
