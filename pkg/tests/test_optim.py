"""Optimizer tests: frozen ADAM steps, clipping values, decay schedule."""

import numpy as np
import pytest

from natmotion import optim
from natmotion import tensor as nt
from natmotion.errors import NumericError


def test_first_adam_step_matches_hand_derivation():
    # bias-corrected first step: m_hat = g, v_hat = g^2, delta = lr * 1/(1 + eps)
    params = {"x": nt.parameter("x", 0.0)}
    grads = {"x": np.asarray(1.0)}
    state = optim.adam_init(optim.AdamConfig(base_lr=0.001))
    optim.adam_step(params, grads, state, epoch=0)
    expected = -(0.001 * 1.0 / (1.0 + 1e-8))
    assert params["x"].data == pytest.approx(expected, abs=1e-15)


def test_adam_zero_gradient_is_fixed_point():
    params = {"x": nt.parameter("x", [1.5, -2.0])}
    before = params["x"].data.copy()
    state = optim.adam_init(optim.AdamConfig())
    optim.adam_step(params, {"x": np.zeros(2)}, state, epoch=0)
    assert np.array_equal(params["x"].data, before)


def test_adam_minimizes_scalar_quadratic():
    # optimization oracle: 200 steps with lr 0.1 land within 0.05 of the optimum
    params = {"x": nt.parameter("x", 0.0)}
    state = optim.adam_init(optim.AdamConfig(base_lr=0.1, decay_per_epoch=1.0))
    for _ in range(200):
        with nt.Tape() as tape:
            diff = nt.sub(params["x"], nt.Tensor(3.0))
            loss = nt.mul(diff, diff)
        grads = nt.backward(tape, loss)
        optim.adam_step(params, grads, state, epoch=0)
    assert abs(float(params["x"].data) - 3.0) < 0.05


def test_adam_decay_schedule():
    cfg = optim.AdamConfig(base_lr=0.001, decay_per_epoch=0.9995)
    assert optim.effective_lr(cfg, 0) == 0.001
    assert optim.effective_lr(cfg, 1) == pytest.approx(0.001 * 0.9995, rel=1e-15)
    assert optim.effective_lr(cfg, 10) == pytest.approx(0.001 * 0.9995**10, rel=1e-15)


def test_adam_shape_mismatch_rejected():
    params = {"x": nt.parameter("x", np.zeros(3))}
    state = optim.adam_init(optim.AdamConfig())
    with pytest.raises(ValueError):
        optim.adam_step(params, {"x": np.zeros(4)}, state, epoch=0)


def test_adam_nonfinite_gradient_rejected():
    params = {"x": nt.parameter("x", np.zeros(2))}
    state = optim.adam_init(optim.AdamConfig())
    with pytest.raises(NumericError):
        optim.adam_step(params, {"x": np.array([1.0, np.nan])}, state, epoch=0)


def test_adam_is_deterministic():
    def run():
        rng = np.random.default_rng(7)
        params = {"w": nt.parameter("w", rng.standard_normal((4, 3)))}
        state = optim.adam_init(optim.AdamConfig())
        for i in range(25):
            g = {"w": rng.standard_normal((4, 3))}
            g, _ = optim.clip_grad_norm(g, 0.1)
            optim.adam_step(params, g, state, epoch=i // 5)
        return params["w"].data

    assert np.array_equal(run(), run())


def test_clip_scales_three_four_five_triangle():
    grads = {"a": np.asarray(3.0), "b": np.asarray(4.0)}
    clipped, norm = optim.clip_grad_norm(grads, 0.1)
    assert norm == 5.0
    assert clipped["a"] == pytest.approx(0.06, abs=1e-15)
    assert clipped["b"] == pytest.approx(0.08, abs=1e-15)


def test_clip_noop_below_threshold():
    grads = {"a": np.array([0.03, 0.04])}
    clipped, norm = optim.clip_grad_norm(grads, 0.1)
    assert norm == pytest.approx(0.05, abs=1e-15)
    assert np.array_equal(clipped["a"], grads["a"])


def test_clip_global_norm_after_clipping():
    rng = np.random.default_rng(3)
    grads = {f"p{i}": rng.standard_normal((5, 2)) for i in range(4)}
    clipped, norm = optim.clip_grad_norm(grads, 0.1)
    assert norm > 0.1
    total = np.sqrt(sum(float(np.sum(g * g)) for g in clipped.values()))
    assert total == pytest.approx(0.1, rel=1e-12)


def test_clip_empty_grads():
    clipped, norm = optim.clip_grad_norm({}, 0.1)
    assert clipped == {}
    assert norm == 0.0


def test_clip_nonfinite_rejected():
    with pytest.raises(NumericError):
        optim.clip_grad_norm({"a": np.array([np.inf])}, 0.1)
