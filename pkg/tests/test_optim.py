import math

import numpy as np
import pytest

from cycleadapt.optim import OptState, adam_init, adam_step, cosine_lr


def test_cosine_endpoints():
    assert cosine_lr(0, 100) == 5e-5
    assert cosine_lr(100, 100) == pytest.approx(1e-6, abs=1e-20)


def test_cosine_midpoint_value():
    assert cosine_lr(50, 100) == pytest.approx(2.55e-5, abs=1e-15)


def test_cosine_is_monotone_decreasing():
    values = [cosine_lr(s, 200) for s in range(201)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_cosine_range_errors():
    with pytest.raises(ValueError):
        cosine_lr(0, 0)
    with pytest.raises(ValueError):
        cosine_lr(-1, 10)
    with pytest.raises(ValueError):
        cosine_lr(11, 10)
    with pytest.raises(ValueError):
        cosine_lr(0, 10, lr_start=1e-6, lr_end=5e-5)


def test_adam_first_step_magnitude():
    # bias correction makes the first update equal lr * g / (|g| + eps')
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, -3.0])}
    state = adam_init(params)
    out = adam_step(params, grads, state, lr=0.1)
    expected = params["w"] - 0.1 * np.sign(grads["w"]) * (
        np.abs(grads["w"]) * (1.0 - 0.9) / (1.0 - 0.9)
    ) / (np.sqrt(np.abs(grads["w"]) ** 2 * (1.0 - 0.999) / (1.0 - 0.999)) + 1e-8)
    assert np.abs(out["w"] - expected).max() < 1e-12
    assert state.step == 1


def test_adam_zero_gradient_keeps_parameter():
    params = {"w": np.full((3, 2), 4.0)}
    state = adam_init(params)
    out = adam_step(params, {"w": np.zeros((3, 2))}, state, lr=0.5)
    assert np.array_equal(out["w"], params["w"])


def test_adam_missing_gradient_counts_as_zero():
    params = {"w": np.ones(4), "b": np.ones(2)}
    state = adam_init(params)
    out = adam_step(params, {"w": np.ones(4)}, state, lr=0.1)
    assert np.array_equal(out["b"], params["b"])
    assert np.all(out["w"] < params["w"])


def test_adam_is_deterministic():
    rng = np.random.default_rng(0)
    params = {"w": rng.normal(size=(4, 3))}
    runs = []
    for _ in range(2):
        p = dict(params)
        state = adam_init(p)
        for t in range(5):
            g = {"w": np.sin(p["w"] + t)}
            p = adam_step(p, g, state, lr=0.01)
        runs.append(p["w"])
    assert np.array_equal(runs[0], runs[1])


def test_adam_shape_mismatch_raises():
    params = {"w": np.ones(4)}
    state = adam_init(params)
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, {"w": np.ones(5)}, state, lr=0.1)


def test_adam_descends_a_quadratic():
    params = {"x": np.array([5.0])}
    state = adam_init(params)
    for _ in range(400):
        params = adam_step(params, {"x": 2.0 * params["x"]}, state, lr=0.05)
    assert abs(params["x"][0]) < 0.05


def test_state_persists_across_calls():
    params = {"x": np.array([1.0])}
    state = adam_init(params)
    adam_step(params, {"x": np.array([1.0])}, state, lr=0.1)
    adam_step(params, {"x": np.array([1.0])}, state, lr=0.1)
    assert state.step == 2
    assert isinstance(state, OptState)
    assert state.m["x"].shape == (1,)


def test_cosine_matches_formula_at_arbitrary_step():
    step, total = 37, 120
    expected = 1e-6 + 0.5 * (5e-5 - 1e-6) * (1.0 + math.cos(math.pi * step / total))
    assert cosine_lr(step, total) == expected
