"""Unit tests for the reverse-mode autodiff core."""

import numpy as np
import pytest

from cycleadapt.diffcore import (
    Graph,
    NonScalarLossError,
    ShapeMismatchError,
    UnboundLeafError,
    backward,
    evaluate,
    grad_check,
)


def _scalarize(g, node):
    """Reduce an arbitrary node to a scalar so it can serve as a loss."""
    return g.mean_abs(g.add(node, g.const(0.1)))


def test_evaluate_simple_expression():
    g = Graph()
    x = g.leaf("x")
    y = g.scalar_mul(g.add(x, x), 1.5)
    vals = evaluate(g, {"x": np.array([2.0])})
    assert vals[y] == pytest.approx([6.0])


def test_evaluate_deterministic_bit_identical():
    rng = np.random.default_rng(0)
    g = Graph()
    x = g.leaf("x", trainable=True)
    w = g.leaf("w", trainable=True)
    out = g.relu(g.matmul(x, w))
    loss = g.mean_abs(out)
    b = {"x": rng.normal(size=(4, 5)), "w": rng.normal(size=(5, 3))}
    v1 = evaluate(g, b)[loss]
    v2 = evaluate(g, b)[loss]
    assert v1.tobytes() == v2.tobytes()


def test_unbound_leaf_raises():
    g = Graph()
    x = g.leaf("x")
    g.relu(x)
    with pytest.raises(UnboundLeafError):
        evaluate(g, {})


def test_shape_mismatch_names_offending_node():
    g = Graph()
    a = g.leaf("a")
    b = g.leaf("b")
    node = g.matmul(a, b)
    with pytest.raises(ShapeMismatchError) as exc:
        evaluate(g, {"a": np.ones((2, 3)), "b": np.ones((4, 2))})
    assert f"node {node}" in str(exc.value)


def test_non_scalar_loss_rejected():
    g = Graph()
    x = g.leaf("x", trainable=True)
    y = g.relu(x)
    with pytest.raises(NonScalarLossError):
        backward(g, {"x": np.ones(3)}, y)


def test_layer_norm_constant_vector_is_zero():
    # Constant input has zero variance; eps keeps the output finite at 0.
    g = Graph()
    x = g.leaf("x")
    gain = g.const(np.ones(4))
    bias = g.const(np.zeros(4))
    y = g.layer_norm(x, gain, bias, eps=1e-5)
    vals = evaluate(g, {"x": np.full(4, 5.0)})
    np.testing.assert_allclose(vals[y], np.zeros(4), atol=1e-12)


def test_three_layer_perceptron_matches_central_differences():
    rng = np.random.default_rng(0)
    g = Graph()
    x = g.const(rng.normal(size=(3, 6)))
    names = {}
    h = x
    dims = [6, 5, 4, 2]
    for i in range(3):
        w = g.leaf(f"w{i}", trainable=True)
        b = g.leaf(f"b{i}", trainable=True)
        names[f"w{i}"] = rng.normal(size=(dims[i], dims[i + 1])) / np.sqrt(dims[i])
        names[f"b{i}"] = rng.normal(size=(dims[i + 1],)) * 0.1
        h = g.add(g.matmul(h, w), b)
        if i < 2:
            h = g.relu(h)
    loss = g.mean_abs(h)
    assert grad_check(g, names, loss, step=1e-6) < 1e-4


def test_mean_abs_all_zero_residuals_skips_kinks():
    # Every residual sits exactly on the L1 kink, so every finite
    # difference straddles it and every parameter entry is skipped.
    g = Graph()
    x = g.leaf("x", trainable=True)
    t = g.const(np.array([1.0, -2.0, 0.5]))
    loss = g.mean_abs(g.sub(x, t))
    assert grad_check(g, {"x": np.array([1.0, -2.0, 0.5])}, loss) == 0.0


def test_transpose_twice_is_identity_for_values_and_gradients():
    rng = np.random.default_rng(3)
    arr = rng.normal(size=(4, 5))

    g1 = Graph()
    x1 = g1.leaf("x", trainable=True)
    loss1 = g1.mean_abs(g1.transpose(g1.transpose(x1)))
    g2 = Graph()
    x2 = g2.leaf("x", trainable=True)
    loss2 = g2.mean_abs(x2)

    v1 = evaluate(g1, {"x": arr})
    v2 = evaluate(g2, {"x": arr})
    np.testing.assert_array_equal(v1[loss1], v2[loss2])
    g1g = backward(g1, {"x": arr}, loss1)["x"]
    g2g = backward(g2, {"x": arr}, loss2)["x"]
    np.testing.assert_array_equal(g1g, g2g)


def test_unreachable_leaf_gets_zero_gradient():
    g = Graph()
    x = g.leaf("x", trainable=True)
    z = g.leaf("unused", trainable=True)
    g.relu(z)  # present in the graph but not on the loss path
    loss = g.mean_abs(x)
    grads = backward(g, {"x": np.array([1.0, -1.0]), "unused": np.ones(4)}, loss)
    np.testing.assert_array_equal(grads["unused"], np.zeros(4))


def test_gradient_accumulates_over_fanout():
    g = Graph()
    x = g.leaf("x", trainable=True)
    y = g.add(x, x)
    loss = g.sum(y)
    grads = backward(g, {"x": np.array([2.0, 3.0])}, loss)
    np.testing.assert_allclose(grads["x"], [2.0, 2.0])


def _primitive_cases(rng):
    """One small random graph per primitive; returns (graph, bindings, loss)."""
    cases = []

    def new(name, shape, scale=1.0):
        return rng.normal(size=shape) * scale

    # add / sub / mul / div with broadcasting
    for kind in ("add", "sub", "mul", "div"):
        g = Graph()
        a = g.leaf("a", trainable=True)
        b = g.leaf("b", trainable=True)
        op = getattr(g, kind)(a, b)
        loss = _scalarize(g, op)
        bb = new("b", (4,)) + (3.0 if kind == "div" else 0.0)
        cases.append((g, {"a": new("a", (2, 4)), "b": bb}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = _scalarize(g, g.scalar_mul(a, -1.7))
    cases.append((g, {"a": new("a", (3, 2))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    b = g.leaf("b", trainable=True)
    loss = _scalarize(g, g.matmul(a, b))
    cases.append((g, {"a": new("a", (2, 3, 4)), "b": new("b", (4, 2))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = _scalarize(g, g.transpose(a, axes=(1, 0, 2)))
    cases.append((g, {"a": new("a", (2, 3, 4))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = _scalarize(g, g.reshape(a, (6, 2)))
    cases.append((g, {"a": new("a", (3, 4))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    b = g.leaf("b", trainable=True)
    loss = _scalarize(g, g.concat([a, b], axis=1))
    cases.append((g, {"a": new("a", (2, 3)), "b": new("b", (2, 2))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = _scalarize(g, g.relu(a))
    cases.append((g, {"a": new("a", (3, 5))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    gain = g.leaf("gain", trainable=True)
    bias = g.leaf("bias", trainable=True)
    loss = _scalarize(g, g.layer_norm(a, gain, bias))
    cases.append(
        (g, {"a": new("a", (3, 6)), "gain": 1 + 0.1 * new("g", (6,)), "bias": 0.1 * new("b", (6,))}, loss)
    )

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = g.mean_abs(a)
    cases.append((g, {"a": new("a", (4, 3))}, loss))

    for axis, keep in ((None, False), (0, False), (-1, True)):
        g = Graph()
        a = g.leaf("a", trainable=True)
        loss = _scalarize(g, g.sum(a, axis=axis, keepdims=keep))
        cases.append((g, {"a": new("a", (3, 4))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    mask = rng.random(5) < 0.5
    mask[0] = True  # never empty
    loss = _scalarize(g, g.mask_select(a, mask))
    cases.append((g, {"a": new("a", (5, 3))}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    loss = _scalarize(g, g.sqrt(a))
    cases.append((g, {"a": np.abs(new("a", (3, 3))) + 0.5}, loss))

    g = Graph()
    a = g.leaf("a", trainable=True)
    b = g.leaf("b", trainable=True)
    loss = _scalarize(g, g.div(a, g.sqrt(b)))
    cases.append((g, {"a": new("a", (2, 3)), "b": np.abs(new("b", (2, 3))) + 0.3}, loss))

    return cases


@pytest.mark.parametrize("seed", range(10))
def test_every_primitive_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for g, bindings, loss in _primitive_cases(rng):
        assert grad_check(g, bindings, loss, step=1e-6) < 1e-4


def test_forward_values_finite_on_finite_inputs():
    rng = np.random.default_rng(7)
    for g, bindings, loss in _primitive_cases(rng):
        vals = evaluate(g, bindings)
        for v in vals:
            assert np.all(np.isfinite(v))


def test_mask_select_gradient_scatters_rows():
    g = Graph()
    a = g.leaf("a", trainable=True)
    mask = np.array([True, False, True])
    loss = g.sum(g.mask_select(a, mask))
    grads = backward(g, {"a": np.ones((3, 2))}, loss)
    np.testing.assert_array_equal(grads["a"], [[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
