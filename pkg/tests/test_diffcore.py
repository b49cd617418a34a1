import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_difference, rel_err
from dscnet.diffcore import (
    Graph,
    backward,
    conv2d_s2,
    convT2d_s2,
    frobenius_sq,
    l1_sum,
    matmul,
    relu,
    same_padding,
    svd,
    sym_eig,
)
from dscnet.exceptions import NumericalError, ShapeError


def away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _graph_loss(build, tensors):
    g = Graph()
    nodes = {name: g.parameter(name, value) for name, value in tensors.items()}
    return g, build(g, nodes)


def gradient_check(build, tensors, h=1e-5):
    g, out = _graph_loss(build, tensors)
    grads = backward(g, out)
    worst = 0.0
    for name, value in tensors.items():
        assert grads[name].shape == value.shape

        def f():
            gg, o = _graph_loss(build, tensors)
            return float(gg.value(o))

        worst = max(worst, rel_err(grads[name], central_difference(f, value, h)))
    return worst


def _squared_residual(op):
    """Wrap an op so the loss is ||op(...) - T||^2 with a fixed random target."""

    def build(g, n):
        out = op(g, n)
        target = np.random.default_rng(99).standard_normal(g.value(out).shape)
        return g.frobenius_sq(g.sub(out, g.constant(target)))

    return build


OP_CASES = {
    "conv2d_s2_k3": (
        lambda r: {"x": r.standard_normal((2, 2, 5, 6)), "k": r.standard_normal((3, 2, 3, 3)), "b": r.standard_normal(3)},
        _squared_residual(lambda g, n: g.conv2d_s2(n["x"], n["k"], n["b"])),
    ),
    "conv2d_s2_k5": (
        lambda r: {"x": r.standard_normal((1, 1, 7, 4)), "k": r.standard_normal((2, 1, 5, 5)), "b": r.standard_normal(2)},
        _squared_residual(lambda g, n: g.conv2d_s2(n["x"], n["k"], n["b"])),
    ),
    "convT2d_s2_k3": (
        lambda r: {"x": r.standard_normal((2, 3, 3, 3)), "k": r.standard_normal((3, 2, 3, 3)), "b": r.standard_normal(2)},
        _squared_residual(lambda g, n: g.convT2d_s2(n["x"], n["k"], n["b"], (5, 6))),
    ),
    "convT2d_s2_k5": (
        lambda r: {"x": r.standard_normal((1, 2, 2, 3)), "k": r.standard_normal((2, 1, 5, 5)), "b": r.standard_normal(1)},
        _squared_residual(lambda g, n: g.convT2d_s2(n["x"], n["k"], n["b"], (4, 6))),
    ),
    "relu": (
        lambda r: {"x": away_from_zero(r, (3, 4))},
        _squared_residual(lambda g, n: g.relu(n["x"])),
    ),
    "matmul": (
        lambda r: {"a": r.standard_normal((3, 4)), "b": r.standard_normal((4, 2))},
        _squared_residual(lambda g, n: g.matmul(n["a"], n["b"])),
    ),
    "reshape": (
        lambda r: {"x": r.standard_normal((2, 3, 2))},
        _squared_residual(lambda g, n: g.reshape(n["x"], (3, 4))),
    ),
    "add_sub_scale": (
        lambda r: {"a": r.standard_normal((3, 3)), "b": r.standard_normal((3, 3))},
        _squared_residual(lambda g, n: g.scale(g.sub(g.add(n["a"], n["b"]), g.scale(n["b"], 0.3)), -1.7)),
    ),
    "frobenius_sq": (
        lambda r: {"x": r.standard_normal((4, 3))},
        lambda g, n: g.frobenius_sq(n["x"]),
    ),
    "l1_sum": (
        lambda r: {"x": away_from_zero(r, (4, 3))},
        lambda g, n: g.l1_sum(n["x"]),
    ),
}


@pytest.mark.parametrize("case", sorted(OP_CASES))
@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(case, seed):
    make, build = OP_CASES[case]
    assert gradient_check(build, make(np.random.default_rng(seed))) <= 1e-4


def test_conv_output_shape_yaleb_first_layer():
    y = conv2d_s2(np.ones((1, 1, 42, 42)), np.ones((10, 1, 5, 5)), np.zeros(10))
    assert y.shape == (1, 10, 21, 21)


def test_conv_zero_input_zero_output():
    y = conv2d_s2(np.zeros((1, 1, 2, 2)), np.random.default_rng(0).standard_normal((4, 1, 3, 3)), np.zeros(4))
    assert y.shape == (1, 4, 1, 1)
    assert not y.any()


def test_conv_padding_rule_puts_extra_cell_bottom_right():
    # 4 -> 2 with k=3: one cell of padding in total, placed after the data,
    # so the top-left window sees a full 3x3 block of ones
    assert same_padding(4, 3) == (0, 1)
    y = conv2d_s2(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), np.zeros(1))
    np.testing.assert_array_equal(y[0, 0], [[9.0, 6.0], [6.0, 4.0]])


def test_conv_hand_window_sum():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    y = conv2d_s2(x, np.ones((1, 1, 3, 3)), np.array([0.5]))
    # windows start at rows/cols {0, 2}; the second overhangs by one zero cell
    expected = np.array(
        [[x[0, 0, 0:3, 0:3].sum(), x[0, 0, 0:3, 2:4].sum()], [x[0, 0, 2:4, 0:3].sum(), x[0, 0, 2:4, 2:4].sum()]]
    )
    np.testing.assert_allclose(y[0, 0], expected + 0.5)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d_s2(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def test_convT_rejects_incompatible_target():
    with pytest.raises(ShapeError):
        convT2d_s2(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), (8, 8))


def test_convT_zero_input_gives_bias():
    y = convT2d_s2(np.zeros((2, 3, 3, 3)), np.ones((3, 2, 3, 3)), np.array([0.25, -1.0]), (5, 5))
    assert y.shape == (2, 2, 5, 5)
    np.testing.assert_array_equal(y[:, 0], 0.25)
    np.testing.assert_array_equal(y[:, 1], -1.0)


def test_convT_adjoint_5x5():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 1, 5, 5))
    k = rng.standard_normal((1, 1, 3, 3))
    y = rng.standard_normal((1, 1, 3, 3))
    lhs = np.vdot(conv2d_s2(x, k, np.zeros(1)), y)
    rhs = np.vdot(x, convT2d_s2(y, k, np.zeros(1), (5, 5)))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_conv_convT_round_trip_shape():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 1, 42, 42))
    k = rng.standard_normal((1, 1, 5, 5))
    y = conv2d_s2(x, k, np.zeros(1))
    assert convT2d_s2(y, k, np.zeros(1), x.shape[2:]).shape == (1, 1, 42, 42)


@settings(max_examples=40, deadline=None)
@given(
    h=st.integers(1, 9),
    w=st.integers(1, 9),
    k=st.sampled_from([1, 3, 5]),
    cin=st.integers(1, 3),
    cout=st.integers(1, 3),
    seed=st.integers(0, 2**31),
)
def test_convT_is_adjoint_of_conv(h, w, k, cin, cout, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, cin, h, w))
    kern = rng.standard_normal((cout, cin, k, k))
    y = rng.standard_normal((2, cout, -(-h // 2), -(-w // 2)))
    lhs = np.vdot(conv2d_s2(x, kern, np.zeros(cout)), y)
    rhs = np.vdot(x, convT2d_s2(y, kern, np.zeros(cin), (h, w)))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_elementwise_and_reductions():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    assert frobenius_sq(np.eye(3)) == 3.0
    assert l1_sum(np.array([[1.0, -2.0], [3.0, -4.0]])) == 10.0
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_quadratic_gradient_is_2w():
    W = np.array([[1.0, -2.0], [0.5, 3.0]])
    g = Graph()
    loss = g.frobenius_sq(g.parameter("W", W))
    np.testing.assert_array_equal(backward(g, loss)["W"], 2 * W)


def test_l1_gradient_is_sign_with_zero_subgradient():
    W = np.array([[1.5, -2.0], [0.0, 3.0]])
    g = Graph()
    loss = g.l1_sum(g.parameter("W", W))
    np.testing.assert_array_equal(backward(g, loss)["W"], [[1.0, -1.0], [0.0, 1.0]])


def test_backward_rejects_non_scalar():
    g = Graph()
    w = g.parameter("W", np.ones((2, 2)))
    with pytest.raises(ShapeError):
        backward(g, w)


def test_unused_parameter_gets_zero_gradient():
    g = Graph()
    a = g.parameter("a", np.ones(3))
    g.parameter("b", np.ones((2, 2)))
    grads = backward(g, g.frobenius_sq(a))
    np.testing.assert_array_equal(grads["b"], np.zeros((2, 2)))


def test_shared_input_accumulates():
    g = Graph()
    a = g.parameter("a", np.array([[2.0]]))
    loss = g.frobenius_sq(g.add(a, a))
    assert backward(g, loss)["a"][0, 0] == pytest.approx(16.0)


@pytest.mark.parametrize("method", ["ql", "lapack"])
def test_sym_eig_basic(method):
    w, v = sym_eig(np.eye(4), method=method)
    np.testing.assert_allclose(w, [1, 1, 1, 1])
    w, v = sym_eig(np.diag([3.0, 1.0, 2.0]), method=method)
    np.testing.assert_allclose(w, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("n", [1, 2, 7, 20, 60])
def test_sym_eig_ql_contract(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    a = a + a.T
    w, v = sym_eig(a, method="ql")
    assert np.all(np.diff(w) >= 0)
    scale = np.abs(w).max()
    assert np.abs(a @ v - v * w).max() <= 1e-8 * scale
    assert np.abs(v.T @ v - np.eye(n)).max() <= 1e-8
    assert np.abs(v @ np.diag(w) @ v.T - a).max() <= 1e-8 * scale
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-10 * scale)


def test_sym_eig_degenerate_spectrum():
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    a = q @ np.diag([0.0] * 4 + [1.0] * 4 + [2.0] * 4) @ q.T
    w, v = sym_eig(a, method="ql")
    np.testing.assert_allclose(w, [0.0] * 4 + [1.0] * 4 + [2.0] * 4, atol=1e-12)
    assert np.abs(v.T @ v - np.eye(12)).max() <= 1e-10


def test_sym_eig_errors():
    with pytest.raises(ShapeError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(NumericalError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_eig_deterministic():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((30, 30))
    a = a + a.T
    w1, v1 = sym_eig(a, method="ql")
    w2, v2 = sym_eig(a.copy(), method="ql")
    assert w1.tobytes() == w2.tobytes() and v1.tobytes() == v2.tobytes()


def test_svd_contract():
    u, s, v = svd(np.eye(3))
    np.testing.assert_allclose(s, 1.0)
    _, s, _ = svd(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(s, [2.0, 1.0])
    rng = np.random.default_rng(0)
    a = rng.standard_normal((9, 5))
    u, s, v = svd(a)
    assert np.all(np.diff(s) <= 0)
    assert np.abs(u.T @ u - np.eye(5)).max() <= 1e-8
    assert np.abs(v.T @ v - np.eye(5)).max() <= 1e-8
    assert np.abs(u * s @ v.T - a).max() <= 1e-8


def test_svd_rank_one():
    rng = np.random.default_rng(2)
    a = np.outer(rng.standard_normal(6), rng.standard_normal(4))
    _, s, _ = svd(a)
    assert np.count_nonzero(s > 1e-10) == 1
