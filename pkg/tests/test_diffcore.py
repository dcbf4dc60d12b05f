import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dakd import diffcore as dc


def graph_of(fn, **params):
    return dc.Graph(lambda p, i: fn(p), {k: np.asarray(v, dtype=float) for k, v in params.items()})


def test_dot_product():
    out = dc.matmul(dc.Tensor([1.0, 2.0]), dc.Tensor([3.0, 4.0]))
    assert float(out.data) == 11.0


def test_softmax_uniform():
    np.testing.assert_array_equal(dc.softmax(dc.Tensor(np.zeros(3))).data, np.full(3, 1 / 3))


def test_sigmoid_zero():
    assert float(dc.sigmoid(dc.Tensor(0.0)).data) == 0.5


def test_square_derivative():
    g = graph_of(lambda p: p["x"] * p["x"], x=3.0)
    g.forward()
    assert g.backward()["x"] == pytest.approx(6.0)


def test_softmax_jacobian_row():
    # d softmax(x)_0 / dx at x = 0: p0 (e0 - p) = [0.25, -0.25]
    g = graph_of(lambda p: dc.softmax(p["x"])[0], x=[0.0, 0.0])
    g.forward()
    np.testing.assert_allclose(g.backward()["x"], [0.25, -0.25], atol=1e-15)


def test_backward_before_forward():
    g = graph_of(lambda p: dc.sum(p["x"]), x=[1.0])
    with pytest.raises(dc.BackwardError):
        g.backward()


def test_shape_mismatch():
    with pytest.raises(dc.ShapeError):
        dc.matmul(dc.Tensor(np.ones((2, 3))), dc.Tensor(np.ones((2, 3))))
    with pytest.raises(dc.ShapeError):
        dc.add(dc.Tensor(np.ones(3)), dc.Tensor(np.ones(4)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forward_raises():
    with pytest.raises(dc.NonFiniteError):
        dc.log(dc.Tensor([0.0]))
    with pytest.raises(dc.NonFiniteError):
        dc.div(dc.Tensor([1.0]), dc.Tensor([0.0]))


def test_grad_check_requires_scalar():
    g = graph_of(lambda p: p["x"] * 2.0, x=[1.0, 2.0])
    with pytest.raises(dc.ShapeError):
        dc.grad_check(g)


def test_grad_check_square():
    g = graph_of(lambda p: p["x"] * p["x"], x=3.0)
    assert dc.grad_check(g, rel_tol=1e-4).passed


def test_relu_subgradient_zero_at_kink():
    g = graph_of(lambda p: dc.sum(dc.relu(p["x"])), x=[0.0, 1.0, -1.0])
    g.forward()
    np.testing.assert_array_equal(g.backward()["x"], [0.0, 1.0, 0.0])


def test_mlp_grad_check_seed7():
    rng = np.random.default_rng(7)
    params = {"w1": rng.normal(size=(4, 6)), "b1": rng.normal(size=6),
              "w2": rng.normal(size=(6, 3)), "b2": rng.normal(size=3)}
    x = rng.normal(size=(5, 4))

    def fn(p, inputs):
        h = dc.relu(inputs["x"] @ p["w1"] + p["b1"])
        return dc.mean(dc.sigmoid(h @ p["w2"] + p["b2"]))

    report = dc.grad_check(dc.Graph(fn, params), {"x": x}, rel_tol=1e-4)
    assert report.passed, report.errors


PRIMITIVES = {
    "add_bcast": lambda a, b: dc.sum(dc.add(a, b[0])),
    "sub": lambda a, b: dc.sum(dc.sub(a, b) * a),
    "mul": lambda a, b: dc.sum(dc.mul(a, b)),
    "div": lambda a, b: dc.sum(dc.div(a, dc.exp(b))),
    "matmul": lambda a, b: dc.sum(dc.matmul(a, dc.transpose(b))),
    "batched_matmul": lambda a, b: dc.sum(dc.matmul(dc.reshape(a, (3, 4, 1)), dc.reshape(b, (3, 1, 4)))),
    "scale": lambda a, b: dc.sum(dc.scale(a * b, -2.5)),
    "relu": lambda a, b: dc.sum(dc.relu(a) * b),
    "sigmoid": lambda a, b: dc.sum(dc.sigmoid(a) * b),
    "softmax": lambda a, b: dc.sum(dc.softmax(a) * b),
    "logsumexp": lambda a, b: dc.sum(dc.logsumexp(a * b)),
    "mean": lambda a, b: dc.mean(dc.mean(a * b, axis=0)),
    "max": lambda a, b: dc.sum(dc.max(a + b, axis=1)),
    "log_sqrt": lambda a, b: dc.sum(dc.log(dc.sqrt(a * a + 1.0)) * b),
    "clip": lambda a, b: dc.sum(dc.clip(a, -0.5, 0.5) * b),
    "transpose": lambda a, b: dc.sum(dc.transpose(a, (1, 0)) @ b),
    "concat": lambda a, b: dc.sum(dc.concat([a, b], axis=1) * dc.concat([b, a], axis=1)),
    "gather_rows": lambda a, b: dc.sum(dc.gather_rows(a, np.array([[0, 2], [2, 1]])) * b[:2, :4]),
    "getitem": lambda a, b: dc.sum(a[np.arange(3)[:, None], np.array([[1, 1], [0, 3], [2, 2]])] * b[:, :2]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_primitive_gradients(name, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4)) if name != "transpose" else rng.normal(size=(3, 2))
    g = dc.Graph(lambda p, i: PRIMITIVES[name](p["a"], p["b"]), {"a": a, "b": b})
    report = dc.grad_check(g, rel_tol=1e-4)
    assert report.passed, report.errors


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    p = dc.softmax(dc.Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


def test_forward_backward_bit_identical():
    rng = np.random.default_rng(3)
    params = {"w": rng.normal(size=(4, 4))}
    x = rng.normal(size=(2, 4))

    def fn(p, i):
        return dc.sum(dc.softmax(i["x"] @ p["w"]) * dc.sigmoid(i["x"]))

    g1, g2 = dc.Graph(fn, params), dc.Graph(fn, {k: v.copy() for k, v in params.items()})
    assert g1.forward(x=x).tobytes() == g2.forward(x=x).tobytes()
    assert g1.backward()["w"].tobytes() == g2.backward()["w"].tobytes()


def test_gather_rows_scatter_adds():
    g = graph_of(lambda p: dc.sum(dc.gather_rows(p["t"], np.array([1, 1, 0]))), t=np.zeros((3, 2)))
    g.forward()
    np.testing.assert_array_equal(g.backward()["t"], [[1, 1], [2, 2], [0, 0]])


def test_seed_shape_checked():
    g = graph_of(lambda p: p["x"] * 2.0, x=[1.0, 2.0])
    g.forward()
    with pytest.raises(dc.ShapeError):
        g.backward(np.ones(3))
    np.testing.assert_array_equal(g.backward(np.array([1.0, 3.0]))["x"], [2.0, 6.0])
