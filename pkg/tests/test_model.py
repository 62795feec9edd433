import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoloop.errors import (
    DimensionMismatch,
    EvalDomainError,
    ParseError,
    UnboundVariable,
    UnbalancedParen,
    ValidationError,
)
from monoloop.model import (
    dumps_model,
    goodwin_model,
    linear_model,
    load_model,
    load_model_file,
    models_equal,
)
from monoloop.order import OrthantOrder

GOODWIN = """\
model goodwin3
states x1 x2 x3
inputs u1
param V 2
param m 4
order_states + + +
order_inputs +
dx1 = -x1 + u1   # production driven by the input
dx2 = -x2 + x1
dx3 = -x3 + x2
y1 = V/(1 + x3^m)
"""


def test_load_goodwin():
    m = load_model(GOODWIN)
    assert (m.n, m.m) == (3, 1)
    assert dict(m.params) == {"V": 2.0, "m": 4.0}
    f, h = m.evaluate([1.0, 1.0, 1.0], [2.0])
    assert f.tolist() == [1.0, 0.0, 0.0]
    assert h.tolist() == [1.0]


def test_kernel_and_tree_evaluation_agree():
    m = load_model(GOODWIN)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, u = rng.uniform(0, 3, 3), rng.uniform(0, 3, 1)
        assert np.allclose(m.f(x, u), m.f_tree(x, u), rtol=1e-14)
        assert np.allclose(m.h(x), m.h_tree(x), rtol=1e-14)


def test_parse_error_carries_line():
    doc = GOODWIN.replace("dx2 = -x2 + x1", "dx2 = -x2 + (x1")
    with pytest.raises(UnbalancedParen) as e:
        load_model(doc)
    assert e.value.line == 9


def test_unbound_variable_carries_line():
    doc = GOODWIN.replace("dx3 = -x3 + x2", "dx3 = -x3 + q")
    with pytest.raises(UnboundVariable) as e:
        load_model(doc)
    assert e.value.line == 10


def test_output_may_not_read_inputs():
    doc = GOODWIN.replace("y1 = V/(1 + x3^m)", "y1 = u1")
    with pytest.raises(UnboundVariable):
        load_model(doc)


@pytest.mark.parametrize("edit, exc", [
    (("order_states + + +", "order_states + +"), DimensionMismatch),
    (("param m 4", "param m inf"), ValidationError),
    (("dx3 = -x3 + x2\n", ""), ValidationError),
    (("y1 = V/(1 + x3^m)\n", ""), ValidationError),
    (("model goodwin3", "modle goodwin3"), ParseError),
    (("param V 2", "param x1 2"), ValidationError),
])
def test_validation_failures(edit, exc):
    with pytest.raises(exc):
        load_model(GOODWIN.replace(*edit))


def test_linear_model_file():
    m = load_model("model s\nlinear A = [[-1]]\nlinear B = [[1]]\nlinear C = [[0.5]]\n")
    assert m.states == ("x1",) and m.inputs == ("u1",)
    assert m.f([2.0], [1.0]).tolist() == [-1.0]
    assert m.h([2.0]).tolist() == [-1.0]


def test_linear_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        load_model("linear A = [[-1]]\nlinear B = [[1, 2]]\nlinear C = [[1]]\n")
    with pytest.raises(DimensionMismatch):
        load_model("states a b\nlinear A = [[-1]]\nlinear B = [[1]]\nlinear C = [[1]]\n")


def test_linear_with_expressions_rejected():
    with pytest.raises(ValidationError):
        load_model("states x1\nlinear A = [[-1]]\nlinear B = [[1]]\nlinear C = [[1]]\ndx1 = -x1\n")


def test_domain_error_in_kernel_maps_to_offset():
    m = load_model("states x\ninputs u\ndx = ln(x) + u\ny1 = -x\n")
    with pytest.raises(EvalDomainError) as e:
        m.f([-1.0], [0.0])
    assert e.value.offset == 0


def test_with_params_and_unknown_param():
    m = goodwin_model(1.0, 1.0).with_params(V=3.0)
    assert m.h([0.0, 0.0, 0.0]).tolist() == [3.0]
    with pytest.raises(ValidationError):
        m.with_params(W=1.0)


def test_dumps_round_trip(tmp_path):
    for m in (load_model(GOODWIN), linear_model([[-1.0, 0.5], [0.2, -2.0]], [[1.0], [0.0]],
                                                [[0.0, 1.0]], order_states=OrthantOrder((1, 1)))):
        text = dumps_model(m)
        path = tmp_path / "m.model"
        path.write_text(text)
        assert models_equal(load_model_file(path), m)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.data())
def test_linear_round_trip_random(n, m, data):
    floats = st.floats(-5, 5, allow_nan=False).filter(lambda v: v != 0.0 or True)
    A = np.array(data.draw(st.lists(st.lists(floats, min_size=n, max_size=n), min_size=n, max_size=n)))
    B = np.array(data.draw(st.lists(st.lists(floats, min_size=m, max_size=m), min_size=n, max_size=n)))
    C = np.array(data.draw(st.lists(st.lists(floats, min_size=n, max_size=n), min_size=m, max_size=m)))
    model = linear_model(A, B.reshape(n, m), C.reshape(m, n))
    again = load_model(dumps_model(model))
    assert models_equal(again, model)
    x = np.linspace(-1, 1, n)
    u = np.linspace(0.5, 1, m)
    assert np.allclose(again.f(x, u), A @ x + B.reshape(n, m) @ u, atol=1e-12)
