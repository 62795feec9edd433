import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoloop.errors import DimensionMismatch, EmptyInput
from monoloop.model import linear_model, load_model
from monoloop.order import OrthantOrder, bounding_rectangle, check_monotone, leq, product, reverse


def test_leq_positive_orthant():
    o = OrthantOrder.positive(2)
    assert leq(o, [0, 0], [1, 2])
    assert not leq(o, [0, 3], [1, 2])


def test_leq_mixed_signs():
    o = OrthantOrder((1, -1))
    assert leq(o, [0, 2], [1, 1])
    assert not leq(o, [0, 0], [1, 1])


def test_slack():
    o = OrthantOrder.positive(1)
    assert not leq(o, [1.0], [1.0 - 1e-8])
    assert leq(o, [1.0], [1.0 - 1e-8], slack=1e-7)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        leq(OrthantOrder.positive(2), [0, 0, 0], [1, 1, 1])


def test_bad_signs():
    with pytest.raises(ValueError):
        OrthantOrder((1, 0))
    with pytest.raises(ValueError):
        OrthantOrder.from_text(["+", "x"])


def test_reverse_and_product():
    o = OrthantOrder((1, -1))
    assert reverse(o).signs == (-1, 1)
    assert product(o, reverse(o)).signs == (1, -1, -1, 1)
    assert OrthantOrder.from_text(["+", "-"]).text() == "+ -"


def test_bounding_rectangle():
    o = OrthantOrder((1, -1))
    lo, hi = bounding_rectangle(o, [[0, 0], [2, -1], [1, 3]])
    assert lo.tolist() == [0, 3] and hi.tolist() == [2, -1]
    with pytest.raises(EmptyInput):
        bounding_rectangle(o, [])


vecs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array)
signs = st.lists(st.sampled_from([1, -1]), min_size=3, max_size=3).map(lambda s: OrthantOrder(tuple(s)))


@settings(max_examples=200, deadline=None)
@given(signs, vecs, vecs, vecs)
def test_partial_order_axioms(o, a, b, c):
    assert leq(o, a, a)
    if leq(o, a, b) and leq(o, b, a):
        assert np.array_equal(a, b)
    if leq(o, a, b) and leq(o, b, c):
        assert leq(o, a, c)


@settings(max_examples=200, deadline=None)
@given(signs, vecs, vecs)
def test_reversal_flips_order(o, a, b):
    assert leq(o, a, b) == leq(reverse(o), b, a)
    assert reverse(reverse(o)) == o


@settings(max_examples=100, deadline=None)
@given(signs, st.lists(vecs, min_size=1, max_size=6))
def test_rectangle_contains_points(o, pts):
    lo, hi = bounding_rectangle(o, pts)
    assert all(leq(o, lo, p) and leq(o, p, hi) for p in pts)


def test_goodwin_is_monotone_with_antimonotone_output(goodwin_convergent):
    v = check_monotone(goodwin_convergent, trials=20, rng_seed=1)
    assert v.system_monotone
    assert v.output_class == "anti-monotone"


def test_non_metzler_linear_fails_monotonicity():
    m = linear_model([[-1.0, -2.0], [-2.0, -1.0]], [[1.0], [0.0]], [[1.0, 0.0]])
    v = check_monotone(m, trials=20, rng_seed=3)
    assert not v.system_monotone
    assert v.failures and "time" in v.failures[0]


def test_sign_flipped_order_makes_system_monotone():
    # x' = -x - y, y' = -x - y is monotone for the (+, -) order
    m = linear_model([[-2.0, -1.0], [-1.0, -2.0]], [[1.0], [0.0]], [[0.0, 1.0]],
                     order_states=OrthantOrder((1, -1)))
    v = check_monotone(m, trials=20, rng_seed=0)
    assert v.system_monotone
    assert v.output_class == "monotone"


def test_verdict_json_round_trip(goodwin_convergent):
    import json
    v = check_monotone(goodwin_convergent, trials=4)
    assert json.loads(v.to_json())["output_class"] == v.output_class


def test_output_neither_detected():
    m = load_model("states x\ninputs u\ndx = -x + u\ny1 = (x - 0.5)^2\n")
    assert check_monotone(m, trials=30, rng_seed=0).output_class == "neither"
