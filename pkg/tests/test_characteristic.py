import json

import numpy as np
import pytest

from monoloop.characteristic import (
    CharacteristicMap,
    char_value,
    check_antimonotone_char,
    default_u_seeds,
    find_k2_solutions,
    iterate_char,
)
from monoloop.errors import NoConvergence
from monoloop.model import load_model

from conftest import GOLDEN, P2_HIGH, P2_LOW, scalar


def g(u, V, m):
    return V / (1 + u ** m)


def test_goodwin_characteristic_is_scalar_hill(goodwin_p2):
    for u in (0.0, 0.5, 1.0, 3.0):
        assert char_value(goodwin_p2, [u])[0] == pytest.approx(g(u, 2.0, 4.0), abs=1e-10)


def test_linear_characteristic():
    assert char_value(scalar(0.5), [2.0])[0] == pytest.approx(-1.0, abs=1e-10)


def test_antimonotone(goodwin_convergent):
    v = check_antimonotone_char(goodwin_convergent, [[u] for u in np.linspace(0, 3, 7)])
    assert v.anti_monotone and not v.violations


def test_monotone_characteristic_flagged():
    m = load_model("states x\ninputs u\ndx = -x + u\ny1 = x\n")
    v = check_antimonotone_char(m, [[0.0], [1.0]])
    assert not v.anti_monotone and len(v.violations) == 1


def test_undefined_characteristic_raises():
    m = load_model("states x\ninputs u\ndx = x + u\ny1 = -x\n")
    with pytest.raises(NoConvergence):
        char_value(m, [1.0])


def test_warm_start_counts_evaluations(goodwin_convergent):
    k = CharacteristicMap(goodwin_convergent)
    k([0.0]), k([1.0])
    assert k.evaluations == 2 and np.allclose(k.seed, 1.0)


@pytest.mark.parametrize("seed", [0.0, 1.0, 5.0])
def test_iteration_fixed_point(goodwin_convergent, seed):
    res = iterate_char(goodwin_convergent, [seed])
    assert res.classification == "fixed_point"
    assert res.fixed_point[0] == pytest.approx(GOLDEN, abs=1e-6)


def test_iteration_period_two(goodwin_p2):
    res = iterate_char(goodwin_p2, [0.0])
    assert res.classification == "period_two"
    pair = sorted(p[0] for p in res.period_two)
    assert pair == pytest.approx([P2_LOW, P2_HIGH], abs=1e-7)


def test_iteration_divergent_and_undecided():
    m = load_model("states x\ninputs u\ndx = -x + u\ny1 = -3*x\n")
    assert iterate_char(m, [1.0]).classification == "divergent"
    r = iterate_char(m, [1.0], max_iter=3)
    assert r.classification == "undecided" and len(r.orbit) == 4


def test_iteration_outputs(tmp_path, goodwin_convergent):
    res = iterate_char(goodwin_convergent, [0.0])
    d = json.loads(res.to_json())
    assert d["classification"] == "fixed_point" and len(d["orbit"]) == res.iterations + 1
    res.orbit_csv(tmp_path / "o.csv")
    rows = (tmp_path / "o.csv").read_text().splitlines()
    assert rows[0] == "i,u1" and len(rows) == len(res.orbit) + 1


def test_k2_unique_in_convergent_regime(goodwin_convergent):
    s = find_k2_solutions(goodwin_convergent, [[0.0], [1.0], [5.0]])
    assert s.unique
    assert s.solutions[0][0] == pytest.approx(GOLDEN, abs=1e-8)


def test_k2_three_solutions(goodwin_p2):
    s = find_k2_solutions(goodwin_p2, default_u_seeds(goodwin_p2))
    vals = sorted(v[0] for v in s.solutions)
    assert vals == pytest.approx([P2_LOW, 1.0, P2_HIGH], abs=1e-7)
    assert max(s.residuals) <= 1e-8


def test_default_seeds_span_output_range(goodwin_p2):
    seeds = default_u_seeds(goodwin_p2, count=4)
    assert len(seeds) == 4 and seeds[0][0] < seeds[-1][0]
