import json
import math
import warnings

import numpy as np
import pytest

from oracles import boxqp_grid_polish, qcp_grid_projection
from sawtooth_qp.instances import (
    InstanceFormatError,
    Lcg64,
    QpInstance,
    boxqp_bruteforce,
    format_boxqp,
    gen_best_nearest,
    gen_boxqp,
    gen_qcp,
    parse_boxqp,
    qcp_closed_form,
    qcp_closed_form_point,
    read_instance,
)


def test_lcg_reference_values():
    rng = Lcg64(0)
    state = 0
    for _ in range(5):
        state = (6364136223846793005 * state + 1442695040888963407) % 2**64
        assert rng.uniform() == (state >> 11) / 2.0**53


def test_parse_examples():
    inst = parse_boxqp("2\n-1 -1\n0 1\n1 0\n")
    assert inst.n == 2 and np.array_equal(inst.Q, [[0, 1], [1, 0]]) and np.array_equal(inst.c, [-1, -1])
    assert np.array_equal(inst.lower, [0, 0]) and np.array_equal(inst.upper, [1, 1])
    one = parse_boxqp("# tiny\n1\n3\n-2\n")
    assert one.n == 1 and one.Q[0, 0] == -2


def test_parse_errors_name_the_line():
    with pytest.raises(InstanceFormatError, match="line 4"):
        parse_boxqp("2\n-1 -1\n0 1\n1\n")
    with pytest.raises(InstanceFormatError, match="line 2"):
        parse_boxqp("2\n-1 a\n0 1\n1 0\n")
    with pytest.raises(InstanceFormatError, match="symmetric"):
        parse_boxqp("2\n0 0\n0 1\n2 0\n")


def test_parse_symmetrizes_tiny_asymmetry():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        inst = parse_boxqp("2\n0 0\n0 1\n1.0000000000001 0\n")
    assert caught and np.allclose(inst.Q, inst.Q.T)


def test_text_and_json_round_trip(tmp_path):
    inst = gen_boxqp(5, 3)
    again = parse_boxqp(format_boxqp(inst), name=inst.name)
    assert np.array_equal(again.Q, inst.Q) and np.array_equal(again.c, inst.c)
    qcp = gen_qcp(3, 1)
    back = QpInstance.from_json(qcp.to_json())
    assert back.to_dict() == qcp.to_dict()
    path = tmp_path / "q.json"
    path.write_text(qcp.to_json())
    assert read_instance(path).to_dict() == qcp.to_dict()
    json.loads(qcp.to_json())


def test_generators_are_deterministic():
    assert format_boxqp(gen_boxqp(6, 11)) == format_boxqp(gen_boxqp(6, 11))
    assert gen_qcp(2, 4).to_json() == gen_qcp(2, 4).to_json()
    assert format_boxqp(gen_boxqp(6, 11)) != format_boxqp(gen_boxqp(6, 12))


def test_gen_boxqp_ranges():
    inst = gen_boxqp(8, 0)
    assert np.all(np.abs(inst.Q) <= 5) and np.all(np.abs(inst.c) <= 5)
    assert np.array_equal(inst.Q, inst.Q.T)


def test_qcp_structure():
    inst = gen_qcp(4, 0)
    eps = np.array(inst.meta["eps"])
    assert np.all(np.abs(eps) <= 1e-3)
    assert np.all(np.diff(np.abs(eps)) >= 0)
    corner = np.where(eps < 0, -1.0, 1.0)
    assert inst.quadratic_constraints[0].value(corner) == pytest.approx(4.0)
    assert inst.quadratic_constraints[0].rhs == 3.5


def test_qcp_closed_form_examples():
    assert qcp_closed_form(1, [0.0]) == pytest.approx(100 * math.sqrt(0.5))
    assert qcp_closed_form(2, [0.0, 0.0]) == pytest.approx(50 * (1 + math.sqrt(0.5)))
    with pytest.raises(ValueError):
        qcp_closed_form(1, [0.8])


@pytest.mark.parametrize("n", [1, 2])
def test_qcp_closed_form_against_grid_projection(n):
    eps = gen_qcp(n, 7).meta["eps"]
    assert qcp_closed_form(n, eps) == pytest.approx(qcp_grid_projection(eps, step=1e-3), abs=0.1)
    assert qcp_closed_form(n, eps) <= qcp_grid_projection(eps, step=1e-3) + 1e-9


def test_qcp_closed_form_against_grid_projection_three_dims():
    eps = gen_qcp(3, 7).meta["eps"]
    coarse = qcp_grid_projection(eps, step=1e-2)
    assert qcp_closed_form(3, eps) <= coarse + 1e-9
    assert coarse - qcp_closed_form(3, eps) < 0.5


@pytest.mark.parametrize("n", range(1, 7))
def test_qcp_closed_form_point_attains_value(n):
    inst = gen_qcp(n, 0)
    eps = np.array(inst.meta["eps"])
    x = qcp_closed_form_point(eps)
    assert inst.quadratic_constraints[0].value(x) >= n - 0.5 - 1e-12
    cost = 100.0 / n * np.sum(np.abs(x - eps))
    assert abs(cost - qcp_closed_form(n, eps)) < 1e-9


def test_best_nearest_examples():
    base = parse_boxqp("2\n-1 -1\n0 1\n1 0\n")
    inst = gen_best_nearest(base, -1.0)
    assert inst.quadratic_constraints[0].rhs == pytest.approx(-0.95)
    with pytest.raises(ValueError):
        gen_best_nearest(base, 0.0)
    one = gen_best_nearest(QpInstance(1, np.array([[-1.0]]), np.zeros(1)), -1.0)
    xs = np.linspace(0, 1, 200001)
    feasible = -(xs**2) <= -0.95
    assert np.min(np.abs(xs[feasible] - 0.5)) == pytest.approx(abs(math.sqrt(0.95) - 0.5), abs=1e-5)
    assert list(one.aux_cost) == [1.0]


def test_bruteforce_examples():
    val, x = boxqp_bruteforce(parse_boxqp("2\n-1 -1\n0 1\n1 0\n"))
    assert val == pytest.approx(-1.0)
    assert val == pytest.approx(x @ np.array([[0, 1], [1, 0]]) @ x - x.sum())
    val, x = boxqp_bruteforce(QpInstance(2, 2 * np.eye(2), np.array([-2.0, -2.0])))
    assert val == pytest.approx(-1.0) and np.allclose(x, [0.5, 0.5])
    val, x = boxqp_bruteforce(QpInstance(1, np.array([[-1.0]]), np.zeros(1)))
    assert val == pytest.approx(-1.0) and np.allclose(x, [1.0])


@pytest.mark.parametrize("seed", range(6))
def test_bruteforce_against_grid_search(seed):
    n = 1 + seed % 3
    inst = gen_boxqp(n, 500 + seed)
    val, x = boxqp_bruteforce(inst)
    assert val == pytest.approx(inst.objective(x))
    assert val == pytest.approx(boxqp_grid_polish(inst.Q, inst.c), abs=1e-7)
