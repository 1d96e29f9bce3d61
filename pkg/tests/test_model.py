import numpy as np
import pytest

from sawtooth_qp.formats import MpsError, export_lp_text, export_mps, format_number, parse_lp_text, parse_mps
from sawtooth_qp.formulations import nn_graph_fragment, relax_qp
from sawtooth_qp.instances import gen_boxqp, gen_qcp
from sawtooth_qp.model import BINARY, QuadraticForm, new_model


def test_empty_model():
    m = new_model()
    assert m.num_variables == 0 and m.num_constraints == 0


def test_add_variable_and_bounds():
    m = new_model()
    vid = m.add_variable("x", 0.0, 1.0)
    assert vid == 0
    assert (m.variables[0].lb, m.variables[0].ub) == (0.0, 1.0)
    with pytest.raises(ValueError):
        m.add_variable("x", 0, 1)
    with pytest.raises(ValueError):
        m.add_variable("z", 2, 1)
    with pytest.raises(ValueError):
        m.add_variable("w", 0, np.inf)
    with pytest.raises(ValueError):
        m.add_variable("b", 0, 2, BINARY)
    with pytest.raises(ValueError):
        m.add_variable("has space", 0, 1)


def test_constraint_validation():
    m = new_model()
    x = m.add_variable("x", 0, 1)
    with pytest.raises(ValueError):
        m.add_linear_constraint({x + 1: 1.0}, "<=", 0)
    with pytest.raises(ValueError):
        m.add_linear_constraint({x: 0.0}, "<=", 0)
    with pytest.raises(ValueError):
        m.add_linear_constraint([(x, 1.0), (x, 2.0)], "<=", 0)
    with pytest.raises(ValueError):
        m.add_linear_constraint({x: 1.0}, "<>", 0)


def test_non_psd_objective_rejected():
    m = new_model()
    x = m.add_variable("x", 0, 1)
    with pytest.raises(ValueError):
        m.set_objective(QuadraticForm(np.array([[-1.0]])), [x])


def test_quadratic_form_symmetrized():
    form = QuadraticForm(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert np.allclose(form.matrix, [[1, 1], [1, 1]])
    assert form.value([1.0, 1.0]) == pytest.approx(4.0)


def _one_var_lp():
    m = new_model("tiny")
    x = m.add_variable("x", 0, 1)
    m.set_objective(linear={x: 1.0})
    return m


def _r(v):
    """Twelve significant digits, the precision of the text formats."""
    return float(f"{v:.12g}") + 0.0


def _canonical(model):
    return (
        [(v.name, _r(v.lb), _r(v.ub), v.kind) for v in model.variables],
        [(c.name, sorted((model.variables[k].name, _r(a)) for k, a in c.coeffs.items()), c.sense, _r(c.rhs))
         for c in model.constraints],
        sorted((model.variables[k].name, _r(a)) for k, a in model.objective_linear.items()),
        _r(model.objective_constant),
    )


def _quad_terms(model):
    if model.objective_quadratic is None:
        return {}
    names = [model.variables[v].name for v in model.objective_quad_vars]
    Q = model.objective_quadratic.matrix
    return {(names[i], names[j]): Q[i, j] for i in range(len(names)) for j in range(len(names)) if Q[i, j] != 0}


def test_mps_round_trip_tiny():
    m = _one_var_lp()
    back = parse_mps(export_mps(m))
    assert _canonical(back) == _canonical(m)


def test_mps_binary_markers():
    m = new_model()
    b = m.add_variable("b", 0, 1, BINARY)
    x = m.add_variable("x", 0, 1)
    m.add_linear_constraint({b: 1.0, x: 1.0}, "<=", 1.5)
    text = export_mps(m)
    assert text.count("'INTORG'") == 1 and text.count("'INTEND'") == 1
    assert parse_mps(text).variables[0].is_binary


def test_nn_fragment_counts_in_mps():
    m = new_model()
    h = nn_graph_fragment(m, 2)
    assert len(h.alpha) == 2 and len(h.g) == 3
    text = export_mps(m)
    rows = text.split("ROWS")[1].split("COLUMNS")[0].split()
    senses = rows[0::2]
    names = rows[1::2]
    assert senses.count("N") == 1
    sawtooth_rows = [n for n in names if "_s" in n]
    assert len(sawtooth_rows) == 8
    equalities = [n for s, n in zip(senses, names) if s == "E"]
    assert len(equalities) == 2
    back = parse_mps(text)
    assert len(back.binary_ids()) == 2


@pytest.mark.parametrize("L", range(1, 6))
def test_nn_fragment_size(L):
    m = new_model()
    nn_graph_fragment(m, L)
    assert len(m.binary_ids()) == L
    assert sum(1 for v in m.variables if "_g" in v.name) == L + 1
    senses = [c.sense for c in m.constraints]
    assert senses.count("=") == 2 and len(senses) == 4 * L + 2


@pytest.mark.parametrize("method", ["NN", "BHH1", "BHH2", "NMDT", "TNMDT"])
def test_relaxation_round_trips_are_fixpoints(method):
    model, _ = relax_qp(gen_boxqp(4, 3), method, 2)
    first = export_mps(model)
    back = parse_mps(first)
    assert export_mps(back) == first
    assert _canonical(back) == _canonical(model)
    q_orig, q_back = _quad_terms(model), _quad_terms(back)
    assert q_orig.keys() == q_back.keys()
    assert all(abs(q_orig[k] - q_back[k]) <= 1e-11 * max(1, abs(q_orig[k])) for k in q_orig)

    text = export_lp_text(model)
    back_lp = parse_lp_text(text)
    assert export_lp_text(back_lp) == text
    assert _canonical(back_lp) == _canonical(model)


def test_quadratic_constraint_round_trip():
    model, _ = relax_qp(gen_qcp(3, 0), "NN", 2)
    model.add_quadratic_constraint([0, 1], QuadraticForm(np.eye(2)), 1.5, name="ball")
    for export, parse in ((export_mps, parse_mps), (export_lp_text, parse_lp_text)):
        text = export(model)
        back = parse(text)
        assert export(back) == text
        qc = back.quadratic_constraints[0]
        assert np.allclose(qc.form.matrix, np.eye(2)) and qc.rhs == 1.5


def test_mps_quadobj_uses_doubled_entries():
    m = new_model()
    x = m.add_variable("x", 0, 1)
    y = m.add_variable("y", 0, 1)
    m.set_objective(QuadraticForm(np.array([[1.0, 0.5], [0.5, 2.0]])), [x, y])
    text = export_mps(m)
    quad = text.split("\nQUADOBJ\n")[1].split("ENDATA")[0].split()
    entries = {(quad[i], quad[i + 1]): float(quad[i + 2]) for i in range(0, len(quad), 3)}
    assert entries == {("x", "x"): 2.0, ("x", "y"): 1.0, ("y", "y"): 4.0}


def test_number_formatting():
    assert format_number(0.1) == "0.1"
    assert format_number(1.0) == "1"
    assert format_number(1 / 3) == "0.333333333333"
    assert format_number(-2.5e-20) == "-2.5e-20"


def test_parse_errors_name_the_line():
    with pytest.raises(MpsError, match="line"):
        parse_mps("NAME x\nROWS\n N OBJ\nCOLUMNS\n    x OBJ notanumber\nENDATA\n")
    with pytest.raises(ValueError):
        parse_lp_text("Minimize\n obj: x +\nEnd\n")
