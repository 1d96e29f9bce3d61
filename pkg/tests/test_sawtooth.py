import numpy as np
import pytest

from oracles import interpolant
from sawtooth_qp.sawtooth import SawtoothApprox, breakpoints, interpolant_eval, max_error, sawtooth_eval, sawtooth_layers


@pytest.mark.parametrize("i,x,expected", [(1, 0.5, 1.0), (3, 0.125, 1.0), (2, 0.0, 0.0)])
def test_sawtooth_examples(i, x, expected):
    assert sawtooth_eval(i, x) == expected


def test_sawtooth_boundary_takes_descending_branch():
    assert sawtooth_eval(1, 0.5) == 1.0
    assert sawtooth_eval(2, 0.5) == 0.0


@pytest.mark.parametrize("x", [-0.01, 1.01, np.nan])
def test_domain_errors(x):
    with pytest.raises(ValueError):
        sawtooth_eval(1, x)
    with pytest.raises(ValueError):
        interpolant_eval(2, x)


def test_interpolant_examples():
    assert interpolant_eval(3, 0.375) == pytest.approx(0.140625, abs=1e-15)
    assert interpolant_eval(2, 0.125) == pytest.approx(0.03125, abs=1e-15)
    for L in range(0, 7):
        nodes = breakpoints(L)
        assert np.allclose(interpolant_eval(L, nodes), nodes**2, atol=1e-15, rtol=0)


@pytest.mark.parametrize("L", range(0, 9))
def test_interpolant_matches_reference_interpolation(L):
    xs = np.linspace(0, 1, 4097)
    assert np.max(np.abs(interpolant_eval(L, xs) - interpolant(L, xs))) < 1e-14


def test_max_error_values():
    assert max_error(0) == 0.25
    assert max_error(2) == 0.015625
    assert max_error(3) == 2.0**-8
    assert interpolant_eval(2, 0.125) - 0.125**2 == pytest.approx(max_error(2))
    with pytest.raises(ValueError):
        max_error(-1)


def test_breakpoints():
    assert list(breakpoints(0)) == [0, 1]
    assert list(breakpoints(1)) == [0, 0.5, 1]
    assert list(breakpoints(2)) == [0, 0.25, 0.5, 0.75, 1]


@pytest.mark.parametrize("L", range(1, 7))
def test_layers_are_scaled_interpolant_differences(L):
    xs = np.linspace(0, 1, 1000)
    for i in range(1, L + 1):
        diff = 2.0 ** (2 * i) * (interpolant_eval(i - 1, xs) - interpolant_eval(i, xs))
        assert np.max(np.abs(sawtooth_eval(i, xs) - diff)) < 1e-10


@pytest.mark.parametrize("L", range(0, 7))
def test_interpolant_overestimates_and_is_convex(L):
    xs = np.linspace(0, 1, 1025)
    F = interpolant_eval(L, xs)
    gap = F - xs**2
    assert np.all(gap >= -1e-15)
    nodes = set(np.round(breakpoints(L) * 1024).astype(int))
    touching = set(np.flatnonzero(np.abs(gap) <= 1e-15))
    assert touching == nodes
    assert np.all(F[:-2] + F[2:] - 2 * F[1:-1] >= -1e-14)


def test_layers_stack_and_class_wrapper():
    xs = np.array([0.1, 0.6])
    layers = sawtooth_layers(3, xs)
    assert layers.shape == (4, 2)
    assert np.allclose(layers[0], xs)
    approx = SawtoothApprox(3)
    assert approx(0.375) == pytest.approx(0.140625)
    assert approx.error_bound == 2.0**-8
    assert list(approx.breakpoints) == list(breakpoints(3))
    with pytest.raises(ValueError):
        SawtoothApprox(-1)
    with pytest.raises(ValueError):
        SawtoothApprox(31)
