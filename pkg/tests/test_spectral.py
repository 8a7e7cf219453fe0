import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldp_lab.errors import InvalidArgumentError
from ldp_lab.lattice import PAULI, LocalOperator, Region
from ldp_lab.selftest import random_hermitian, random_unitary, spectral_suite
from ldp_lab.spectral import (
    Window,
    commutator_norm,
    diagonalize,
    log_trace_exp,
    operator_exponential,
    operator_norm,
    spectral_projection,
    weyl_distance,
)

X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]

hermitian_dims = st.sampled_from([2, 4, 8, 16])
seeds = st.integers(0, 2**32 - 1)


def test_diagonalize_examples():
    np.testing.assert_allclose(diagonalize(X).eigenvalues, [-1, 1])
    np.testing.assert_array_equal(diagonalize(np.diag([1.0, -1, -1, 1])).eigenvalues, [-1, -1, 1, 1])


def test_diagonalize_random_64():
    a = random_hermitian(np.random.default_rng(1), 64)
    res = diagonalize(a)
    assert np.max(np.abs(res.reconstruct() - a)) <= 1e-9 * max(1, res.norm())
    v = res.eigenvectors
    assert np.max(np.abs(v.conj().T @ v - np.eye(64))) <= 1e-9
    assert np.all(np.diff(res.eigenvalues) >= 0)


def test_diagonalize_is_deterministic():
    a = random_hermitian(np.random.default_rng(2), 32)
    r1, r2 = diagonalize(a), diagonalize(a.copy())
    np.testing.assert_array_equal(r1.eigenvalues, r2.eigenvalues)
    np.testing.assert_array_equal(r1.eigenvectors, r2.eigenvectors)


def test_diagonalize_rejects_non_hermitian():
    with pytest.raises(InvalidArgumentError):
        diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_spectral_projection_examples():
    res = diagonalize(np.diag([1.0, -1, -1, 1]))
    p = spectral_projection(res, Window(0.4, 0.6), scale=2)
    np.testing.assert_allclose(p, np.diag([1.0, 0, 0, 1]))
    res = diagonalize(X)
    np.testing.assert_allclose(spectral_projection(res, Window(-1, 1)), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(spectral_projection(res, Window(0.9, 1.1)), (np.eye(2) + X) / 2,
                               atol=1e-15)


def test_window_snapping_and_complement():
    w = Window(0.0, 0.5)
    assert w.contains([0.5 + 5e-13, -5e-13]).all()
    assert not w.contains([0.5 + 1e-11]).any()
    assert Window(0, 0.5, complement=True).contains([0.6, -0.1]).all()
    with pytest.raises(InvalidArgumentError):
        Window(1, 0)


def test_projection_of_local_operator_keeps_region():
    op = LocalOperator(Region.box(1), Z)
    p = spectral_projection(diagonalize(op), Window(0.5, 1.5))
    assert isinstance(p, LocalOperator) and p.region == op.region


def test_operator_exponential_examples():
    e, s = operator_exponential(diagonalize(Z), 0.0)
    np.testing.assert_array_equal(e, np.eye(2))
    assert s == 0.0
    e, s = operator_exponential(diagonalize(Z), 1.0)
    np.testing.assert_allclose(e, np.diag([1.0, math.exp(-2)]))
    assert s == 1.0
    for beta in (-3.0, -0.5, 0.7, 4.0):
        e, s = operator_exponential(diagonalize(Z), beta)
        assert abs(math.exp(s) * np.trace(e) - 2 * math.cosh(beta)) <= 1e-12 * 2 * math.cosh(beta)


def test_operator_exponential_no_overflow():
    a = np.diag([-800.0, 0.0, 900.0])
    e, s = operator_exponential(diagonalize(a), 1.0)
    assert s == 900.0 and np.all(np.isfinite(e))
    assert log_trace_exp(np.array([-800.0, 0.0, 900.0])) == pytest.approx(900.0)


def test_commutator_norm_examples():
    assert commutator_norm(X, X) == 0
    assert commutator_norm(X, Z) == pytest.approx(2.0)
    assert commutator_norm(np.diag([1.0, 2]), np.diag([3.0, -1])) == 0.0
    with pytest.raises(InvalidArgumentError):
        commutator_norm(X, np.eye(4))


def test_weyl_distance_examples():
    a = random_hermitian(np.random.default_rng(3), 8)
    assert weyl_distance(a, a) == 0
    d = weyl_distance(Z, Z + 0.1 * X)
    assert d == pytest.approx(math.sqrt(1.01) - 1, abs=1e-12) and d <= 0.1
    assert weyl_distance(a, a + 0.3 * np.eye(8)) == pytest.approx(0.3, abs=1e-12)


def test_operator_norm_non_hermitian_via_gram():
    m = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert operator_norm(m) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(dim=hermitian_dims, seed=seeds, lo=st.floats(-3, 3), width=st.floats(0, 3))
def test_projection_properties(dim, seed, lo, width):
    rng = np.random.default_rng(seed)
    a = random_hermitian(rng, dim)
    res = diagonalize(a)
    p = spectral_projection(res, Window(lo, lo + width))
    q = spectral_projection(res, Window(lo, lo + width, complement=True))
    assert np.max(np.abs(p - p.conj().T)) <= 1e-9
    assert np.max(np.abs(p @ p - p)) <= 1e-9
    assert np.max(np.abs(p @ a - a @ p)) <= 1e-9 * max(1, res.norm())
    assert operator_norm(p @ q) <= 1e-9
    np.testing.assert_allclose(p + q, np.eye(dim), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(dim=hermitian_dims, seed=seeds)
def test_projection_is_cluster_invariant(dim, seed):
    rng = np.random.default_rng(seed)
    levels = np.sort(rng.integers(-2, 3, size=dim)).astype(float)
    u = random_unitary(rng, dim)
    a = (u * levels) @ u.conj().T
    res = diagonalize(a)
    w = Window(-0.5, 1.5)
    p = spectral_projection(res, w)
    # Same projection from the exact eigenbasis u.
    ref = u[:, (levels >= -0.5) & (levels <= 1.5)]
    assert np.max(np.abs(p - ref @ ref.conj().T)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(dim=hermitian_dims, seed=seeds, scale=st.floats(0.01, 5))
def test_weyl_bound(dim, seed, scale):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, dim), scale * random_hermitian(rng, dim)
    assert weyl_distance(a, a + b) <= operator_norm(b) + 1e-12


@settings(max_examples=30, deadline=None)
@given(dim=hermitian_dims, seed=seeds, target=st.floats(0.01, 8.0))
def test_exponential_inverse_absolute(dim, seed, target):
    rng = np.random.default_rng(seed)
    a = random_hermitian(rng, dim)
    a *= target / diagonalize(a).norm()
    res = diagonalize(a)
    e1, s1 = operator_exponential(res, 1.0)
    e2, s2 = operator_exponential(res, -1.0)
    assert np.max(np.abs(math.exp(s1 + s2) * e1 @ e2 - np.eye(dim))) <= 1e-8


def test_exponential_inverse_stated_range():
    """e^{βA}e^{-βA} = I within 1e-8 across ‖βA‖ ≤ 30, absolute."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for dim in (2, 4, 8, 16):
        for target in (10.0, 20.0, 30.0):
            a = random_hermitian(rng, dim)
            a *= target / diagonalize(a).norm()
            res = diagonalize(a)
            e1, s1 = operator_exponential(res, 1.0)
            e2, s2 = operator_exponential(res, -1.0)
            worst = max(worst, float(np.max(np.abs(math.exp(s1 + s2) * e1 @ e2 - np.eye(dim)))))
    assert worst <= 1e-8, f"max deviation {worst:.3e}"


def test_spectral_suite_passes():
    result = spectral_suite(seed=7, pairs=50)
    assert result.passed, result.failures[:5]
