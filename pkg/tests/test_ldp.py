import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldp_lab import lattice as lat
from ldp_lab.errors import InvalidArgumentError, ResourceError, UnsupportedRegimeError
from ldp_lab.ldp import (
    SpectralMeasure,
    ball_mass,
    choose_path,
    concavity_defects,
    duality_check,
    free_energy_curve,
    largest_term_check,
    legendre_conjugate,
    legendre_transform,
    midpoint_convexity_defect,
    rate_curve,
    rate_curve_from_measures,
    spectral_measure,
)
from ldp_lab.spectral import Window
from ldp_lab.states import GibbsFiniteVolume, MarkovClassical, Product, Tracial

SYM = np.array([[0.75, 0.25], [0.25, 0.75]])


def atoms_equal(a: SpectralMeasure, b: SpectralMeasure, tol=1e-9) -> bool:
    return (len(a.atoms) == len(b.atoms)
            and np.max(np.abs(a.positions - b.positions)) <= tol
            and np.max(np.abs(a.weights - b.weights)) <= tol)


def h2(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


# -- spectral measures ---------------------------------------------------------

def test_measure_single_site_n1():
    mu = spectral_measure(Tracial(), lat.magnetization(), 1, "dense")
    assert mu.atoms == [(-1.0, 0.5), (1.0, 0.5)]


def test_measure_ising_n2():
    mu = spectral_measure(Tracial(), lat.ising(), 2, "dense")
    np.testing.assert_allclose(mu.positions, [-0.5, 0.5])
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])


def test_measure_binomial_n3_all_paths():
    ref = None
    for path in ("dense", "diagonal", "dp"):
        mu = spectral_measure(Tracial(), lat.magnetization(), 3, path)
        np.testing.assert_allclose(mu.positions, [-1, -1 / 3, 1 / 3, 1], atol=1e-15)
        np.testing.assert_allclose(mu.weights, [1 / 8, 3 / 8, 3 / 8, 1 / 8], atol=1e-15)
        ref = ref or mu
        assert atoms_equal(ref, mu)


def test_measure_rejects_dense_beyond_cap():
    with pytest.raises(ResourceError):
        spectral_measure(Tracial(), lat.tfim(), 16, cap=2**12)


def test_path_selection():
    assert choose_path(Tracial(), lat.ising(), 100) == "dp"
    assert choose_path(GibbsFiniteVolume(lat.tfim()), lat.tfim(), 6) == "dense"


@pytest.mark.parametrize("state", [
    Tracial(), Product(np.diag([0.3, 0.7])), MarkovClassical(SYM),
    MarkovClassical(np.array([[0.9, 0.1], [0.4, 0.6]])), GibbsFiniteVolume(lat.ising(0.8, 0.2)),
], ids=["tracial", "product", "markov-sym", "markov-asym", "gibbs"])
@pytest.mark.parametrize("psi", [lat.magnetization(), lat.ising(1.0, 0.5), lat.ising(-0.3)],
                         ids=["field", "ising-field", "ising"])
def test_three_way_path_equivalence(state, psi):
    for n in (2, 5, 8, 10):
        dense = spectral_measure(state, psi, n, "dense")
        assert atoms_equal(dense, spectral_measure(state, psi, n, "diagonal"))
        assert atoms_equal(dense, spectral_measure(state, psi, n, "dp"))


def test_joint_basis_equals_generic_for_commuting_gibbs():
    for psi, phi in ((lat.ising(), lat.ising()), (lat.tfim(0.0, 1.0), lat.tfim(0.0, 0.5))):
        state = GibbsFiniteVolume(phi)
        for n in (3, 6):
            assert atoms_equal(spectral_measure(state, psi, n, "dense"),
                               spectral_measure(state, psi, n, "joint"))


def test_joint_basis_refuses_non_commuting():
    with pytest.raises(UnsupportedRegimeError):
        spectral_measure(GibbsFiniteVolume(lat.tfim()), lat.magnetization(), 4, "joint")


def test_support_and_normalization_quantum():
    psi = lat.tfim(1.0, 0.8)
    mu = spectral_measure(GibbsFiniteVolume(lat.tfim(0.4, 0.3)), psi, 6)
    assert abs(mu.weights.sum() - 1) <= 1e-9
    assert mu.support_ok(lat.interaction_norm(psi))


# -- ball mass and rate curves --------------------------------------------------

def test_ball_mass_examples():
    mu = spectral_measure(Tracial(), lat.magnetization(), 3)
    assert ball_mass(mu, 0.0, 2.0) == pytest.approx(1.0)
    assert ball_mass(mu, 0.0, 0.1) == 0.0
    assert ball_mass(mu, 1 / 3, 0.1) == pytest.approx(3 / 8)


def test_rate_curve_examples():
    n = 100
    curve = rate_curve(Tracial(), lat.magnetization(), [n], [0.0, 1.0, 2.0], eps=0.01)
    s0, s1, s2 = curve.row(n)
    assert s0 == pytest.approx(math.log(comb(n, n // 2) / 2**n) / n, abs=1e-12)
    assert s0 == pytest.approx(-0.02531, abs=1e-5)
    assert s1 == pytest.approx(-math.log(2), abs=1e-12)
    assert s2 == -math.inf


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), x=st.floats(-1.2, 1.2), e1=st.floats(0.001, 0.5),
       e2=st.floats(0.001, 0.5))
def test_rate_monotone_in_eps_and_inf_encoding(n, x, e1, e2):
    lo, hi = sorted((e1, e2))
    mu = spectral_measure(MarkovClassical(SYM), lat.ising(0.5, 1.0), n)
    s_lo = rate_curve_from_measures([mu], [n], [x], lo).values[0, 0]
    s_hi = rate_curve_from_measures([mu], [n], [x], hi).values[0, 0]
    assert s_lo <= s_hi
    for eps, s in ((lo, s_lo), (hi, s_hi)):
        assert (ball_mass(mu, x, eps) > 0) == math.isfinite(s)
        assert s <= 0


def test_concavity_defect_shrinks():
    x = np.round(np.arange(-0.8, 0.8001, 0.05), 10)
    curve = rate_curve(MarkovClassical(SYM), lat.magnetization(), [20, 80, 320], x, eps=0.05)
    rep = concavity_defects(curve)
    assert rep["defect"][-1] <= rep["defect"][0]
    assert math.isfinite(rep["c_fit"])


# -- free energies -------------------------------------------------------------

def test_pressure_single_site_closed_form():
    alpha = np.linspace(-3, 3, 61)
    curve = free_energy_curve(None, lat.magnetization(), [1, 7, 40], alpha, kind="P")
    for row in curve.values:
        np.testing.assert_allclose(row, np.log(2 * np.cosh(alpha)), atol=1e-12)


def test_pressure_at_zero_is_log2():
    curve = free_energy_curve(None, lat.tfim(0.8, 1.3), [3, 6], np.array([0.0]), kind="P")
    np.testing.assert_allclose(curve.values[:, 0], math.log(2), atol=1e-12)


def test_state_cumulant_product_half():
    alpha = np.linspace(-2, 2, 41)
    curve = free_energy_curve(Product(np.eye(2) / 2), lat.magnetization(), [5], alpha, kind="f")
    np.testing.assert_allclose(curve.values[0], np.log(np.cosh(alpha)), atol=1e-12)


def test_pressure_non_commuting_matches_dense_trace():
    psi, phi = lat.magnetization(), lat.tfim(0.7, 0.9)
    alpha = np.array([-1.0, 0.3, 2.0])
    curve = free_energy_curve(None, psi, [4], alpha, kind="P", phi=phi)
    region = lat.Region.box(4)
    K = lat.build_hamiltonian(psi, region).matrix
    H = lat.build_hamiltonian(phi, region).matrix
    for a, v in zip(alpha, curve.values[0]):
        w = np.linalg.eigvalsh(-H + a * K)
        assert v == pytest.approx(math.log(np.exp(w).sum()) / 4, abs=1e-12)


def test_pressure_large_alpha_no_overflow():
    curve = free_energy_curve(None, lat.magnetization(), [400], np.array([-50.0, 50.0]), kind="P")
    np.testing.assert_allclose(curve.values[0], 50.0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(J=st.floats(-1.5, 1.5), h=st.floats(-1.5, 1.5), n=st.integers(2, 12))
def test_scgf_midpoint_convexity(J, h, n):
    alpha = np.linspace(-3, 3, 61)
    curve = free_energy_curve(MarkovClassical(SYM), lat.ising(J, h), [n], alpha)
    assert midpoint_convexity_defect(curve.values[0]) <= 1e-8


def test_free_energy_identical_for_any_worker_count():
    alpha = np.linspace(-2, 2, 21)
    args = (GibbsFiniteVolume(lat.ising(0.5)), lat.ising(1.0, 0.2), [4, 6, 8, 30], alpha)
    a = free_energy_curve(*args, workers=1).values
    b = free_energy_curve(*args, workers=4).values
    np.testing.assert_array_equal(a, b)


def test_free_energy_requires_state_for_f():
    with pytest.raises(InvalidArgumentError):
        free_energy_curve(None, lat.magnetization(), [2], np.array([0.0]), kind="f")


# -- Legendre conjugation -------------------------------------------------------

def test_conjugate_quadratic():
    alpha = np.round(np.arange(-5, 5.0001, 0.01), 10)
    s = legendre_conjugate(alpha**2 / 2, alpha, [1.0])
    assert s[0] == pytest.approx(-0.5, abs=5e-3)


def test_conjugate_log_cosh():
    alpha = np.round(np.arange(-4, 4.0001, 0.001), 10)
    P = np.log(2 * np.cosh(alpha))
    s = legendre_conjugate(P, alpha, [0.0, 0.5])
    assert s[0] == pytest.approx(math.log(2), abs=1e-12)
    assert s[1] == pytest.approx(h2(0.75), abs=1e-6)
    closed = math.log(2) - (0.75 * math.log(1.5) + 0.25 * math.log(0.5))
    assert s[1] == pytest.approx(closed, abs=1e-6)


def test_conjugate_skips_non_finite_and_rejects_empty():
    s = legendre_transform(np.array([-np.inf, -1.0, -np.inf]), [-1, 0, 1], [2.0])
    assert s[0] == -1.0
    with pytest.raises(InvalidArgumentError):
        legendre_conjugate(np.array([]), np.array([]), [0.0])


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.1, 3), b=st.floats(-1, 1))
def test_double_conjugate_of_concave_is_identity_on_grid(c, b):
    x = np.linspace(-1, 1, 41)
    s = -c * (x - b) ** 2
    alpha = np.linspace(-20, 20, 4001)
    P = legendre_transform(s, x, alpha)
    back = legendre_conjugate(P, alpha, x)
    assert np.max(np.abs(back - s)) <= 0.02


# -- structural checks ----------------------------------------------------------

def test_largest_term_examples():
    mu = spectral_measure(Tracial(), lat.magnetization(), 3)
    rep = largest_term_check(mu, Window(-0.5, 0.4), Window(-0.5, 0.4))
    assert rep.passed and rep.mass_union == rep.mass_1
    rep = largest_term_check(mu, Window(-1, -0.5), Window(0.5, 1))
    assert rep.passed and rep.mass_union == pytest.approx(rep.mass_1 + rep.mass_2)
    rep = largest_term_check(mu, Window(-0.5, 0.4), Window(0, 1))
    assert (rep.mass_1, rep.mass_2, rep.mass_union) == pytest.approx((0.75, 0.5, 0.875))
    assert rep.passed and rep.log_gap <= math.log(2) / 3


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-1.5, 1.5), b=st.floats(-1.5, 1.5), c=st.floats(-1.5, 1.5),
       d=st.floats(-1.5, 1.5))
def test_largest_term_property(a, b, c, d):
    mu = spectral_measure(MarkovClassical(SYM), lat.ising(0.5, 1.0), 9)
    rep = largest_term_check(mu, Window(min(a, b), max(a, b)), Window(min(c, d), max(c, d)))
    assert rep.passed and rep.log_gap <= math.log(2) / 9 + 1e-12


def test_duality_self_conjugate_has_zero_x_gap():
    alpha = np.round(np.arange(-3, 3.0001, 0.01), 10)
    x = np.round(np.arange(-0.9, 0.9001, 0.05), 10)
    scgf = free_energy_curve(None, lat.magnetization(), [40], alpha, kind="P")
    s = legendre_conjugate(scgf.translated[0], alpha, x)
    from ldp_lab.ldp import RateCurve
    rep = duality_check(RateCurve(0.0, x, [40], s[None, :]), scgf)
    assert rep.max_x_gap[0] == 0.0


def test_duality_alpha_zero_row_is_normalization_gap():
    x = np.round(np.arange(-0.96, 0.9601, 0.02), 10)
    alpha = np.array([0.0])
    mu_curve = rate_curve(Tracial(), lat.magnetization(), [100], x, eps=0.02)
    scgf = free_energy_curve(None, lat.magnetization(), [100], alpha, kind="P")
    rep = duality_check(mu_curve, scgf)
    # Against P_n(α) - P_n(0): the gap at α = 0 is -max_x s_n(x) ≥ 0.
    assert rep.alpha_gaps[0, 0] == pytest.approx(-np.max(mu_curve.values[0]), abs=1e-15)


def test_duality_tracial_magnetization_example():
    x = np.round(np.arange(-0.96, 0.9601, 0.02), 10)
    alpha = np.round(np.arange(-3, 3.0001, 0.01), 10)
    curve = rate_curve(Tracial(), lat.magnetization(), [200], x, eps=0.02)
    scgf = free_energy_curve(None, lat.magnetization(), [200], alpha, kind="P")
    rep = duality_check(curve, scgf)
    assert rep.max_alpha_gap[0] <= 0.05 and rep.max_x_gap[0] <= 0.05
