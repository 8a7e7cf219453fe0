import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ldp_lab import lattice as lat
from ldp_lab.bounds import (
    BoundReport,
    decomposition_defect_norm,
    exp_interchange_norm,
    product_projection_check,
    projection_overlap_norm,
    projection_overlap_sweep,
    projection_transfer_check,
)
from ldp_lab.errors import InvalidArgumentError, UnsupportedRegimeError
from ldp_lab.lattice import Region, block_decomposition, build_hamiltonian, decoupled_hamiltonian
from ldp_lab.selftest import random_projection, transfer_suite
from ldp_lab.states import GibbsFiniteVolume, MarkovClassical, Product, Tracial


def dense_pair(psi, n, m, g):
    dec = block_decomposition(n, m, g)
    K = build_hamiltonian(psi, Region.box(n)).matrix
    S = decoupled_hamiltonian(psi, dec).matrix
    return dec, K, S


def window_projector(a, lo, hi, complement=False):
    w, v = np.linalg.eigh(a)
    inside = (w >= lo - 1e-12) & (w <= hi + 1e-12)
    sel = v[:, ~inside if complement else inside]
    return sel @ sel.conj().T


def test_report_pass_flag():
    assert BoundReport("q", {}, 1.0, 1.0).passed
    assert not BoundReport("q", {}, 1.0 + 1e-6, 1.0).passed
    assert BoundReport("q", {}, 5.0).passed is None


# -- decomposition defect --------------------------------------------------------

def test_defect_zero_when_fully_decoupled():
    lemma, cor = decomposition_defect_norm(lat.magnetization(), 8, 2, 0)
    assert lemma.measured == 0.0 and cor.measured == 0.0


def test_defect_ising_single_broken_bond():
    lemma, _ = decomposition_defect_norm(lat.ising(), 4, 2, 0)
    assert lemma.measured == 0.25 and lemma.bound == 0.25 and lemma.passed


@settings(max_examples=12, deadline=None)
@given(n=st.integers(4, 10), m=st.integers(1, 3), g=st.integers(0, 1), h=st.floats(0.1, 2.0))
def test_defect_matches_dense_oracle_and_bound(n, m, g, h):
    if n < 2 * (m + 2 * g):
        return
    psi = lat.tfim(1.0, h)
    dec, K, S = dense_pair(psi, n, m, g)
    lemma, cor = decomposition_defect_norm(psi, n, m, g)
    assert lemma.measured == pytest.approx(np.linalg.norm(K - S, 2) / n, abs=1e-10)
    bvol = dec.k * m
    assert cor.measured == pytest.approx(np.linalg.norm(K / n - S / bvol, 2), abs=1e-10)
    assert lemma.passed and cor.passed


# -- interchange norm -------------------------------------------------------------

def test_interchange_beta_zero():
    assert exp_interchange_norm(lat.tfim(), 6, 2, 0, 0.0).measured == 0.0


def test_interchange_classical_closed_form():
    rep = exp_interchange_norm(lat.ising(), 4, 2, 0, 1.0)
    assert rep.measured == pytest.approx(0.25, abs=1e-9)
    assert rep.passed


@settings(max_examples=15, deadline=None)
@given(J=st.floats(-2, 2), h=st.floats(-1, 1), beta=st.floats(0.05, 3), n=st.integers(4, 9))
def test_interchange_classical_sign_symmetry(J, h, beta, n):
    psi = lat.ising(J, h)
    a = exp_interchange_norm(psi, n, 2, 0, beta)
    b = exp_interchange_norm(psi.scaled(-1.0), n, 2, 0, -beta)
    assert a.measured == pytest.approx(b.measured, abs=1e-12)
    assert a.passed and b.passed
    # Pure bond chains: the broken bonds can be aligned or anti-aligned at will.
    bonds = lat.ising(J)
    a = exp_interchange_norm(bonds, n, 2, 0, beta)
    b = exp_interchange_norm(bonds, n, 2, 0, -beta)
    assert a.measured == pytest.approx(b.measured, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(h=st.floats(0.1, 2), beta=st.floats(-2, 2), n=st.integers(4, 8), m=st.integers(1, 2))
def test_interchange_quantum_matches_expm_oracle(h, beta, n, m):
    psi = lat.tfim(1.0, h)
    _, K, S = dense_pair(psi, n, m, 0)
    ref = math.log(np.linalg.norm(scipy.linalg.expm(beta * K) @ scipy.linalg.expm(-beta * S), 2)) / n
    rep = exp_interchange_norm(psi, n, m, 0, beta)
    assert rep.measured == pytest.approx(ref, abs=1e-9)
    assert rep.measured >= -1e-12
    # Submultiplicativity: ‖e^{βK}e^{-βS}‖ ≤ ‖e^{βK}‖‖e^{-βS}‖.
    wk, ws = np.linalg.eigvalsh(K), np.linalg.eigvalsh(S)
    assert rep.measured <= (max(beta * wk) + max(-beta * ws)) / n + 1e-12
    assert rep.passed is None and rep.reference is not None


def test_interchange_requires_d1():
    psi = lat.Interaction((((Region(((0, 0),))), lat.PAULI["Z"]),), 2, True, d=2)
    with pytest.raises(UnsupportedRegimeError):
        exp_interchange_norm(psi, 4, 1, 0, 1.0)


# -- projection overlap ------------------------------------------------------------

def test_overlap_fully_decoupled_is_minus_infinity():
    rep = projection_overlap_norm(lat.magnetization(), 8, 2, 0, 0.0, 0.5, 0.25)
    assert rep.measured == -math.inf and rep.extra["norm"] == 0.0


def test_overlap_classical_matches_enumeration():
    psi, n, m = lat.ising(), 8, 2
    dec = block_decomposition(n, m, 0)
    inside = dec.inside_some_block()
    hit = False
    for conf in itertools.product((1, -1), repeat=n):
        full = sum(conf[i] * conf[i + 1] for i in range(n - 1)) / n
        blocks = sum(conf[i] * conf[i + 1] for i in range(n - 1)
                     if inside(((i,), (i + 1,)))) / (dec.k * m)
        hit |= abs(blocks) <= 0.25 + 1e-12 and abs(full) > 0.5 + 1e-12
    rep = projection_overlap_norm(psi, n, m, 0, 0.0, 0.5, 0.25)
    assert rep.extra["norm"] == (1.0 if hit else 0.0)
    assert rep.measured == (0.0 if hit else -math.inf)


@settings(max_examples=8, deadline=None)
@given(h=st.floats(0.2, 1.5), n=st.integers(6, 8), x=st.floats(-0.3, 0.3))
def test_overlap_quantum_matches_projector_oracle(h, n, x):
    psi = lat.tfim(1.0, h)
    dec, K, S = dense_pair(psi, n, 2, 0)
    near = window_projector(S / (dec.k * 2), x - 0.2, x + 0.2)
    far = window_projector(K / n, x - 0.4, x + 0.4, complement=True)
    norm = np.linalg.norm(near @ far, 2)
    rep = projection_overlap_norm(psi, n, 2, 0, x, 0.4, 0.2)
    assert rep.extra["norm"] == pytest.approx(norm, abs=1e-9)
    assert rep.measured <= 0.0


def test_overlap_monotone_in_eps():
    psi = lat.tfim(1.0, 0.8)
    values = [projection_overlap_norm(psi, 8, 2, 0, 0.0, eps, 0.1).measured
              for eps in (0.15, 0.25, 0.4, 0.6, 0.9)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_overlap_rejects_bad_windows():
    with pytest.raises(InvalidArgumentError):
        projection_overlap_norm(lat.tfim(), 8, 2, 0, 0.0, 0.2, 0.2)


def test_overlap_sweep_fits_decay():
    sw = projection_overlap_sweep(lat.tfim(), [6, 8], 2, 0, 0.0, 0.4, 0.2, alpha_probe=2.0)
    assert len(sw["reports"]) == 2
    assert sw["reports"][0].reference == pytest.approx(-0.4)


# -- projection transfer and product projections -------------------------------------

def test_transfer_equal_projections():
    rng = np.random.default_rng(0)
    p = random_projection(rng, 8)
    rep = projection_transfer_check(Tracial(), p, p, Region.box(3))
    assert rep.passed and rep.overlap <= 1e-12


def test_transfer_orthogonal_rank_one():
    p, q = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    rep = projection_transfer_check(Tracial(), p, q, Region.box(1))
    assert rep.omega_p == 0.5 and rep.omega_q == 0.5
    assert rep.overlap == pytest.approx(1.0) and rep.passed


def test_transfer_rejects_non_projection():
    with pytest.raises(InvalidArgumentError):
        projection_transfer_check(Tracial(), np.eye(2) * 0.5, np.eye(2), Region.box(1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sites=st.integers(2, 4),
       which=st.sampled_from(["tracial", "product", "gibbs", "markov"]))
def test_transfer_property(seed, sites, which):
    rng = np.random.default_rng(seed)
    state = {"tracial": Tracial(), "product": Product(np.array([[0.6, 0.2j], [-0.2j, 0.4]])),
             "gibbs": GibbsFiniteVolume(lat.tfim(1.0, 0.5)),
             "markov": MarkovClassical(np.array([[0.75, 0.25], [0.25, 0.75]]))}[which]
    diag = which == "markov"
    p = random_projection(rng, 2**sites, diag)
    q = random_projection(rng, 2**sites, diag)
    assert projection_transfer_check(state, p, q, Region.box(sites)).passed


def test_transfer_suite_passes():
    res = transfer_suite(seed=5, pairs=30)
    assert res.passed, res.failures[:3]


@pytest.mark.parametrize("psi", [lat.ising(), lat.tfim(1.0, 0.7)], ids=["ising", "tfim"])
@pytest.mark.parametrize("x1,x2", [(0.0, 0.0), (-0.5, 0.5), (0.25, -0.25)])
def test_product_projection_inequality(psi, x1, x2):
    rep = product_projection_check(psi, 8, 2, 0, x1, x2, 0.3)
    assert rep.passed, rep
    assert rep.rank_product <= rep.rank_window
