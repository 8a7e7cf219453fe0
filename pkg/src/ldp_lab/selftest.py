"""Randomized invariant suites used by ``ldp-lab selftest`` and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice as lat
from .bounds import projection_transfer_check
from .ldp import (
    CONVEXITY_TOL,
    free_energy_curve,
    largest_term_check,
    midpoint_convexity_defect,
    spectral_measure,
)
from .spectral import (
    Window,
    SpectralResolution,
    diagonalize,
    operator_exponential,
    operator_norm,
    spectral_projection,
    weyl_distance,
)
from .states import GibbsFiniteVolume, MarkovClassical, Product, Tracial

EXP_ABS_LIMIT = 8.0


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, ok: bool, detail: str) -> None:
        self.checks += 1
        if not ok:
            self.failures.append(detail)


def random_hermitian(rng: np.random.Generator, dim: int, real: bool = False) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    if not real:
        a = a + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def degenerate_hermitian(rng, dim: int):
    """Hermitian matrix with repeated eigenvalues; returns (matrix, eigenvalues)."""
    levels = np.sort(rng.choice(np.arange(-3, 4), size=dim))
    u = random_unitary(rng, dim)
    return (u * levels) @ u.conj().T, levels


def spectral_suite(seed: int = 0, pairs: int = 200) -> SuiteResult:
    rng = np.random.default_rng(seed)
    out = SuiteResult("spectral")
    for dim in (2, 4, 8, 16):
        for i in range(pairs):
            a, b = random_hermitian(rng, dim), random_hermitian(rng, dim)
            w, d = weyl_distance(a, b), operator_norm(a - b)
            out.record(w <= d + 1e-12, f"weyl dim={dim} pair={i}: {w} > {d}")
        for i in range(10):
            a = random_hermitian(rng, dim)
            res = diagonalize(a)
            norm_a = max(1.0, res.norm())
            recon = np.max(np.abs(res.reconstruct() - a))
            out.record(recon <= 1e-9 * norm_a, f"reconstruction dim={dim}: {recon}")
            lo, hi = np.sort(rng.uniform(res.eigenvalues[0], res.eigenvalues[-1], 2))
            p1 = spectral_projection(res, Window(lo, hi))
            p2 = spectral_projection(res, Window(lo, hi, complement=True))
            out.record(np.max(np.abs(p1 - p1.conj().T)) <= 1e-9, f"P=P† dim={dim}")
            out.record(np.max(np.abs(p1 @ p1 - p1)) <= 1e-9, f"P=P² dim={dim}")
            out.record(np.max(np.abs(p1 @ a - a @ p1)) <= 1e-9 * norm_a, f"[P,A] dim={dim}")
            out.record(np.linalg.norm(p1 @ p2, 2) <= 1e-9, f"disjoint windows dim={dim}")
            mat, levels = degenerate_hermitian(rng, dim)
            res = diagonalize(mat)
            w = Window(float(levels[0]) - 0.5, float(np.median(levels)) + 0.5)
            p = spectral_projection(res, w)
            vecs = res.eigenvectors.copy()
            clusters = np.concatenate([[0], np.cumsum(np.diff(res.eigenvalues) > 1e-8)])
            for c in np.unique(clusters):
                idx = np.flatnonzero(clusters == c)
                vecs[:, idx] = vecs[:, idx] @ random_unitary(rng, idx.size)
            remixed = SpectralResolution(res.eigenvalues, vecs)
            delta = np.max(np.abs(spectral_projection(remixed, w) - p))
            out.record(delta <= 1e-8, f"cluster remix dim={dim}: {delta}")
            for target in (1.0, EXP_ABS_LIMIT, 30.0):
                a = random_hermitian(rng, dim)
                a *= target / diagonalize(a).norm()
                res = diagonalize(a)
                e1, s1 = operator_exponential(res, 1.0)
                e2, s2 = operator_exponential(res, -1.0)
                err = np.max(np.abs(math.exp(s1 + s2) * (e1 @ e2) - np.eye(dim)))
                # Rounding in the two factors is amplified by ‖e^{A}‖·‖e^{-A}‖.
                limit = 1e-8 if target <= EXP_ABS_LIMIT else 1e-8 * math.exp(s1 + s2)
                out.record(err <= limit, f"exp inverse dim={dim} norm={target}: {err}")
    return out


def _measure_instances():
    chain = MarkovClassical(np.array([[0.75, 0.25], [0.25, 0.75]]))
    rho = np.array([[0.7, 0.2], [0.2, 0.3]])
    return [
        ("tracial/ising", Tracial(), lat.ising(1.0, 0.3), 6),
        ("product/magnetization", Product(rho), lat.magnetization(), 6),
        ("markov/ising", chain, lat.ising(0.5, 1.0), 7),
        ("gibbs-classical/ising", GibbsFiniteVolume(lat.ising(0.8)), lat.ising(1.0, 0.5), 6),
        ("gibbs-quantum/magnetization", GibbsFiniteVolume(lat.tfim(1.0, 0.7)), lat.magnetization(), 6),
        ("tracial/tfim", Tracial(), lat.tfim(), 6),
        ("product/tfim", Product(rho), lat.tfim(0.5, 1.0), 5),
        ("gibbs-quantum/tfim", GibbsFiniteVolume(lat.tfim(0.3, 0.4)), lat.tfim(), 5),
    ]


def measure_suite(seed: int = 0) -> SuiteResult:
    out = SuiteResult("measure")
    for name, state, psi, n in _measure_instances():
        norm = lat.interaction_norm(psi)
        paths = ["dense"] + (["diagonal"] if psi.classical else [])
        if psi.classical and not (isinstance(state, GibbsFiniteVolume)
                                  and not state.interaction.classical):
            paths.append("dp")
        measures = {p: spectral_measure(state, psi, n, p) for p in paths}
        for p, mu in measures.items():
            out.record(abs(mu.weights.sum() - 1) <= 1e-9, f"{name}/{p}: normalization")
            out.record(mu.support_ok(norm), f"{name}/{p}: support beyond ‖Ψ‖={norm}")
        ref = measures["dense"]
        for p, mu in measures.items():
            same = (len(mu.atoms) == len(ref.atoms)
                    and np.max(np.abs(mu.positions - ref.positions)) <= 1e-9
                    and np.max(np.abs(mu.weights - ref.weights)) <= 1e-9)
            out.record(same, f"{name}: {p} path differs from dense")
    return out


def scgf_suite(seed: int = 0) -> SuiteResult:
    out = SuiteResult("scgf convexity")
    alpha = np.linspace(-3, 3, 121)
    for name, state, psi, n in _measure_instances():
        curve = free_energy_curve(state, psi, [n - 2, n], alpha, kind="f")
        for row, nn in zip(curve.values, curve.n_list):
            d = midpoint_convexity_defect(row)
            out.record(d <= CONVEXITY_TOL, f"{name} f_n n={nn}: defect {d}")
    curve = free_energy_curve(None, lat.tfim(), [4, 6], alpha[::4], kind="P",
                              phi=lat.tfim(0.5, 0.5).scaled(0.5))
    for row, nn in zip(curve.values, curve.n_list):
        d = midpoint_convexity_defect(row)
        out.record(d <= CONVEXITY_TOL, f"tfim P_n n={nn}: defect {d}")
    return out


def largest_term_suite(seed: int = 0, pairs: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    out = SuiteResult("largest term")
    measures = [spectral_measure(state, psi, n) for _, state, psi, n in _measure_instances()[:5]]
    for i in range(pairs):
        mu = measures[i % len(measures)]
        b1 = Window(*np.sort(rng.uniform(-1.5, 1.5, 2)))
        b2 = Window(*np.sort(rng.uniform(-1.5, 1.5, 2)))
        rep = largest_term_check(mu, b1, b2)
        ok = rep.passed and rep.log_gap <= math.log(2) / mu.volume + 1e-12
        out.record(ok, f"pair {i}: {rep}")
    return out


def random_projection(rng, dim: int, diagonal: bool = False) -> np.ndarray:
    rank = int(rng.integers(0, dim + 1))
    if diagonal:
        return np.diag((rng.permutation(dim) < rank).astype(float))
    u = random_unitary(rng, dim)[:, :rank]
    return u @ u.conj().T


def transfer_suite(seed: int = 0, pairs: int = 200) -> SuiteResult:
    rng = np.random.default_rng(seed)
    out = SuiteResult("projection transfer")
    rho = np.array([[0.6, 0.1 - 0.2j], [0.1 + 0.2j, 0.4]])
    states = [("tracial", Tracial()), ("product", Product(rho)),
              ("gibbs", GibbsFiniteVolume(lat.tfim(1.0, 0.8))),
              ("markov", MarkovClassical(np.array([[0.75, 0.25], [0.25, 0.75]])))]
    for sites in (2, 3, 4):
        region = lat.Region.box(sites)
        dim = 2**sites
        for name, state in states:
            diagonal = isinstance(state, MarkovClassical)
            for i in range(pairs):
                p = random_projection(rng, dim, diagonal)
                q = random_projection(rng, dim, diagonal)
                rep = projection_transfer_check(state, p, q, region)
                out.record(rep.passed, f"{name} dim={dim} pair={i}: {rep}")
    return out


SUITES = {
    "spectral": spectral_suite,
    "measure": measure_suite,
    "scgf": scgf_suite,
    "largest_term": largest_term_suite,
    "transfer": transfer_suite,
}


def run_all(seed: int = 0) -> list:
    return [fn(seed) for fn in SUITES.values()]
