"""Spectral measures, Ruelle-Lanford estimates, free energies and Legendre duality.

Four routes build the distribution μ_n of K_{Λ(n)}/|Λ(n)| in a state ω:

``dense``
    diagonalize K and weigh each eigenvalue cluster by ω of its projector.
``joint``
    Gibbs states with [K, H] = 0: weights e^{-λ_j}/Z from a joint eigenbasis.
``diagonal``
    classical K: push the configuration weights ω(|σ⟩⟨σ|) forward through K(σ).
``dp``
    classical K on a chain: transfer recursion over a window of the last
    ``range`` spins, never forming a vector of all configurations.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError, NumericError, UnsupportedRegimeError
from .lattice import (
    DEFAULT_CAP,
    Interaction,
    Region,
    build_hamiltonian,
    hamiltonian_diagonal,
    interaction_norm,
    is_diagonal,
)
from .spectral import Window, commutator_norm, log_trace_exp
from .states import (
    GibbsFiniteVolume,
    MarkovClassical,
    Product,
    StateSpec,
    Tracial,
    configuration_probabilities,
    density_matrix,
)

CLUSTER_RTOL = 1e-10
NORMALIZATION_TOL = 1e-9
SUPPORT_TOL = 1e-9
CONVEXITY_TOL = 1e-8
COMMUTE_TOL = 1e-9
SNAP = 1e-12
PATHS = ("auto", "dense", "joint", "diagonal", "dp")


def worker_count() -> int:
    raw = os.environ.get("LDP_LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    if n <= 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Order-preserving map, fanned out over threads when workers > 1."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms (position, weight) of μ_n on the volume |Λ(n)|."""

    positions: np.ndarray
    weights: np.ndarray
    volume: int
    path: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pos.shape != w.shape:
            raise InvalidArgumentError("positions and weights must align")
        if np.any(w < -NORMALIZATION_TOL):
            raise NumericError(f"negative atom weight {w.min():.3e}")
        w = np.clip(w, 0.0, None)
        if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            raise NumericError(f"measure has total mass {w.sum():.12f}")
        order = np.argsort(pos, kind="stable")
        object.__setattr__(self, "positions", pos[order])
        object.__setattr__(self, "weights", w[order])

    @property
    def atoms(self) -> list:
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def mass(self, window: Window) -> float:
        return float(self.weights[window.contains(self.positions)].sum())

    def support_ok(self, psi_norm: float) -> bool:
        bound = psi_norm + SUPPORT_TOL
        return bool(np.all(np.abs(self.positions) <= bound))

    def log_mgf(self, alpha) -> np.ndarray:
        """(1/v) log ∫ e^{v α x} dμ_n(x) for each α."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        keep = self.weights > 0
        logw = np.log(self.weights[keep])
        x = self.positions[keep]
        exps = logw[None, :] + self.volume * alpha[:, None] * x[None, :]
        return logsumexp(exps, axis=1) / self.volume


def _cluster_labels(sorted_values: np.ndarray, tol: float) -> np.ndarray:
    if sorted_values.size == 0:
        return np.zeros(0, dtype=int)
    breaks = np.diff(sorted_values) > tol
    return np.concatenate([[0], np.cumsum(breaks)])


def _atoms(values: np.ndarray, weights: np.ndarray, volume: int, tol: float, path: str):
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    labels = _cluster_labels(values, tol)
    count = labels[-1] + 1 if labels.size else 0
    sums = np.bincount(labels, weights=values, minlength=count)
    sizes = np.bincount(labels, minlength=count)
    mass = np.bincount(labels, weights=weights, minlength=count)
    return SpectralMeasure(sums / sizes / volume, mass, volume, path)


def _cluster_tol(psi: Interaction, volume: int) -> float:
    return CLUSTER_RTOL * max(1.0, volume * interaction_norm(psi))


def _dp_supported(state: StateSpec, psi: Interaction) -> bool:
    if not psi.classical or psi.d != 1:
        return False
    if isinstance(state, GibbsFiniteVolume):
        return state.interaction.classical and state.interaction.d == 1
    return isinstance(state, (Tracial, Product, MarkovClassical))


def choose_path(state: StateSpec, psi: Interaction, n: int, cap: int = DEFAULT_CAP) -> str:
    if _dp_supported(state, psi):
        return "dp"
    if psi.classical and psi.site_dim ** (n**psi.d) <= max(cap, 2**20):
        return "diagonal"
    return "dense"


def spectral_measure(state: StateSpec, psi: Interaction, n: int, path: str = "auto",
                     cap: int = DEFAULT_CAP) -> SpectralMeasure:
    """μ_n(B) = ω(I_B(K_{Λ(n)}/|Λ(n)|)) as a list of atoms."""
    if path not in PATHS:
        raise InvalidArgumentError(f"unknown path {path!r}; choose from {PATHS}")
    if state.site_dim != psi.site_dim:
        raise InvalidArgumentError("state and interaction disagree on the site dimension")
    if path == "auto":
        path = choose_path(state, psi, n, cap)
    region = Region.box(n, psi.d)
    volume = len(region)
    tol = _cluster_tol(psi, volume)
    if path == "dp":
        if not _dp_supported(state, psi):
            raise UnsupportedRegimeError("transfer recursion needs classical Ψ on a chain "
                                         "and a tracial, product, Markov or classical Gibbs state")
        values, weights, _ = transfer_distribution(state, psi, n)
        return _atoms(values, weights, volume, tol, "dp")
    if path == "diagonal":
        kdiag = hamiltonian_diagonal(psi, region, max(cap, 2**20))
        p = configuration_probabilities(state, region)
        return _atoms(kdiag, p, volume, tol, "diagonal")
    if path == "joint":
        return _joint_measure(state, psi, region, tol, cap)
    return _dense_measure(state, psi, region, tol, cap)


def _eigh(matrix: np.ndarray):
    try:
        return np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed on dimension {matrix.shape[0]}: {exc}") from exc


def _dense_measure(state, psi, region, tol, cap) -> SpectralMeasure:
    K = build_hamiltonian(psi, region, cap).matrix
    lam, V = _eigh(K)
    if isinstance(state, Tracial):
        w = np.full(lam.shape, 1.0 / lam.size)
    elif isinstance(state, MarkovClassical):
        if not is_diagonal(K, atol=1e-12):
            raise InvalidArgumentError("Markov states need a diagonal (classical) observable")
        p = configuration_probabilities(state, region)
        w = (np.abs(V) ** 2).T @ p
    else:
        rho = density_matrix(state, region)
        w = np.real(np.sum(V.conj() * (rho @ V), axis=0))
    return _atoms(lam, w, len(region), tol, "dense")


def _joint_measure(state, psi, region, tol, cap) -> SpectralMeasure:
    if not isinstance(state, GibbsFiniteVolume):
        raise UnsupportedRegimeError("the joint-eigenbasis path needs a Gibbs state")
    K = build_hamiltonian(psi, region, cap).matrix
    H = build_hamiltonian(state.interaction, region, cap).matrix
    scale = max(1.0, np.linalg.norm(K, 2), np.linalg.norm(H, 2))
    if commutator_norm(K, H) > COMMUTE_TOL * scale:
        raise UnsupportedRegimeError("K and H do not commute; use the dense path")
    lam, V = _eigh(K)
    labels = _cluster_labels(lam, tol)
    energies, owner = [], []
    for c in range(labels[-1] + 1):
        idx = np.flatnonzero(labels == c)
        block = V[:, idx].conj().T @ H @ V[:, idx]
        e = np.linalg.eigvalsh((block + block.conj().T) / 2)
        energies.append(e)
        owner.append(np.full(e.size, c))
    energies = np.concatenate(energies)
    owner = np.concatenate(owner)
    logw = -energies - logsumexp(-energies)
    mass = np.bincount(owner, weights=np.exp(logw), minlength=labels[-1] + 1)
    sums = np.bincount(labels, weights=lam)
    sizes = np.bincount(labels)
    return SpectralMeasure(sums / sizes / len(region), mass, len(region), "joint")


def _diag_terms(psi: Interaction):
    return [(tuple(s[0] for s in t.pattern.sites), np.real(np.diag(t.matrix))) for t in psi.terms]


def transfer_distribution(state: StateSpec, psi: Interaction, n: int):
    """Exact law of K_{Λ(n)} on a chain by a transfer recursion.

    Returns (values, weights, log_total) where ``values`` are the distinct
    values of K, ``weights`` their probabilities and ``log_total`` the log
    of the unnormalized total weight (log Z for Gibbs states, 0 otherwise).
    """
    D = psi.site_dim
    psi_terms = _diag_terms(psi)
    phi_terms = (_diag_terms(state.interaction)
                 if isinstance(state, GibbsFiniteVolume) else [])
    reach = max([p[-1] for p, _ in psi_terms + phi_terms] + [0])
    width = max(reach, 1 if isinstance(state, MarkovClassical) else 0)
    scale = max([1.0] + [float(np.max(np.abs(v))) for _, v in psi_terms])
    quantum = 1e-12 * scale
    if isinstance(state, Product):
        site_w = np.real(np.diag(state.rho))

    def local_sum(terms, window, i) -> float:
        first = i - len(window) + 1
        total = 0.0
        for offsets, diag in terms:
            a = i - offsets[-1]
            if a < 0:
                continue
            idx = 0
            for p in offsets:
                idx = idx * D + window[a + p - first]
            total += diag[idx]
        return total

    cache = {}

    def step(window, i):
        key = (window, min(i, width))
        if key not in cache:
            s = window[-1]
            if isinstance(state, Tracial):
                factor = 1.0 / D
            elif isinstance(state, Product):
                factor = site_w[s]
            elif isinstance(state, MarkovClassical):
                factor = state.q[s] if i == 0 else state.Q[window[-2], s]
            else:
                factor = math.exp(-local_sum(phi_terms, window, i))
            inc = int(round(local_sum(psi_terms, window, i) / quantum))
            cache[key] = (inc, factor)
        return cache[key]

    layers = {(): (np.zeros(1, dtype=np.int64), np.ones(1))}
    log_total = 0.0
    for i in range(n):
        pending = defaultdict(lambda: ([], []))
        for window, (keys, wts) in layers.items():
            for s in range(D):
                full = window + (s,)
                inc, factor = step(full, i)
                if factor == 0.0:
                    continue
                nxt = full[len(full) - width:] if width else ()
                pending[nxt][0].append(keys + inc)
                pending[nxt][1].append(wts * factor)
        layers = {}
        total = 0.0
        for window, (ks, ws) in pending.items():
            uniq, inv = np.unique(np.concatenate(ks), return_inverse=True)
            layers[window] = (uniq, np.bincount(inv, weights=np.concatenate(ws)))
            total += layers[window][1].sum()
        if total <= 0:
            raise NumericError("transfer recursion lost all weight")
        log_total += math.log(total)
        layers = {w: (k, v / total) for w, (k, v) in layers.items()}
    keys = np.concatenate([k for k, _ in layers.values()])
    wts = np.concatenate([v for _, v in layers.values()])
    uniq, inv = np.unique(keys, return_inverse=True)
    weights = np.bincount(inv, weights=wts)
    return uniq * quantum, weights / weights.sum(), log_total


def log_partition(phi: Interaction | None, n: int, site_dim: int = 2, d: int = 1,
                  cap: int = DEFAULT_CAP) -> float:
    """log tr e^{-H_{Λ(n)}}; H = 0 when ``phi`` is None or empty."""
    if phi is None or not phi.terms:
        D = site_dim if phi is None else phi.site_dim
        d = d if phi is None else phi.d
        return (n**d) * math.log(D)
    region = Region.box(n, phi.d)
    if phi.classical and phi.d == 1:
        state = GibbsFiniteVolume(phi)
        return transfer_distribution(state, Interaction((), phi.site_dim, True), n)[2]
    if phi.classical:
        return log_trace_exp(hamiltonian_diagonal(phi, region), -1.0)
    H = build_hamiltonian(phi, region, cap).matrix
    return log_trace_exp(np.linalg.eigvalsh(H), -1.0)


def ball_mass(mu: SpectralMeasure, x: float, eps: float) -> float:
    """μ_n([x-ε, x+ε])."""
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    return float(mu.weights[np.abs(mu.positions - x) <= eps + SNAP].sum())


# -- rate curves ---------------------------------------------------------------

@dataclass
class RateCurve:
    """Grid values s_{n,ε}(x) = |Λ(n)|^{-1} log μ_n(B_ε(x)), one row per n."""

    eps: float
    x_grid: np.ndarray
    n_list: list
    values: np.ndarray
    measures: list = field(default_factory=list, repr=False)

    @property
    def extrapolated(self) -> np.ndarray:
        return self.values[-1]

    def row(self, n: int) -> np.ndarray:
        return self.values[self.n_list.index(n)]


def rate_values(mu: SpectralMeasure, x_grid, eps: float) -> np.ndarray:
    x_grid = np.asarray(x_grid, dtype=float)
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    inside = np.abs(mu.positions[None, :] - x_grid[:, None]) <= eps + SNAP
    mass = inside.astype(float) @ mu.weights
    out = np.full(x_grid.shape, -np.inf)
    pos = mass > 0
    out[pos] = np.log(mass[pos]) / mu.volume
    return np.minimum(out, 0.0)


def rate_curve_from_measures(measures, n_list, x_grid, eps: float) -> RateCurve:
    x_grid = np.asarray(x_grid, dtype=float)
    values = np.array([rate_values(mu, x_grid, eps) for mu in measures]).reshape(
        len(measures), x_grid.size)
    return RateCurve(float(eps), x_grid, list(n_list), values, list(measures))


def measures_for(state, psi, n_list, path="auto", cap=DEFAULT_CAP, workers=None) -> list:
    return parallel_map(lambda n: spectral_measure(state, psi, n, path, cap), n_list, workers)


def rate_curve(state: StateSpec, psi: Interaction, n_list, x_grid, eps: float = 0.05,
               path: str = "auto", cap: int = DEFAULT_CAP, workers=None) -> RateCurve:
    measures = measures_for(state, psi, n_list, path, cap, workers)
    return rate_curve_from_measures(measures, n_list, x_grid, eps)


def concavity_defects(curve: RateCurve) -> dict:
    """Largest midpoint concavity defect ½s(x₁)+½s(x₂)-s(x) per n, and c in tol_n = c/n."""
    defects = []
    for row in curve.values:
        worst = 0.0
        N = row.size
        for j in range(1, (N - 1) // 2 + 1):
            a, mid, b = row[: N - 2 * j], row[j: N - j], row[2 * j:]
            ok = np.isfinite(a) & np.isfinite(b)
            if not np.any(ok):
                continue
            if np.any(~np.isfinite(mid[ok])):
                worst = math.inf
                break
            worst = max(worst, float(np.max(0.5 * a[ok] + 0.5 * b[ok] - mid[ok])))
        defects.append(worst)
    ns = np.array(curve.n_list, dtype=float)
    d = np.array(defects)
    finite = np.isfinite(d)
    c = float(np.sum(d[finite] / ns[finite]) / np.sum(1 / ns[finite] ** 2)) if finite.any() else math.inf
    return {"n": list(curve.n_list), "defect": defects, "c_fit": c}


# -- free energies -------------------------------------------------------------

@dataclass
class ScgfCurve:
    """P_n(α) or f_n(α) on a grid; ``log_norm[i]`` is the α = 0 offset per n."""

    alpha_grid: np.ndarray
    n_list: list
    values: np.ndarray
    kind: str
    log_norm: np.ndarray

    @property
    def translated(self) -> np.ndarray:
        """Values minus their α = 0 offset: the log moment generating function of μ_n."""
        return self.values - self.log_norm[:, None]

    def row(self, n: int) -> np.ndarray:
        return self.values[self.n_list.index(n)]


def midpoint_convexity_defect(values) -> float:
    """max over equally spaced triples of f(mid) - (f(a)+f(b))/2 (≤ 0 when convex)."""
    values = np.asarray(values, dtype=float)
    worst = -math.inf
    N = values.size
    for j in range(1, (N - 1) // 2 + 1):
        gap = values[j: N - j] - 0.5 * (values[: N - 2 * j] + values[2 * j:])
        worst = max(worst, float(np.max(gap)))
    return worst


def _commuting(psi: Interaction, phi: Interaction, n: int, cap: int) -> bool:
    if psi.classical and phi.classical:
        return True
    region = Region.box(n, psi.d)
    K = build_hamiltonian(psi, region, cap).matrix
    H = build_hamiltonian(phi, region, cap).matrix
    scale = max(1.0, np.linalg.norm(K, 2), np.linalg.norm(H, 2))
    return commutator_norm(K, H) <= COMMUTE_TOL * scale


def _free_energy_row(n, state, psi, phi, alpha, kind, path, cap):
    volume = n**psi.d
    if kind == "f":
        mu = spectral_measure(state, psi, n, path, cap)
        return mu.log_mgf(alpha), 0.0
    if phi is None or not phi.terms:
        mu = spectral_measure(Tracial(psi.site_dim), psi, n, path, cap)
        offset = log_partition(None, n, psi.site_dim, psi.d) / volume
        return mu.log_mgf(alpha) + offset, offset
    offset = log_partition(phi, n, cap=cap) / volume
    if _commuting(psi, phi, n, cap):
        gibbs_path = path if path != "auto" else ("auto" if psi.classical and phi.classical
                                                  else "joint")
        mu = spectral_measure(GibbsFiniteVolume(phi, cap), psi, n, gibbs_path, cap)
        return mu.log_mgf(alpha) + offset, offset
    region = Region.box(n, psi.d)
    K = build_hamiltonian(psi, region, cap).matrix
    H = build_hamiltonian(phi, region, cap).matrix
    row = np.array([log_trace_exp(np.linalg.eigvalsh(-H + a * K)) / volume for a in alpha])
    return row, offset


def free_energy_curve(state: StateSpec | None, psi: Interaction, n_list, alpha_grid,
                      kind: str = "f", phi: Interaction | None = None, path: str = "auto",
                      cap: int = DEFAULT_CAP, workers=None) -> ScgfCurve:
    """P_n(α) = |Λ|^{-1} log tr e^{-H+αK}  or  f_n(α) = |Λ|^{-1} log ω(e^{αK})."""
    if kind not in ("P", "f"):
        raise InvalidArgumentError("kind must be 'P' or 'f'")
    if kind == "f" and state is None:
        raise InvalidArgumentError("kind 'f' needs a state")
    alpha = np.asarray(alpha_grid, dtype=float)
    if alpha.size == 0:
        raise InvalidArgumentError("empty alpha grid")
    rows = parallel_map(lambda n: _free_energy_row(n, state, psi, phi, alpha, kind, path, cap),
                        n_list, workers)
    values = np.array([r for r, _ in rows]).reshape(len(rows), alpha.size)
    offsets = np.array([o for _, o in rows], dtype=float)
    return ScgfCurve(alpha, list(n_list), values, kind, offsets)


def scgf_from_measures(measures, n_list, alpha_grid) -> ScgfCurve:
    """f_n(α) directly from precomputed measures."""
    alpha = np.asarray(alpha_grid, dtype=float)
    values = np.array([mu.log_mgf(alpha) for mu in measures]).reshape(len(measures), alpha.size)
    return ScgfCurve(alpha, list(n_list), values, "f", np.zeros(len(measures)))


# -- Legendre duality ------------------------------------------------------------

def legendre_conjugate(curve, alpha_grid, x_grid) -> np.ndarray:
    """s(x) = min_α (curve(α) - α x) over the grid; non-finite points skipped."""
    curve = np.asarray(curve, dtype=float)
    alpha = np.asarray(alpha_grid, dtype=float)
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if alpha.size == 0 or x.size == 0:
        raise InvalidArgumentError("legendre_conjugate needs non-empty grids")
    ok = np.isfinite(curve)
    if not ok.any():
        return np.full(x.shape, np.nan)
    return np.min(curve[ok][None, :] - x[:, None] * alpha[ok][None, :], axis=1)


def legendre_transform(s_values, x_grid, alpha_grid) -> np.ndarray:
    """e(α) = max_x (α x + s(x)) over the grid; -inf points skipped."""
    s = np.asarray(s_values, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    alpha = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if alpha.size == 0 or x.size == 0:
        raise InvalidArgumentError("legendre_transform needs non-empty grids")
    ok = np.isfinite(s)
    if not ok.any():
        return np.full(alpha.shape, -np.inf)
    return np.max(alpha[:, None] * x[ok][None, :] + s[ok][None, :], axis=1)


@dataclass
class LargestTermReport:
    mass_1: float
    mass_2: float
    mass_union: float
    log_gap: float
    passed: bool


def largest_term_check(mu: SpectralMeasure, b1: Window, b2: Window) -> LargestTermReport:
    """max(μ(B₁), μ(B₂)) ≤ μ(B₁∪B₂) ≤ μ(B₁) + μ(B₂)."""
    in1, in2 = b1.contains(mu.positions), b2.contains(mu.positions)
    m1 = float(mu.weights[in1].sum())
    m2 = float(mu.weights[in2].sum())
    mu_union = float(mu.weights[in1 | in2].sum())
    top = max(m1, m2)
    passed = top <= mu_union + SNAP and mu_union <= m1 + m2 + SNAP
    gap = (math.log(mu_union) - math.log(top)) / mu.volume if top > 0 else 0.0
    return LargestTermReport(m1, m2, mu_union, gap, passed)


@dataclass
class DualityReport:
    n_list: list
    alpha_grid: np.ndarray
    x_grid: np.ndarray
    alpha_gaps: np.ndarray
    x_gaps: np.ndarray
    max_alpha_gap: list
    max_x_gap: list

    @property
    def decreasing(self) -> bool:
        g = self.max_alpha_gap
        return all(b <= a + 1e-12 for a, b in zip(g, g[1:]))


def duality_check(rate: RateCurve, scgf: ScgfCurve) -> DualityReport:
    """Compare s_n against P_n through both Legendre directions.

    P_n is taken relative to its α = 0 value, the log moment generating
    function of the normalized measure μ_n that s_n describes.
    """
    common = [n for n in rate.n_list if n in scgf.n_list]
    if not common:
        raise InvalidArgumentError("rate and scgf curves share no n")
    a_gaps, x_gaps = [], []
    for n in common:
        s = rate.row(n)
        P = scgf.translated[scgf.n_list.index(n)]
        e = legendre_transform(s, rate.x_grid, scgf.alpha_grid)
        a_gaps.append(np.abs(e - P))
        conj = legendre_conjugate(P, scgf.alpha_grid, rate.x_grid)
        gap = np.full(rate.x_grid.shape, np.nan)
        ok = np.isfinite(s)
        gap[ok] = np.abs(conj[ok] - s[ok])
        x_gaps.append(gap)
    a_gaps, x_gaps = np.array(a_gaps), np.array(x_gaps)
    return DualityReport(common, scgf.alpha_grid, rate.x_grid, a_gaps, x_gaps,
                         [float(np.max(g)) for g in a_gaps],
                         [float(np.nanmax(g)) if np.isfinite(g).any() else math.nan
                          for g in x_gaps])
