"""States on the quasi-local algebra, realized on finite boxes.

Infinite-volume states are represented by their finite-volume surrogates on
the same box that carries the observable: the normalized trace, finite-volume
Gibbs states, product states and stationary classical Markov chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgumentError, ResourceError, UnsupportedRegimeError
from .lattice import (
    DEFAULT_CAP,
    Interaction,
    LocalOperator,
    Region,
    boundary_interaction_norm,
    build_hamiltonian,
    check_hermitian,
    configuration_digits,
    hamiltonian_diagonal,
    interaction_from_dict,
    interaction_to_dict,
    is_diagonal,
)
from .spectral import diagonalize

STOCHASTIC_TOL = 1e-12
INVARIANCE_TOL = 1e-10


@dataclass(frozen=True)
class Tracial:
    """Normalized trace tr(A)/dim."""

    site_dim: int = 2

    @property
    def classical(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class GibbsFiniteVolume:
    """ω_Λ(A) = tr(A e^{-H_Λ}) / tr(e^{-H_Λ}) with H_Λ built from ``interaction``."""

    interaction: Interaction
    cap: int = DEFAULT_CAP
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def site_dim(self) -> int:
        return self.interaction.site_dim

    @property
    def classical(self) -> bool:
        return self.interaction.classical

    def density_matrix(self, region: Region) -> np.ndarray:
        key = ("rho", region.sites)
        if key not in self._cache:
            res = diagonalize(build_hamiltonian(self.interaction, region, self.cap))
            w = np.exp(-(res.eigenvalues - res.eigenvalues[0]))
            w /= w.sum()
            v = res.eigenvectors
            self._cache[key] = (v * w) @ v.conj().T
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class Product:
    """Product state with single-site density matrix ``rho``."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho)
        if not np.any(np.imag(rho)):
            rho = np.real(rho).astype(float)
        check_hermitian(rho, "rho")
        if abs(np.trace(rho) - 1) > 1e-10:
            raise InvalidArgumentError(f"rho must have unit trace, got {np.trace(rho)}")
        if np.linalg.eigvalsh(rho)[0] < -1e-10:
            raise InvalidArgumentError("rho must be positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @property
    def site_dim(self) -> int:
        return self.rho.shape[0]

    @property
    def classical(self) -> bool:
        return is_diagonal(self.rho)


def stationary_distribution(Q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(Q.T)
    q = np.real(v[:, np.argmin(np.abs(w - 1))])
    return q / q.sum()


def primitivity_index(Q: np.ndarray) -> int | None:
    """Smallest m with Q^m strictly positive, or None if none up to dim²."""
    S = Q.shape[0]
    power = np.eye(S)
    for m in range(1, S * S + 1):
        power = power @ Q
        if np.all(power > 0):
            return m
    return None


@dataclass(frozen=True, eq=False)
class MarkovClassical:
    """Stationary Markov chain with transition matrix Q and invariant law q."""

    Q: np.ndarray
    q: np.ndarray | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 2:
            raise InvalidArgumentError("Q must be a square matrix of size >= 2")
        if np.any(Q < 0) or np.max(np.abs(Q.sum(axis=1) - 1)) > STOCHASTIC_TOL:
            raise InvalidArgumentError("Q must be row-stochastic")
        q = stationary_distribution(Q) if self.q is None else np.asarray(self.q, dtype=float)
        if q.shape != (Q.shape[0],) or np.any(q <= 0):
            raise InvalidArgumentError("q must be a strictly positive distribution")
        if np.max(np.abs(q @ Q - q)) > INVARIANCE_TOL or abs(q.sum() - 1) > INVARIANCE_TOL:
            raise InvalidArgumentError("q must be invariant: q·Q = q")
        m = primitivity_index(Q)
        if m is None:
            raise InvalidArgumentError("Q is not irreducible and aperiodic (no positive power)")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "mixing_index", m)

    @property
    def site_dim(self) -> int:
        return self.Q.shape[0]

    @property
    def classical(self) -> bool:
        return True


StateSpec = Union[Tracial, GibbsFiniteVolume, Product, MarkovClassical]


def _markov_probabilities(state: MarkovClassical, region: Region) -> np.ndarray:
    if region.dim != 1:
        raise UnsupportedRegimeError("Markov states live on one-dimensional regions")
    S = state.site_dim
    p = state.q.copy()
    xs = [s[0] for s in region.sites]
    for prev, cur in zip(xs, xs[1:]):
        step = np.linalg.matrix_power(state.Q, cur - prev)
        last = np.arange(p.size) % S
        p = (p[:, None] * step[last, :]).reshape(-1)
    return p if len(xs) > 1 else p.reshape(S)


def configuration_probabilities(state: StateSpec, region: Region, cap: int = 2**22) -> np.ndarray:
    """ω(|σ⟩⟨σ|) for every configuration σ of ``region`` (diagonal of the density)."""
    D = state.site_dim
    dim = D ** len(region)
    if isinstance(state, Tracial):
        if dim > cap:
            raise ResourceError(f"{dim} configurations exceed cap {cap}", dimension=dim, cap=cap)
        return np.full(dim, 1.0 / dim)
    if isinstance(state, Product):
        diag = np.real(np.diag(state.rho))
        out = np.ones(1)
        for _ in range(len(region)):
            out = np.kron(out, diag)
        return out
    if isinstance(state, MarkovClassical):
        return _markov_probabilities(state, region)
    if isinstance(state, GibbsFiniteVolume):
        if state.interaction.classical:
            energy = hamiltonian_diagonal(state.interaction, region, cap)
            w = np.exp(-(energy - energy.min()))
            return w / w.sum()
        return np.clip(np.real(np.diag(state.density_matrix(region))), 0.0, None)
    raise InvalidArgumentError(f"unknown state {state!r}")


def density_matrix(state: StateSpec, region: Region) -> np.ndarray:
    if isinstance(state, Tracial):
        dim = state.site_dim ** len(region)
        return np.eye(dim) / dim
    if isinstance(state, Product):
        out = np.ones((1, 1))
        for _ in range(len(region)):
            out = np.kron(out, state.rho)
        return out
    if isinstance(state, MarkovClassical):
        return np.diag(_markov_probabilities(state, region))
    if isinstance(state, GibbsFiniteVolume):
        if state.interaction.classical:
            return np.diag(configuration_probabilities(state, region))
        return state.density_matrix(region)
    raise InvalidArgumentError(f"unknown state {state!r}")


def expectation(state: StateSpec, op: LocalOperator, region: Region | None = None) -> float:
    """ω(A) evaluated on the box ``region`` (defaults to the operator's region)."""
    region = op.region if region is None else region
    if not op.region.issubset(region):
        raise InvalidArgumentError("operator region must lie inside the evaluation region")
    if op.site_dim != state.site_dim:
        raise InvalidArgumentError("operator and state disagree on the site dimension")
    if isinstance(state, Tracial):
        value = np.trace(op.matrix) / op.dimension
    elif isinstance(state, Product):
        value = np.sum(density_matrix(state, op.region).T * op.matrix)
    elif isinstance(state, MarkovClassical):
        if not is_diagonal(op.matrix, atol=1e-12):
            raise InvalidArgumentError("Markov states only evaluate diagonal observables")
        full = op.on(region)
        value = np.real(np.diag(full.matrix)) @ _markov_probabilities(state, region)
    else:
        full = op.on(region)
        if state.interaction.classical:
            value = np.real(np.diag(full.matrix)) @ configuration_probabilities(state, region)
        else:
            value = np.sum(state.density_matrix(region).T * full.matrix)
    value = complex(value)
    if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise InvalidArgumentError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


# -- asymptotic decoupling ---------------------------------------------------

@dataclass(frozen=True)
class DecouplingParams:
    """Corridor width g(m) and constant c(m) of the decoupling inequality."""

    g: Callable[[int], int]
    c: Callable[[int], float]
    label: str = ""

    @classmethod
    def constant(cls, g: int, c: float, label: str = "") -> "DecouplingParams":
        return cls(lambda m, g=g: g, lambda m, c=c: c, label or f"g={g}, c={c:.6g}")


def markov_decoupling_params(Q, q=None) -> DecouplingParams:
    """g ≡ m_Q - 1 and c ≡ sup |log Q^{m_Q}(σ₁,σ₂)/q(σ₂)|."""
    chain = MarkovClassical(Q, q)
    m_q = chain.mixing_index
    power = np.linalg.matrix_power(chain.Q, m_q)
    c = float(np.max(np.abs(np.log(power / chain.q[None, :]))))
    return DecouplingParams.constant(m_q - 1, c, f"markov m_Q={m_q}")


def gibbs_decoupling_c(phi: Interaction, m: int) -> float:
    """‖W_{C(m)}‖ for a classical Gibbs interaction."""
    if not phi.classical:
        raise UnsupportedRegimeError(
            "decoupling constants for quantum Gibbs states are not available")
    return boundary_interaction_norm(phi, Region.box(m, phi.d))


def default_decoupling(state: StateSpec) -> DecouplingParams:
    if isinstance(state, (Tracial, Product)):
        return DecouplingParams.constant(0, 0.0, "product")
    if isinstance(state, MarkovClassical):
        return markov_decoupling_params(state.Q, state.q)
    if isinstance(state, GibbsFiniteVolume):
        phi = state.interaction
        if not phi.classical:
            raise UnsupportedRegimeError(
                "decoupling constants for quantum Gibbs states are not available")
        return DecouplingParams(lambda m: 0, lambda m: gibbs_decoupling_c(phi, m), "gibbs ‖W‖")
    raise InvalidArgumentError(f"unknown state {state!r}")


@dataclass
class DecouplingReport:
    m: int
    n: int
    g: int
    c: float
    trials: int
    seed: int
    slack: float
    log_ratios: list
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_abs_log_ratio(self) -> float:
        return max((abs(r) for r in self.log_ratios), default=0.0)


def _random_psd(rng: np.random.Generator, dim: int, diagonal: bool) -> np.ndarray:
    if diagonal:
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return np.diag(np.abs(v) ** 2)
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return m.conj().T @ m


def decoupling_check(state: StateSpec, params: DecouplingParams, m: int, n: int,
                     trials: int = 100, rng_seed: int = 0, slack: float = 1e-9,
                     cap: int = DEFAULT_CAP) -> DecouplingReport:
    """Test e^{-c}ω(A)ω(B) ≤ ω(AB) ≤ e^{c}ω(A)ω(B) on random positive A, B.

    A lives on a block C(m) placed in the middle of Λ(n); B lives on the
    sites of Λ(n) outside the enlarged block C^{g(m)}(m).
    """
    g, c = int(params.g(m)), float(params.c(m))
    start = (n - m) // 2
    if m < 1 or start < 0:
        raise InvalidArgumentError(f"block of side {m} does not fit in Λ({n})")
    box = Region.box(n)
    block = Region.interval(start, m)
    exterior_sites = [s for s in box.sites if not (start - g <= s[0] < start + m + g)]
    if not exterior_sites:
        raise InvalidArgumentError(
            f"no sites left outside the corridor: n={n}, m={m}, g={g}")
    D = state.site_dim
    if D**n > cap:
        raise ResourceError(f"Λ({n}) needs dimension {D**n} > cap {cap}",
                            n=n, dimension=D**n, cap=cap)
    exterior = Region(tuple(exterior_sites))
    joint = block.union(exterior)
    diagonal = state.classical
    seeds = np.random.SeedSequence(rng_seed).spawn(trials)
    log_ratios, violations = [], []
    lo, hi = math.exp(-c), math.exp(c)
    for t, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        a = LocalOperator(block, _random_psd(rng, D ** len(block), diagonal), D)
        b = LocalOperator(exterior, _random_psd(rng, D ** len(exterior), diagonal), D)
        ab_matrix = a.on(joint).matrix @ b.on(joint).matrix
        ab = LocalOperator(joint, (ab_matrix + ab_matrix.conj().T) / 2, D)
        wa, wb = expectation(state, a, box), expectation(state, b, box)
        wab = expectation(state, ab, box)
        ref = wa * wb
        log_ratios.append(math.log(wab / ref))
        if wab < lo * ref * (1 - slack) or wab > hi * ref * (1 + slack):
            violations.append({"trial": t, "omega_A": wa, "omega_B": wb, "omega_AB": wab,
                               "log_ratio": math.log(wab / ref), "c": c})
    return DecouplingReport(m, n, g, c, trials, rng_seed, slack, log_ratios, violations)


# -- serialization -----------------------------------------------------------

def state_from_dict(doc: dict, where: str = "state") -> StateSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidArgumentError(f"{where}: expected an object with a 'kind'")
    kind = doc["kind"]
    fields_by_kind = {"tracial": {"site_dim"}, "gibbs": {"interaction"},
                      "product": {"rho"}, "markov": {"Q", "q"}}
    if kind not in fields_by_kind:
        raise InvalidArgumentError(f"{where}.kind: unknown state kind {kind!r}")
    unknown = set(doc) - fields_by_kind[kind] - {"kind"}
    if unknown:
        raise InvalidArgumentError(f"{where}: unknown key(s) {sorted(unknown)}")
    try:
        if kind == "tracial":
            return Tracial(int(doc.get("site_dim", 2)))
        if kind == "gibbs":
            if "interaction" not in doc:
                raise InvalidArgumentError("missing 'interaction'")
            return GibbsFiniteVolume(interaction_from_dict(doc["interaction"],
                                                           f"{where}.interaction"))
        if kind == "product":
            return Product(np.asarray(doc["rho"], dtype=float))
        return MarkovClassical(np.asarray(doc["Q"], dtype=float),
                               None if doc.get("q") is None else np.asarray(doc["q"]))
    except (KeyError, InvalidArgumentError) as exc:
        raise InvalidArgumentError(f"{where}: {exc}") from None


def state_to_dict(state: StateSpec) -> dict:
    if isinstance(state, Tracial):
        return {"kind": "tracial", "site_dim": state.site_dim}
    if isinstance(state, GibbsFiniteVolume):
        return {"kind": "gibbs", "interaction": interaction_to_dict(state.interaction)}
    if isinstance(state, Product):
        return {"kind": "product", "rho": np.real(state.rho).tolist()}
    return {"kind": "markov", "Q": state.Q.tolist(), "q": state.q.tolist()}
