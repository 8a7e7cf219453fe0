"""Measured operator-norm estimates for the block decomposition of K_{Λ(n)}.

Every routine returns a :class:`BoundReport` with the measured value and,
where one is available in closed form, a rigorous upper bound.  Existence-level
constants are never invented: for those quantities only a reference line is
recorded and the qualitative trends are checked by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UnsupportedRegimeError
from .lattice import (
    DEFAULT_CAP,
    Interaction,
    LocalOperator,
    Region,
    _assemble,
    block_decomposition,
    broken_terms_bound,
    build_hamiltonian,
    check_hermitian,
    embed,
    hamiltonian_diagonal,
    interaction_norm,
)
from .spectral import Window, diagonalize, operator_exponential, spectral_projection
from .states import StateSpec, expectation

BOUND_SLACK = 1e-9
PROJECTION_TOL = 1e-9
# Overlaps below this are indistinguishable from rounding in double precision.
OVERLAP_FLOOR = 1e-14


@dataclass
class BoundReport:
    quantity: str
    instance: dict
    measured: float
    bound: float | None = None
    reference: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool | None:
        if self.bound is None:
            return None
        return bool(self.measured <= self.bound + BOUND_SLACK)

    def as_row(self) -> dict:
        row = {"quantity": self.quantity, **self.instance, "measured": self.measured,
               "bound": self.bound, "reference": self.reference, "passed": self.passed}
        row.update(self.extra)
        return row


def _hermitian_norm(matrix: np.ndarray) -> float:
    if matrix.size == 0 or not np.any(matrix):
        return 0.0
    w = np.linalg.eigvalsh(matrix)
    return float(max(abs(w[0]), abs(w[-1])))


def _largest_singular(m: np.ndarray) -> float:
    """sqrt of the top eigenvalue of the smaller Gram matrix M†M or MM†."""
    if m.size == 0:
        return 0.0
    gram = m.conj().T @ m if m.shape[1] <= m.shape[0] else m @ m.conj().T
    w = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
    return float(math.sqrt(max(w[-1], 0.0)))


def decomposition_defect_norm(psi: Interaction, n: int, m: int, g: int,
                              cap: int = DEFAULT_CAP) -> tuple:
    """Lemma and corollary forms of the block-decomposition defect.

    Returns two reports:
    ``lemma``: (1/|Λ(n)|)‖K_{Λ(n)} - Σ_j K_{C_j}‖ against broken_terms_bound;
    ``corollary``: ‖K_{Λ(n)}/|Λ(n)| - Σ_j K_{C_j}/|Λ(km)|‖ against
    broken_terms_bound + ‖Ψ‖(|Λ(n)| - |Λ(km)|)/|Λ(n)|.
    """
    dec = block_decomposition(n, m, g, psi.d)
    region = Region.box(n, psi.d)
    inside = dec.inside_some_block()
    vol, bvol = dec.volume, dec.block_volume
    bound = broken_terms_bound(psi, dec)
    if psi.classical:
        full = hamiltonian_diagonal(psi, region)
        blocks = hamiltonian_diagonal(psi, region, keep=inside)
        lemma = float(np.max(np.abs(full - blocks), initial=0.0)) / vol
        cor = float(np.max(np.abs(full / vol - blocks / bvol), initial=0.0))
    else:
        broken = _assemble(psi, region, cap, lambda X: not inside(X))
        lemma = _hermitian_norm(broken) / vol
        blocks = _assemble(psi, region, cap, inside)
        cor = _hermitian_norm((blocks + broken) / vol - blocks / bvol)
    inst = {"n": n, "m": m, "g": g, "k": dec.k, "r": dec.r}
    cor_bound = bound + interaction_norm(psi) * (vol - bvol) / vol
    return (BoundReport("defect_lemma", inst, lemma, bound),
            BoundReport("defect_corollary", dict(inst), cor, cor_bound))


def exp_interchange_norm(psi: Interaction, n: int, m: int, g: int, beta: float,
                         cap: int = DEFAULT_CAP) -> BoundReport:
    """(1/n) log ‖e^{βK_{Λ(n)}} e^{-βΣ_j K_{C_j}}‖.

    The elementary bound |β|·broken_terms_bound is rigorous when all terms
    commute and is recorded as a reference line otherwise.
    """
    if psi.d != 1:
        raise UnsupportedRegimeError("the interchange norm is measured in d = 1 only")
    dec = block_decomposition(n, m, g, 1)
    region = Region.box(n)
    inside = dec.inside_some_block()
    elementary = abs(beta) * broken_terms_bound(psi, dec)
    inst = {"n": n, "m": m, "g": g, "k": dec.k, "r": dec.r, "beta": beta}
    if beta == 0:
        value = 0.0
    elif psi.classical:
        diff = hamiltonian_diagonal(psi, region) - hamiltonian_diagonal(psi, region, keep=inside)
        value = float(np.max(beta * diff)) / n
    else:
        res_full = diagonalize(build_hamiltonian(psi, region, cap))
        res_blocks = diagonalize(LocalOperator(region, _assemble(psi, region, cap, inside),
                                               psi.site_dim))
        e1, s1 = operator_exponential(res_full, beta)
        e2, s2 = operator_exponential(res_blocks, -beta)
        value = (s1 + s2 + math.log(_largest_singular(e1.matrix @ e2.matrix))) / n
    if psi.classical:
        return BoundReport("exp_interchange", inst, value, elementary)
    return BoundReport("exp_interchange", inst, value, reference=elementary)


def _overlap(psi, n, m, g, x, eps, eps_prime, cap):
    dec = block_decomposition(n, m, g, psi.d)
    region = Region.box(n, psi.d)
    inside = dec.inside_some_block()
    scale_blocks = dec.k * dec.m
    near = Window.ball(x, eps_prime)
    far = Window.ball(x, eps, complement=True)
    if psi.classical:
        full = hamiltonian_diagonal(psi, region)
        blocks = hamiltonian_diagonal(psi, region, keep=inside)
        common = near.contains(blocks / scale_blocks) & far.contains(full / n)
        norm = 1.0 if np.any(common) else 0.0
        return dec, norm, int(near.contains(blocks / scale_blocks).sum()), int(far.contains(full / n).sum())
    res_full = diagonalize(build_hamiltonian(psi, region, cap))
    res_blocks = diagonalize(LocalOperator(region, _assemble(psi, region, cap, inside),
                                           psi.site_dim))
    v_near = res_blocks.eigenvectors[:, near.contains(res_blocks.eigenvalues / scale_blocks)]
    v_far = res_full.eigenvectors[:, far.contains(res_full.eigenvalues / n)]
    norm = _largest_singular(v_near.conj().T @ v_far)
    return dec, norm, v_near.shape[1], v_far.shape[1]


def projection_overlap_norm(psi: Interaction, n: int, m: int, g: int, x: float,
                            eps: float, eps_prime: float, alpha_probe: float = 1.0,
                            cap: int = DEFAULT_CAP) -> BoundReport:
    """(1/n) log ‖I_{B_ε'(x)}(Σ_j K_{C_j}/(mk)) · I_{B_ε(x)^c}(K_{Λ(n)}/n)‖.

    Norms below ``OVERLAP_FLOOR`` are reported as 0 (log-norm -inf).  The
    reference line is -α(ε - ε').
    """
    if psi.d != 1:
        raise UnsupportedRegimeError("the projection overlap is measured in d = 1 only")
    if not eps > eps_prime > 0:
        raise InvalidArgumentError(f"need eps > eps_prime > 0, got {eps}, {eps_prime}")
    dec, norm, rank_near, rank_far = _overlap(psi, n, m, g, x, eps, eps_prime, cap)
    value = math.log(norm) / n if norm > OVERLAP_FLOOR else -math.inf
    inst = {"n": n, "m": m, "g": g, "k": dec.k, "r": dec.r, "x": x, "eps": eps,
            "eps_prime": eps_prime, "alpha_probe": alpha_probe}
    return BoundReport("projection_overlap", inst, value,
                       reference=-alpha_probe * (eps - eps_prime),
                       extra={"norm": norm, "rank_near": rank_near, "rank_far": rank_far})


def projection_overlap_sweep(psi: Interaction, n_list, m: int, g: int, x: float, eps: float,
                             eps_prime: float, alpha_probe: float = 1.0,
                             cap: int = DEFAULT_CAP) -> dict:
    """Overlap reports across n plus the fitted decay rate d log‖·‖ / dn."""
    reports = [projection_overlap_norm(psi, n, m, g, x, eps, eps_prime, alpha_probe, cap)
               for n in n_list]
    ns = np.array([r.instance["n"] for r in reports], dtype=float)
    logs = np.array([r.measured * r.instance["n"] for r in reports])
    ok = np.isfinite(logs)
    slope = float(np.polyfit(ns[ok], logs[ok], 1)[0]) if ok.sum() >= 2 else math.nan
    return {"reports": reports, "decay_rate": slope}


# -- projection inequalities -----------------------------------------------------

def _as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, LocalOperator) else np.asarray(op)


def check_projection(p: np.ndarray, what: str = "P") -> None:
    check_hermitian(p, what)
    if np.max(np.abs(p @ p - p), initial=0.0) > PROJECTION_TOL:
        raise InvalidArgumentError(f"{what} is not idempotent")


@dataclass
class TransferReport:
    omega_p: float
    omega_q: float
    overlap: float
    passed: bool

    @property
    def slack(self) -> float:
        return self.omega_q + 3 * self.overlap - self.omega_p


def projection_transfer_check(state: StateSpec, p, q, region: Region) -> TransferReport:
    """ω(P) ≤ ω(Q) + 3‖(1-Q)P‖ for projections P, Q on ``region``."""
    pm, qm = _as_matrix(p), _as_matrix(q)
    if pm.shape != qm.shape:
        raise InvalidArgumentError("P and Q must have the same dimension")
    check_projection(pm, "P")
    check_projection(qm, "Q")
    D = state.site_dim
    op_p = LocalOperator(region, (pm + pm.conj().T) / 2, D)
    op_q = LocalOperator(region, (qm + qm.conj().T) / 2, D)
    wp, wq = expectation(state, op_p, region), expectation(state, op_q, region)
    overlap = _largest_singular((np.eye(qm.shape[0]) - qm) @ pm)
    return TransferReport(wp, wq, overlap, wp <= wq + 3 * overlap + BOUND_SLACK)


@dataclass
class ProductProjectionReport:
    min_eigenvalue: float
    rank_product: int
    rank_window: int
    passed: bool


def product_projection_check(psi: Interaction, n: int, m: int, g: int, x1: float, x2: float,
                             eps_prime: float, cap: int = DEFAULT_CAP) -> ProductProjectionReport:
    """⊗_j I_{B_ε'(x_j)}(K_{C_j}/m) ≤ I_{B_ε'(x)}(Σ_j K_{C_j}/(mk)), x = (x₁+x₂)/2.

    The first half of the blocks uses centre x₁, the second half x₂.
    """
    dec = block_decomposition(n, m, g, psi.d)
    region = Region.box(n, psi.d)
    dim = psi.site_dim ** len(region)
    if dim > cap:
        raise InvalidArgumentError(f"dimension {dim} exceeds cap {cap}")
    half = len(dec.blocks) // 2
    tensor = np.eye(dim)
    for j, block in enumerate(dec.blocks):
        centre = x1 if j < half else x2
        res = diagonalize(build_hamiltonian(psi, block, cap))
        proj = spectral_projection(res, Window.ball(centre, eps_prime), float(m**psi.d)).matrix
        positions = [region.index(s) for s in block.sites]
        tensor = tensor @ embed(proj, positions, len(region), psi.site_dim)
    inside = dec.inside_some_block()
    res_sum = diagonalize(LocalOperator(region, _assemble(psi, region, cap, inside),
                                        psi.site_dim))
    window = spectral_projection(res_sum, Window.ball(0.5 * (x1 + x2), eps_prime),
                                 float(dec.block_volume)).matrix
    diff = window - tensor
    min_eig = float(np.linalg.eigvalsh((diff + diff.conj().T) / 2)[0])
    return ProductProjectionReport(min_eig, int(round(np.real(np.trace(tensor)))),
                                   int(round(np.real(np.trace(window)))),
                                   min_eig >= -PROJECTION_TOL)
