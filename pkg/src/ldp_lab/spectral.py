"""Hermitian eigendecomposition and the spectral calculus built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .lattice import LocalOperator, check_hermitian, is_diagonal

SNAP = 1e-12


def _matrix(a) -> np.ndarray:
    return a.matrix if isinstance(a, LocalOperator) else np.asarray(a)


def _wrap(like, matrix: np.ndarray):
    if isinstance(like, LocalOperator):
        return LocalOperator(like.region, matrix, like.site_dim)
    return matrix


@dataclass(frozen=True)
class SpectralResolution:
    """Ascending eigenvalues and the unitary whose columns are the eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: LocalOperator | None = None

    @property
    def dimension(self) -> int:
        return self.eigenvalues.shape[0]

    def norm(self) -> float:
        if self.dimension == 0:
            return 0.0
        return float(max(abs(self.eigenvalues[0]), abs(self.eigenvalues[-1])))

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class Window:
    """Closed interval [lo, hi], or its complement."""

    lo: float
    hi: float
    complement: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidArgumentError(f"window needs lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def ball(cls, x: float, eps: float, complement: bool = False) -> "Window":
        return cls(x - eps, x + eps, complement)

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        inside = (values >= self.lo - SNAP) & (values <= self.hi + SNAP)
        return ~inside if self.complement else inside


def diagonalize(a) -> SpectralResolution:
    """Eigendecomposition of a Hermitian operator (LAPACK divide and conquer)."""
    mat = _matrix(a)
    check_hermitian(mat, "operator to diagonalize")
    if is_diagonal(mat):
        # Keeps the computational basis, which classical code paths rely on.
        diag = np.real(np.diag(mat))
        order = np.argsort(diag, kind="stable")
        vecs = np.eye(mat.shape[0], dtype=mat.dtype)[:, order]
        return SpectralResolution(diag[order], vecs, a if isinstance(a, LocalOperator) else None)
    try:
        w, v = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigensolver failed on a {mat.shape[0]}x{mat.shape[0]} matrix "
            f"(norm {np.linalg.norm(mat):.3e}): {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericError("eigensolver returned non-finite eigenvalues")
    return SpectralResolution(w, v, a if isinstance(a, LocalOperator) else None)


def _resolution_wrap(res: SpectralResolution, matrix: np.ndarray):
    return _wrap(res.source, matrix) if res.source is not None else matrix


def selected(res: SpectralResolution, window: Window, scale: float = 1.0) -> np.ndarray:
    """Boolean mask of the eigenvalues with eigenvalue/scale in the window."""
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    return window.contains(res.eigenvalues / scale)


def spectral_projection(res: SpectralResolution, window: Window, scale: float = 1.0):
    """I_window(A/scale) = Σ_{selected i} v_i v_i†."""
    v = res.eigenvectors[:, selected(res, window, scale)]
    return _resolution_wrap(res, v @ v.conj().T)


def operator_exponential(res: SpectralResolution, beta: float):
    """Return (E, log_norm) with e^{βA} = e^{log_norm}·E and ‖E‖ = 1."""
    if beta == 0 or res.dimension == 0:
        return _resolution_wrap(res, np.eye(res.dimension)), 0.0
    lam = res.eigenvalues
    log_norm = float(beta * (lam[-1] if beta > 0 else lam[0]))
    v = res.eigenvectors
    mat = (v * np.exp(beta * lam - log_norm)) @ v.conj().T
    return _resolution_wrap(res, mat), log_norm


def operator_norm(m) -> float:
    """Operator norm: max |eigenvalue| if Hermitian, else sqrt(λ_max(M†M))."""
    mat = _matrix(m)
    if mat.size == 0:
        return 0.0
    if np.allclose(mat, mat.conj().T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(mat)))):
        w = np.linalg.eigvalsh((mat + mat.conj().T) / 2)
        return float(max(abs(w[0]), abs(w[-1])))
    gram = mat.conj().T @ mat
    w = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
    return float(np.sqrt(max(w[-1], 0.0)))


def commutator_norm(a, b) -> float:
    ma, mb = _matrix(a), _matrix(b)
    if ma.shape != mb.shape:
        raise InvalidArgumentError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    c = ma @ mb - mb @ ma
    if not np.any(c):
        return 0.0
    # [A, B] of Hermitian A, B is anti-Hermitian, so iC is Hermitian.
    return operator_norm(1j * c)


def weyl_distance(a, b) -> float:
    """max_i |λ_i(A) - λ_i(B)| over ascending spectra; never exceeds ‖A - B‖."""
    ma, mb = _matrix(a), _matrix(b)
    if ma.shape != mb.shape:
        raise InvalidArgumentError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    check_hermitian(ma, "A")
    check_hermitian(mb, "B")
    return float(np.max(np.abs(np.linalg.eigvalsh(ma) - np.linalg.eigvalsh(mb)), initial=0.0))


def log_trace_exp(eigenvalues: np.ndarray, beta: float = 1.0) -> float:
    """log tr e^{βA} from the spectrum, shifted to avoid overflow."""
    x = beta * np.asarray(eigenvalues, dtype=float)
    top = np.max(x)
    return float(top + np.log(np.sum(np.exp(x - top))))
