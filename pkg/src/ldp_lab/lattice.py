"""Lattice regions, translation-invariant interactions and local Hamiltonians.

Basis convention: the Hilbert space of a region is the tensor product of the
single-site spaces taken in lexicographic site order, with the smallest site
carrying the most significant index.  Every dense matrix built here follows
that ordering, so operators on the same region can be added and multiplied
without bookkeeping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InvalidArgumentError, ResourceError

HERMITIAN_RTOL = 1e-10
DEFAULT_CAP = 2**14

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
NAMED_OPERATORS = {
    "identity": PAULI["I"],
    "sigma_x": PAULI["X"],
    "sigma_y": PAULI["Y"],
    "sigma_z": PAULI["Z"],
}

Site = tuple


def _compact(matrix) -> np.ndarray:
    """Return a float64 array when the imaginary part vanishes exactly."""
    a = np.asarray(matrix)
    if np.iscomplexobj(a):
        if not np.any(a.imag):
            return np.ascontiguousarray(a.real, dtype=np.float64)
        return np.ascontiguousarray(a, dtype=np.complex128)
    return np.ascontiguousarray(a, dtype=np.float64)


def check_hermitian(matrix: np.ndarray, what: str = "matrix") -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"{what} must be square, got shape {matrix.shape}")
    if matrix.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(matrix))))
    defect = float(np.max(np.abs(matrix - matrix.conj().T)))
    if defect > HERMITIAN_RTOL * scale:
        raise InvalidArgumentError(f"{what} is not Hermitian (max defect {defect:.3e})")


def is_diagonal(matrix: np.ndarray, atol: float = 0.0) -> bool:
    off = matrix - np.diag(np.diag(matrix))
    return bool(np.max(np.abs(off), initial=0.0) <= atol)


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value."""
    if matrix.size == 0:
        return 0.0
    if is_diagonal(matrix):
        return float(np.max(np.abs(np.diag(matrix))))
    return float(np.linalg.norm(matrix, 2))


@dataclass(frozen=True)
class SiteAlgebra:
    """Single-site matrix algebra; ``classical_mode`` restricts to diagonals."""

    site_dim: int = 2
    classical_mode: bool = False

    def __post_init__(self):
        if int(self.site_dim) < 2:
            raise InvalidArgumentError("site_dim must be at least 2")

    def identity(self, n_sites: int = 1) -> np.ndarray:
        return np.eye(self.site_dim**n_sites)

    def check(self, matrix: np.ndarray, what: str = "matrix") -> None:
        check_hermitian(matrix, what)
        if self.classical_mode and not is_diagonal(matrix):
            raise InvalidArgumentError(f"{what} must be diagonal in classical mode")


@dataclass(frozen=True)
class Region:
    """Finite set of lattice sites, stored sorted and duplicate free."""

    sites: tuple

    def __post_init__(self):
        sites = [tuple(int(c) for c in np.atleast_1d(s)) for s in self.sites]
        if not sites:
            raise InvalidArgumentError("a region needs at least one site")
        dims = {len(s) for s in sites}
        if len(dims) != 1:
            raise InvalidArgumentError("all sites of a region must share one dimension")
        ordered = sorted(sites)
        if len(set(ordered)) != len(ordered):
            raise InvalidArgumentError("region sites must be distinct")
        object.__setattr__(self, "sites", tuple(ordered))

    @classmethod
    def box(cls, n: int, d: int = 1, origin: Sequence[int] | None = None) -> "Region":
        """The cube Λ(n) = {0..n-1}^d, optionally translated to ``origin``."""
        if n < 1:
            raise InvalidArgumentError("box side must be positive")
        origin = tuple(origin) if origin is not None else (0,) * d
        return cls(tuple(tuple(o + c for o, c in zip(origin, idx))
                         for idx in itertools.product(range(n), repeat=d)))

    @classmethod
    def interval(cls, start: int, length: int) -> "Region":
        return cls.box(length, 1, (start,))

    @property
    def dim(self) -> int:
        return len(self.sites[0])

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._lookup

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {s: i for i, s in enumerate(self.sites)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def index(self, site) -> int:
        return self._lookup[tuple(site)]

    def shift(self, vector) -> "Region":
        return Region(tuple(tuple(a + b for a, b in zip(s, vector)) for s in self.sites))

    def issubset(self, other: "Region") -> bool:
        return all(s in other for s in self.sites)

    def union(self, other: "Region") -> "Region":
        return Region(tuple(set(self.sites) | set(other.sites)))

    def diameter(self) -> int:
        arr = np.array(self.sites)
        return int(np.max(arr.max(axis=0) - arr.min(axis=0)))


def _shift_sites(sites, vector) -> tuple:
    return tuple(tuple(a + b for a, b in zip(s, vector)) for s in sites)


def _neg(site) -> tuple:
    return tuple(-c for c in site)


@dataclass(frozen=True)
class LocalOperator:
    """Hermitian matrix attached to a finite region."""

    region: Region
    matrix: np.ndarray
    site_dim: int = 2

    def __post_init__(self):
        mat = _compact(self.matrix)
        expected = self.site_dim ** len(self.region)
        if mat.shape != (expected, expected):
            raise InvalidArgumentError(
                f"operator on {len(self.region)} sites needs shape "
                f"({expected}, {expected}), got {mat.shape}")
        check_hermitian(mat, "local operator")
        object.__setattr__(self, "matrix", mat)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def on(self, region: Region) -> "LocalOperator":
        """Embed into a larger region (identity on the added sites)."""
        if region == self.region:
            return self
        if not self.region.issubset(region):
            raise InvalidArgumentError("target region must contain the operator's region")
        positions = [region.index(s) for s in self.region.sites]
        mat = embed(self.matrix, positions, len(region), self.site_dim)
        return LocalOperator(region, mat, self.site_dim)


def embed(matrix: np.ndarray, positions: Sequence[int], n_sites: int, site_dim: int) -> np.ndarray:
    """Place ``matrix`` (acting on sites ``positions``, in that order) into n_sites."""
    k = len(positions)
    positions = list(positions)
    if positions == list(range(positions[0], positions[0] + k)):
        left = site_dim ** positions[0]
        right = site_dim ** (n_sites - positions[0] - k)
        out = matrix
        if right > 1:
            out = np.kron(out, np.eye(right))
        if left > 1:
            out = np.kron(np.eye(left), out)
        return out
    rest = [i for i in range(n_sites) if i not in positions]
    full = np.kron(matrix, np.eye(site_dim ** len(rest)))
    perm = list(np.argsort(positions + rest))
    shape = (site_dim,) * (2 * n_sites)
    axes = perm + [n_sites + p for p in perm]
    dim = site_dim**n_sites
    return full.reshape(shape).transpose(axes).reshape(dim, dim)


@dataclass(frozen=True)
class Term:
    pattern: Region
    matrix: np.ndarray


@dataclass(frozen=True)
class Interaction:
    """Translation-invariant finite-range interaction.

    Each term is a canonical base pattern (lexicographic minimum at the
    origin) with a Hermitian matrix; the interaction is the family of all its
    translates.
    """

    terms: tuple = ()
    site_dim: int = 2
    classical: bool = False
    d: int = 1

    def __post_init__(self):
        algebra = SiteAlgebra(self.site_dim, self.classical)
        terms = []
        for t in self.terms:
            pattern = t.pattern if isinstance(t, Term) else t[0]
            mat = t.matrix if isinstance(t, Term) else t[1]
            if not isinstance(pattern, Region):
                pattern = Region(tuple(pattern))
            if pattern.dim != self.d:
                raise InvalidArgumentError(
                    f"pattern dimension {pattern.dim} does not match d={self.d}")
            if pattern.sites[0] != (0,) * self.d:
                raise InvalidArgumentError(
                    f"pattern {pattern.sites} must have the origin as its minimum site")
            mat = _compact(mat)
            n = self.site_dim ** len(pattern)
            if mat.shape != (n, n):
                raise InvalidArgumentError(
                    f"term on {len(pattern)} sites needs a {n}x{n} matrix, got {mat.shape}")
            algebra.check(mat, f"term on {pattern.sites}")
            terms.append(Term(pattern, mat))
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def algebra(self) -> SiteAlgebra:
        return SiteAlgebra(self.site_dim, self.classical)

    @property
    def range(self) -> int:
        return max((t.pattern.diameter() for t in self.terms), default=0)

    @property
    def is_real(self) -> bool:
        return all(not np.iscomplexobj(t.matrix) for t in self.terms)

    def scaled(self, factor: float) -> "Interaction":
        return Interaction(tuple(Term(t.pattern, factor * t.matrix) for t in self.terms),
                           self.site_dim, self.classical, self.d)

    def __add__(self, other: "Interaction") -> "Interaction":
        if other.site_dim != self.site_dim or other.d != self.d:
            raise InvalidArgumentError("cannot add interactions over different lattices")
        return Interaction(self.terms + other.terms, self.site_dim,
                           self.classical and other.classical, self.d)


# -- translate enumeration ---------------------------------------------------

def translates_within(psi: Interaction, region: Region,
                      keep: Callable[[tuple], bool] | None = None) -> Iterator[tuple]:
    """Yield (term, X) for every translate X of a base pattern with X ⊆ region."""
    for term in psi.terms:
        for a in region.sites:
            X = _shift_sites(term.pattern.sites, a)
            if all(x in region for x in X) and (keep is None or keep(X)):
                yield term, X


def translates_containing(psi: Interaction, site=None) -> Iterator[tuple]:
    """Yield (term, X) for every translate X of a base pattern containing ``site``."""
    site = tuple(site) if site is not None else (0,) * psi.d
    for term in psi.terms:
        for p in term.pattern.sites:
            shift = tuple(s - c for s, c in zip(site, p))
            yield term, _shift_sites(term.pattern.sites, shift)


def interaction_norm(psi: Interaction) -> float:
    """‖Ψ‖ = Σ_{X∋0} |X|^{-1} ‖ψ_X‖."""
    return float(sum(operator_norm(t.matrix) / len(X) for t, X in translates_containing(psi)))


def _check_cap(region: Region, site_dim: int, cap: int) -> int:
    dim = site_dim ** len(region)
    if dim > cap:
        n = round(len(region) ** (1.0 / region.dim))
        raise ResourceError(
            f"dense operator on {len(region)} sites needs dimension {dim} > cap {cap}",
            n=n, dimension=dim, cap=cap)
    return dim


def _assemble(psi: Interaction, region: Region, cap: int,
              keep: Callable[[tuple], bool] | None = None) -> np.ndarray:
    dim = _check_cap(region, psi.site_dim, cap)
    dtype = np.float64 if psi.is_real else np.complex128
    out = np.zeros((dim, dim), dtype=dtype)
    for term, X in translates_within(psi, region, keep):
        positions = [region.index(x) for x in X]
        out += embed(term.matrix, positions, len(region), psi.site_dim)
    return out


def build_hamiltonian(psi: Interaction, region: Region, cap: int = DEFAULT_CAP) -> LocalOperator:
    """K_Λ = Σ_{X⊆Λ} ψ_X as a dense matrix on Λ."""
    return LocalOperator(region, _assemble(psi, region, cap), psi.site_dim)


def configuration_digits(n_sites: int, site_dim: int) -> np.ndarray:
    """Row i holds the single-site indices of basis state i (most significant first)."""
    idx = np.arange(site_dim**n_sites)
    powers = site_dim ** np.arange(n_sites - 1, -1, -1)
    return (idx[:, None] // powers[None, :]) % site_dim


def hamiltonian_diagonal(psi: Interaction, region: Region, cap: int = 2**22,
                         keep: Callable[[tuple], bool] | None = None) -> np.ndarray:
    """Diagonal of K_Λ for a classical interaction, without forming the matrix."""
    if not psi.classical:
        raise InvalidArgumentError("diagonal construction needs a classical interaction")
    _check_cap(region, psi.site_dim, cap)
    digits = configuration_digits(len(region), psi.site_dim)
    out = np.zeros(digits.shape[0])
    for term, X in translates_within(psi, region, keep):
        positions = [region.index(x) for x in X]
        local = np.zeros(digits.shape[0], dtype=np.int64)
        for p in positions:
            local = local * psi.site_dim + digits[:, p]
        out += np.real(np.diag(term.matrix))[local]
    return out


def observable_density(psi: Interaction) -> LocalOperator:
    """A_Ψ = Σ_{X∋0} |X|^{-1} ψ_X on the union of those translates."""
    placed = list(translates_containing(psi))
    origin = (0,) * psi.d
    if not placed:
        return LocalOperator(Region((origin,)), np.zeros((psi.site_dim,) * 2), psi.site_dim)
    region = Region(tuple({x for _, X in placed for x in X}))
    dim = psi.site_dim ** len(region)
    out = np.zeros((dim, dim), dtype=np.float64 if psi.is_real else np.complex128)
    for term, X in placed:
        positions = [region.index(x) for x in X]
        out += embed(term.matrix, positions, len(region), psi.site_dim) / len(X)
    return LocalOperator(region, out, psi.site_dim)


# -- block / corridor decomposition ------------------------------------------

@dataclass(frozen=True)
class BlockDecomposition:
    """Λ(n) split into k^d tiles of side m+2g, each with a centred block of side m."""

    n: int
    m: int
    g: int
    k: int
    r: int
    d: int
    tiles: tuple
    blocks: tuple
    corridor_sites: tuple = field(default=())

    @property
    def volume(self) -> int:
        return self.n**self.d

    @property
    def block_volume(self) -> int:
        """|Λ(km)|: total number of block sites."""
        return (self.k * self.m) ** self.d

    def block_of(self) -> dict:
        """Map site -> block index for every site lying in a block."""
        return {s: j for j, b in enumerate(self.blocks) for s in b.sites}

    def inside_some_block(self) -> Callable[[tuple], bool]:
        owner = self.block_of()

        def keep(X) -> bool:
            j = owner.get(X[0])
            return j is not None and all(owner.get(x) == j for x in X[1:])

        return keep


def block_decomposition(n: int, m: int, g: int, d: int = 1) -> BlockDecomposition:
    """n = k(m+2g) + r with k the largest even integer and 0 ≤ r < 2(m+2g)."""
    if m < 1 or g < 0 or d < 1:
        raise InvalidArgumentError("need m >= 1, g >= 0 and d >= 1")
    side = m + 2 * g
    if n < 2 * side:
        raise InvalidArgumentError(
            f"no even k >= 2 exists: n={n} < 2(m+2g)={2 * side}")
    k = 2 * (n // (2 * side))
    r = n - k * side
    tiles, blocks, corridor = [], [], []
    for j in itertools.product(range(k), repeat=d):
        corner = tuple(c * side for c in j)
        tile = Region.box(side, d, corner)
        block = Region.box(m, d, tuple(c + g for c in corner))
        tiles.append(tile)
        blocks.append(block)
        corridor.extend(s for s in tile.sites if s not in block)
    return BlockDecomposition(n, m, g, k, r, d, tuple(tiles), tuple(blocks),
                              tuple(sorted(corridor)))


def decoupled_hamiltonian(psi: Interaction, dec: BlockDecomposition,
                          cap: int = DEFAULT_CAP) -> LocalOperator:
    """Σ_j K_{C_j} embedded in Λ(n); identity on corridors and the remainder strip."""
    region = Region.box(dec.n, dec.d)
    return LocalOperator(region, _assemble(psi, region, cap, dec.inside_some_block()),
                         psi.site_dim)


def broken_terms(psi: Interaction, dec: BlockDecomposition) -> Iterator[tuple]:
    """Translates inside Λ(n) that are not contained in any block."""
    inside = dec.inside_some_block()
    region = Region.box(dec.n, dec.d)
    return translates_within(psi, region, lambda X: not inside(X))


def broken_terms_bound(psi: Interaction, dec: BlockDecomposition) -> float:
    """(1/|Λ(n)|) Σ_{X⊆Λ(n), X⊄ any C_j} ‖ψ_X‖."""
    total = sum(operator_norm(t.matrix) for t, _ in broken_terms(psi, dec))
    return float(total) / dec.volume


def boundary_interaction_norm(phi: Interaction, region: Region) -> float:
    """Σ ‖φ_X‖ over translates X meeting both ``region`` and its complement."""
    total = 0.0
    for term in phi.terms:
        shifts = {tuple(s - c for s, c in zip(site, p))
                  for site in region.sites for p in term.pattern.sites}
        for a in shifts:
            X = _shift_sites(term.pattern.sites, a)
            inside = [x in region for x in X]
            if any(inside) and not all(inside):
                total += operator_norm(term.matrix)
    return float(total)


# -- standard interactions and serialization ---------------------------------

def pauli_string(label: str) -> np.ndarray:
    out = np.eye(1)
    for ch in label.upper():
        if ch not in PAULI:
            raise InvalidArgumentError(f"unknown Pauli letter {ch!r} in {label!r}")
        out = np.kron(out, PAULI[ch])
    return _compact(out)


def chain_pattern(length: int) -> Region:
    return Region(tuple((i,) for i in range(length)))


def single_site(matrix, classical: bool | None = None) -> Interaction:
    mat = _compact(matrix)
    if classical is None:
        classical = is_diagonal(mat)
    return Interaction(((chain_pattern(1), mat),), mat.shape[0], classical)


def magnetization(h: float = 1.0) -> Interaction:
    """Single-site h·σ_z."""
    return single_site(h * PAULI["Z"], classical=True)


def ising(J: float = 1.0, h: float = 0.0) -> Interaction:
    """Classical chain J·σ_zσ_z (+ h·σ_z)."""
    terms = [(chain_pattern(2), J * pauli_string("ZZ"))]
    if h:
        terms.append((chain_pattern(1), h * PAULI["Z"]))
    return Interaction(tuple(terms), 2, True)


def tfim(J: float = 1.0, h: float = 1.0) -> Interaction:
    """Transverse-field chain J·σ_zσ_z + h·σ_x."""
    return Interaction(((chain_pattern(2), J * pauli_string("ZZ")),
                        (chain_pattern(1), h * PAULI["X"])), 2, False)


def empty_interaction(site_dim: int = 2, d: int = 1) -> Interaction:
    return Interaction((), site_dim, True, d)


def _parse_matrix(raw, where: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return _compact(arr[..., 0] + 1j * arr[..., 1])
    if arr.ndim == 2 and arr.shape[-1] == 2:
        n = math.isqrt(arr.shape[0])
        if n * n != arr.shape[0]:
            raise InvalidArgumentError(f"{where}: flat [re, im] list length is not a square")
        return _compact((arr[:, 0] + 1j * arr[:, 1]).reshape(n, n))
    if arr.ndim == 2:
        return _compact(arr)
    raise InvalidArgumentError(f"{where}: cannot interpret matrix of shape {arr.shape}")


MODEL_BUILDERS = {"ising": ising, "tfim": tfim, "magnetization": magnetization}


def interaction_from_dict(doc: dict, where: str = "interaction") -> Interaction:
    """Parse the JSON interaction document.

    Accepts ``{"site_dim", "classical", "terms": [...]}`` where each term has a
    ``pattern`` (list of coordinates) and one of ``matrix`` ([re, im] pairs,
    row-major), ``operator`` (a named single-site operator) or
    ``pauli_string``; ``coeff`` scales the term.  ``{"model": "tfim", ...}`` is
    accepted as shorthand for the built-in chains.
    """
    if not isinstance(doc, dict):
        raise InvalidArgumentError(f"{where}: expected an object")
    if "model" in doc:
        params = {k: v for k, v in doc.items() if k != "model"}
        builder = MODEL_BUILDERS.get(doc["model"])
        if builder is None:
            raise InvalidArgumentError(f"{where}.model: unknown model {doc['model']!r}")
        try:
            return builder(**params)
        except TypeError as exc:
            raise InvalidArgumentError(f"{where}: {exc}") from None
    allowed = {"site_dim", "classical", "terms", "d"}
    unknown = set(doc) - allowed
    if unknown:
        raise InvalidArgumentError(f"{where}: unknown key(s) {sorted(unknown)}")
    site_dim = int(doc.get("site_dim", 2))
    d = int(doc.get("d", 1))
    terms = []
    for i, raw in enumerate(doc.get("terms", [])):
        tw = f"{where}.terms[{i}]"
        unknown = set(raw) - {"pattern", "matrix", "operator", "pauli_string", "coeff"}
        if unknown:
            raise InvalidArgumentError(f"{tw}: unknown key(s) {sorted(unknown)}")
        sources = [k for k in ("matrix", "operator", "pauli_string") if k in raw]
        if len(sources) != 1:
            raise InvalidArgumentError(f"{tw}: give exactly one of matrix/operator/pauli_string")
        if "matrix" in raw:
            mat = _parse_matrix(raw["matrix"], f"{tw}.matrix")
        elif "operator" in raw:
            if raw["operator"] not in NAMED_OPERATORS:
                raise InvalidArgumentError(f"{tw}.operator: unknown operator {raw['operator']!r}")
            mat = NAMED_OPERATORS[raw["operator"]]
        else:
            mat = pauli_string(raw["pauli_string"])
        mat = _compact(float(raw.get("coeff", 1.0)) * mat)
        n_sites = round(math.log(mat.shape[0], site_dim))
        pattern = raw.get("pattern")
        if pattern is None:
            if d != 1:
                raise InvalidArgumentError(f"{tw}.pattern: required when d > 1")
            pattern = [[i] for i in range(n_sites)]
        region = Region(tuple(tuple(p) for p in pattern))
        terms.append((region, mat))
    classical = doc.get("classical")
    if classical is None:
        classical = all(is_diagonal(m) for _, m in terms)
    try:
        return Interaction(tuple(terms), site_dim, bool(classical), d)
    except InvalidArgumentError as exc:
        raise InvalidArgumentError(f"{where}: {exc}") from None


def interaction_to_dict(psi: Interaction) -> dict:
    terms = []
    for t in psi.terms:
        mat = np.asarray(t.matrix, dtype=complex)
        terms.append({
            "pattern": [list(s) for s in t.pattern.sites],
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in mat],
        })
    return {"site_dim": psi.site_dim, "classical": psi.classical, "d": psi.d, "terms": terms}
