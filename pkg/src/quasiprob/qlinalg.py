"""Dense complex linear algebra for small multipartite Hilbert spaces.

Conventions
-----------
* Kronecker products are ``a``-index major: ``tensor(a, b)[i*db + j, k*db + l] = a[i, k] * b[j, l]``.
  Multipartite states list subsystems left to right in that order.
* Entropies are in nats, with ``0 ln 0 := 0``.
* Eigendecompositions are deterministic: eigenvalues are sorted descending and
  eigenvectors inside (near-)degenerate blocks are canonicalized, see
  :func:`hermitian_eig`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_PSD = 1e-10
TOL_DEGEN = 1e-9


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def hermiticity_error(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - dagger(m)))) if m.size else 0.0


def unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0]))))


def tensor(a, b, *more) -> np.ndarray:
    """Kronecker product, first argument most significant."""
    out = np.kron(as_matrix(a), as_matrix(b))
    for m in more:
        out = np.kron(out, as_matrix(m))
    return out


def conjugate(u: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Return ``u m u^dagger``."""
    return u @ m @ dagger(u)


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density operator over an ordered list of subsystems."""

    matrix: np.ndarray
    dims: tuple[int, ...] = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        dims = tuple(int(d) for d in self.dims) if self.dims else (m.shape[0],)
        if any(d < 1 for d in dims) or int(np.prod(dims)) != m.shape[0]:
            raise ValueError(f"subsystem dims {dims} do not multiply to {m.shape[0]}")
        if self.validate:
            herr = hermiticity_error(m)
            if herr > TOL_HERM:
                raise ValueError(f"not Hermitian (max |M - M^dag| = {herr:.3g})")
            tr = np.trace(m)
            if abs(tr - 1) > TOL_TRACE:
                raise ValueError(f"trace {tr.real:.12g} != 1")
            lmin = np.linalg.eigvalsh((m + dagger(m)) / 2)[0]
            if lmin < -TOL_PSD:
                raise ValueError(f"negative eigenvalue {lmin:.3g}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_vector(cls, psi, dims: Sequence[int] = ()) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), tuple(dims))

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        d = int(np.prod(dims))
        return cls(np.eye(d) / d, tuple(dims))

    def __matmul__(self, other: "DensityMatrix") -> "DensityMatrix":
        """Tensor product of states, subsystem lists concatenated."""
        return DensityMatrix(tensor(self.matrix, other.matrix), self.dims + other.dims,
                             validate=False)


def _check_subsystems(indices, n: int) -> list[int]:
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx) or any(i < 0 or i >= n for i in idx):
        raise ValueError(f"invalid subsystem index set {indices} for {n} subsystems")
    return idx


def partial_trace_array(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced operator on ``keep`` (kept in their original relative order)."""
    dims = tuple(dims)
    n = len(dims)
    keep = sorted(_check_subsystems(keep, n))
    t = np.asarray(m).reshape(dims + dims)
    # einsum labels: row i, column n+i; traced subsystems share their label
    row = list(range(n))
    col = [i if i not in keep else n + i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return np.einsum(t, row + col, out).reshape(d, d)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    keep = sorted(_check_subsystems(keep, len(rho.dims)))
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    red = partial_trace_array(rho.matrix, rho.dims, keep)
    return DensityMatrix(red, tuple(rho.dims[i] for i in keep), validate=False)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (descending) and matching unit eigenvectors (columns)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    blocks: tuple[tuple[int, ...], ...] = ()

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def basis_vectors(self) -> list[np.ndarray]:
        return [self.vectors[:, i] for i in range(self.vectors.shape[1])]

    @property
    def projectors(self) -> list[np.ndarray]:
        if self.blocks:
            return [self.vectors[:, list(b)] @ dagger(self.vectors[:, list(b)]) for b in self.blocks]
        return [np.outer(v, v.conj()) for v in self.basis_vectors]

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))


def _leading_index(v: np.ndarray, rtol: float = 1e-8) -> int:
    mag = np.abs(v)
    return int(np.flatnonzero(mag >= mag.max() * (1 - rtol))[0])


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = _leading_index(v)
    return v * (np.conj(v[k]) / abs(v[k]))


def _canonical_block_basis(vecs: np.ndarray) -> np.ndarray:
    """Basis-independent orthonormal basis of span(vecs).

    Projects computational basis vectors onto the subspace and runs pivoted
    Gram-Schmidt (largest residual first, ties to the lowest index).
    """
    k = vecs.shape[1]
    proj = vecs @ dagger(vecs)
    cols = proj.copy()
    basis = []
    for _ in range(k):
        norms = np.linalg.norm(cols, axis=0)
        j = int(np.flatnonzero(norms >= norms.max() * (1 - 1e-8))[0])
        u = cols[:, j] / norms[j]
        basis.append(u)
        cols = cols - np.outer(u, u.conj() @ cols)
    return np.column_stack(basis)


def _vector_key(v: np.ndarray) -> tuple:
    return (_leading_index(v),) + tuple(
        x for c in v for x in (-round(c.real, 9), -round(c.imag, 9)))


def hermitian_eig(m, merge_degenerate: bool = False, tol_degen: float = TOL_DEGEN) -> SpectralDecomposition:
    """Deterministic eigendecomposition of a Hermitian matrix.

    Eigenvalues come out in descending order. Eigenvalues closer than
    ``tol_degen`` (chained) form a degenerate block; its eigenvalues are set to
    the block mean and its eigenvectors are replaced by a canonical basis of
    the eigenspace, so the output depends on the matrix only, not on LAPACK's
    arbitrary choice inside the eigenspace. Every vector gets its largest
    component (lowest index on ties) real positive; vectors within a block are
    sorted by that index, then lexicographically.

    With ``merge_degenerate`` each block yields a single eigenvalue and one
    (higher-rank) projector.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError("hermitian_eig needs a square matrix")
    herr = hermiticity_error(m)
    if herr > TOL_HERM:
        raise ValueError(f"matrix is not Hermitian (max |M - M^dag| = {herr:.3g})")
    w, v = np.linalg.eigh((m + dagger(m)) / 2)
    w, v = w[::-1].copy(), v[:, ::-1].copy()

    groups: list[list[int]] = []
    for i in range(len(w)):
        if groups and w[groups[-1][-1]] - w[i] <= tol_degen:
            groups[-1].append(i)
        else:
            groups.append([i])

    vals, vecs, blocks = [], [], []
    for g in groups:
        lam = float(np.mean(w[g]))
        if len(g) == 1:
            block_vecs = [_fix_phase(v[:, g[0]])]
        else:
            basis = _canonical_block_basis(v[:, g])
            block_vecs = sorted((_fix_phase(basis[:, j]) for j in range(len(g))), key=_vector_key)
        start = len(vals)
        vals.extend([lam] * len(g))
        vecs.extend(block_vecs)
        blocks.append(tuple(range(start, start + len(g))))

    vals_arr = np.array(vals)
    vec_arr = np.column_stack(vecs)
    if merge_degenerate:
        return SpectralDecomposition(np.array([vals_arr[b[0]] for b in blocks]), vec_arr, tuple(blocks))
    return SpectralDecomposition(vals_arr, vec_arr)


def entropy_from_spectrum(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _matrix_of(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else as_matrix(rho)


def von_neumann_entropy(rho) -> float:
    """``-Tr rho ln rho`` in nats."""
    m = _matrix_of(rho)
    lam = np.linalg.eigvalsh((m + dagger(m)) / 2)
    return entropy_from_spectrum(np.clip(lam, 0.0, None))


def _subsystem_entropy(rho: DensityMatrix, idx: Sequence[int]) -> float:
    idx = sorted(idx)
    if len(idx) == len(rho.dims):
        return von_neumann_entropy(rho)
    return von_neumann_entropy(partial_trace_array(rho.matrix, rho.dims, idx))


def _check_cover(rho: DensityMatrix, *parts: Sequence[int]) -> list[list[int]]:
    n = len(rho.dims)
    out = [_check_subsystems(p, n) for p in parts]
    flat = [i for p in out for i in p]
    if any(not p for p in out) or sorted(flat) != list(range(n)):
        raise ValueError(f"partition {parts} must cover subsystems 0..{n - 1} disjointly")
    return out


def mutual_information(rho: DensityMatrix, partition: tuple[Sequence[int], Sequence[int]]) -> float:
    a, b = _check_cover(rho, *partition)
    return _subsystem_entropy(rho, a) + _subsystem_entropy(rho, b) - von_neumann_entropy(rho)


def conditional_mutual_information(rho: DensityMatrix, a: Sequence[int], b: Sequence[int],
                                   c: Sequence[int]) -> float:
    """``I(A;B|C) = S(AC) + S(BC) - S(ABC) - S(C)``."""
    a, b, c = _check_cover(rho, a, b, c)
    return (_subsystem_entropy(rho, a + c) + _subsystem_entropy(rho, b + c)
            - von_neumann_entropy(rho) - _subsystem_entropy(rho, c))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random state from a normalized square Wishart matrix."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    w = g @ dagger(g)
    return w / np.trace(w).real


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + dagger(g)) / 2
