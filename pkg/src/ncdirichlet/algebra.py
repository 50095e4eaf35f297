"""Finite-dimensional tracial von Neumann algebras.

An :class:`Algebra` is a direct sum of full matrix blocks
``M_{n_1} + ... + M_{n_K}`` carrying the faithful trace
``tau(x) = sum_k w_k Tr(x_k)``.  Elements are block-diagonal complex
matrices.  The Hilbert space ``L^2(A, tau)`` is vectorized through the
*canonical* orthonormal basis ``E^k_ij / sqrt(w_k)`` (row-major inside
each block, blocks in order), so coordinates are plain Euclidean vectors
and superoperators/forms are plain matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Number
from typing import Sequence

import numpy as np

from .errors import DomainError, StructureError

#: Relative eigenvalue threshold used by :meth:`Element.is_positive`.
TOL_PSD = 1e-9
#: Relative tolerance used by :meth:`Element.is_hermitian`.
TOL_HERM = 1e-10


@dataclass(frozen=True)
class Algebra:
    """Direct sum of matrix blocks with strictly positive trace weights."""

    block_dims: tuple
    trace_weights: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.block_dims)
        weights = tuple(float(w) for w in self.trace_weights)
        if len(dims) < 1:
            raise StructureError("an algebra needs at least one block")
        if len(dims) != len(weights):
            raise StructureError(
                f"{len(dims)} block dims but {len(weights)} trace weights")
        if any(n < 1 for n in dims):
            raise StructureError(f"block dimensions must be >= 1, got {dims}")
        if any(not (w > 0 and np.isfinite(w)) for w in weights):
            raise StructureError(f"trace weights must be finite and > 0, got {weights}")
        object.__setattr__(self, "block_dims", dims)
        object.__setattr__(self, "trace_weights", weights)

    @classmethod
    def matrix(cls, n: int, weight: float = 1.0) -> "Algebra":
        """The single factor ``M_n`` with trace ``weight * Tr``."""
        return cls((n,), (weight,))

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    @property
    def dim(self) -> int:
        """Complex dimension of ``L^2(A, tau)``, i.e. ``sum n_k^2``."""
        return sum(n * n for n in self.block_dims)

    @property
    def total_trace(self) -> float:
        return float(sum(w * n for w, n in zip(self.trace_weights, self.block_dims)))

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [n * n for n in self.block_dims]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @cached_property
    def coord_scale(self) -> np.ndarray:
        """Per-coordinate factor ``sqrt(w_k)`` taking matrix entries to coordinates."""
        return np.concatenate([np.full(n * n, np.sqrt(w))
                               for n, w in zip(self.block_dims, self.trace_weights)])

    @cached_property
    def block_of_coord(self) -> np.ndarray:
        return np.concatenate([np.full(n * n, k) for k, n in enumerate(self.block_dims)])

    # -- construction -----------------------------------------------------

    def element(self, blocks) -> "Element":
        return Element(self, blocks)

    def zero(self) -> "Element":
        return Element(self, [np.zeros((n, n), complex) for n in self.block_dims])

    def identity(self) -> "Element":
        return Element(self, [np.eye(n, dtype=complex) for n in self.block_dims])

    def scalar(self, c) -> "Element":
        return self.identity() * c

    def block_unit(self, k: int) -> "Element":
        """Central projection onto block ``k``."""
        return Element(self, [np.eye(n, dtype=complex) if j == k else np.zeros((n, n), complex)
                              for j, n in enumerate(self.block_dims)])

    def matrix_unit(self, k: int, i: int, j: int) -> "Element":
        """The unnormalized matrix unit ``E_ij`` placed in block ``k``."""
        blocks = [np.zeros((n, n), complex) for n in self.block_dims]
        blocks[k][i, j] = 1.0
        return Element(self, blocks)

    def embed(self, k: int, mat) -> "Element":
        """Element equal to ``mat`` in block ``k`` and zero elsewhere."""
        blocks = [np.zeros((n, n), complex) for n in self.block_dims]
        blocks[k] = np.asarray(mat, dtype=complex)
        return Element(self, blocks)

    def from_coords(self, vec) -> "Element":
        vec = np.asarray(vec).reshape(-1)
        if vec.shape[0] != self.dim:
            raise StructureError(f"expected {self.dim} coordinates, got {vec.shape[0]}")
        flat = vec / self.coord_scale
        off = self.offsets
        return Element(self, [flat[off[k]:off[k + 1]].reshape(n, n)
                              for k, n in enumerate(self.block_dims)])

    def from_hcoords(self, vec) -> "Element":
        """Element with real coordinates ``vec`` over the Hermitian basis."""
        vec = np.asarray(vec, dtype=float).reshape(-1)
        return self.from_coords(self.hermitian_transform @ vec)

    def random_element(self, rng: np.random.Generator, scale: float = 1.0) -> "Element":
        return Element(self, [scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
                              / np.sqrt(2) for n in self.block_dims])

    def random_hermitian(self, rng: np.random.Generator, scale: float = 1.0) -> "Element":
        return self.from_hcoords(scale * rng.standard_normal(self.dim))

    def random_skew(self, rng: np.random.Generator, scale: float = 1.0) -> "Element":
        return self.random_hermitian(rng, scale) * 1j

    def amplify(self, n: int) -> "Algebra":
        """``A (x) M_n`` with the trace ``tau (x) tr`` (``tr`` unnormalized)."""
        if n < 1:
            raise DomainError(f"amplification order must be >= 1, got {n}")
        return Algebra(tuple(n * d for d in self.block_dims), self.trace_weights)

    # -- vectorization ------------------------------------------------------

    @cached_property
    def star_permutation(self) -> np.ndarray:
        """Index map ``J`` with ``coords(x*) = conj(coords(x))[J]``."""
        perm = []
        for k, n in enumerate(self.block_dims):
            idx = np.arange(n * n).reshape(n, n).T.reshape(-1)
            perm.append(idx + self.offsets[k])
        return np.concatenate(perm)

    @cached_property
    def hermitian_transform(self) -> np.ndarray:
        """Unitary ``Q`` whose columns are canonical coordinates of the Hermitian basis.

        Per block: ``E_ii``, then for ``i < j`` the pair
        ``(E_ij + E_ji)/sqrt2`` and ``(-i E_ij + i E_ji)/sqrt2``, all divided
        by ``sqrt(w_k)`` (which the canonical coordinates absorb).
        """
        q = np.zeros((self.dim, self.dim), dtype=complex)
        col = 0
        r2 = 1.0 / np.sqrt(2.0)
        for k, n in enumerate(self.block_dims):
            base = self.offsets[k]
            for i in range(n):
                q[base + i * n + i, col] = 1.0
                col += 1
            for i in range(n):
                for j in range(i + 1, n):
                    q[base + i * n + j, col] = r2
                    q[base + j * n + i, col] = r2
                    col += 1
                    q[base + i * n + j, col] = -1j * r2
                    q[base + j * n + i, col] = 1j * r2
                    col += 1
        q.setflags(write=False)
        return q

    @cached_property
    def basis(self) -> "ElementBasis":
        return element_basis(self)


class Element:
    """Block-diagonal complex matrix conforming to an :class:`Algebra`.

    Elements are immutable.  ``x @ y`` is the algebra product, ``c * x``
    scalar multiplication and ``x.H`` the adjoint.
    """

    __slots__ = ("algebra", "blocks")
    __array_priority__ = 100

    def __init__(self, algebra: Algebra, blocks: Sequence):
        blocks = tuple(np.array(b, dtype=complex) for b in blocks)
        if len(blocks) != algebra.n_blocks:
            raise StructureError(
                f"algebra has {algebra.n_blocks} blocks, got {len(blocks)}")
        for b, n in zip(blocks, algebra.block_dims):
            if b.shape != (n, n):
                raise StructureError(f"block of shape {b.shape} where ({n}, {n}) expected")
            b.setflags(write=False)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "blocks", blocks)

    def __setattr__(self, name, value):
        raise AttributeError("Element is immutable")

    def __repr__(self):
        return f"Element(dims={self.algebra.block_dims}, blocks={[b.tolist() for b in self.blocks]})"

    def _check(self, other: "Element"):
        if not isinstance(other, Element):
            raise StructureError(f"expected an Element, got {type(other).__name__}")
        if other.algebra != self.algebra:
            raise StructureError("elements belong to different algebras")

    def _map(self, fn) -> "Element":
        return Element(self.algebra, [fn(b) for b in self.blocks])

    def __add__(self, other):
        if isinstance(other, Number):
            return self + self.algebra.scalar(other)
        self._check(other)
        return Element(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Number):
            return self - self.algebra.scalar(other)
        self._check(other)
        return Element(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self._map(lambda b: -b)

    def __mul__(self, c):
        if not isinstance(c, Number):
            return NotImplemented
        return self._map(lambda b: c * b)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if not isinstance(c, Number):
            return NotImplemented
        return self._map(lambda b: b / c)

    def __matmul__(self, other):
        self._check(other)
        return Element(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])

    @property
    def H(self) -> "Element":
        return self._map(lambda b: b.conj().T)

    def adjoint(self) -> "Element":
        return self.H

    def commutator(self, other: "Element") -> "Element":
        return self @ other - other @ self

    def coords(self) -> np.ndarray:
        """Coordinates over the canonical orthonormal basis."""
        return np.concatenate([b.reshape(-1) for b in self.blocks]) * self.algebra.coord_scale

    def hcoords(self) -> np.ndarray:
        """Real coordinates over the Hermitian basis (imaginary parts dropped)."""
        return (self.algebra.hermitian_transform.conj().T @ self.coords()).real

    def opnorm(self) -> float:
        return max(float(np.linalg.norm(b, 2)) for b in self.blocks)

    def is_hermitian(self, tol: float = TOL_HERM) -> bool:
        defect = max(float(np.max(np.abs(b - b.conj().T), initial=0.0)) for b in self.blocks)
        return defect <= tol * (1.0 + self.opnorm())

    def is_skew(self, tol: float = TOL_HERM) -> bool:
        return (self * 1j).is_hermitian(tol)

    def is_positive(self, tol: float = TOL_PSD) -> bool:
        if not self.is_hermitian():
            return False
        thresh = -tol * (1.0 + self.opnorm())
        return all(np.linalg.eigvalsh(_herm(b))[0] >= thresh for b in self.blocks)

    def is_central(self, tol: float = TOL_HERM) -> bool:
        """Block-scalar, i.e. commutes with the whole algebra."""
        scale = 1.0 + self.opnorm()
        for b in self.blocks:
            c = np.trace(b) / b.shape[0]
            if np.max(np.abs(b - c * np.eye(b.shape[0]))) > tol * scale:
                return False
        return True

    def allclose(self, other: "Element", atol: float = 1e-12) -> bool:
        self._check(other)
        return all(np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.blocks, other.blocks))


def _herm(b):
    return (b + b.conj().T) / 2


def _same_algebra(*xs: Element) -> Algebra:
    alg = xs[0].algebra
    for x in xs[1:]:
        xs[0]._check(x)
    return alg


def trace(a: Element) -> complex:
    """Weighted trace ``sum_k w_k Tr(a_k)``."""
    return complex(sum(w * np.trace(b) for w, b in zip(a.algebra.trace_weights, a.blocks)))


def inner(x: Element, y: Element) -> complex:
    """``(x, y) = tau(x* y)``, conjugate-linear in ``x``."""
    alg = _same_algebra(x, y)
    return complex(sum(w * np.vdot(a, b) for w, a, b in zip(alg.trace_weights, x.blocks, y.blocks)))


def singular_values(a: Element) -> list:
    return [np.linalg.svd(b, compute_uv=False) for b in a.blocks]


def lp_norm(a: Element, p) -> float:
    """Non-commutative ``L^p`` norm ``tau(|a|^p)^(1/p)``; ``p = inf`` is the operator norm."""
    p = float(p)
    if not p >= 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    svals = singular_values(a)
    if np.isinf(p):
        return max(float(s.max(initial=0.0)) for s in svals)
    top = max(float(s.max(initial=0.0)) for s in svals)
    if top == 0.0:
        return 0.0
    # factor out the top singular value to keep s**p finite
    total = sum(w * np.sum((s / top) ** p) for w, s in zip(a.algebra.trace_weights, svals))
    return float(top * total ** (1.0 / p))


def hermitian_split(x: Element):
    """Return Hermitian ``(y, z)`` with ``x = y + i z``."""
    y = (x + x.H) * 0.5
    z = (x - x.H) * (-0.5j)
    return y, z


def center_basis(alg: Algebra) -> list:
    """Block-indicator projections; the center is their linear span."""
    return [alg.block_unit(k) for k in range(alg.n_blocks)]


@dataclass(frozen=True)
class ElementBasis:
    complex_basis: list
    hermitian_basis: list


def element_basis(alg: Algebra) -> ElementBasis:
    eye = np.eye(alg.dim)
    cb = [alg.from_coords(eye[i]) for i in range(alg.dim)]
    q = alg.hermitian_transform
    hb = [alg.from_coords(q[:, i]) for i in range(alg.dim)]
    return ElementBasis(cb, hb)


def gram_matrix(elements: Sequence[Element]) -> np.ndarray:
    return np.array([[inner(a, b) for b in elements] for a in elements])


def map_matrix(alg: Algebra, fn) -> np.ndarray:
    """Matrix over canonical coordinates of a linear map ``fn: Element -> Element``."""
    eye = np.eye(alg.dim)
    cols = [fn(alg.from_coords(eye[i])).coords() for i in range(alg.dim)]
    return np.array(cols).T if cols else np.zeros((0, 0), complex)


def sandwich_matrix(left: Element, right: Element) -> np.ndarray:
    """Matrix of ``x -> left x right`` (block diagonal; weights cancel)."""
    alg = _same_algebra(left, right)
    out = np.zeros((alg.dim, alg.dim), dtype=complex)
    for k, (l, r) in enumerate(zip(left.blocks, right.blocks)):
        o = alg.offsets[k]
        m = o + l.shape[0] ** 2
        # row-major vec(l x r) = (l kron r^T) vec(x)
        out[o:m, o:m] = np.kron(l, r.T)
    return out


def amplified_entries(x: Element, n: int) -> list:
    """Split an element of ``A (x) M_n`` into its ``n x n`` grid of elements of ``A``.

    The amplified algebra must be ``base.amplify(n)`` with ``base`` recovered
    from the block dims; block ``k`` is an ``n x n`` grid of ``n_k x n_k`` tiles.
    """
    base = Algebra(tuple(d // n for d in x.algebra.block_dims), x.algebra.trace_weights)
    if base.amplify(n) != x.algebra:
        raise StructureError(f"block dims {x.algebra.block_dims} are not divisible by {n}")
    grid = []
    for i in range(n):
        row = []
        for j in range(n):
            row.append(Element(base, [b[i * m:(i + 1) * m, j * m:(j + 1) * m]
                                      for b, m in zip(x.blocks, base.block_dims)]))
        grid.append(row)
    return grid


def assemble_amplified(entries) -> Element:
    """Inverse of :func:`amplified_entries` for a square grid of elements."""
    n = len(entries)
    base = entries[0][0].algebra
    blocks = []
    for k in range(base.n_blocks):
        blocks.append(np.block([[entries[i][j].blocks[k] for j in range(n)] for i in range(n)]))
    return Element(base.amplify(n), blocks)


def amplified_index(alg: Algebra, n: int) -> np.ndarray:
    """``idx[i, j]`` lists the coordinates of ``A (x) M_n`` that hold tile ``(i, j)``.

    Coordinates of the tile, in the base algebra's canonical order, are
    ``big_coords[idx[i, j]]``; weights are shared so no rescaling is needed.
    """
    big = alg.amplify(n)
    idx = np.empty((n, n, alg.dim), dtype=int)
    for k, m in enumerate(alg.block_dims):
        size = n * m
        r, s = np.divmod(np.arange(m * m), m)
        for i in range(n):
            for j in range(n):
                idx[i, j, alg.offsets[k]:alg.offsets[k + 1]] = (
                    big.offsets[k] + (i * m + r) * size + (j * m + s))
    return idx


def lift_tiles(alg: Algebra, matrix, n: int) -> np.ndarray:
    """Matrix of ``M (x) id_n`` acting tile by tile on ``A (x) M_n``."""
    big = alg.amplify(n)
    out = np.zeros((big.dim, big.dim), dtype=complex)
    idx = amplified_index(alg, n)
    for i in range(n):
        for j in range(n):
            out[np.ix_(idx[i, j], idx[i, j])] = matrix
    return out
