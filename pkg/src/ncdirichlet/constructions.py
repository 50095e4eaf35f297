"""Explicit Dirichlet forms built from derivations.

* :func:`derivation_family_form`:
  ``E(x, y) = sum_i (d_i x, d_i y) + sum_ij (d_i x, c_ij d_j y)`` for
  *-derivations ``d_i`` and a central, self-adjoint, antisymmetric ``[c_ij]``.
* :func:`commutator_form`: ``E(x, y) = sum_ij (d_i x, a_ij d_j y)`` with
  ``d_i = [z_i, .]`` and a coercive central coefficient matrix, reduced to
  the previous case through ``B = sqrt(A~)``.
* :func:`reim_form`: ``E(x, y) = Re (dx, dy) + Im (dx, dy)`` for an
  arbitrary derivation ``d``.

Each builder re-checks its output (real-positivity, the sector bound and
a sampled Dirichlet check) and raises if a guarantee does not hold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import Algebra, Element
from .derivations import Derivation, dagger, explicit_derivation, inner_derivation
from .errors import DomainError, NCDError, StructureError
from .forms import Form, dirichlet_check, is_real_positive, sector_constant
from .semigroups import SuperOperator, generator_from_form

COERCIVITY_TOL = 1e-8
DUAL_ROUTE_TOL = 1e-10


class ConstructionError(NCDError):
    """A constructed form failed one of its guaranteed properties."""


@dataclass(frozen=True)
class CoefficientMatrix:
    """``n x n`` matrix of central self-adjoint elements, stored per block as real ``(K, n, n)``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.ndim != 3 or e.shape[1] != e.shape[2]:
            raise StructureError(f"coefficients must have shape (K, n, n), got {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def constant(cls, alg: Algebra, mat) -> "CoefficientMatrix":
        """Same scalar matrix in every block."""
        mat = np.asarray(mat, dtype=float)
        return cls(np.broadcast_to(mat, (alg.n_blocks,) + mat.shape).copy())

    @classmethod
    def from_elements(cls, grid) -> "CoefficientMatrix":
        """From a square grid of central self-adjoint elements."""
        n = len(grid)
        alg = grid[0][0].algebra
        out = np.zeros((alg.n_blocks, n, n))
        for i, row in enumerate(grid):
            if len(row) != n:
                raise StructureError("coefficient grid must be square")
            for j, c in enumerate(row):
                if not c.is_central():
                    raise DomainError(f"coefficient ({i}, {j}) is not central")
                if not c.is_hermitian():
                    raise DomainError(f"coefficient ({i}, {j}) is not self-adjoint")
                out[:, i, j] = [np.trace(b).real / b.shape[0] for b in c.blocks]
        return cls(out)

    @property
    def size(self) -> int:
        return self.entries.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.entries.shape[0]

    def symmetric(self) -> np.ndarray:
        return (self.entries + np.swapaxes(self.entries, 1, 2)) / 2

    def antisymmetric(self) -> np.ndarray:
        return (self.entries - np.swapaxes(self.entries, 1, 2)) / 2

    def is_antisymmetric(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.entries + np.swapaxes(self.entries, 1, 2)),
                            initial=0.0)) <= tol

    def coercivity(self) -> float:
        """``nu``: smallest eigenvalue of the symmetric part over all blocks."""
        return float(min(np.linalg.eigvalsh(s)[0] for s in self.symmetric()))

    def sup_norm(self) -> float:
        """``max_k ||C^(k)||_op``, the operator norm of the matrix of multipliers."""
        return float(max(np.linalg.norm(c, 2) for c in self.entries)) if self.size else 0.0

    def element(self, alg: Algebra, i: int, j: int) -> Element:
        return Element(alg, [self.entries[k, i, j] * np.eye(n)
                             for k, n in enumerate(alg.block_dims)])

    def multiplier(self, alg: Algebra, i: int, j: int) -> np.ndarray:
        """Diagonal of left multiplication by ``c_ij`` in canonical coordinates."""
        if alg.n_blocks != self.n_blocks:
            raise StructureError(f"coefficients have {self.n_blocks} blocks, algebra has "
                                 f"{alg.n_blocks}")
        return self.entries[alg.block_of_coord, i, j]


@dataclass
class Instance:
    """A form together with its generator and the data it was built from."""

    label: str
    family: str
    algebra: Algebra
    form: Form
    generator: SuperOperator
    derivations: list = field(default_factory=list)
    coefficients: Optional[CoefficientMatrix] = None
    coefficient_role: Optional[str] = None
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)


def _family_matrix(ds, coeffs: np.ndarray, C: Optional[CoefficientMatrix], alg: Algebra,
                   with_identity: bool) -> np.ndarray:
    n = len(ds)
    g = np.zeros((alg.dim, alg.dim), dtype=complex)
    for i in range(n):
        di = ds[i].matrix
        if with_identity:
            g += di.conj().T @ di
        if C is None:
            continue
        for j in range(n):
            m = C.multiplier(alg, i, j)
            if np.any(m):
                g += di.conj().T @ (m[:, None] * ds[j].matrix)
    return g


def _check_family(ds, C: CoefficientMatrix) -> Algebra:
    if not ds:
        raise DomainError("need at least one derivation")
    alg = ds[0].algebra
    for i, d in enumerate(ds):
        if d.algebra != alg:
            raise StructureError(f"derivation {i} lives on a different algebra")
        if not d.is_star(1e-10):
            raise DomainError(f"derivation {i} is not a *-derivation")
    if C.size != len(ds):
        raise StructureError(f"{len(ds)} derivations but a {C.size}x{C.size} coefficient matrix")
    return alg


def derivation_family_form(ds, C: Optional[CoefficientMatrix] = None, verify: bool = True,
                           n_samples: int = 200, seed: int = 0) -> Form:
    """``E(x, y) = sum_i (d_i x, d_i y) + sum_ij (d_i x, c_ij d_j y)``."""
    ds = list(ds)
    if C is None:
        C = CoefficientMatrix(np.zeros((ds[0].algebra.n_blocks, len(ds), len(ds))))
    alg = _check_family(ds, C)
    if not C.is_antisymmetric():
        defect = float(np.max(np.abs(C.symmetric())))
        raise DomainError(f"coefficient matrix is not antisymmetric (defect {defect:.3e})",
                          witness=defect)
    E = Form(alg, _family_matrix(ds, C.entries, C, alg, True))
    bound = len(ds) * C.sup_norm() + 1.0
    E.metadata.update({"construction": "derivation-family", "n": len(ds),
                       "coefficient_norm": C.sup_norm(), "sector_bound": bound})
    if verify:
        _post_check(E, bound, n_samples, seed)
    return E


def _post_check(E: Form, bound: float, n_samples: int, seed: int):
    if not is_real_positive(E):
        raise ConstructionError("constructed form is not real-positive")
    K = sector_constant(E)
    E.metadata["sector_constant"] = K
    if K > bound + 1e-9:
        raise ConstructionError(f"sector constant {K} exceeds the bound {bound}")
    v = dirichlet_check(E, n_samples, seed, "full")
    E.metadata["dirichlet"] = v.status
    if v.failed:
        raise ConstructionError(f"constructed form failed the Dirichlet check (margin {v.margin})")


def _block_apply(mats: np.ndarray, fn) -> np.ndarray:
    out = []
    for m in mats:
        lam, v = np.linalg.eigh(m)
        out.append((v * fn(lam)) @ v.T)
    return np.array(out)


def commutator_form(zs, A: CoefficientMatrix, verify: bool = True, n_samples: int = 200,
                    seed: int = 0) -> Form:
    """``E(x, y) = sum_ij (d_i x, a_ij d_j y)`` with ``d_i = [z_i, .]`` and ``A~ >= nu > 0``.

    Built as a derivation-family form: ``B = sqrt(A~)``, ``C = B^-1 A^ B^-1``
    and ``delta_i = sum_j b_ij d_j = [sum_j b_ij z_j, .]``.  The result is
    compared with the direct assembly of ``sum_ij D_i^H a_ij D_j``.
    """
    zs = list(zs)
    if not zs:
        raise DomainError("need at least one skew-adjoint element")
    alg = zs[0].algebra
    ds = [inner_derivation(z) for z in zs]
    if A.size != len(zs):
        raise StructureError(f"{len(zs)} elements but a {A.size}x{A.size} coefficient matrix")
    nu = A.coercivity()
    if nu < COERCIVITY_TOL:
        raise DomainError(f"coefficient matrix is not coercive: smallest eigenvalue of the "
                          f"symmetric part is {nu:.6g}", witness=nu)
    sym, anti = A.symmetric(), A.antisymmetric()
    b = _block_apply(sym, np.sqrt)
    b_inv = _block_apply(sym, lambda lam: 1.0 / np.sqrt(lam))
    c = b_inv @ anti @ b_inv
    c = (c - np.swapaxes(c, 1, 2)) / 2
    C = CoefficientMatrix(c)
    n = len(zs)
    ws = []
    for i in range(n):
        w = alg.zero()
        for j in range(n):
            w = w + CoefficientMatrix(b).element(alg, i, j) @ zs[j]
        ws.append(w)
    deltas = [inner_derivation(w) for w in ws]
    E = derivation_family_form(deltas, C, verify=False)
    direct = _family_matrix(ds, A.entries, A, alg, False)
    gap = float(np.max(np.abs(direct - E.matrix), initial=0.0))
    if gap > DUAL_ROUTE_TOL * (1.0 + np.max(np.abs(direct), initial=0.0)):
        raise ConstructionError(f"reduced and direct assemblies differ by {gap:.3e}")
    E.metadata.update({"construction": "commutator", "coercivity": nu,
                       "reduced_coefficient_norm": C.sup_norm(), "dual_route_gap": gap})
    if verify:
        _post_check(E, n * C.sup_norm() + 1.0, n_samples, seed)
    return E


def reim_parts(d: Derivation):
    """``d_1 = (d + d^dagger)/2`` and ``d_2 = (d - d^dagger)/(2i)``; both *-derivations."""
    dd = dagger(d)
    if d.kind == "inner":
        return d, inner_derivation(d.algebra.zero())
    d1 = explicit_derivation(d.algebra, (d.matrix + dd.matrix) / 2)
    d2 = explicit_derivation(d.algebra, (d.matrix - dd.matrix) / 2j)
    return d1, d2


def reim_form(d: Derivation, verify: bool = True, n_samples: int = 200,
              seed: int = 0) -> Form:
    """``E(x, y) = Re (dx, dy) + Im (dx, dy)`` on Hermitian elements.

    With ``d = d_1 + i d_2`` this is the derivation-family form of
    ``(d_1, d_2)`` with ``C = [[0, 1], [-1, 0]]``.
    """
    d1, d2 = reim_parts(d)
    for i, part in enumerate((d1, d2), 1):
        if not part.is_star(1e-10):
            raise ConstructionError(f"part d_{i} is not a *-derivation")
    C = CoefficientMatrix.constant(d.algebra, [[0.0, 1.0], [-1.0, 0.0]])
    E = derivation_family_form([d1, d2], C, verify=False)
    E.metadata.update({"construction": "reim", "sector_bound": float(np.sqrt(2.0))})
    if verify:
        _post_check(E, np.sqrt(2.0), n_samples, seed)
    return E


# -- seeded instance generators ---------------------------------------------------------

def _random_algebra(blocks, rng) -> Algebra:
    weights = tuple(float(w) for w in rng.uniform(0.5, 2.0, len(blocks)))
    return Algebra(tuple(blocks), weights)


def _normalized_skew(alg: Algebra, rng, size: float = 0.5) -> Element:
    z = alg.random_skew(rng)
    return z * (size / max(z.opnorm(), 1e-12))


def thm51_instance(blocks=(2,), nderiv: int = 2, seed: int = 0,
                   coefficient_scale: float = 1.0, verify: bool = True) -> Instance:
    """Random inner *-derivations with a random central antisymmetric ``C``."""
    rng = np.random.default_rng(seed)
    alg = _random_algebra(blocks, rng)
    zs = [_normalized_skew(alg, rng) for _ in range(nderiv)]
    ds = [inner_derivation(z) for z in zs]
    raw = rng.uniform(-coefficient_scale, coefficient_scale, (alg.n_blocks, nderiv, nderiv))
    C = CoefficientMatrix(raw - np.swapaxes(raw, 1, 2))
    E = derivation_family_form(ds, C, verify=verify, seed=seed)
    return Instance(f"thm51-{seed}", "thm51", alg, E, generator_from_form(E), ds, C, "C", seed)


def thm52_instance(blocks=(2,), nderiv: int = 2, seed: int = 0,
                   coercivity: float = COERCIVITY_TOL, verify: bool = True) -> Instance:
    """Random skew ``z_i`` with a sampled central coefficient matrix ``A``.

    Raises DomainError (with the eigenvalue as witness) when the sampled
    symmetric part does not satisfy ``A~ >= coercivity``.
    """
    rng = np.random.default_rng(seed)
    alg = _random_algebra(blocks, rng)
    zs = [_normalized_skew(alg, rng) for _ in range(nderiv)]
    m = rng.standard_normal((alg.n_blocks, nderiv, nderiv))
    sym = m @ np.swapaxes(m, 1, 2) / nderiv
    raw = rng.uniform(-1, 1, (alg.n_blocks, nderiv, nderiv))
    A = CoefficientMatrix(sym + (raw - np.swapaxes(raw, 1, 2)) / 2)
    nu = A.coercivity()
    if nu < coercivity:
        raise DomainError(f"sampled coefficient matrix has smallest eigenvalue {nu:.6g} "
                          f"< required coercivity {coercivity:g}", witness=nu)
    E = commutator_form(zs, A, verify=verify, seed=seed)
    ds = [inner_derivation(z) for z in zs]
    return Instance(f"thm52-{seed}", "thm52", alg, E, generator_from_form(E), ds, A, "A", seed,
                    {"z": zs})


def reim_instance(blocks=(2,), seed: int = 0, verify: bool = True) -> Instance:
    """``d = [z, .] + i [z', .]`` (not a *-derivation) fed to :func:`reim_form`."""
    rng = np.random.default_rng(seed)
    alg = _random_algebra(blocks, rng)
    z1, z2 = _normalized_skew(alg, rng), _normalized_skew(alg, rng)
    d = inner_derivation(z1) + 1j * inner_derivation(z2)
    E = reim_form(d, verify=verify, seed=seed)
    return Instance(f"reim-{seed}", "reim", alg, E, generator_from_form(E), [d], None, None, seed)


CUSTOM_KINDS = ("transpose", "anti-dissipative", "flip", "shift", "half")


def custom_instance(kind: str, blocks=(2,), seed: int = 0) -> Instance:
    """Hand-made generators.

    * ``transpose``: ``L = Theta - id`` with ``Theta`` the blockwise
      transpose; a symmetric Dirichlet form whose semigroup is positive
      but not completely positive.
    * ``anti-dissipative``: ``L = +id``.
    * ``flip``: ``L = +G`` for a random derivation-family form ``G``.
    * ``shift``: ``L = -G + id``.
    * ``half``: commutative two-point example, sub-Markovian ``T_t`` whose
      adjoint is not; ``blocks`` is ignored.
    """
    from .semigroups import identity_superop, transpose_map
    if kind == "half":
        alg = Algebra((1, 1), (1.0, 1.0))
        L = SuperOperator(alg, np.array([[-1.0, 0.0], [1.5, -2.0]]), "generator")
    elif kind == "transpose":
        rng = np.random.default_rng(seed)
        alg = _random_algebra(blocks, rng)
        L = transpose_map(alg) - identity_superop(alg)
    elif kind == "anti-dissipative":
        alg = _random_algebra(blocks, np.random.default_rng(seed))
        L = identity_superop(alg)
    elif kind in ("flip", "shift"):
        base = thm51_instance(blocks, 2, seed, verify=False)
        alg = base.algebra
        L = -base.generator if kind == "flip" else base.generator + identity_superop(alg)
    else:
        raise DomainError(f"unknown custom generator kind {kind!r}; expected one of {CUSTOM_KINDS}")
    L = SuperOperator(alg, L.matrix, "generator")
    E = Form(alg, -L.matrix, {"construction": f"custom-{kind}"})
    return Instance(f"custom-{kind}-{seed}", "custom-L", alg, E, L, seed=seed,
                    metadata={"kind": kind})
