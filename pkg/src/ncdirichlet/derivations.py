"""Derivations ``delta(ab) = a delta(b) + delta(a) b`` on a block algebra.

Every derivation is held as its action matrix over canonical coordinates;
inner derivations ``[z, .]`` additionally remember ``z``.  Besides the
constructors this module checks the chain rule, the Lipschitz bound
``||delta f(a)||_2 <= Lip(f) ||delta a||_2`` and the modulus bound
``||delta |a|||_2 <= sqrt(2) ||delta a||_2``.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .algebra import (Algebra, Element, amplified_entries, assemble_amplified,
                      lp_norm, map_matrix, sandwich_matrix)
from .calculus import (ScalarFunction, apply_function, difference_kernel, modulus,
                       pi_a_apply)
from .errors import DomainError, StructureError

LEIBNIZ_PAIRS = 64
LEIBNIZ_TOL = 1e-10
PSI_ORDERS = (4, 16, 64, 256)


class Derivation:
    """A derivation given by its matrix ``D`` over canonical coordinates."""

    def __init__(self, algebra: Algebra, matrix, kind: str = "explicit",
                 z: Optional[Element] = None, leibniz_samples: int = 0):
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (algebra.dim, algebra.dim):
            raise StructureError(f"derivation matrix must be {algebra.dim}x{algebra.dim}, "
                                 f"got {matrix.shape}")
        matrix.setflags(write=False)
        self.algebra = algebra
        self.matrix = matrix
        self.kind = kind
        self.z = z
        self.leibniz_samples = leibniz_samples

    def __repr__(self):
        return f"Derivation(kind={self.kind!r}, dims={self.algebra.block_dims})"

    def __call__(self, x: Element) -> Element:
        if x.algebra != self.algebra:
            raise StructureError("element belongs to a different algebra")
        return self.algebra.from_coords(self.matrix @ x.coords())

    @property
    def leibniz_verified(self) -> bool:
        return self.kind == "inner" or self.leibniz_samples > 0

    @property
    def norm(self) -> float:
        """Operator norm on ``L^2``."""
        return float(np.linalg.norm(self.matrix, 2)) if self.algebra.dim else 0.0

    def __add__(self, other: "Derivation") -> "Derivation":
        if not isinstance(other, Derivation):
            return NotImplemented
        if other.algebra != self.algebra:
            raise StructureError("derivations live on different algebras")
        if self.kind == other.kind == "inner":
            return inner_derivation(self.z + other.z)
        return explicit_derivation(self.algebra, self.matrix + other.matrix)

    def __rmul__(self, c) -> "Derivation":
        if self.kind == "inner" and np.isreal(c):
            return inner_derivation(self.z * float(np.real(c)))
        return explicit_derivation(self.algebra, c * self.matrix)

    def __neg__(self):
        return (-1.0) * self

    def __sub__(self, other):
        return self + (-other)

    def is_star(self, tol: float = 1e-12) -> bool:
        """``delta(x*) = (delta x)*``, i.e. ``delta = delta^dagger``."""
        return bool(np.max(np.abs(dagger(self).matrix - self.matrix), initial=0.0)
                    <= tol * (1.0 + self.norm))

    def graph_norm(self, a: Element) -> float:
        return float(np.sqrt(lp_norm(a, 2) ** 2 + lp_norm(self(a), 2) ** 2))

    def allclose(self, other: "Derivation", atol: float = 1e-12) -> bool:
        return self.algebra == other.algebra and np.allclose(self.matrix, other.matrix,
                                                             rtol=0, atol=atol)


def leibniz_defect(d: Derivation, n_pairs: int = LEIBNIZ_PAIRS, seed: int = 0) -> float:
    """Largest relative Leibniz residual over seeded random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    scale = 1.0 + d.norm
    for _ in range(n_pairs):
        a = d.algebra.random_element(rng)
        b = d.algebra.random_element(rng)
        lhs = d(a @ b)
        rhs = a @ d(b) + d(a) @ b
        size = scale * (1.0 + a.opnorm()) * (1.0 + lp_norm(b, 2) + lp_norm(a, 2) * b.opnorm())
        worst = max(worst, lp_norm(lhs - rhs, 2) / size)
    return worst


def inner_derivation(z: Element) -> Derivation:
    """``delta(x) = z x - x z`` for skew-adjoint ``z``."""
    defect = lp_norm(z + z.H, np.inf)
    if defect > 1e-10 * (1.0 + z.opnorm()):
        raise DomainError(f"inner derivation needs skew-adjoint z; ||z + z*|| = {defect:.3e}",
                          witness=defect)
    one = z.algebra.identity()
    mat = sandwich_matrix(z, one) - sandwich_matrix(one, z)
    return Derivation(z.algebra, mat, kind="inner", z=z)


def explicit_derivation(alg: Algebra, matrix, n_pairs: int = LEIBNIZ_PAIRS,
                        seed: int = 0) -> Derivation:
    """Wrap an action matrix, refusing it unless the Leibniz rule holds on samples."""
    d = Derivation(alg, matrix, kind="explicit")
    defect = leibniz_defect(d, n_pairs, seed)
    if defect > LEIBNIZ_TOL:
        raise DomainError(f"matrix is not a derivation: Leibniz defect {defect:.3e}",
                          witness=defect)
    d.leibniz_samples = n_pairs
    return d


def zero_derivation(alg: Algebra) -> Derivation:
    return inner_derivation(alg.zero())


def dagger(d: Derivation) -> Derivation:
    """``delta^dagger(a) = (delta(a*))*``."""
    if d.kind == "inner":
        return inner_derivation(-d.z.H)
    # coords(x*) = conj(coords(x))[J], so the map is conj(D) permuted on both sides
    j = d.algebra.star_permutation
    mat = np.conj(d.matrix)[np.ix_(j, j)]
    return Derivation(d.algebra, mat, kind="explicit", leibniz_samples=d.leibniz_samples)


def doubled(d: Derivation) -> Derivation:
    """``[[a, b], [c, d]] -> [[delta^dagger a, delta^dagger b], [delta c, delta d]]`` on ``A (x) M_2``.

    This map obeys the Leibniz rule only when ``delta`` is a *-derivation;
    otherwise a DomainError reports the Leibniz defect.
    """
    dd = dagger(d)
    big = d.algebra.amplify(2)

    def act(x):
        (a, b), (c, e) = amplified_entries(x, 2)
        return assemble_amplified([[dd(a), dd(b)], [d(c), d(e)]])

    if d.kind == "inner":
        # for skew z this is exactly the inner derivation of z (x) 1_2
        zz = assemble_amplified([[d.z, d.algebra.zero()], [d.algebra.zero(), d.z]])
        return inner_derivation(zz)
    out = Derivation(big, map_matrix(big, act), kind="explicit")
    defect = leibniz_defect(out, 16)
    if defect > LEIBNIZ_TOL:
        raise DomainError("doubled map is not a derivation (input is not a *-derivation); "
                          f"Leibniz defect {defect:.3e}", witness=defect)
    out.leibniz_samples = 16
    return out


# -- executable inequalities ----------------------------------------------------

class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def _tol(d: Derivation, a: Element, tol: float) -> float:
    return tol * (1.0 + d.norm * lp_norm(a, 2))


def chain_rule_residual(d: Derivation, a: Element, f: ScalarFunction) -> float:
    """``||delta f(a) - pi_a(f~) delta a||_2``."""
    if not a.is_hermitian():
        raise DomainError("chain rule needs Hermitian a")
    if f.derivative_evaluator is None:
        raise DomainError(f"chain rule needs a C^1 function, {f.name!r} has no derivative")
    lhs = d(apply_function(a, f))
    rhs = pi_a_apply(a, difference_kernel(f), d(a))
    return lp_norm(lhs - rhs, 2)


def check_lipschitz_bound(d: Derivation, a: Element, f: ScalarFunction,
                          tol: float = 1e-9) -> BoundCheck:
    if f.lip_constant is None:
        raise DomainError(f"{f.name!r} carries no Lipschitz constant")
    lhs = lp_norm(d(apply_function(a, f)), 2)
    rhs = f.lip_constant * lp_norm(d(a), 2)
    return BoundCheck(float(lhs), float(rhs), bool(lhs <= rhs + _tol(d, a, tol)))


def check_modulus_bound(d: Derivation, a: Element, tol: float = 1e-9) -> BoundCheck:
    """``||delta |a|||_2 <= sqrt(2) ||delta a||_2`` for arbitrary ``a``."""
    lhs = lp_norm(d(modulus(a)), 2)
    rhs = np.sqrt(2.0) * lp_norm(d(a), 2)
    return BoundCheck(float(lhs), float(rhs), bool(lhs <= rhs + _tol(d, a, tol)))


def psi(n: int) -> ScalarFunction:
    """``psi_n(t) = sqrt(t^2 + 1/n^2) - 1/n``, a smooth 1-Lipschitz approximation of ``|t|``."""
    h = 1.0 / n
    return ScalarFunction(lambda t: np.sqrt(t * t + h * h) - h,
                          lambda t: t / np.sqrt(t * t + h * h), 1.0, True, f"psi_{n}")


def modulus_diagnostics(d: Derivation, a: Element, orders=PSI_ORDERS) -> list:
    """Convergence of the smoothed moduli ``psi_n(|a|)`` towards ``|a|``.

    ``psi_n(|a|)`` is computed as ``phi_n(a* a)`` with
    ``phi_n(t) = sqrt(t + 1/n^2) - 1/n``.  For *-derivations the doubled
    route is also evaluated: ``||D psi_n(X)||_2`` with
    ``X = [[0, a*], [a, 0]]``, which is bounded by ``||D X||_2 = sqrt(2) ||delta a||_2``.
    """
    mod = modulus(a)
    aa = a.H @ a
    star = d.is_star(1e-10)
    big = doubled(d) if star else None
    zero = a.algebra.zero()
    x = assemble_amplified([[zero, a.H], [a, zero]]) if star else None
    rows = []
    for n in orders:
        h = 1.0 / n
        smooth = apply_function(aa, lambda t: np.sqrt(np.maximum(t, 0.0) + h * h) - h)
        row = {"n": n,
               "smoothed_norm": lp_norm(d(smooth), 2),
               "distance_to_modulus": lp_norm(smooth - mod, 2)}
        if star:
            row["doubled_norm"] = lp_norm(big(apply_function(x, psi(n))), 2)
            row["doubled_bound"] = lp_norm(big(x), 2)
        rows.append(row)
    return rows


def modulus_ratio(d: Derivation, a: Element) -> float:
    """``||delta |a|||_2 / ||delta a||_2`` (0 when ``delta a = 0``)."""
    den = lp_norm(d(a), 2)
    return float(lp_norm(d(modulus(a)), 2) / den) if den > 0 else 0.0


def search_modulus_ratio(alg: Algebra, n_starts: int = 4, seed: int = 0, maxiter: int = 400):
    """Maximize the modulus ratio over ``a`` and skew ``z`` (``delta = [z, .]``).

    Returns ``(ratio, a, z)`` for the best local optimum found by Nelder-Mead
    from seeded random starts.
    """
    from scipy.optimize import minimize
    dim = alg.dim

    def unpack(v):
        a = alg.from_coords(v[:dim] + 1j * v[dim:2 * dim])
        w = alg.from_coords(v[2 * dim:3 * dim] + 1j * v[3 * dim:])
        return a, (w - w.H) * 0.5

    def objective(v):
        a, z = unpack(v)
        return -modulus_ratio(inner_derivation(z), a)

    best = (0.0, None, None)
    for k in range(n_starts):
        v0 = np.random.default_rng([seed, k]).standard_normal(4 * dim)
        res = minimize(objective, v0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-8, "fatol": 1e-10})
        if -res.fun > best[0]:
            a, z = unpack(res.x)
            best = (float(-res.fun), a, z)
    return best
