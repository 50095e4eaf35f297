"""Superoperators: generators, resolvents, semigroups and their order properties.

Every linear map on the algebra is a matrix over canonical coordinates, so
``T_t = expm(t L)`` and ``G_a = (a - L)^{-1}`` are dense linear algebra.
Positivity of a map is decided through its Choi blocks: ``T`` is positive
iff ``phi^H C phi >= 0`` for every rank-one ``phi``, ``n``-positive iff the
same holds for rank ``<= n``, and completely positive iff the Choi blocks
are positive semidefinite.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .algebra import (Algebra, Element, assemble_amplified, inner, lift_tiles, lp_norm,
                      map_matrix, sandwich_matrix)
from .errors import DomainError, StructureError
from .forms import Form, is_real_positive, sample_hermitian
from .verdict import FAIL, PASS, SAMPLED_PASS, Verdict, combine

T_GRID = (0.01, 0.1, 1.0, 10.0)
ALPHA_GRID = (0.5, 1.0, 2.0, 10.0, 100.0)
BETA_GRID = (10.0, 1e2, 1e3, 1e4)
TOL = 1e-9
ALT_ITERS = 50
LAPLACE_NODES = 400
LAPLACE_PANELS = 20


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on the algebra, held as a matrix over canonical coordinates."""

    algebra: Algebra
    matrix: np.ndarray
    tag: str = "generic"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.algebra.dim, self.algebra.dim):
            raise StructureError(f"superoperator matrix must be {self.algebra.dim}x"
                                 f"{self.algebra.dim}, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, x: Element) -> Element:
        if x.algebra != self.algebra:
            raise StructureError("element belongs to a different algebra")
        return self.algebra.from_coords(self.matrix @ x.coords())

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.algebra, self.matrix @ other.matrix)

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.algebra, self.matrix + other.matrix)

    def __sub__(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.algebra, self.matrix - other.matrix)

    def __rmul__(self, c) -> "SuperOperator":
        return SuperOperator(self.algebra, c * self.matrix, self.tag)

    def __neg__(self):
        return (-1.0) * self

    @property
    def norm(self) -> float:
        """``||T||_{2 -> 2}``."""
        return float(np.linalg.norm(self.matrix, 2)) if self.algebra.dim else 0.0

    def allclose(self, other: "SuperOperator", atol: float = 1e-12) -> bool:
        return self.algebra == other.algebra and np.allclose(self.matrix, other.matrix,
                                                             rtol=0, atol=atol)


def identity_superop(alg: Algebra) -> SuperOperator:
    return SuperOperator(alg, np.eye(alg.dim))


def superop_from_map(alg: Algebra, fn, tag: str = "generic") -> SuperOperator:
    return SuperOperator(alg, map_matrix(alg, fn), tag)


def conjugation(u: Element) -> SuperOperator:
    """``x -> u x u*``."""
    return SuperOperator(u.algebra, sandwich_matrix(u, u.H))


def transpose_map(alg: Algebra) -> SuperOperator:
    """Blockwise matrix transpose: the standard positive but not 2-positive map."""
    return superop_from_map(alg, lambda x: Element(alg, [b.T for b in x.blocks]))


def amplify_superop(T: SuperOperator, n: int) -> SuperOperator:
    """``T (x) id_n`` on ``A (x) M_n``."""
    return SuperOperator(T.algebra.amplify(n), lift_tiles(T.algebra, T.matrix, n))


def adjoint_superop(T: SuperOperator) -> SuperOperator:
    """``L^2`` adjoint: ``(T* x, y) = (x, T y)``."""
    return SuperOperator(T.algebra, T.matrix.conj().T, T.tag)


# -- generator / resolvent / semigroup -----------------------------------------------

def generator_from_form(E: Form) -> SuperOperator:
    """``L`` with ``E(x, y) = (x, -L y)``."""
    return SuperOperator(E.algebra, -E.matrix, "generator")


def form_from_generator(L: SuperOperator) -> Form:
    return Form(L.algebra, -L.matrix)


def resolvent(L: SuperOperator, alpha: float) -> SuperOperator:
    """``G_alpha = (alpha - L)^{-1}``."""
    if not alpha > 0:
        raise DomainError(f"resolvent parameter must be > 0, got {alpha}")
    a = alpha * np.eye(L.algebra.dim) - L.matrix
    svals = np.linalg.svd(a, compute_uv=False)
    if svals.size and svals[-1] <= 1e-12 * max(1.0, svals[0]):
        raise DomainError(f"alpha - L is singular at alpha = {alpha}", witness=float(svals[-1]))
    return SuperOperator(L.algebra, np.linalg.solve(a, np.eye(L.algebra.dim)),
                         f"resolvent({alpha:g})")


def semigroup(L: SuperOperator, t: float) -> SuperOperator:
    """``T_t = exp(t L)``."""
    if t < 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    return SuperOperator(L.algebra, expm(t * L.matrix), f"semigroup({t:g})")


def yosida(L: SuperOperator, alpha: float, t: float) -> SuperOperator:
    """``exp(-alpha t) exp(t alpha (alpha G_alpha))``.

    The exponent ``alpha t (alpha G_alpha - 1)`` is evaluated as
    ``t (alpha G_alpha) L``, which avoids cancelling two terms of size
    ``alpha t`` when ``alpha`` is large.
    """
    ag = alpha * resolvent(L, alpha).matrix
    return SuperOperator(L.algebra, expm(t * ag @ L.matrix), f"yosida({alpha:g},{t:g})")


def approx_form(L: SuperOperator, beta: float, x: Element, y: Element) -> complex:
    """``E^(beta)(x, y) = beta (x, y - beta G_beta y)``."""
    g = resolvent(L, beta)
    return beta * inner(x, y - beta * g(y))


def laplace_resolvent(L: SuperOperator, alpha: float, x: Element,
                      nodes: int = LAPLACE_NODES, panels: int = LAPLACE_PANELS) -> Element:
    """``int_0^inf exp(-alpha t) T_t x dt`` by composite Gauss-Legendre on ``[0, 40/alpha]``."""
    per = nodes // panels
    gx, gw = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(0.0, 40.0 / alpha, panels + 1)
    c = x.coords()
    acc = np.zeros_like(c)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = (hi - lo) / 2
        for u, w in zip(gx, gw):
            t = half * u + (lo + hi) / 2
            acc += half * w * np.exp(-alpha * t) * (expm(t * L.matrix) @ c)
    return L.algebra.from_coords(acc)


# -- Choi matrices and positivity ------------------------------------------------------

def choi_blocks(T: SuperOperator) -> dict:
    """Choi block for every block pair ``(k, l)``.

    ``C^{kl} = (1/n_k) sum_ab E_ab (x) T(E^k_ab)_l`` with unweighted matrix
    units; rows are indexed by ``a * n_l + c``.
    """
    alg = T.algebra
    out = {}
    for k, (nk, wk) in enumerate(zip(alg.block_dims, alg.trace_weights)):
        for l, (nl, wl) in enumerate(zip(alg.block_dims, alg.trace_weights)):
            sub = T.matrix[alg.offsets[l]:alg.offsets[l + 1], alg.offsets[k]:alg.offsets[k + 1]]
            t4 = sub.reshape(nl, nl, nk, nk) * np.sqrt(wk / wl) / nk
            out[(k, l)] = t4.transpose(2, 0, 3, 1).reshape(nk * nl, nk * nl)
    return out


def choi_matrix(T: SuperOperator) -> np.ndarray:
    """Direct sum of the Choi blocks, ordered by ``(k, l)``."""
    from scipy.linalg import block_diag
    return block_diag(*choi_blocks(T).values())


def _hermitian_defect(c):
    return float(np.max(np.abs(c - c.conj().T), initial=0.0))


def cp_check(T: SuperOperator, tol: float = TOL) -> Verdict:
    """Complete positivity: every Choi block is positive semidefinite."""
    worst, witness, where = np.inf, None, None
    scale = 1.0 + T.norm
    for key, c in choi_blocks(T).items():
        if _hermitian_defect(c) > tol * scale:
            return Verdict(FAIL, -_hermitian_defect(c) / scale, witness=c, method="choi",
                           metadata={"block_pair": key, "reason": "Choi block not Hermitian"})
        lam, vec = np.linalg.eigh((c + c.conj().T) / 2)
        if lam[0] < worst:
            worst, witness, where = lam[0], vec[:, 0], key
    margin = float(worst / scale)
    if margin >= -tol:
        return Verdict(PASS, margin, method="choi")
    return Verdict(FAIL, margin, witness=witness, method="choi",
                   metadata={"block_pair": where, "eigenvalue": float(worst)})


def _rank_min(c: np.ndarray, nk: int, nl: int, r: int, starts: list, iters: int):
    """Minimize ``phi^H C phi / |phi|^2`` over ``phi = vec(X Y^T)``, rank ``<= r``.

    Alternates exact minimization over ``Y`` (with ``X`` orthonormal) and
    over ``X`` (with ``Y`` orthonormal); each half step is a small
    Hermitian eigenproblem, so the objective never increases.
    """
    c4 = c.reshape(nk, nl, nk, nl)
    best = (np.inf, None, None)
    for x0 in starts:
        x = np.linalg.qr(x0)[0]
        val = np.inf
        for _ in range(iters):
            # phi[a, c] = sum_s X[a, s] Y[c, s]; reduced matrix over (c, s)
            red = np.einsum("as,acbd,bt->csdt", x.conj(), c4, x).reshape(nl * r, nl * r)
            lam, vec = np.linalg.eigh((red + red.conj().T) / 2)
            y = vec[:, 0].reshape(nl, r)
            q, rr = np.linalg.qr(y)
            x = x @ rr.T
            red = np.einsum("cs,acbd,dt->asbt", q.conj(), c4, q).reshape(nk * r, nk * r)
            lam2, vec2 = np.linalg.eigh((red + red.conj().T) / 2)
            x_new = vec2[:, 0].reshape(nk, r)
            xq, rx = np.linalg.qr(x_new)
            y = q @ rx.T
            x = xq
            new = lam2[0]
            if val - new <= 1e-14 * (1.0 + abs(new)):
                val = new
                break
            val = new
        if val < best[0]:
            best = (val, x, y)
    return best


def _starts(nk: int, r: int, rng, n_starts: int, c: np.ndarray, nl: int) -> list:
    out = [rng.standard_normal((nk, r)) + 1j * rng.standard_normal((nk, r))
           for _ in range(n_starts)]
    eye = np.eye(nk)
    grid = [eye[a] for a in range(nk)]
    for a in range(nk):
        for b in range(a + 1, nk):
            grid += [eye[a] + eye[b], eye[a] - eye[b], eye[a] + 1j * eye[b]]
    for v in grid:
        x0 = np.zeros((nk, r), complex)
        x0[:, 0] = v
        if r > 1:
            x0[:, 1:] = 1e-3 * rng.standard_normal((nk, r - 1))
        out.append(x0)
    # truncated SVD of the Choi block's lowest eigenvector
    lam, vec = np.linalg.eigh((c + c.conj().T) / 2)
    u, _, _ = np.linalg.svd(vec[:, 0].reshape(nk, nl))
    out.append(u[:, :r] if u.shape[1] >= r else np.pad(u, ((0, 0), (0, r - u.shape[1]))) + 1e-3)
    return out


def n_positivity_check(T: SuperOperator, n: int, n_starts: int = 8, seed: int = 0,
                       tol: float = TOL) -> Verdict:
    """Positivity of ``T (x) id_n``, via rank-``n`` Choi minimization.

    If the Choi matrix is positive semidefinite the map is completely
    positive and the verdict is an exact PASS.  Otherwise the search
    minimizes over ``phi`` of rank ``<= n``; for ``n >= min(n_k, n_l)``
    this is the exact smallest Choi eigenvalue.  A FAIL witness is the
    positive element ``psi psi*`` of ``A (x) M_n`` together with a vector
    ``chi`` where ``chi^H (T (x) id)(psi psi*) chi < 0``.
    """
    if n < 1:
        raise DomainError(f"positivity order must be >= 1, got {n}")
    alg = T.algebra
    scale = 1.0 + T.norm
    blocks = choi_blocks(T)
    cp = cp_check(T, tol)
    if cp.status == PASS:
        return Verdict(PASS, cp.margin, samples=0, seed=seed, method="choi-psd",
                       metadata={"order": n})
    if cp.metadata.get("reason"):
        witness = _non_hermitian_witness(T)
        return Verdict(FAIL, cp.margin, witness=witness, samples=0, seed=seed,
                       method="hermiticity", metadata={"order": n, **cp.metadata})
    worst = (np.inf, None)
    total = 0
    for idx, ((k, l), c) in enumerate(blocks.items()):
        nk, nl = alg.block_dims[k], alg.block_dims[l]
        r = min(n, nk, nl)
        if r == min(nk, nl):
            lam, vec = np.linalg.eigh((c + c.conj().T) / 2)
            u, s, vh = np.linalg.svd(vec[:, 0].reshape(nk, nl))
            val, x, y = lam[0], u[:, :r] * s[:r], vh[:r].T
            total += 1
        else:
            rng = np.random.default_rng([seed, idx])
            starts = _starts(nk, r, rng, n_starts, c, nl)
            total += len(starts)
            val, x, y = _rank_min(c, nk, nl, r, starts, ALT_ITERS)
        if val < worst[0]:
            worst = (val, (k, l, x, y))
    margin = float(worst[0] / scale)
    meta = {"order": n}
    if margin >= -tol:
        exact = all(min(n, alg.block_dims[k], alg.block_dims[l]) ==
                    min(alg.block_dims[k], alg.block_dims[l]) for k, l in blocks)
        status = PASS if exact else SAMPLED_PASS
        return Verdict(status, margin, samples=total, seed=seed,
                       method="choi-eig" if exact else "alternating", metadata=meta)
    k, l, x, y = worst[1]
    psi, chi, value = _positivity_witness(T, n, k, l, x, y)
    meta.update({"block_pair": (k, l), "output_vector": chi, "value": value})
    return Verdict(FAIL, margin, witness=psi, samples=total, seed=seed,
                   method="alternating", metadata=meta)


def _positivity_witness(T: SuperOperator, n: int, k: int, l: int, x, y):
    """Build ``psi psi*`` in ``A (x) M_n`` and the output vector from a low-rank ``phi = X Y^T``."""
    alg = T.algebra
    r = x.shape[1]
    xs = np.zeros((alg.block_dims[k], n), complex)
    ys = np.zeros((alg.block_dims[l], n), complex)
    xs[:, :r], ys[:, :r] = x, y
    zero = alg.zero()
    tiles = [[zero for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            tiles[i][j] = alg.embed(k, np.outer(xs[:, i].conj(), xs[:, j]))
    psi = assemble_amplified(tiles)
    chi = ys.T.reshape(-1)
    out = amplify_superop(T, n)(psi) if n > 1 else T(psi)
    value = float(np.real(np.vdot(chi, out.blocks[l] @ chi)))
    return psi, chi, value


def _non_hermitian_witness(T: SuperOperator) -> Element:
    """A rank-one projection-like ``v v*`` whose image is not Hermitian."""
    alg = T.algebra
    for k, n in enumerate(alg.block_dims):
        eye = np.eye(n)
        cands = [eye[a] for a in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                cands += [eye[a] + eye[b], eye[a] + 1j * eye[b]]
        for v in cands:
            x = alg.embed(k, np.outer(v, v.conj()))
            if not T(x).is_hermitian(1e-9):
                return x
    return alg.identity()


def positivity_check(T: SuperOperator, n_starts: int = 8, seed: int = 0,
                     tol: float = TOL) -> Verdict:
    """``x >= 0 => T x >= 0``; FAIL witness is a rank-one ``v v*``."""
    return n_positivity_check(T, 1, n_starts, seed, tol)


def sample_unit_interval(alg: Algebra, n_samples: int, seed: int) -> list:
    """Elements with spectrum in ``[0, 1]``: random unitary conjugates of uniform spectra."""
    out = []
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        blocks = []
        for n in alg.block_dims:
            q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
            spec = rng.uniform(0, 1, n)
            if i % 4 == 0:
                spec = np.round(spec)
            blocks.append((q * spec) @ q.conj().T)
        out.append(Element(alg, blocks))
    return out


def order_interval_check(T: SuperOperator, n_samples: int = 50, seed: int = 0,
                         tol: float = TOL) -> Verdict:
    """Sampled ``0 <= x <= 1 => 0 <= T x <= 1``."""
    worst, wit = np.inf, None
    for x in sample_unit_interval(T.algebra, n_samples, seed):
        y = T(x)
        if not y.is_hermitian(1e-9):
            return Verdict(FAIL, -np.inf, witness=x, samples=n_samples, seed=seed,
                           method="order-interval", metadata={"reason": "image not Hermitian"})
        lo = min(np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in y.blocks)
        hi = max(np.linalg.eigvalsh((b + b.conj().T) / 2)[-1] for b in y.blocks)
        m = min(lo, 1.0 - hi)
        if m < worst:
            worst, wit = m, x
    status = SAMPLED_PASS if worst >= -tol * (1.0 + T.norm) else FAIL
    return Verdict(status, float(worst), witness=wit if status == FAIL else None,
                   samples=n_samples, seed=seed, method="order-interval")


def submarkov_check(T: SuperOperator, n_starts: int = 8, seed: int = 0,
                    n_samples: int = 20, tol: float = TOL) -> Verdict:
    """``0 <= x <= 1 => 0 <= T x <= 1``.

    Decided as positivity plus ``lambda_max(T(1)) <= 1``; the order
    interval itself is also sampled as a consistency check.
    """
    alg = T.algebra
    pos = positivity_check(T, n_starts, seed, tol)
    one = T(alg.identity())
    meta = {"positivity": pos.status, "positivity_method": pos.method}
    if pos.failed:
        meta.update(pos.metadata)
        return Verdict(FAIL, pos.margin, pos.witness, pos.samples, seed,
                       "positivity", meta)
    top = max(np.linalg.eigvalsh((b + b.conj().T) / 2)[-1] for b in one.blocks)
    unital = float(1.0 - top)
    meta["unit_image_max"] = float(top)
    if unital < -tol * (1.0 + T.norm):
        return Verdict(FAIL, unital, alg.identity(), pos.samples, seed, "unit-bound", meta)
    interval = order_interval_check(T, n_samples, seed, tol)
    meta["order_interval"] = interval.status
    if interval.failed:
        meta["note"] = "order interval violated although positivity and unit bound hold"
        return Verdict(FAIL, interval.margin, interval.witness, pos.samples + n_samples,
                       seed, "order-interval", meta)
    return Verdict(pos.status, min(pos.margin, unital), None, pos.samples + n_samples,
                   seed, "positivity+unit-bound", meta)


def dirichlet_operator_check(L: SuperOperator, n_samples: int = 200, seed: int = 0,
                             tol: float = TOL) -> Verdict:
    """Sampled ``Re (L x, (x - 1)^+) <= 0`` over Hermitian ``x``."""
    from .forms import DESCENT_STARTS, DESCENT_STEPS, _batch_apply, _probes, descend
    from .calculus import shifted_pos
    alg = L.algebra
    if not np.any(L.matrix):
        return Verdict(PASS, 0.0, samples=0, seed=seed, method="zero-generator")
    q = alg.hermitian_transform
    norm = L.norm

    def margins(h):
        c = h @ q.T
        shifted = _batch_apply(alg, c, lambda t: np.maximum(t - 1.0, 0.0))
        val = np.einsum("ij,ij->i", (c @ L.matrix.T).conj(), shifted).real
        return -val / (1.0 + norm * np.sum(np.abs(c) ** 2, axis=1))

    h = np.concatenate([sample_hermitian(alg, n_samples, seed),
                        np.array(_probes(alg)).reshape(-1, alg.dim)])
    m = margins(h)
    order = np.argsort(m, kind="stable")
    active = order[np.abs(m[order]) > 1e-15]
    hb, mb = h[order[0]], float(m[order[0]])
    for i in dict.fromkeys([*order[:DESCENT_STARTS].tolist(), *active[:DESCENT_STARTS].tolist()]):
        hr, mr = descend(margins, h[i], DESCENT_STEPS)
        if mr < mb:
            hb, mb = hr, mr
    if mb >= -tol:
        return Verdict(SAMPLED_PASS, mb, samples=len(h), seed=seed, method="generator")
    x = alg.from_hcoords(hb)
    value = inner(L(x), shifted_pos(x)).real
    return Verdict(FAIL, mb, witness=x, samples=len(h), seed=seed, method="generator",
                   metadata={"value": float(value)})


# -- L^p bounds ------------------------------------------------------------------------

def _sample_elements(alg: Algebra, n_samples: int, seed: int) -> list:
    out = [alg.identity()]
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        scale = (0.1, 1.0, 10.0)[i % 3]
        if i % 5 == 0:
            x = alg.random_element(rng, scale)
            out.append(x.H @ x)
        else:
            out.append(alg.random_element(rng, scale))
    return out


def schwarz_defect(T: SuperOperator, x: Element) -> float:
    """Smallest eigenvalue of ``||T(1)|| T(x* x) - (T x)*(T x)`` over its scale."""
    tx = T(x)
    c = T(T.algebra.identity()).opnorm()
    d = c * T(x.H @ x) - tx.H @ tx
    lam = min(np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in d.blocks)
    return float(lam / (1.0 + (1.0 + T.norm) ** 2 * x.opnorm() ** 2))


def lp_extension_check(T: SuperOperator, p_list=(1, 2, 4, np.inf), n_samples: int = 100,
                       seed: int = 0, tol: float = TOL) -> Verdict:
    """``||T x||_p <= 2 ||x||_p``, and ``<= ||x||_p`` when the Schwarz inequality holds.

    Requires ``T`` and ``T*`` sub-Markovian.
    """
    if submarkov_check(T, seed=seed).failed:
        raise DomainError("L^p extension needs T sub-Markovian")
    if submarkov_check(adjoint_superop(T), seed=seed).failed:
        raise DomainError("L^p extension needs the adjoint T* sub-Markovian")
    xs = _sample_elements(T.algebra, n_samples, seed)
    schwarz = min(schwarz_defect(T, x) for x in xs)
    schwarz_ok = schwarz >= -tol
    ratios = {}
    worst, wit, wp = np.inf, None, None
    for p in p_list:
        rmax = 0.0
        for x in xs:
            nx = lp_norm(x, p)
            if nx == 0:
                continue
            r = lp_norm(T(x), p) / nx
            bound = 1.0 if schwarz_ok else 2.0
            slack = bound * (1 + tol) - r
            if slack < worst:
                worst, wit, wp = slack, x, p
            rmax = max(rmax, r)
        ratios[str(p)] = rmax
    meta = {"max_ratio": ratios, "schwarz_holds": bool(schwarz_ok),
            "schwarz_margin": schwarz, "constant": 1.0 if schwarz_ok else 2.0}
    if worst < 0:
        meta["p"] = str(wp)
        return Verdict(FAIL, float(worst), wit, len(xs), seed, "lp-extension", meta)
    return Verdict(SAMPLED_PASS, float(worst), None, len(xs), seed, "lp-extension", meta)


def endpoint_norm(T: SuperOperator, p) -> float:
    """Exact ``||T||_{p -> p}`` for ``p`` in ``{1, 2, inf}`` when ``T`` is positive.

    ``||T||_{inf} = ||T(1)||_inf`` (Russo-Dye for positive maps) and
    ``||T||_1 = ||T*||_inf`` by duality.
    """
    p = float(p)
    one = T.algebra.identity()
    if p == 2:
        return T.norm
    if np.isinf(p):
        return T(one).opnorm()
    if p == 1:
        return adjoint_superop(T)(one).opnorm()
    raise DomainError(f"exact endpoint norm only for p in {{1, 2, inf}}, got {p}")


def sampled_norm(T: SuperOperator, p, n_samples: int = 200, seed: int = 0) -> float:
    """Lower estimate of ``||T||_{p -> p}`` from sampled elements."""
    return max(lp_norm(T(x), p) / lp_norm(x, p) for x in _sample_elements(T.algebra, n_samples, seed)
               if lp_norm(x, p) > 0)


def interpolation_check(T: SuperOperator, p1, p2, theta: float, n_samples: int = 100,
                        seed: int = 0, tol: float = TOL) -> Verdict:
    """Riesz-Thorin: ``||T x||_p <= M1^(1-theta) M2^theta ||x||_p``, ``1/p = (1-theta)/p1 + theta/p2``."""
    m1, m2 = endpoint_norm(T, p1), endpoint_norm(T, p2)
    inv = (1 - theta) / float(p1) + theta / float(p2)
    p = np.inf if inv == 0 else 1.0 / inv
    bound = m1 ** (1 - theta) * m2 ** theta
    worst, wit = np.inf, None
    for x in _sample_elements(T.algebra, n_samples, seed):
        nx = lp_norm(x, p)
        if nx == 0:
            continue
        slack = bound * (1 + tol) - lp_norm(T(x), p) / nx
        if slack < worst:
            worst, wit = slack, x
    meta = {"p": float(p), "M1": m1, "M2": m2, "bound": bound,
            "M1_sampled": sampled_norm(T, p1, n_samples, seed),
            "M2_sampled": sampled_norm(T, p2, n_samples, seed)}
    status = SAMPLED_PASS if worst >= 0 else FAIL
    return Verdict(status, float(worst), wit if status == FAIL else None, n_samples + 1,
                   seed, "riesz-thorin", meta)


def resolvent_sector_check(L: SuperOperator, K: float, alpha: float = 1.0,
                           n_pairs: int = 200, seed: int = 0, tol: float = TOL) -> Verdict:
    """Sampled ``|(x, G y)| <= K (x, G x)^(1/2) (y, G y)^(1/2)`` on Hermitian pairs."""
    g = resolvent(L, alpha).matrix
    q = L.algebra.hermitian_transform
    gh = (q.conj().T @ g @ q).real
    h = sample_hermitian(L.algebra, 2 * n_pairs, seed)
    x, y = h[:n_pairs], h[n_pairs:]
    lhs = np.abs(np.einsum("ij,jk,ik->i", x, gh, y))
    qx = np.einsum("ij,jk,ik->i", x, gh, x)
    qy = np.einsum("ij,jk,ik->i", y, gh, y)
    if np.min(np.concatenate([qx, qy]), initial=0) < -tol:
        return Verdict(FAIL, float(np.min(np.concatenate([qx, qy]))), method="resolvent-sector",
                       metadata={"reason": "G_alpha not positive on Hermitian elements"})
    rhs = K * np.sqrt(np.maximum(qx, 0) * np.maximum(qy, 0))
    slack = (rhs - lhs) / (1.0 + rhs)
    i = int(np.argmin(slack))
    status = SAMPLED_PASS if slack[i] >= -tol else FAIL
    return Verdict(status, float(slack[i]), None, n_pairs, seed, "resolvent-sector",
                   {"alpha": alpha, "K": K, "max_ratio": float(np.max(lhs / np.maximum(rhs / K, 1e-300)))})


# -- equivalence triangles ----------------------------------------------------------------

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NCD_THREADS", "1")))
    except ValueError:
        return 1


def _grid_leg(ops, seed, n_starts) -> Verdict:
    parts = []
    for i, (label, build) in enumerate(ops):
        try:
            T = build()
        except DomainError as exc:
            parts.append(Verdict(FAIL, -np.inf, witness=None, seed=seed, method=label,
                                 metadata={"error": str(exc)}))
            continue
        v = submarkov_check(T, n_starts, seed + i)
        v.method = label
        parts.append(v)
    out = combine(parts, "grid")
    out.metadata["parts"] = {v.method: v.status for v in parts}
    return out


def triangle(L: SuperOperator, adjoint: bool = False, t_grid=T_GRID, alpha_grid=ALPHA_GRID,
             n_samples: int = 200, seed: int = 0, n_starts: int = 8) -> dict:
    """Run the form / semigroup / resolvent / generator legs and compare them.

    Without ``adjoint`` the form leg is the half inequality and the other
    legs test ``T_t``, ``alpha G_alpha`` and ``L``; with ``adjoint`` the
    form leg is the full inequality and each other leg also tests the
    adjoint family.  The verdicts must agree whenever the form is
    real-positive; otherwise mixed verdicts are reported with the
    ``hypotheses-not-met`` caveat.
    """
    from .forms import dirichlet_check
    E = form_from_generator(L)
    Ls = [("", L)] + ([("adjoint-", adjoint_superop(L))] if adjoint else [])

    def form_leg():
        return dirichlet_check(E, n_samples, seed, "full" if adjoint else "half")

    def semigroup_leg():
        ops = [(f"{pre}t={t:g}", (lambda M=M, t=t: semigroup(M, t)))
               for pre, M in Ls for t in t_grid]
        return _grid_leg(ops, seed, n_starts)

    def resolvent_leg():
        ops = [(f"{pre}alpha={a:g}", (lambda M=M, a=a: a * resolvent(M, a)))
               for pre, M in Ls for a in alpha_grid]
        return _grid_leg(ops, seed, n_starts)

    def generator_leg():
        return combine([dirichlet_operator_check(M, n_samples, seed) for _, M in Ls],
                       "generator")

    jobs = {"form": form_leg, "semigroup": semigroup_leg, "resolvent": resolvent_leg,
            "generator": generator_leg}
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {name: pool.submit(fn) for name, fn in jobs.items()}
        legs = {name: fut.result() for name, fut in futures.items()}
    passed = [v.passed for v in legs.values()]
    hypotheses = is_real_positive(E)
    if all(passed) or not any(passed):
        consistency = "consistent"
    elif not hypotheses:
        consistency = "hypotheses-not-met"
    else:
        consistency = "INCONSISTENT"
    return {"legs": legs, "consistency": consistency, "real_positive": hypotheses,
            "variant": "adjoint" if adjoint else "plain"}
