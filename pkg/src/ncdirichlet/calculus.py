"""Spectral and Lipschitz functional calculus on Hermitian elements.

Besides ``f(a)`` this module provides the divided-difference kernel
``f~(s, t) = (f(s) - f(t)) / (s - t)`` (``f'(t)`` on the diagonal), the
two-sided kernel action ``pi_a`` (a Schur product in the eigenbasis of
``a``), bump-function mollifiers, and a smooth family of unit
contractions that converges to ``t -> (t v 0) ^ 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .algebra import Element
from .errors import DomainError

#: ``|s - t|`` below ``COINCIDENCE * (1 + |s| + |t|)`` uses ``f'((s + t) / 2)``.
COINCIDENCE = 1e-7
_GL_NODES = 96


@dataclass(frozen=True)
class ScalarFunction:
    """A real function of a real variable with optional calculus metadata.

    ``evaluator`` and ``derivative_evaluator`` must accept numpy arrays.
    ``kinks`` lists points where the function is not differentiable; the
    mollifier quadrature splits its integration range there.
    """

    evaluator: Callable
    derivative_evaluator: Optional[Callable] = None
    lip_constant: Optional[float] = None
    vanishes_at_zero: bool = False
    name: str = "custom"
    kinks: tuple = field(default=())

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.evaluator(t), dtype=float) * np.ones_like(t)

    def derivative(self, t):
        if self.derivative_evaluator is None:
            raise DomainError(f"function {self.name!r} has no derivative")
        t = np.asarray(t, dtype=float)
        return np.asarray(self.derivative_evaluator(t), dtype=float) * np.ones_like(t)


def _wedge_fn(alpha):
    return ScalarFunction(lambda t: np.minimum(t, alpha), lambda t: (t < alpha).astype(float),
                          lip_constant=1.0, vanishes_at_zero=alpha >= 0,
                          name=f"wedge:{alpha:g}", kinks=(alpha,))


def _power_fn(k):
    if k < 1:
        raise DomainError(f"power:<k> needs k >= 1, got {k}")
    return ScalarFunction(lambda t: t ** k, lambda t: k * t ** (k - 1),
                          lip_constant=1.0 if k == 1 else None,
                          vanishes_at_zero=True, name=f"power:{k}")


def _linear_fn(c):
    return ScalarFunction(lambda t: c * t, lambda t: np.full_like(t, c), lip_constant=abs(c),
                          vanishes_at_zero=True, name=f"linear:{c:g}")


def _smoothstep(t):
    u = np.clip(t, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_prime(t):
    u = np.clip(t, 0.0, 1.0)
    return 6.0 * u * (1.0 - u)


IDENTITY = ScalarFunction(lambda t: t, lambda t: np.ones_like(t), 1.0, True, "identity")
CLIP_UNIT = ScalarFunction(lambda t: np.clip(t, 0.0, 1.0),
                           lambda t: ((t > 0) & (t < 1)).astype(float),
                           1.0, True, "clip_unit", (0.0, 1.0))
ABS = ScalarFunction(np.abs, np.sign, 1.0, True, "abs", (0.0,))
POS_PART = ScalarFunction(lambda t: np.maximum(t, 0.0), lambda t: (t > 0).astype(float),
                          1.0, True, "pos_part", (0.0,))
SMOOTHSTEP = ScalarFunction(_smoothstep, _smoothstep_prime, 1.5, True, "smoothstep", (0.0, 1.0))


def named_function(spec: str) -> ScalarFunction:
    """Resolve a CLI name such as ``"clip_unit"``, ``"wedge:0.5"`` or ``"power:3"``."""
    fixed = {f.name: f for f in (IDENTITY, CLIP_UNIT, ABS, POS_PART, SMOOTHSTEP)}
    if spec in fixed:
        return fixed[spec]
    head, _, arg = spec.partition(":")
    try:
        if head == "wedge" and arg:
            return _wedge_fn(float(arg))
        if head == "power" and arg:
            return _power_fn(int(arg))
        if head == "linear" and arg:
            return _linear_fn(float(arg))
    except ValueError as exc:
        raise DomainError(f"bad function parameter in {spec!r}") from exc
    raise DomainError(f"unknown scalar function {spec!r}")


# -- spectral calculus -------------------------------------------------------

def _require_hermitian(a: Element, what: str = "argument"):
    if not a.is_hermitian():
        raise DomainError(f"{what} must be Hermitian")


def eig(a: Element):
    """Blockwise ``a = U diag(lam) U*`` with ascending eigenvalues."""
    _require_hermitian(a)
    vals, vecs = [], []
    for b in a.blocks:
        lam, u = np.linalg.eigh((b + b.conj().T) / 2)
        vals.append(lam)
        vecs.append(u)
    return vals, vecs


def apply_function(a: Element, f) -> Element:
    """``f(a)`` for Hermitian ``a``; ``f`` is a ScalarFunction or any vectorized callable."""
    vals, vecs = eig(a)
    return Element(a.algebra, [(u * np.asarray(f(lam), dtype=float)) @ u.conj().T
                               for lam, u in zip(vals, vecs)])


def clip_unit(a: Element) -> Element:
    """``a^+ ^ 1``: eigenvalues clamped to ``[0, 1]``."""
    return apply_function(a, CLIP_UNIT)


def wedge(a: Element, alpha: float) -> Element:
    """``a ^ alpha``."""
    return apply_function(a, lambda t: np.minimum(t, alpha))


def pos_part(a: Element) -> Element:
    return apply_function(a, POS_PART)


def neg_part(a: Element) -> Element:
    return apply_function(a, lambda t: np.maximum(-t, 0.0))


def shifted_pos(a: Element) -> Element:
    """``(a - 1)^+``."""
    return apply_function(a, lambda t: np.maximum(t - 1.0, 0.0))


def modulus(x: Element) -> Element:
    """``|x| = (x* x)^(1/2)`` via the singular value decomposition."""
    blocks = []
    for b in x.blocks:
        _, s, vh = np.linalg.svd(b)
        blocks.append((vh.conj().T * s) @ vh)
    return Element(x.algebra, blocks)


# -- divided differences and pi_a ----------------------------------------------

def divided_difference(f: ScalarFunction, s, t):
    """First divided difference of ``f``, vectorized and symmetric in ``(s, t)``."""
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    h = s - t
    close = np.abs(h) <= COINCIDENCE * (1.0 + np.abs(s) + np.abs(t))
    out = np.empty(s.shape)
    far = ~close
    if np.any(far):
        out[far] = (f(s[far]) - f(t[far])) / h[far]
    if np.any(close):
        if f.derivative_evaluator is None:
            raise DomainError(f"divided difference of {f.name!r} needs f' at a coincidence point")
        out[close] = f.derivative((s[close] + t[close]) / 2)
    return out


def difference_kernel(f: ScalarFunction) -> Callable:
    return lambda s, t: divided_difference(f, s, t)


def pi_a_apply(a: Element, kernel: Callable, b: Element) -> Element:
    """Apply the two-sided kernel ``kernel(s, t)`` of ``a`` to ``b``.

    With ``a = U diag(lam) U*`` this is ``U (M o (U* b U)) U*``,
    ``M_ij = kernel(lam_i, lam_j)``; for ``kernel = f (x) g`` it equals
    ``f(a) b g(a)``.
    """
    a._check(b)
    vals, vecs = eig(a)
    blocks = []
    for lam, u, bb in zip(vals, vecs, b.blocks):
        m = np.asarray(kernel(lam[:, None], lam[None, :]), dtype=complex)
        m = np.broadcast_to(m, (lam.size, lam.size))
        blocks.append(u @ (m * (u.conj().T @ bb @ u)) @ u.conj().T)
    return Element(a.algebra, blocks)


# -- bump function and mollifiers -----------------------------------------------

def _raw_bump(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def bump_normalization() -> float:
    """``1 / int_{-1}^{1} exp(-1/(1-t^2)) dt``."""
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    return float(1.0 / (w @ _raw_bump(x)))


def bump(u):
    """Standard mollifier ``c exp(-1/(1-u^2))`` on ``(-1, 1)`` with unit mass."""
    return bump_normalization() * _raw_bump(u)


@lru_cache(maxsize=4)
def _gl(n):
    return np.polynomial.legendre.leggauss(n)


def _integrate_pieces(g, cuts) -> float:
    """Gauss-Legendre integral of ``g`` over consecutive intervals given by ``cuts``."""
    x, w = _gl(_GL_NODES)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        half = (hi - lo) / 2
        total += half * float(w @ g(half * x + (lo + hi) / 2))
    return total


def _convolve(f: Callable, kinks, n: int, t: np.ndarray) -> np.ndarray:
    """``(f * phi_n)(t) = int f(t - u/n) phi(u) du`` with ``phi_n(s) = n phi(n s)``."""
    out = np.empty(t.shape)
    for idx, ti in np.ndenumerate(t):
        inner_cuts = sorted(n * (ti - k) for k in kinks if -1.0 < n * (ti - k) < 1.0)
        cuts = [-1.0, *inner_cuts, 1.0]
        out[idx] = _integrate_pieces(lambda u: f(ti - u / n) * bump(u), cuts)
    return out


@dataclass(frozen=True)
class MollifierFamily:
    base: ScalarFunction
    n: int
    function: ScalarFunction


def mollify(f: ScalarFunction, n: int) -> MollifierFamily:
    """``f_n(t) = (f * phi_n)(t) - (f * phi_n)(0)``.

    ``f_n(0) = 0``, ``|f - f_n| <= 2 Lip(f) / n`` and ``Lip(f_n) <= Lip(f)``.
    """
    if f.lip_constant is None:
        raise DomainError(f"mollify needs a Lipschitz certificate for {f.name!r}")
    if n < 1:
        raise DomainError(f"mollifier index must be >= 1, got {n}")
    kinks = tuple(f.kinks)
    offset = float(_convolve(f, kinks, n, np.zeros(1))[0])

    def value(t):
        return _convolve(f, kinks, n, np.asarray(t, dtype=float)) - offset

    deriv = None
    if f.derivative_evaluator is not None:
        def deriv(t):
            return _convolve(f.derivative, kinks, n, np.asarray(t, dtype=float))

    fn = ScalarFunction(value, deriv, f.lip_constant, True, f"mollified({f.name},{n})")
    return MollifierFamily(f, n, fn)


# -- smooth unit contractions ------------------------------------------------------

def _bump_cdf(r):
    """``int_{-1}^{r} phi``, clipped to ``[0, 1]`` outside ``(-1, 1)``."""
    if r <= -1.0:
        return 0.0
    if r >= 1.0:
        return 1.0
    return _integrate_pieces(bump, [-1.0, r])


def _soft_ramp(u: float) -> float:
    """``int_0^u (1 - H(s)) ds`` with ``H(s) = Phi(2s - 1)`` a smooth 0->1 step on ``[0, 1]``.

    Slope 1 with all higher derivatives zero at ``u = 0``; constant ``1/2``
    for ``u >= 1``.
    """
    if u <= 0.0:
        return u
    if u >= 1.0:
        return 0.5
    r = 2.0 * u - 1.0
    first_moment = _integrate_pieces(lambda v: (v + 1.0) * bump(v), [-1.0, r])
    return u * (1.0 - _bump_cdf(r)) + 0.5 * first_moment


def _soft_ramp_prime(u: float) -> float:
    if u <= 0.0:
        return 1.0
    if u >= 1.0:
        return 0.0
    return 1.0 - _bump_cdf(2.0 * u - 1.0)


def smooth_contraction(eps: float) -> ScalarFunction:
    """C-infinity 1-Lipschitz ``phi_eps`` with ``phi_eps(t) = t`` on ``[0, 1]``.

    Range is ``[-eps/2, 1 + eps/2]`` and ``|phi_eps - (t v 0) ^ 1| <= eps/2``.
    """
    if eps <= 0:
        return CLIP_UNIT

    def scalar(t):
        if t < 0.0:
            return -eps * _soft_ramp(-t / eps)
        if t > 1.0:
            return 1.0 + eps * _soft_ramp((t - 1.0) / eps)
        return t

    def scalar_prime(t):
        if t < 0.0:
            return _soft_ramp_prime(-t / eps)
        if t > 1.0:
            return _soft_ramp_prime((t - 1.0) / eps)
        return 1.0

    return ScalarFunction(np.vectorize(scalar, otypes=[float]),
                          np.vectorize(scalar_prime, otypes=[float]),
                          1.0, True, f"smooth_contraction({eps:g})")
