import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ncdirichlet.algebra import Algebra, lp_norm
from ncdirichlet.calculus import (ABS, CLIP_UNIT, IDENTITY, SMOOTHSTEP, apply_function, bump,
                                  clip_unit, difference_kernel, divided_difference, eig, modulus,
                                  mollify, named_function, neg_part, pi_a_apply, pos_part,
                                  shifted_pos, smooth_contraction, wedge)
from ncdirichlet.errors import DomainError

from conftest import random_algebra

ALG3 = Algebra((3,), (1.0,))


def test_eig_diagonal():
    a = ALG3.element([np.diag([3.0, -1.0, 0.5])])
    vals, vecs = eig(a)
    assert np.allclose(vals[0], [-1.0, 0.5, 3.0])
    assert np.allclose(np.abs(vecs[0]), np.eye(3)[:, [1, 2, 0]])


def test_eig_reconstruction_and_pauli():
    alg, rng = random_algebra(2)
    a = alg.random_hermitian(rng)
    vals, vecs = eig(a)
    for lam, u, b in zip(vals, vecs, a.blocks):
        assert np.max(np.abs(u @ np.diag(lam) @ u.conj().T - b)) <= 1e-10 * (1 + a.opnorm())
    x = Algebra((2,), (1.0,)).element([np.array([[0.0, 1.0], [1.0, 0.0]])])
    assert np.allclose(eig(x)[0][0], [-1.0, 1.0])


def test_eig_rejects_non_hermitian():
    with pytest.raises(DomainError):
        eig(ALG3.element([np.triu(np.ones((3, 3)))]))


def test_apply_function_basics():
    alg, rng = random_algebra(4)
    a = alg.random_hermitian(rng)
    assert apply_function(a, IDENTITY).allclose(a, atol=1e-12)
    assert apply_function(a, named_function("power:2")).allclose(a @ a, atol=1e-12)
    f = named_function("power:3")
    expected = sum(w * np.sum(np.abs(np.linalg.eigvalsh(b) ** 3))
                   for w, b in zip(alg.trace_weights, a.blocks))
    assert lp_norm(apply_function(a, f), 1) == pytest.approx(expected, rel=1e-12)


def test_clip_unit():
    a = ALG3.element([np.diag([-1.0, 0.5, 3.0])])
    assert clip_unit(a).allclose(ALG3.element([np.diag([0.0, 0.5, 1.0])]))
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    inside = ALG3.element([q @ np.diag([0.0, 0.3, 1.0]) @ q.T])
    assert clip_unit(inside).allclose(inside, atol=1e-12)


def test_wedge_decomposition():
    alg, rng = random_algebra(6)
    a = alg.random_hermitian(rng, 2.0)
    assert (shifted_pos(a) + wedge(a, 1.0)).allclose(a, atol=1e-12)
    assert pos_part(-a).allclose(neg_part(a), atol=1e-12)


def test_three_part_decomposition():
    alg, rng = random_algebra(9)
    a = alg.random_hermitian(rng, 2.0)
    f = lambda t: np.where(t <= 0, t, 0.0)
    g = lambda t: np.where(t >= 0, np.minimum(t, 1.0), 0.0)
    h = lambda t: np.where(t >= 1, t - 1.0, 0.0)
    t = np.linspace(-3, 3, 601)
    assert np.all(f(t) * g(t) == 0)
    assert np.allclose(g(t) * h(t), h(t))
    lhs = a - apply_function(a, g)
    assert lhs.allclose(apply_function(a, f) + apply_function(a, h), atol=1e-12)


def test_modulus_squares_to_x_star_x():
    alg, rng = random_algebra(10)
    x = alg.random_element(rng)
    m = modulus(x)
    assert (m @ m).allclose(x.H @ x, atol=1e-12)
    assert m.is_positive()


def test_bump_normalized():
    total, _ = quad(bump, -1, 1)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert bump(1.0) == 0.0 and bump(-1.5) == 0.0


def test_mollify_linear_is_exact():
    f = named_function("linear:2.5")
    t = np.linspace(-3, 3, 41)
    assert np.allclose(mollify(f, 7).function(t), 2.5 * t, atol=1e-13)


@pytest.mark.parametrize("n", [10, 40, 160])
def test_mollify_abs_sup_error(n):
    t = np.linspace(-5, 5, 801)
    assert np.max(np.abs(ABS(t) - mollify(ABS, n).function(t))) <= 2.0 / n


def test_mollify_clip_against_quad():
    n = 100
    fn = mollify(CLIP_UNIT, n).function
    t = np.linspace(-1, 2, 61)
    assert np.max(np.abs(CLIP_UNIT(t) - fn(t))) <= 0.02

    def conv(s):
        return quad(lambda u: CLIP_UNIT(s - u / n) * bump(u), -1, 1, points=[n * s, n * (s - 1)],
                    epsabs=1e-14, limit=200)[0]
    expected = np.array([conv(s) for s in t]) - conv(0.0)
    assert np.allclose(fn(t), expected, atol=1e-12)


def test_mollify_vanishes_at_zero():
    assert mollify(ABS, 13).function(np.zeros(1))[0] == pytest.approx(0.0, abs=1e-15)


def test_mollify_needs_lipschitz():
    from ncdirichlet.calculus import ScalarFunction
    with pytest.raises(DomainError):
        mollify(ScalarFunction(np.exp, np.exp, None, False, "exp"), 10)


def test_divided_difference():
    sq = named_function("power:2")
    s, t = np.array([0.3, 2.0, -1.0]), np.array([1.1, 2.0, 4.0])
    assert np.allclose(divided_difference(sq, s, t), s + t)
    u = np.linspace(-2, 2, 9)
    assert np.allclose(divided_difference(SMOOTHSTEP, u, u), SMOOTHSTEP.derivative(u))


@given(st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_divided_difference_bounded_by_lipschitz(seed):
    rng = np.random.default_rng(seed)
    s, t = rng.uniform(-3, 3, (2, 500))
    for f in (ABS, CLIP_UNIT, SMOOTHSTEP):
        assert np.all(np.abs(divided_difference(f, s, t)) <= f.lip_constant + 1e-12)


def test_pi_a_rank_one_kernels():
    alg, rng = random_algebra(12)
    a, b = alg.random_hermitian(rng), alg.random_element(rng)
    assert pi_a_apply(a, lambda s, t: np.ones_like(s * t), b).allclose(b, atol=1e-12)
    assert pi_a_apply(a, lambda s, t: s * t, b).allclose(a @ b @ a, atol=1e-12)


def test_pi_a_is_frechet_derivative():
    alg, rng = random_algebra(13)
    a, b = alg.random_hermitian(rng), alg.random_hermitian(rng)
    f = named_function("power:3")

    def quotient(eps):
        return (apply_function(a + b * eps, f) - apply_function(a - b * eps, f)) * (0.5 / eps)
    eps = 1e-3
    richardson = (quotient(eps / 2) * 4 - quotient(eps)) * (1 / 3)
    exact = pi_a_apply(a, difference_kernel(f), b)
    assert lp_norm(richardson - exact, np.inf) <= 1e-6


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_smooth_contraction(eps):
    phi = smooth_contraction(eps)
    inside = np.linspace(0, 1, 51)
    assert np.allclose(phi(inside), inside)
    t = np.linspace(-4, 5, 2001)
    vals = phi(t)
    assert vals.min() >= -eps / 2 - 1e-12 and vals.max() <= 1 + eps / 2 + 1e-12
    assert np.max(np.abs(np.diff(vals) / np.diff(t))) <= 1 + 1e-9
    assert phi(np.zeros(1))[0] == 0.0


def test_named_function_errors():
    with pytest.raises(DomainError):
        named_function("cosine")
    with pytest.raises(DomainError):
        named_function("wedge:abc")
