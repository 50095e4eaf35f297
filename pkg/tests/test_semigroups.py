import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncdirichlet.algebra import Algebra, inner, lp_norm, map_matrix
from ncdirichlet.constructions import custom_instance, derivation_family_form, thm51_instance
from ncdirichlet.derivations import inner_derivation
from ncdirichlet.errors import DomainError
from ncdirichlet.forms import Form
from ncdirichlet.semigroups import (SuperOperator, adjoint_superop, approx_form, choi_matrix,
                                    conjugation, cp_check, dirichlet_operator_check,
                                    endpoint_norm, form_from_generator, generator_from_form,
                                    identity_superop, interpolation_check, laplace_resolvent,
                                    lp_extension_check, n_positivity_check, order_interval_check,
                                    positivity_check, resolvent, resolvent_sector_check,
                                    sampled_norm, schwarz_defect, semigroup, submarkov_check,
                                    transpose_map, triangle, yosida)
from ncdirichlet.forms import sector_constant
from ncdirichlet.verdict import FAIL, PASS, SAMPLED_PASS

from conftest import random_algebra, random_blocks

M2 = Algebra((2,), (1.0,))


def _thm51(seed, scale=1.0):
    return thm51_instance(random_blocks(np.random.default_rng([seed, 7])), 2, seed,
                          coefficient_scale=scale)


def _unitary(alg, rng):
    blocks = [np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))[0]
              for n in alg.block_dims]
    return alg.element(blocks)


def test_zero_form_gives_zero_generator():
    L = generator_from_form(Form(M2, np.zeros((4, 4))))
    assert np.count_nonzero(L.matrix) == 0
    assert form_from_generator(L).allclose(Form(M2, np.zeros((4, 4))))


def test_generator_is_double_commutator():
    rng = np.random.default_rng(0)
    z = M2.random_skew(rng)
    L = generator_from_form(derivation_family_form([inner_derivation(z)]))
    expected = map_matrix(M2, lambda x: (z.H @ z.commutator(x) - z.commutator(x) @ z.H) * -1)
    assert np.allclose(L.matrix, expected, atol=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_resolvent_inverts_shifted_form(alpha):
    inst = _thm51(1)
    E, G = inst.form, resolvent(inst.generator, alpha)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x, y = inst.algebra.random_element(rng), inst.algebra.random_element(rng)
        gy = G(y)
        assert E(x, gy) + alpha * inner(x, gy) == pytest.approx(inner(x, y), abs=1e-9)


def test_resolvent_zero_generator_and_identity():
    alg, _ = random_algebra(3)
    L = SuperOperator(alg, np.zeros((alg.dim, alg.dim)))
    assert np.allclose(resolvent(L, 4.0).matrix, np.eye(alg.dim) / 4.0)
    L = _thm51(4).generator
    a, b = 0.7, 3.1
    ga, gb = resolvent(L, a).matrix, resolvent(L, b).matrix
    assert np.allclose(ga - gb, (b - a) * ga @ gb, atol=1e-10)


def test_resolvent_errors():
    L = identity_superop(M2)
    with pytest.raises(DomainError):
        resolvent(L, 1.0)
    with pytest.raises(DomainError):
        resolvent(L, -1.0)


def test_resolvent_is_laplace_transform():
    inst = _thm51(5)
    x = inst.algebra.random_element(np.random.default_rng(6))
    for alpha in (0.5, 2.0):
        quad = laplace_resolvent(inst.generator, alpha, x)
        assert lp_norm(quad - resolvent(inst.generator, alpha)(x), 2) <= 1e-6


def test_semigroup_basics():
    L = _thm51(7).generator
    assert np.allclose(semigroup(L, 0.0).matrix, np.eye(L.algebra.dim))
    lam = np.array([0.0, 1.0, 2.5, 4.0])
    D = SuperOperator(M2, np.diag(-lam))
    assert np.allclose(semigroup(D, 0.3).matrix, np.diag(np.exp(-0.3 * lam)))
    with pytest.raises(DomainError):
        semigroup(L, -1.0)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
@settings(max_examples=20, deadline=None)
def test_semigroup_law(s, t):
    L = _thm51(8).generator
    assert np.allclose(semigroup(L, s).matrix @ semigroup(L, t).matrix,
                       semigroup(L, s + t).matrix, atol=1e-10)


def test_yosida_zero_and_convergence():
    alg, _ = random_algebra(9)
    Z = SuperOperator(alg, np.zeros((alg.dim, alg.dim)))
    assert np.allclose(yosida(Z, 10.0, 2.0).matrix, np.eye(alg.dim))
    L = _thm51(10).generator
    exact = semigroup(L, 0.7).matrix
    errs = [np.linalg.norm(yosida(L, a, 0.7).matrix - exact, 2) for a in (10, 1e2, 1e3, 1e4)]
    assert all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] <= 1e-3


def test_yosida_preserves_unit_interval():
    L = _thm51(11).generator
    for a in (1.0, 10.0):
        assert submarkov_check(a * resolvent(L, a)).passed
        assert order_interval_check(yosida(L, a, 0.5), 40, 0).passed


def test_approx_form_limits():
    Z = SuperOperator(M2, np.zeros((4, 4)))
    rng = np.random.default_rng(12)
    x, y = M2.random_element(rng), M2.random_element(rng)
    assert abs(approx_form(Z, 10.0, x, y)) <= 1e-13
    inst = _thm51(13)
    x, y = inst.algebra.random_element(rng), inst.algebra.random_element(rng)
    err = [abs(approx_form(inst.generator, b, x, y) - inst.form(x, y)) for b in (1e2, 1e4, 1e6)]
    assert err[2] < err[1] < err[0] and err[2] < 1e-5


def test_positivity_basic_maps():
    alg, rng = random_algebra(14)
    v = positivity_check(identity_superop(alg))
    assert v.passed and v.margin == pytest.approx(0.0, abs=1e-12)
    assert positivity_check(conjugation(_unitary(alg, rng))).passed
    theta = transpose_map(M2)
    assert positivity_check(theta).passed
    assert cp_check(theta).failed


def test_choi_oracles():
    rng = np.random.default_rng(15)
    u = _unitary(M2, rng)
    c = choi_matrix(conjugation(u))
    lam = np.linalg.eigvalsh(c)
    assert np.sum(lam > 1e-10) == 1 and lam[0] > -1e-12
    lam = np.linalg.eigvalsh(choi_matrix(transpose_map(M2)))
    assert np.allclose(lam, [-0.5, 0.5, 0.5, 0.5])
    v = cp_check(transpose_map(M2))
    assert v.failed and v.margin < 0


def test_two_positivity_witness_for_transpose():
    v = n_positivity_check(transpose_map(M2), 2)
    assert v.failed
    assert v.witness is not None


def test_non_hermitian_preserving_map_fails():
    T = SuperOperator(M2, np.diag([1.0, 1j, 1.0, 1.0]))
    assert positivity_check(T).failed
    assert cp_check(T).failed


def test_lindblad_semigroup_is_cp():
    for seed in range(5):
        inst = _thm51(seed, scale=0.0)
        for t in (0.1, 1.0):
            assert cp_check(semigroup(inst.generator, t)).status == PASS


def test_submarkov():
    alg, _ = random_algebra(16)
    assert submarkov_check(identity_superop(alg)).passed
    inst = _thm51(17)
    for t in (0.1, 1.0, 10.0):
        assert submarkov_check(semigroup(inst.generator, t)).passed
    v = submarkov_check(2.0 * identity_superop(alg))
    assert v.failed and v.witness.allclose(alg.identity())


def test_dirichlet_operator():
    alg, _ = random_algebra(18)
    v = dirichlet_operator_check(SuperOperator(alg, np.zeros((alg.dim, alg.dim))))
    assert v.status == PASS and v.margin == 0.0
    z = M2.element([np.array([[0.0, 1.0], [-1.0, 0.0]])])
    L = generator_from_form(derivation_family_form([inner_derivation(z)]))
    assert dirichlet_operator_check(L).passed
    v = dirichlet_operator_check(identity_superop(M2))
    assert v.failed
    # hand evaluation at x = 2: (L x, (x - 1)^+) = (2, 1) = 2 tau(1) > 0
    x = M2.scalar(2.0)
    assert inner(identity_superop(M2)(x), M2.identity()).real == pytest.approx(4.0)


def test_adjoint():
    z = M2.element([np.array([[0.0, 1.0], [-1.0, 0.0]])])
    L = generator_from_form(derivation_family_form([inner_derivation(z)]))
    T = semigroup(L, 0.5)
    assert np.allclose(adjoint_superop(T).matrix, T.matrix, atol=1e-12)
    T = semigroup(_thm51(19).generator, 0.5)
    rng = np.random.default_rng(20)
    x, y = T.algebra.random_element(rng), T.algebra.random_element(rng)
    assert inner(adjoint_superop(T)(x), y) == pytest.approx(inner(x, T(y)), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_dirichlet_instance_has_submarkov_adjoint(seed):
    inst = _thm51(seed)
    assert np.any(inst.coefficients.entries)
    T = semigroup(inst.generator, 0.5)
    assert submarkov_check(T).passed and submarkov_check(adjoint_superop(T)).passed


def test_lp_bounds():
    alg, _ = random_algebra(21)
    v = lp_extension_check(identity_superop(alg), n_samples=20)
    assert v.passed and v.metadata["constant"] == 1.0
    assert all(r == pytest.approx(1.0) for r in v.metadata["max_ratio"].values())
    T = semigroup(_thm51(22).generator, 0.5)
    v = lp_extension_check(T, n_samples=30)
    assert v.passed and max(v.metadata["max_ratio"].values()) <= 2.0
    with pytest.raises(DomainError):
        lp_extension_check(2.0 * identity_superop(alg))


def test_schwarz_and_endpoints():
    T = semigroup(_thm51(23, scale=0.0).generator, 0.4)
    rng = np.random.default_rng(0)
    assert all(schwarz_defect(T, T.algebra.random_element(rng)) >= -1e-12 for _ in range(20))
    for p in (1, 2, np.inf):
        assert sampled_norm(T, p, 50) <= endpoint_norm(T, p) + 1e-12
    with pytest.raises(DomainError):
        endpoint_norm(T, 3)


def test_interpolation():
    T = semigroup(_thm51(24).generator, 0.3)
    v = interpolation_check(T, 1, np.inf, 0.5, n_samples=40)
    assert v.passed and v.metadata["p"] == pytest.approx(2.0)


def test_resolvent_sector():
    inst = _thm51(25, scale=2.0)
    K = sector_constant(inst.form)
    assert resolvent_sector_check(inst.generator, K).passed


def test_triangle_dirichlet_and_not():
    inst = _thm51(26)
    r = triangle(inst.generator, True, n_samples=60)
    assert r["consistency"] == "consistent" and all(v.passed for v in r["legs"].values())
    r = triangle(identity_superop(M2), True, n_samples=60)
    assert r["consistency"] == "consistent" and not any(v.passed for v in r["legs"].values())


def test_triangle_half_instance():
    L = custom_instance("half").generator
    plain = triangle(L, False, n_samples=60)
    full = triangle(L, True, n_samples=60)
    assert all(v.passed for v in plain["legs"].values())
    assert full["consistency"] == "consistent"
    assert not any(v.passed for v in full["legs"].values())


def test_transpose_generator_positive_not_cp():
    inst = custom_instance("transpose", (2,), 0)
    T = semigroup(inst.generator, 0.5)
    assert submarkov_check(T).passed
    assert cp_check(T).status == FAIL
    assert n_positivity_check(T, 1).status in (PASS, SAMPLED_PASS)
