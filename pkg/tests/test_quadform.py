import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dclab.quadform import (Lp, QuadraticForm, SymOperator, all_sign_rows, block_symmetric,
                            counterexample_form, delta2, dual_index, duality_form, euclidean_constants,
                            norm_upper_bound, operator_norm, parse_space, polarize, sampled_norm,
                            sq_norm_grad, symmetrize)

from _support import random_symmetric

SPACES = [
    Lp(3, 1), Lp(3, 1.5), Lp(3, 2), Lp(3, 4), Lp(3, math.inf),
    parse_space("sum1(lp:2:1,lp:1:inf)"), parse_space("suminf(lp:1:2,lp:2:3)"),
    parse_space("sum1(suminf(lp:1:1,lp:1:2),lp:1:inf)"),
]


def test_dual_index():
    assert dual_index(1) == math.inf
    assert dual_index(math.inf) == 1.0
    assert dual_index(2) == 2.0
    assert dual_index(4) == pytest.approx(4 / 3)
    with pytest.raises(ValueError):
        dual_index(0.5)


def test_descriptor_round_trip():
    for s in SPACES:
        assert parse_space(str(s)) == s
    assert str(Lp(4, math.inf)) == "lp:4:inf"
    assert str(duality_form(Lp(2, 1))[1]) == "sum1(lp:2:1,lp:2:inf)"
    for bad in ("lp:2", "l2:2:2", "sum1(lp:2:1)", "lp:0:2", "lp:2:0.5"):
        with pytest.raises(ValueError):
            parse_space(bad)


def test_dual_of_direct_sum():
    s = parse_space("sum1(lp:2:1,lp:3:4)")
    assert s.dual() == parse_space("suminf(lp:2:inf,lp:3:1.33333333333333333)")


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_norm_axioms(space):
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, 200, space.dim))
    t = rng.standard_normal((200, 1))
    nx = space.norm(x)
    assert np.all(nx > 0)
    assert np.allclose(space.norm(t * x), np.abs(t[:, 0]) * nx, rtol=1e-14)
    assert np.all(space.norm(x + y) <= nx + space.norm(y) + 1e-12)
    assert space.norm(np.zeros(space.dim)) == 0.0


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_norm_duality_pairing(space):
    # <x, g> = ||x|| and ||g||_* <= 1 for a norm subgradient g
    rng = np.random.default_rng(1)
    x = rng.standard_normal((100, space.dim))
    g = space.norm_grad(x)
    assert np.allclose(np.sum(x * g, axis=1), space.norm(x), rtol=1e-12)
    assert np.all(space.dual().norm(g) <= 1 + 1e-12)
    assert np.allclose(sq_norm_grad(space, x), 2 * space.norm(x)[:, None] * g)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_smooth_norm(space):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, space.dim))
    v0, g0 = space.smooth_norm(x, 0.0)
    assert np.array_equal(v0, space.norm(x))
    v, g = space.smooth_norm(x, 1e-3)
    assert np.all(v >= space.norm(x))
    assert np.all(v <= space.norm(x) + 1e-3 * (space.dim + 2))
    dx = rng.standard_normal(x.shape)
    h = 1e-6
    fd = (space.smooth_norm(x + h * dx, 1e-3)[0] - space.smooth_norm(x - h * dx, 1e-3)[0]) / (2 * h)
    assert np.allclose(fd, np.sum(g * dx, axis=1), atol=1e-6)


def test_euclidean_constants():
    rng = np.random.default_rng(3)
    for s in SPACES:
        a, b = euclidean_constants(s)
        x = rng.standard_normal((500, s.dim))
        e = np.linalg.norm(x, axis=1)
        assert np.all(e <= a * s.norm(x) * (1 + 1e-12))
        assert np.all(s.norm(x) <= b * e * (1 + 1e-12))


def test_symmetrize_examples():
    t = random_symmetric(np.random.default_rng(4), 3)
    assert np.array_equal(symmetrize(t).matrix, t)
    assert symmetrize([[0, 1], [0, 0]]).matrix.tolist() == [[0, 0.5], [0.5, 0]]
    rng = np.random.default_rng(5)
    b = rng.standard_normal((4, 4))
    x = rng.standard_normal((100, 4))
    qb = np.einsum("ni,ij,nj->n", x, b, x)
    assert np.allclose(QuadraticForm(symmetrize(b))(x), qb, atol=1e-12)
    with pytest.raises(ValueError):
        symmetrize(np.zeros((2, 3)))


def test_sym_operator_validation():
    with pytest.raises(ValueError):
        SymOperator([[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        SymOperator(np.zeros((2, 3)))
    op = SymOperator(np.eye(2))
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 3.0


def test_eval_and_gradient_examples():
    q = QuadraticForm(np.eye(2))
    assert q([3.0, 4.0]) == 25.0
    assert q.gradient([3.0, 4.0]).tolist() == [6.0, 8.0]
    swap = QuadraticForm(0.5 * np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert swap([1.0, 1.0]) == 1.0
    with pytest.raises(ValueError):
        q([1.0, 2.0, 3.0])


def test_gradient_finite_differences():
    rng = np.random.default_rng(6)
    for _ in range(50):
        m = int(rng.integers(1, 7))
        q = QuadraticForm(random_symmetric(rng, m))
        x, v = rng.standard_normal((2, m))
        h = 1e-4
        fd = (q(x + h * v) - q(x - h * v)) / (2 * h)
        assert abs(fd - q.gradient(x) @ v) < 1e-6


def test_polarization_and_uniqueness():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        t = random_symmetric(rng, m)
        q = QuadraticForm(t)
        x, y = rng.standard_normal((2, m))
        assert 2 * (t @ x) @ y == pytest.approx(q(x + y) - q(x) - q(y), abs=1e-10)
        assert polarize(q, x, y) == pytest.approx(q.bilinear(x, y), abs=1e-10)
        # the form determines T: diagonal from q(e_i), off-diagonal from polarization
        eye = np.eye(m)
        rebuilt = np.array([[polarize(q, eye[i], eye[j]) for j in range(m)] for i in range(m)])
        assert np.allclose(rebuilt, t, atol=1e-10)


def test_two_homogeneity_dyadic():
    rng = np.random.default_rng(8)
    q = QuadraticForm(random_symmetric(rng, 4))
    x = rng.standard_normal((20, 4))
    for t in (0.25, 0.5, 2.0, 4.0, -2.0):
        assert np.array_equal(q(t * x), t * t * q(x))


def test_delta2_examples():
    rng = np.random.default_rng(9)
    q = QuadraticForm(random_symmetric(rng, 3))
    x, x2, u = rng.standard_normal((3, 100, 3))
    assert np.allclose(delta2(q, x, u), 2 * q(u), atol=1e-10)
    assert np.max(np.abs(delta2(q, x, u) - delta2(q, x2, u))) <= 1e-10
    assert delta2(Lp(2, 1).norm, np.zeros(2), np.array([1.0, -1.0])) == 4.0
    assert delta2(lambda z: z ** 3, 1.0, 1.0) == 6.0


def test_counterexample_form_examples():
    q, space = counterexample_form(2)
    assert q(np.array([1.0, 0.0, 0.0, 1.0])) == 2.0
    assert str(space) == "sum1(lp:2:1,lp:2:1)"
    q4, _ = counterexample_form(4)
    j = q4.matrix[4:, :4]
    assert block_symmetric(q4.matrix[:4, :4], q4.matrix[:4, 4:], j, q4.matrix[4:, 4:])
    assert operator_norm(j, Lp(4, 1), Lp(4, math.inf)) == (1.0, True)
    with pytest.raises(ValueError):
        counterexample_form(6)
    with pytest.raises(ValueError):
        counterexample_form(4, "other")


def test_fullsign_is_isometric():
    q, space = counterexample_form(2, "fullsign")
    j = all_sign_rows(2)
    assert str(space) == "sum1(lp:2:1,lp:2:1)"
    assert np.array_equal(q.matrix[2:, :2], j)
    rng = np.random.default_rng(10)
    for m in (2, 3, 5):
        x = rng.standard_normal((100, m))
        assert np.allclose(np.abs(x @ all_sign_rows(m).T).max(axis=1), np.abs(x).sum(axis=1))
    with pytest.raises(ValueError):
        all_sign_rows(13)


def test_duality_form_examples():
    q, space = duality_form(Lp(3, 4))
    assert str(space) == "sum1(lp:3:4,lp:3:1.33333)"
    e1 = np.array([1.0, 0, 0])
    assert q(np.concatenate([e1, e1])) == 1.0
    assert q(np.array([1.0, 0, 0, 0, 2.0, 0])) == 0.0
    rng = np.random.default_rng(11)
    z = rng.standard_normal((50, 6))
    assert np.allclose(q(z), np.sum(z[:, :3] * z[:, 3:], axis=1), atol=1e-12)
    with pytest.raises(ValueError):
        duality_form(space)


def test_block_symmetry_examples():
    j = np.array([[1.0, 2.0], [3.0, 4.0]])
    z = np.zeros((2, 2))
    assert block_symmetric(z, j.T, j, z)
    assert not block_symmetric(z, j, j, z)
    rng = np.random.default_rng(12)
    t = random_symmetric(rng, 5)
    assert block_symmetric(t[:2, :2], t[:2, 2:], t[2:, :2], t[2:, 2:])
    with pytest.raises(ValueError):
        block_symmetric(z, j, np.zeros((3, 2)), z)


def test_operator_norm_examples():
    assert operator_norm(np.eye(3), Lp(3, 1), Lp(3, math.inf)) == (1.0, True)
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    v = operator_norm(h, Lp(2, 2), Lp(2, 2))
    assert v.exact and v.value == pytest.approx(math.sqrt(2), abs=1e-15)
    rng = np.random.default_rng(13)
    m = rng.standard_normal((3, 3))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = operator_norm(m, Lp(3, 4), Lp(3, 2))
    assert not est.exact and caught
    assert est.value <= np.linalg.norm(m, 2) * 3 ** 0.25 + 1e-12
    assert est.value <= norm_upper_bound(m, Lp(3, 4), Lp(3, 2)) + 1e-12
    with pytest.raises(ValueError):
        operator_norm(m, Lp(2, 2), Lp(3, 2))


def test_exact_norms_against_vertices():
    # l_1 sources: the sup is attained at +- basis vectors; l_inf targets: at dual extreme points
    rng = np.random.default_rng(14)
    for _ in range(20):
        m = rng.standard_normal((3, 4))
        for dst in (Lp(3, 1), Lp(3, 2), Lp(3, 3)):
            assert operator_norm(m, Lp(4, 1), dst).value == pytest.approx(dst.norm(m.T).max())
        signs = np.array(np.meshgrid(*[[-1, 1]] * 4)).reshape(4, -1).T
        direct = np.abs(signs @ m.T).max()
        assert operator_norm(m, Lp(4, math.inf), Lp(3, math.inf)).value == pytest.approx(direct)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-5, 5)))
def test_sampled_norm_is_a_lower_bound(m):
    for src, dst in ((Lp(3, 3), Lp(3, 1.5)), (Lp(3, 2), Lp(3, 4))):
        lo = sampled_norm(m, src, dst, restarts=2)
        assert lo <= norm_upper_bound(m, src, dst) * (1 + 1e-9) + 1e-12
