import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l2pos.core import random_hermitian
from l2pos.errors import InputError, MarginError, PreconditionError
from l2pos.geometry import (BundleCurvature, Domain, Weight, check_q_positive, check_uniform_q_positive,
                            complex_hessian, fd_hessian, halton, rc_directional_check, rc_trace_check)


def quadratic_weight(h, b=None):
    """φ(z) = Σ z̄_k H_jk z_j + Re(Σ b_j z_j²) has ∂²φ/∂z_j∂z̄_k = H_jk (the b part is pluriharmonic)."""
    h = np.asarray(h)
    b = np.zeros(len(h)) if b is None else np.asarray(b)

    def f(z):
        z = np.asarray(z)
        return np.einsum("...k,jk,...j->...", z.conj(), h, z).real + np.real(np.sum(b * z ** 2, axis=-1))

    n = len(h)
    return Weight(f, n, hessian=lambda z: np.broadcast_to(h, np.shape(z)[:-1] + (n, n)))


BALL2 = Domain("ball", (0j, 0j), (1.0,))


def test_domain_kinds_and_distance():
    p = Domain("polydisc", (0j, 0j), (1.0, 2.0))
    assert p.distance_to_boundary(np.array([0.5, 0.0])) == pytest.approx(0.5)
    a = Domain("polydisc", (0j,), (1.0,), (0.5,))
    assert a.distance_to_boundary(np.array([0.6])) == pytest.approx(0.1)
    assert not a.contains(np.array([0.1]))
    box = Domain("box", (0j,), (1.0, 2.0))
    assert box.distance_to_boundary(np.array([0.5 + 1.5j])) == pytest.approx(0.5)
    with pytest.raises(InputError):
        Domain("ellipsoid", (0j,), (1.0,))
    with pytest.raises(InputError):
        Domain("ball", (0j,), (1.0, 2.0))


@pytest.mark.parametrize("dom", [BALL2, Domain("polydisc", (1j, 0j), (1.0, 0.5)),
                                 Domain("box", (0j, 0j), (1.0,)),
                                 Domain("polydisc", (0j,), (1.0,), (0.3,))])
def test_samples_inside_and_deterministic(dom):
    a, b = dom.sample(300), dom.sample(300)
    assert np.array_equal(a, b)
    assert np.all(dom.contains(a))


def test_domain_roundtrip():
    d = Domain("polydisc", (1 + 2j, 0j), (1.0, 0.5), (0.1, 0.2))
    assert Domain.from_dict(d.to_dict()) == d


def test_halton_in_unit_cube():
    h = halton(3, 100)
    assert h.shape == (100, 3) and np.all((h >= 0) & (h < 1))


def test_exact_hessian_of_expression():
    w = Weight.from_expression("|z1|^2 + 2*|z2|^2 + x1*y2", 2)
    assert w.derivative_mode == "exact"
    h = complex_hessian(w, [0.1, 0.2j]).entries
    # x1 y2 contributes ¼(∂x1∂y2 i) = i/4 at [0, 1]
    assert np.allclose(h, [[1, 0.25j], [-0.25j, 2]])


def test_fd_matches_exact_on_random_points():
    w = Weight.from_expression("log(1+|z1|^2+|z2|^2) + exp(x1)*|z2|^2", 2)
    pts = BALL2.sample(20)
    assert np.abs(fd_hessian(w, pts, 1e-3) - w.hess(pts)).max() < 1e-5
    assert w.spot_check(pts) < 1e-5


def test_spot_check_flags_wrong_hessian():
    w = Weight(lambda z: np.sum(np.abs(z) ** 2, axis=-1), 1, hessian=lambda z: 2 * np.ones(z.shape[:-1] + (1, 1)))
    with pytest.raises(PreconditionError):
        w.spot_check(np.array([[0.1 + 0j]]))


@pytest.mark.parametrize("expr", ["x1^4 + 3*x1^2*y2^2 - y1^3*x2", "|z1|^4 + |z2|^2*x1*y1 - 2*y2^4 + x1*x2*y1"])
def test_fd_order_on_quartic(expr):
    w = Weight.from_expression(expr, 2)
    z = np.array([0.3 - 0.2j, -0.1 + 0.4j])
    exact = w.hess(z)
    hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    errs = [np.abs(complex_hessian(w, z, h).entries - exact).max() for h in hs]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


def test_margin_error():
    w = Weight.from_expression("|z1|^2", 1)
    d = Domain("polydisc", (0j,), (1.0,))
    with pytest.raises(MarginError):
        complex_hessian(w, [0.9995], h_step=1e-3, domain=d)
    complex_hessian(w, [0.5], h_step=1e-3, domain=d)


def test_non_finite_weight_rejected():
    w = Weight.from_expression("log(x1)", 1)
    with pytest.raises(InputError):
        w(np.array([[-1.0 + 0j]]))


def test_affine_pullback_hessian():
    rng = np.random.default_rng(3)
    w = Weight.from_expression("|z1|^2 + x1*x2 + y1^2*y2", 2)
    u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    c = np.array([0.1, -0.2j])
    pb = w.affine_pullback(c, u)
    z = np.array([[0.05 + 0.1j, -0.1]])
    assert np.allclose(pb.hess(z), fd_hessian(pb, z, 1e-3), atol=1e-6)


def test_uniform_check_examples():
    w = Weight.from_expression("|z1|^2 + |z2|^2", 2)
    rep = check_uniform_q_positive(w, 1, 1.0, BALL2)
    assert rep.passed and rep.min_value == pytest.approx(1.0)
    rep = check_uniform_q_positive(w, 2, 2.0, BALL2)
    assert rep.passed and rep.min_value == pytest.approx(2.0)
    bad = Weight.from_expression("-|z1|^2 + |z2|^2", 2)
    rep = check_uniform_q_positive(bad, 1, 0.0, BALL2)
    assert not rep.passed and rep.min_value == pytest.approx(-1.0)
    assert rep.to_dict()["pass"] is False
    with pytest.raises(InputError):
        check_uniform_q_positive(w, 3, 0.0, BALL2)
    with pytest.raises(InputError):
        check_uniform_q_positive(w, 1, -1.0, BALL2)


def test_q_positive_examples():
    w = Weight.from_expression("-|z1|^2 + |z2|^2", 2)
    assert check_q_positive(w, 1, BALL2).passed
    assert not check_q_positive(w, 0, BALL2).passed
    with pytest.raises(InputError):
        check_q_positive(w, 2, BALL2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4), st.data())
def test_uniform_implies_q_minus_one_positive(seed, n, data):
    """q smallest eigenvalues summing to c > 0 forces λ_q > 0, i.e. (q−1)-positivity."""
    rng = np.random.default_rng(seed)
    h = random_hermitian(n, rng)
    q = data.draw(st.integers(1, n))
    w = quadratic_weight(h, rng.normal(size=n))
    d = Domain("ball", (0j,) * n, (1.0,))
    uni = check_uniform_q_positive(w, q, 0.05, d, samples=8)
    if uni.passed:
        assert check_q_positive(w, q - 1, d, samples=8).passed


def test_rc_trace_and_directional():
    blocks = np.zeros((2, 2, 2, 2), dtype=complex)
    blocks[0, 0] = np.diag([1.0, -1.0])
    blocks[1, 1] = np.diag([-1.0, 1.0])
    b = BundleCurvature.constant(blocks)
    z = np.zeros(2, dtype=complex)
    tr = rc_trace_check(b, 0.0, z)
    assert tr.passed and tr.min_value == pytest.approx(0.0)
    rc = rc_directional_check(b, z)
    assert rc.passed and rc.min_value > 0
    neg = blocks.copy()
    neg[1, 1] = np.diag([-1.0, -2.0])
    rep = rc_directional_check(BundleCurvature.constant(neg), z)
    assert not rep.passed
    one = BundleCurvature.constant(np.diag([1.0, -1.0])[:, :, None, None])
    assert rc_directional_check(one, z).min_value == pytest.approx(1.0)


def test_bundle_from_weight_and_hermiticity():
    w = Weight.from_expression("|z1|^2 - |z2|^2", 2)
    b = BundleCurvature.from_weight(w)
    assert b.at(np.zeros(2, dtype=complex)).shape == (2, 2, 1, 1)
    bad = np.zeros((2, 2, 1, 1), dtype=complex)
    bad[0, 1] = 1.0
    with pytest.raises(InputError):
        BundleCurvature.constant(bad).at(np.zeros(2, dtype=complex))
