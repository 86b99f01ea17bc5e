import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopsym import linearize
from koopsym.dynamics import linear_system
from koopsym.exceptions import SingularFrameError
from koopsym.geometry import (
    CertificationReport,
    Frame,
    check_conservative,
    check_linearizing,
    check_symmetry,
    fd_jacobian,
    fd_tolerance,
    invert_frame,
    lie_bracket,
    lie_derivative,
)

from conftest import random_hurwitz


def radial(X):
    return -np.asarray(X, dtype=float)


def rotation(X):
    X = np.asarray(X, dtype=float)
    return np.stack([-X[..., 1], X[..., 0]], axis=-1)


def e1(X):
    return np.broadcast_to([1.0, 0.0], np.shape(X)).copy()


def e2(X):
    return np.broadcast_to([0.0, 1.0], np.shape(X)).copy()


def quad_x2(X):
    X = np.asarray(X, dtype=float)
    return np.stack([X[..., 1] ** 2, np.zeros(X.shape[:-1])], axis=-1)


def diag12(X):
    X = np.asarray(X, dtype=float)
    return np.stack([-X[..., 0], -2 * X[..., 1]], axis=-1)


# -- lie derivative --------------------------------------------------------------


def test_lie_derivative_linear():
    assert lie_derivative(lambda X: X[..., 0], radial, [1.0, 2.0]) == pytest.approx(-1.0, abs=1e-10)


def test_lie_derivative_constant(rng):
    for x in rng.uniform(-3, 3, size=(4, 2)):
        assert lie_derivative(lambda X: np.full(X.shape[:-1], 4.2), rotation, x) == 0.0


def test_lie_derivative_product():
    val = lie_derivative(lambda X: X[..., 0] * X[..., 1], diag12, [1.0, 1.0])
    assert val == pytest.approx(-3.0, abs=1e-8)


def test_lie_derivative_complex():
    g = lambda X: (1 + 2j) * X[..., 0]
    assert lie_derivative(g, radial, [0.5, 0.0]) == pytest.approx(-(1 + 2j) * 0.5, abs=1e-10)


def test_lie_derivative_accepts_system(vdp):
    x = np.array([0.3, -0.2])
    val = lie_derivative(lambda X: X[..., 0], vdp, x)
    assert val == pytest.approx(vdp.rhs(x)[0], abs=1e-10)


# -- lie bracket -------------------------------------------------------------------


def test_bracket_self_zero(vdp):
    assert np.allclose(lie_bracket(vdp, vdp, [0.4, 0.7]), 0.0, atol=1e-12)


def test_rotation_commutes_with_radial(rng):
    for x in rng.uniform(-1, 1, size=(5, 2)):
        assert np.allclose(lie_bracket(rotation, radial, x), 0.0, atol=1e-8)


def test_bracket_hand_computed():
    assert np.allclose(lie_bracket(e1, quad_x2, [1.0, 1.0]), [0.0, 0.0], atol=1e-10)
    assert np.allclose(lie_bracket(e2, quad_x2, [1.0, 1.0]), [-2.0, 0.0], atol=1e-8)


vec = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(x=st.tuples(vec, vec), a=vec, b=vec)
def test_bracket_bilinear_antisymmetric(x, a, b):
    x = np.array(x)
    tol = fd_tolerance(1e-4, scale=10.0)
    ab = lie_bracket(quad_x2, diag12, x)
    ba = lie_bracket(diag12, quad_x2, x)
    assert np.allclose(ab, -ba, atol=tol)
    combo = lambda X: a * quad_x2(X) + b * rotation(X)
    lhs = lie_bracket(combo, diag12, x)
    rhs = a * ab + b * lie_bracket(rotation, diag12, x)
    assert np.allclose(lhs, rhs, atol=tol)


def test_fd_jacobian_shapes(vdp):
    X = np.array([[0.1, 0.2], [0.3, -0.4]])
    J = fd_jacobian(vdp.rhs, X)
    assert J.shape == (2, 2, 2)
    assert np.allclose(J, vdp.jac(X), atol=1e-8)
    g = fd_jacobian(lambda Y: Y[..., 0] ** 2, X)
    assert g.shape == (2, 2)
    assert np.allclose(g[:, 0], 2 * X[:, 0], atol=1e-8)


# -- checks ------------------------------------------------------------------------


def test_symmetry_self_passes(vdp, rng):
    rep = check_symmetry(vdp, vdp, rng.uniform(-1, 1, size=(10, 2)), tol=1e-9)
    assert rep.passed and rep.max_residual <= 1e-9


def test_symmetry_rotation_radial(rng):
    rep = check_symmetry(rotation, radial, rng.uniform(-1, 1, size=(20, 2)), tol=1e-6)
    assert rep.passed and rep.points_tested == 20


def test_symmetry_e1_vdp_fails(vdp, rng):
    rep = check_symmetry(e1, vdp, rng.uniform(-1, 1, size=(10, 2)), tol=1e-6)
    assert not rep.passed
    # [e1, F] = -DF e1 = (0, -(1 + 2 mu x1 x2)); norm at least 1 - 2 mu |x1 x2|
    assert rep.max_residual > 0.5


def test_symmetry_complex_generator_split(rng):
    G = lambda X: (1 + 1j) * rotation(X)
    rep = check_symmetry(G, radial, rng.uniform(-1, 1, size=(5, 2)), tol=1e-6)
    assert rep.passed


def test_conservative_gradient(rng):
    grad = lambda X: 2 * np.asarray(X)
    rep = check_conservative(grad, rng.uniform(-1, 1, size=(10, 2)))
    assert rep.passed


def test_conservative_rotation_fails(rng):
    rep = check_conservative(rotation, rng.uniform(-1, 1, size=(10, 2)))
    assert not rep.passed
    assert rep.max_residual > 0.5


def test_report_json_and_flags():
    P = np.zeros((3, 2))
    rep = CertificationReport.from_residuals("demo", P, [1e-9, np.nan, 2e-9], 1e-8, {0: "below-floor"})
    d = json.loads(rep.to_json())
    assert d["pass"] is True
    assert d["points_tested"] == 1
    assert sorted(f["reason"] for f in d["flagged_points"]) == ["below-floor", "evaluation-failure"]


def test_report_all_flagged_fails():
    rep = CertificationReport.from_residuals("demo", np.zeros((1, 2)), [np.nan], 1.0)
    assert not rep.passed


# -- frames --------------------------------------------------------------------------


def test_invert_identity():
    assert np.allclose(invert_frame(Frame.constant(np.eye(2)), [0.3, 0.1]), np.eye(2))


def test_invert_diagonal():
    E = np.diag([2.0, 4j])
    Xm = invert_frame(E, None)
    assert np.allclose(Xm.conj().T @ E, np.eye(2), atol=1e-12)
    assert np.allclose(Xm, np.diag([0.5, 0.25j]))


def test_invert_linear_eigenframe(rng):
    spec = linearize(linear_system(random_hurwitz(rng)))
    Xcols = spec.left_vectors.conj().T        # X_i = conj(w_i) as columns
    E = invert_frame(Xcols, None)
    assert np.allclose(E, spec.right_vectors, atol=1e-10)


def test_duality_involution(rng):
    for _ in range(5):
        M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        back = invert_frame(invert_frame(M, None), None)
        assert np.allclose(back, M, atol=1e-9)
        assert np.allclose(invert_frame(M, None).conj().T @ M, np.eye(3), atol=1e-10)


def test_singular_frame_raises():
    with pytest.raises(SingularFrameError):
        invert_frame(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]]), None)


def test_frame_dual_flags_nan():
    F = Frame(lambda X: np.stack([np.stack([X[..., 0], 0 * X[..., 0]], -1),
                                  np.stack([0 * X[..., 0], np.ones(X.shape[:-1])], -1)], -1), 2)
    D = F.dual()(np.array([[0.0, 1.0], [2.0, 1.0]]))
    assert np.all(np.isnan(D[0]))
    assert np.allclose(D[1], np.diag([0.5, 1.0]))


# -- linearizing -------------------------------------------------------------------------


def test_linearizing_linear_system(rng):
    A = random_hurwitz(rng, 2)
    sys_ = linear_system(A)
    spec = linearize(sys_)
    pts = rng.uniform(-1, 1, size=(200, 2))
    # X blows up on the zero set of w_i^* x; keep away from it
    pts = pts[np.all(np.abs(pts @ spec.left_vectors.T) > 0.3, axis=1)][:10]
    assert len(pts) == 10
    for i in range(2):
        w = spec.left_vectors[i]
        X = lambda P, w=w: np.conj(w[None, :] / (np.asarray(P) @ w)[:, None])
        rep = check_linearizing(X, sys_, spec.eigenvalues[i], pts, tol=1e-6)
        assert rep.passed, rep.to_dict()


def test_linearizing_e1_fails(vdp, rng):
    rep = check_linearizing(e1, vdp, 0.0, rng.uniform(-1, 1, size=(10, 2)), tol=1e-3)
    assert not rep.passed
