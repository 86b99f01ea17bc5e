"""Finite-difference differential geometry on vector fields.

Fields are vectorized callables mapping ``(..., n)`` real states to
``(..., n)`` (vector fields) or ``(...)`` (scalar fields) real or complex
values. A :class:`~koopsym.dynamics.SystemSpec` is accepted anywhere a real
vector field is.

Gradients are plain vectors of partial derivatives, without conjugation. The
conjugate-transpose pairing ``X^* F`` appears only in :func:`check_linearizing`.
"""

from dataclasses import dataclass, field as dc_field
import json

import numpy as np

from ._validation import check_point, check_points
from .exceptions import EvaluationError, SingularFrameError

FRAME_COND_THRESHOLD = 1e8
_EPS = np.finfo(float).eps


def default_step(x):
    """Central-difference step ``1e-4 * max(1, |x|)``."""
    return 1e-4 * max(1.0, float(np.linalg.norm(x)))


def fd_tolerance(h, scale=1.0, safety=100.0):
    """Residual tolerance from the second-order error model ``h^2 + eps/h``."""
    return safety * scale * (h * h + _EPS / h)


def _as_field(F):
    return F.rhs if hasattr(F, "rhs") and hasattr(F, "equilibrium") else F


def _steps(X, h):
    if h is None:
        return 1e-4 * np.maximum(1.0, np.linalg.norm(X, axis=-1))
    return np.broadcast_to(np.asarray(h, dtype=float), X.shape[:1]).copy()


def fd_jacobian(G, X, h=None):
    """Central-difference Jacobians of a field at a batch of points.

    Returns ``(m, n, n)`` for vector fields and ``(m, n)`` (plain gradients)
    for scalar fields. All ``2 n m`` perturbed points go through one call.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    hs = _steps(X, h)
    offsets = np.eye(n)[None, :, :] * hs[:, None, None]          # (m, n, n)
    pts = np.concatenate([X[:, None, :] + offsets, X[:, None, :] - offsets], axis=1)
    vals = np.asarray(G(pts.reshape(m * 2 * n, n)))
    vals = vals.reshape((m, 2 * n) + vals.shape[1:])
    diff = (vals[:, :n] - vals[:, n:]) / (2.0 * hs[:, None] if vals.ndim == 2 else 2.0 * hs[:, None, None])
    if vals.ndim == 2:
        return diff                                              # (m, n) gradient
    return np.swapaxes(diff, 1, 2)                               # (m, n_out, n_in)


def lie_derivative(g, F, x, h=None):
    """``L_F g(x) = sum_k dg/dx_k(x) F_k(x)`` with central differences of step ``h``."""
    x = check_point(x)
    F = _as_field(F)
    h = default_step(x) if h is None else float(h)
    if not h > 0:
        raise ValueError("step h must be positive")
    grad = fd_jacobian(g, x[None, :], h)[0]
    Fx = np.asarray(F(x[None, :]))[0]
    out = grad @ Fx
    if not np.isfinite(out):
        raise EvaluationError(f"scalar field not finite near {x.tolist()}")
    return complex(out) if np.iscomplexobj(out) else float(out)


def _bracket_batch(G, F, X, h=None):
    JG = fd_jacobian(G, X, h)
    JF = fd_jacobian(F, X, h)
    GX = np.asarray(G(X))
    FX = np.asarray(F(X))
    a = np.einsum("mij,mj->mi", JG, FX)
    b = np.einsum("mij,mj->mi", JF, GX)
    return a - b, a


def lie_bracket(G, F, x, h=None):
    """``[G, F](x) = DG(x) F(x) - DF(x) G(x)`` with central-difference Jacobians."""
    x = check_point(x)
    br, _ = _bracket_batch(_as_field(G), _as_field(F), x[None, :], h)
    if not np.all(np.isfinite(br)):
        raise EvaluationError(f"vector field not finite near {x.tolist()}")
    return br[0]


@dataclass
class CertificationReport:
    """Outcome of a pointwise numerical check.

    ``passed`` holds iff at least one point was tested and ``max_residual``
    over the non-flagged points is within ``tolerance``.
    """

    check_name: str
    points_tested: int
    max_residual: float
    tolerance: float
    flagged_points: list = dc_field(default_factory=list)
    passed: bool = False
    details: dict = dc_field(default_factory=dict)
    residuals: np.ndarray = dc_field(default=None, repr=False)

    @classmethod
    def from_residuals(cls, name, points, residuals, tolerance, flags=None, details=None):
        points = np.atleast_2d(points)
        residuals = np.asarray(residuals, dtype=float)
        flags = {} if flags is None else dict(flags)
        for k in np.flatnonzero(~np.isfinite(residuals)):
            flags.setdefault(int(k), "evaluation-failure")
        keep = np.array([k not in flags for k in range(len(residuals))], dtype=bool)
        tested = int(keep.sum())
        worst = float(np.max(residuals[keep])) if tested else float("nan")
        flagged = [
            {"point": [float(v) for v in points[k]], "reason": reason}
            for k, reason in sorted(flags.items())
        ]
        return cls(name, tested, worst, float(tolerance), flagged,
                   bool(tested and worst <= tolerance), dict(details or {}), residuals)

    def to_dict(self):
        return {
            "check_name": self.check_name,
            "points_tested": self.points_tested,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "flagged_points": self.flagged_points,
            "details": self.details,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _real_valued(F, X):
    return not np.iscomplexobj(np.asarray(F(X[:1])))


def check_symmetry(G, system, points, tol=None, h=None, name="symmetry", flags=None):
    """Certify ``[G, F] = 0`` pointwise.

    The residual is ``|[G, F](x)| / max(1, |DG(x) F(x)|)``. A complex ``G``
    against a real ``F`` is checked as two real fields, its real and
    imaginary parts, and the larger residual is reported. ``flags`` maps
    point indices to reason codes for points excluded up front.
    """
    X = check_points(points)
    F = _as_field(system)
    G = _as_field(G)
    h_rep = default_step(X[0]) if h is None else float(h)
    tol = fd_tolerance(h_rep) if tol is None else float(tol)
    if np.iscomplexobj(np.asarray(G(X[:1]))) and _real_valued(F, X):
        parts = [lambda x: np.real(G(x)), lambda x: np.imag(G(x))]
    else:
        parts = [G]
    with np.errstate(all="ignore"):
        res = np.zeros(len(X))
        for part in parts:
            br, a = _bracket_batch(part, F, X, h)
            r = np.linalg.norm(br, axis=-1) / np.maximum(1.0, np.linalg.norm(a, axis=-1))
            res = np.maximum(res, np.where(np.isfinite(r), r, np.inf))
    res[np.isinf(res)] = np.nan
    return CertificationReport.from_residuals(name, X, res, tol, flags, {"h": h_rep})


def check_conservative(X_field, points, h=None, tol=None, name="conservative", flags=None):
    """Certify a symmetric Jacobian, ``DX = DX^T``, the closedness condition for a gradient field."""
    P = check_points(points)
    h_rep = default_step(P[0]) if h is None else float(h)
    tol = fd_tolerance(h_rep) if tol is None else float(tol)
    with np.errstate(all="ignore"):
        J = fd_jacobian(_as_field(X_field), P, h)
        res = (np.linalg.norm(J - np.swapaxes(J, 1, 2), axis=(1, 2))
               / np.maximum(1.0, np.linalg.norm(J, axis=(1, 2))))
    return CertificationReport.from_residuals(name, P, res, tol, flags, {"h": h_rep})


class Frame:
    """``n`` complex vector fields, evaluated together as the columns of an ``n x n`` matrix.

    Parameters
    ----------
    matrix : callable
        Maps ``(..., n)`` states to ``(..., n, n)`` matrices whose columns are
        the frame fields.
    dim : int
    """

    def __init__(self, matrix, dim):
        self._matrix = matrix
        self.dim = int(dim)

    @classmethod
    def from_columns(cls, columns):
        columns = list(columns)
        return cls(lambda x: np.stack([np.asarray(c(x)) for c in columns], axis=-1), len(columns))

    @classmethod
    def constant(cls, M):
        M = np.array(M, dtype=complex)
        return cls(lambda x: np.broadcast_to(M, np.shape(x)[:-1] + M.shape).copy(), M.shape[0])

    def __call__(self, x):
        return np.asarray(self._matrix(np.asarray(x, dtype=float)))

    def column(self, i):
        return lambda x: self(x)[..., :, i]

    def columns(self):
        return [self.column(i) for i in range(self.dim)]

    def dual(self, threshold=FRAME_COND_THRESHOLD):
        """The frame of :func:`invert_frame`; singular points evaluate to NaN."""
        def matrix(x):
            return _invert_batch(self(x), threshold)[0]

        return Frame(matrix, self.dim)


def _invert_batch(E, threshold=FRAME_COND_THRESHOLD):
    E = np.asarray(E, dtype=complex)
    shape = E.shape
    flat = E.reshape((-1,) + shape[-2:])
    out = np.full(flat.shape, np.nan + 0j)
    cond = np.full(flat.shape[0], np.inf)
    finite = np.all(np.isfinite(flat), axis=(1, 2))
    if finite.any():
        cond[finite] = np.linalg.cond(flat[finite])
    ok = cond <= threshold
    if ok.any():
        out[ok] = np.swapaxes(np.linalg.inv(flat[ok]), 1, 2).conj()
    return out.reshape(shape), cond.reshape(shape[:-2])


def invert_frame(frame, x, threshold=FRAME_COND_THRESHOLD):
    """Dual frame at ``x``: the matrix ``[X_1 ... X_n] = ([E_1 ... E_n]^{-1})^*``.

    The columns satisfy ``X^* E = I``.

    Raises
    ------
    SingularFrameError
        The frame matrix at ``x`` has condition number above ``threshold``.
    """
    E = frame(np.asarray(x, dtype=float)) if callable(frame) else np.asarray(frame)
    Xmat, cond = _invert_batch(E, threshold)
    if not np.all(cond <= threshold):
        raise SingularFrameError(float(np.max(cond)), threshold)
    return Xmat


def check_linearizing(X_field, system, expected_c, points, tol=None, h=None,
                      name="linearizing", flags=None):
    """Certify that ``X`` is a linearizing field with constant pairing ``X^* F = c``.

    Two residuals are evaluated per point and the larger is reported:

    * pairing: ``|X(x)^* F(x) - c| / max(1, |c|)``;
    * differentiated form: ``|DX(x)^T F(x) + DF(x)^T X(x)| / max(1, |DX(x)^T F(x)|)``,
      the gradient of the pairing identity. For real ``X`` this coincides with
      ``DX^* F + DF^* X``; transposes (not conjugates) keep it valid for
      complex ``X``.
    """
    P = check_points(points)
    F = _as_field(system)
    X_field = _as_field(X_field)
    h_rep = default_step(P[0]) if h is None else float(h)
    tol = fd_tolerance(h_rep) if tol is None else float(tol)
    c = complex(expected_c)
    with np.errstate(all="ignore"):
        Xv = np.asarray(X_field(P))
        Fv = np.asarray(F(P))
        pairing = np.einsum("mi,mi->m", Xv.conj(), Fv)
        r1 = np.abs(pairing - c) / max(1.0, abs(c))
        JX = fd_jacobian(X_field, P, h)
        JF = fd_jacobian(F, P, h)
        a = np.einsum("mji,mj->mi", JX, Fv)
        b = np.einsum("mji,mj->mi", JF, Xv)
        r2 = np.linalg.norm(a + b, axis=-1) / np.maximum(1.0, np.linalg.norm(a, axis=-1))
    res = np.maximum(r1, r2)
    res = np.where(np.isfinite(r1) & np.isfinite(r2), res, np.nan)
    details = {
        "h": h_rep,
        "expected_c": [c.real, c.imag],
        "max_pairing_residual": float(np.nanmax(r1)) if np.any(np.isfinite(r1)) else None,
        "max_gradient_residual": float(np.nanmax(r2)) if np.any(np.isfinite(r2)) else None,
    }
    return CertificationReport.from_residuals(name, P, res, tol, flags, details)
