"""Checks and constructions built on computed eigenfunctions: the exponential
evolution property, products, gradients, dynamics recovery and the commuting
symmetry frame."""

from dataclasses import dataclass
import numbers

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .._validation import check_point, check_points, check_positive
from ..dynamics.integrate import DEFAULT_TOL, flow_batch
from ..exceptions import BelowFloorError, EvaluationError, SingularFrameError
from ..geometry import FRAME_COND_THRESHOLD, CertificationReport, Frame, _invert_batch, fd_jacobian
from .estimate import Eigenfunction, EigenfunctionField, eigenfunction_jacobian

RELATIVE_FLOOR = 1e-6


def field_interpolant(field):
    """Complex interpolant of an :class:`EigenfunctionField` over its grid.

    Cubic along axes with at least four nodes, linear otherwise; points
    outside the grid evaluate to NaN.
    """
    axes = field.grid.axes()
    method = "cubic" if all(len(a) >= 4 for a in axes) else "linear"
    if any(len(a) < 2 for a in axes):
        raise ValueError("interpolation needs at least two nodes per axis")
    vals = field.values_on_grid()
    parts = [RegularGridInterpolator(axes, part, method=method, bounds_error=False, fill_value=np.nan)
             for part in (vals.real, vals.imag)]

    def psi(X):
        X = np.asarray(X, dtype=float)
        return parts[0](X) + 1j * parts[1](X)

    return psi


def verify_eigenfunction_property(psi, lam, system, points, t_probe, tol=1e-2, floor=1e-12,
                                  flow_tol=DEFAULT_TOL, name="eigenproperty"):
    """Certify ``psi(Phi(t, x)) = e^{lam t} psi(x)`` at each point.

    Residual ``|psi(Phi(t, x)) - e^{lam t} psi(x)| / max(|psi(x)|, floor)``.
    ``psi`` is a callable on ``(m, n)`` batches or an :class:`EigenfunctionField`
    (interpolated). Points whose trajectory fails or where ``psi`` is not
    available (NaN, e.g. not converged) are flagged and excluded.
    """
    if isinstance(psi, EigenfunctionField):
        psi = field_interpolant(psi)
    X = check_points(points, system.dim)
    t_probe = check_positive(float(t_probe), "t_probe", strict=False)
    Y, status = flow_batch(system, X, t_probe, flow_tol)
    with np.errstate(all="ignore"):
        a = np.broadcast_to(np.asarray(psi(X)), (len(X),))
        b = np.broadcast_to(np.asarray(psi(Y)), (len(X),))
        res = np.abs(b - np.exp(complex(lam) * t_probe) * a) / np.maximum(np.abs(a), floor)
    flags = {}
    for k in range(len(X)):
        if status[k] != "completed":
            flags[k] = "diverged-trajectory"
        elif not np.isfinite(a[k]):
            flags[k] = "not-converged"
        elif not np.isfinite(b[k]):
            flags[k] = "not-converged-after-flow"
    lam = complex(lam)
    return CertificationReport.from_residuals(
        name, X, res, tol, flags, {"eigenvalue": [lam.real, lam.imag], "t_probe": t_probe, "floor": floor})


def _is_one(psi):
    return isinstance(psi, numbers.Number) and psi == 1


def product_eigenfunction(psi1, mu1, psi2, mu2):
    """Pointwise product of two eigenfunctions; an eigenfunction at ``mu1 + mu2``.

    A plain constant ``1`` with eigenvalue 0 acts as the identity.
    """
    mu = complex(mu1) + complex(mu2)
    if _is_one(psi2) and mu2 == 0:
        return psi1, complex(mu1)
    if _is_one(psi1) and mu1 == 0:
        return psi2, complex(mu2)
    f1 = psi1 if callable(psi1) else (lambda X, c=psi1: np.full(np.shape(X)[:-1], c, dtype=complex))
    f2 = psi2 if callable(psi2) else (lambda X, c=psi2: np.full(np.shape(X)[:-1], c, dtype=complex))
    return (lambda X: f1(X) * f2(X)), mu


def power_eigenfunction(psi, mu, k):
    """``psi^k`` with eigenvalue ``k mu`` by repeated products."""
    if int(k) != k or k < 1:
        raise ValueError("power must be a positive integer")
    out, lam = psi, complex(mu)
    for _ in range(int(k) - 1):
        out, lam = product_eigenfunction(out, lam, psi, mu)
    return out, lam


def conjugate_eigenfunction(psi, mu):
    """For a real system ``conj(psi)`` is an eigenfunction at ``conj(mu)``."""
    return (lambda X: np.conj(psi(X))), complex(mu).conjugate()


def _differentiable(psi):
    return psi.smooth() if isinstance(psi, Eigenfunction) else psi


def gradient_field(psi, x, h=None, cross_check=False, rtol=1e-4):
    """Central-difference gradient (plain partials) of a complex scalar field at ``x``.

    An :class:`Eigenfunction` is differentiated at its fixed horizon, where it
    is smooth in ``x``. With ``cross_check`` the result is compared with the
    variational-equation gradient and :class:`EvaluationError` is raised if
    they differ by more than ``rtol`` relative.
    """
    x = check_point(x)
    f = _differentiable(psi)
    with np.errstate(all="ignore"):
        g = np.asarray(fd_jacobian(f, x[None, :], h)[0])
    if not np.all(np.isfinite(g)):
        raise EvaluationError(f"scalar field not finite near {x.tolist()}")
    if cross_check:
        if not hasattr(f, "gradient"):
            raise TypeError("cross-check needs a field with a gradient method")
        ref = np.asarray(f.gradient(x[None, :])[0])
        err = np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-300)
        if not err <= rtol:
            raise EvaluationError(f"finite-difference and sensitivity gradients differ by {err:.2e}")
    return g


def _shared_source(psis):
    if not all(isinstance(p, Eigenfunction) for p in psis):
        return None
    first = psis[0].smooth()
    for p in psis[1:]:
        q = p.smooth()
        if q.system is not first.system or q.spec is not first.spec or q.horizon != first.horizon:
            return None
    return first


def eigenfunction_gradients(psis, X, h=None):
    """Values ``(m, k)`` and plain gradients ``(m, k, n)`` of several eigenfunctions.

    Eigenfunctions that share a system and horizon are differentiated by one
    batched variational solve; anything else falls back to central differences.
    """
    psis = list(psis)
    X = check_points(X)
    src = _shared_source(psis)
    if src is not None:
        vals, grads, _ = eigenfunction_jacobian(src.system, src.spec, X, src.horizon,
                                                [p.index for p in psis], src.tol)
        return vals, grads
    vals, grads = [], []
    for p in psis:
        f = _differentiable(p)
        with np.errstate(all="ignore"):
            vals.append(np.asarray(f(X), dtype=complex))
            grads.append(f.gradient(X) if hasattr(f, "gradient") else fd_jacobian(f, X, h))
    return np.stack(vals, axis=1), np.stack(grads, axis=1)


@dataclass
class FrameSample:
    """Log-gradient frame and its dual at a batch of points.

    ``X`` holds columns ``X_i = conj(grad psi_i / psi_i)`` (so that
    ``X_i^* F = lambda_i``), ``E`` the dual commuting frame with
    ``X^* E = I``. Flagged points carry NaN in both.
    """

    points: np.ndarray
    values: np.ndarray
    X: np.ndarray
    E: np.ndarray
    condition: np.ndarray
    flags: dict


def magnitude_floor(values, rel=RELATIVE_FLOOR):
    """Per-eigenfunction floor ``rel * max |psi_i|`` over a sample, shape ``(k,)``."""
    return rel * np.nanmax(np.abs(np.asarray(values)), axis=0)


def symmetry_frames(psis, X, h=None, floor=1e-12, threshold=FRAME_COND_THRESHOLD):
    """Evaluate the log-gradient frame and the commuting frame at many points.

    ``floor`` is an absolute magnitude floor, scalar or one per eigenfunction.
    Points with some ``|psi_i| <= floor`` are flagged ``below-floor``; points
    whose gradient frame condition number exceeds ``threshold`` are flagged
    ``singular-frame``.
    """
    X = check_points(X)
    vals, grads = eigenfunction_gradients(psis, X, h)
    floor = np.broadcast_to(np.asarray(floor, dtype=float), vals.shape[1:])
    with np.errstate(all="ignore"):
        G = grads / vals[:, :, None]                   # rows: grad log psi_i
    Xcols = np.swapaxes(G, 1, 2).conj()
    low = ~np.all(np.abs(vals) > floor, axis=1)
    Xcols[low] = np.nan
    E, cond = _invert_batch(Xcols, threshold)
    flags = {}
    for k in range(len(X)):
        if low[k]:
            flags[k] = "below-floor"
        elif not cond[k] <= threshold:
            flags[k] = "singular-frame"
            Xcols[k] = np.nan
    return FrameSample(X, vals, Xcols, E, cond, flags)


def symmetry_frame(psis, x, h=None, floor=1e-12, threshold=FRAME_COND_THRESHOLD):
    """Commuting symmetry frame ``[E_1(x) ... E_n(x)]`` from eigenfunction gradients.

    Builds ``X_i = conj(grad psi_i(x) / psi_i(x))``, the gradients of the
    logarithms, and returns the dual frame ``E = (X^*)^{-1}`` as columns.

    Raises
    ------
    BelowFloorError
        Some ``|psi_i(x)|`` is at or below ``floor``.
    SingularFrameError
        The log-gradient frame is near-singular.
    """
    x = check_point(x)
    s = symmetry_frames(psis, x[None, :], h, floor, threshold)
    reason = s.flags.get(0)
    if reason == "below-floor":
        raise BelowFloorError(f"|psi| below floor {floor} at {x.tolist()}")
    if reason == "singular-frame":
        raise SingularFrameError(float(s.condition[0]), threshold)
    return s.E[0]


def symmetry_frame_field(psis, h=None, floor=1e-12, threshold=FRAME_COND_THRESHOLD):
    """The commuting frame as a :class:`Frame`; flagged points evaluate to NaN."""
    psis = list(psis)

    def matrix(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        E = symmetry_frames(psis, flat, h, floor, threshold).E
        return E.reshape(x.shape[:-1] + E.shape[1:])

    return Frame(matrix, len(psis))


def log_gradient_frame_field(psis, h=None, floor=1e-12, threshold=FRAME_COND_THRESHOLD):
    """The conservative linearizing frame ``X_i = conj(grad log psi_i)`` as a :class:`Frame`."""
    psis = list(psis)

    def matrix(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        Xc = symmetry_frames(psis, flat, h, floor, threshold).X
        return Xc.reshape(x.shape[:-1] + Xc.shape[1:])

    return Frame(matrix, len(psis))


@dataclass
class Reconstruction:
    """Recovered vector field at a point: real part, imaginary residual, conditioning."""

    value: np.ndarray
    imag_residual: float
    condition: float


def reconstruct_field(psis, lambdas, X, h=None, threshold=FRAME_COND_THRESHOLD):
    """Recover ``F`` from ``grad psi_i(x) . F(x) = lambda_i psi_i(x)`` at many points.

    Returns ``(F (m, n), imag_residual (m,), condition (m,))``; rows whose
    gradient matrix has condition number above ``threshold`` are NaN. The
    imaginary residual is ``|Im F| / max(1, |Re F|)``.
    """
    X = check_points(X)
    lam = np.asarray(lambdas, dtype=complex)
    vals, D = eigenfunction_gradients(psis, X, h)
    m, n = X.shape
    out = np.full((m, n), np.nan + 0j)
    cond = np.full(m, np.inf)
    finite = np.all(np.isfinite(D), axis=(1, 2)) & np.all(np.isfinite(vals), axis=1)
    if finite.any():
        cond[finite] = np.linalg.cond(D[finite])
    ok = cond <= threshold
    if ok.any():
        out[ok] = np.linalg.solve(D[ok], (lam[None, :] * vals[ok])[..., None])[..., 0]
    imag = np.linalg.norm(out.imag, axis=-1) / np.maximum(1.0, np.linalg.norm(out.real, axis=-1))
    return out.real, imag, cond


def reconstruct_dynamics(psis, lambdas, x, h=None, threshold=FRAME_COND_THRESHOLD):
    """Recover ``F(x)`` by solving the gradient system at a single point.

    Raises
    ------
    SingularFrameError
        The gradient matrix ``[grad psi_1 ... grad psi_n]`` is near-singular.
    """
    x = check_point(x)
    F, imag, cond = reconstruct_field(psis, lambdas, x[None, :], h, threshold)
    if not cond[0] <= threshold:
        raise SingularFrameError(float(cond[0]), threshold)
    return Reconstruction(F[0], float(imag[0]), float(cond[0]))
