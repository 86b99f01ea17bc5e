"""Principal eigenfunctions from the limit ``psi_i(x) = lim e^{-lambda_i t} w_i^* Phi(t, x)``."""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.integrate import quad_vec

from .._parallel import chunked_map
from .._validation import check_index, check_point, check_points, check_positive
from ..dynamics.integrate import DEFAULT_TOL, _Stepper, _check_tol, flow, flow_with_sensitivity_batch
from ..exceptions import DivergedTrajectoryError

CONVERGED = "converged"
DIVERGED_TRAJECTORY = "diverged-trajectory"
NON_CONVERGENT = "non-convergent"
SINGULAR = "singular"
STATUSES = (CONVERGED, DIVERGED_TRAJECTORY, NON_CONVERGENT, SINGULAR)

EXPONENT_GUARD = 600.0


@dataclass(frozen=True)
class ConvergenceSchedule:
    """Horizons ``T0, T0 g, T0 g^2, ...`` capped by ``Tmax`` (which is always the last horizon)."""

    T0: float = 4.0
    growth: float = 1.5
    Tmax: float = 64.0
    rel_tol: float = 1e-6
    floor: float = 1e-12

    def __post_init__(self):
        check_positive(self.T0, "T0")
        check_positive(self.rel_tol, "rel_tol")
        check_positive(self.floor, "floor")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if not self.Tmax >= self.T0:
            raise ValueError("Tmax must be at least T0")

    def horizons(self):
        out = []
        k = 0
        while True:
            T = self.T0 * self.growth**k
            if T >= self.Tmax * (1 - 1e-12):
                break
            out.append(T)
            k += 1
        out.append(float(self.Tmax))
        return out

    def to_dict(self):
        return {"T0": self.T0, "growth": self.growth, "Tmax": self.Tmax,
                "rel_tol": self.rel_tol, "floor": self.floor}


def _decay_rate(spec):
    return float(np.min(np.real(spec.eigenvalues)))


def scale_by_exponential(c, lam, T):
    """``exp(-lam T) c`` formed in log space; returns ``(value, guard_tripped)``.

    The magnitude is ``exp(log|c| - Re(lam) T)`` and the phase
    ``arg(c) - Im(lam) T``. When ``|Re(lam) T|`` exceeds ``EXPONENT_GUARD`` the
    product is not formed and NaN is returned with the guard flag set.
    """
    c = np.asarray(c, dtype=complex)
    lam = np.asarray(lam, dtype=complex)
    expo = -lam.real * T
    guard = np.abs(expo) > EXPONENT_GUARD
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mag = np.exp(np.log(np.abs(c)) + expo)
        phase = np.angle(c) - lam.imag * T
        out = mag * np.exp(1j * phase)
    out = np.where(c == 0, 0.0 + 0.0j, out)
    return np.where(guard, np.nan + 0j, out), np.broadcast_to(guard, out.shape)


def _modes(spec, indices):
    # error control on the coordinates the estimator rescales
    lam = np.asarray(spec.eigenvalues)[indices]
    return spec.left_vectors[indices], spec.equilibrium, lam.real


def _coordinates(spec, Y, indices):
    Y = np.asarray(Y, dtype=float)
    if spec.equilibrium is not None:
        Y = Y - spec.equilibrium
    W = spec.left_vectors[indices]
    return np.stack([sum(W[k, j] * Y[:, j] for j in range(Y.shape[1]))
                     for k in range(len(indices))], axis=-1)


def _estimate_chunk(system, spec, indices, X, sched, tol):
    atol, rtol = _check_tol(tol)
    lam = np.asarray(spec.eigenvalues)[indices]
    m, k = len(X), len(indices)
    horizons = sched.horizons()
    values = np.full((m, k), np.nan + 0j)
    status = np.full((m, k), NON_CONVERGENT, dtype=object)
    conv_T = np.full((m, k), np.nan)
    rel = np.full((m, k), np.nan)
    history = np.full((m, k, len(horizons)), np.nan + 0j)
    pending = np.ones((m, k), dtype=bool)
    prev = None
    stepper = _Stepper(system.rhs, X, atol, rtol, _decay_rate(spec), modes=_modes(spec, indices))
    for j, T in enumerate(horizons):
        live = pending.any(axis=1) & (stepper.status == 0)
        stepper.advance(np.where(live, T, stepper.t))
        failed = pending & (stepper.status != 0)[:, None]
        status[failed] = DIVERGED_TRAJECTORY
        pending &= ~failed
        est, guard = scale_by_exponential(_coordinates(spec, stepper.y, indices), lam[None, :], T)
        # a tripped guard keeps the last finite estimate and ends the point
        pending &= ~guard
        upd = pending
        history[:, :, j] = np.where(upd, est, np.nan)
        values[upd] = est[upd]
        conv_T[upd] = T
        if prev is not None:
            with np.errstate(invalid="ignore", divide="ignore"):
                change = np.abs(est - prev) / np.maximum(np.abs(prev), sched.floor)
            rel[upd] = change[upd]
            done = pending & (change <= sched.rel_tol)
            status[done] = CONVERGED
            pending &= ~done
        prev = est
        if not pending.any():
            break
    return values, status, conv_T, rel, history


@dataclass
class EstimateInfo:
    status: str
    converged_T: float
    last_rel_change: float
    history: list = dc_field(default_factory=list)


def estimate_points(system, spec, X, indices=None, schedule=None, tol=DEFAULT_TOL, threads=1):
    """Scheduled estimates of several eigenfunctions at a batch of points.

    One trajectory per point serves every requested index. Returns a dict of
    arrays with shape ``(m, k)``: ``values``, ``status``, ``converged_T``,
    ``last_rel_change``; plus ``history`` ``(m, k, n_horizons)`` and
    ``horizons``.
    """
    sched = schedule or ConvergenceSchedule()
    X = check_points(X, system.dim)
    indices = list(range(spec.dim)) if indices is None else [check_index(i, spec.dim) for i in indices]
    out = chunked_map(lambda c: _estimate_chunk(system, spec, indices, c, sched, tol), X, threads)
    keys = ("values", "status", "converged_T", "last_rel_change", "history")
    res = dict(zip(keys, out))
    res["horizons"] = sched.horizons()
    return res


def estimate_eigenfunction(system, spec, i, x, schedule=None, tol=DEFAULT_TOL):
    """Estimate ``psi_i(x)`` by extending the horizon until the estimate settles.

    Returns
    -------
    value : complex
        The last estimate formed (NaN if the trajectory failed first).
    info : EstimateInfo
        ``status`` is ``converged`` once two consecutive horizons agree to
        ``rel_tol``; ``non-convergent`` if ``Tmax`` is reached first or the
        exponential guard trips; ``diverged-trajectory`` if integration fails.
        ``history`` lists ``(T, estimate)`` pairs.
    """
    x = check_point(x, system.dim)
    i = check_index(i, spec.dim)
    res = estimate_points(system, spec, x[None, :], [i], schedule, tol)
    hist = [(T, complex(v)) for T, v in zip(res["horizons"], res["history"][0, 0]) if np.isfinite(v)]
    info = EstimateInfo(res["status"][0, 0], float(res["converged_T"][0, 0]),
                        float(res["last_rel_change"][0, 0]), hist)
    return complex(res["values"][0, 0]), info


@dataclass
class EigenfunctionField:
    """Estimates of one eigenfunction over a grid, in row-major point order."""

    grid: object
    index: int
    eigenvalue: complex
    points: np.ndarray
    values: np.ndarray
    converged_T: np.ndarray
    last_rel_change: np.ndarray
    status: np.ndarray
    left_vector: np.ndarray = None
    schedule: ConvergenceSchedule = None

    @property
    def all_converged(self):
        return bool(np.all(self.status == CONVERGED))

    def values_on_grid(self):
        return self.values.reshape(self.grid.shape)

    def with_singular(self, rel=1e-6):
        """Copy with converged points where ``|psi| <= rel * max |psi|`` marked ``singular``.

        These are the points excluded from anything that divides by ``psi``.
        """
        finite = np.isfinite(self.values)
        top = np.max(np.abs(self.values[finite])) if finite.any() else 0.0
        status = self.status.copy()
        status[(status == CONVERGED) & (np.abs(self.values) <= rel * top)] = SINGULAR
        return replace(self, status=status)


def estimate_fields(system, spec, grid, indices=None, schedule=None, tol=DEFAULT_TOL, threads=1):
    """One :class:`EigenfunctionField` per requested index, sharing trajectories."""
    sched = schedule or ConvergenceSchedule()
    if grid.dim != system.dim:
        raise ValueError("grid dimension does not match the system")
    indices = list(range(spec.dim)) if indices is None else list(indices)
    pts = grid.points()
    res = estimate_points(system, spec, pts, indices, sched, tol, threads)
    return [
        EigenfunctionField(
            grid, i, complex(spec.eigenvalues[i]), pts, res["values"][:, c],
            res["converged_T"][:, c], res["last_rel_change"][:, c], res["status"][:, c],
            np.asarray(spec.left_vector(i)), sched,
        )
        for c, i in enumerate(indices)
    ]


def estimate_field(system, spec, i, grid, schedule=None, tol=DEFAULT_TOL, threads=1):
    """Apply :func:`estimate_eigenfunction` at every grid point."""
    return estimate_fields(system, spec, grid, [check_index(i, spec.dim)], schedule, tol, threads)[0]


def _at_horizon_chunk(system, spec, indices, X, T, tol):
    atol, rtol = _check_tol(tol)
    stepper = _Stepper(system.rhs, X, atol, rtol, _decay_rate(spec), modes=_modes(spec, indices))
    stepper.advance(T)
    lam = np.asarray(spec.eigenvalues)[indices]
    est, guard = scale_by_exponential(_coordinates(spec, stepper.y, indices), lam[None, :], T)
    est[stepper.status != 0] = np.nan
    return est, stepper.status_names()


def eigenfunctions_at_horizon(system, spec, X, T, indices=None, tol=DEFAULT_TOL, threads=1):
    """Fixed-horizon estimates ``e^{-lambda_i T} w_i^* Phi(T, x)``; smooth in ``x``.

    Returns ``(values (m, k), trajectory_status (m,))``; failed trajectories give NaN.
    """
    X = check_points(X, system.dim)
    T = check_positive(float(T), "T", strict=False)
    indices = list(range(spec.dim)) if indices is None else [check_index(i, spec.dim) for i in indices]
    return chunked_map(lambda c: _at_horizon_chunk(system, spec, indices, c, T, tol), X, threads)


def eigenfunction_jacobian(system, spec, X, T, indices=None, tol=DEFAULT_TOL):
    """Values and gradients of the fixed-horizon estimates via the variational equation.

    The gradient of ``e^{-lambda_i T} w_i^* Phi(T, x)`` is
    ``e^{-lambda_i T} w_i^* DPhi(T, x)``. Returns ``(values (m, k),
    gradients (m, k, n), status (m,))``; gradients are plain partial
    derivatives.
    """
    X = check_points(X, system.dim)
    indices = list(range(spec.dim)) if indices is None else [check_index(i, spec.dim) for i in indices]
    Y, M, status = flow_with_sensitivity_batch(system, X, T, tol, decay_rate=_decay_rate(spec))
    lam = np.asarray(spec.eigenvalues)[indices]
    vals, _ = scale_by_exponential(_coordinates(spec, Y, indices), lam[None, :], T)
    W = spec.left_vectors[indices]
    grads = np.exp(-lam * T)[None, :, None] * np.einsum("kj,mjl->mkl", W, M)
    bad = status != "completed"
    vals[bad] = np.nan
    grads[bad] = np.nan
    return vals, grads, status


class Eigenfunction:
    """Callable principal eigenfunction ``psi_i``.

    With ``horizon`` set, evaluation uses the fixed-horizon estimate, which is
    smooth in ``x`` and therefore safe to finite-difference. Without it, the
    convergence schedule is used and points that do not converge evaluate
    to NaN.
    """

    def __init__(self, system, spec, index, horizon=None, schedule=None, tol=DEFAULT_TOL, threads=1):
        self.system = system
        self.spec = spec
        self.index = check_index(index, spec.dim)
        self.horizon = None if horizon is None else check_positive(float(horizon), "horizon")
        self.schedule = schedule or ConvergenceSchedule()
        self.tol = tol
        self.threads = threads

    @property
    def eigenvalue(self):
        return complex(self.spec.eigenvalues[self.index])

    def at_horizon(self, T):
        return Eigenfunction(self.system, self.spec, self.index, T, self.schedule, self.tol, self.threads)

    def smooth(self):
        """Fixed-horizon version (``Tmax`` when no horizon is set), safe to differentiate."""
        return self if self.horizon is not None else self.at_horizon(self.schedule.Tmax)

    def _flat(self, X):
        X = np.asarray(X, dtype=float)
        return X.reshape(-1, self.system.dim), X.shape[:-1]

    def __call__(self, X):
        flat, shape = self._flat(X)
        if self.horizon is not None:
            vals, _ = eigenfunctions_at_horizon(self.system, self.spec, flat, self.horizon,
                                                [self.index], self.tol, self.threads)
            out = vals[:, 0]
        else:
            res = estimate_points(self.system, self.spec, flat, [self.index], self.schedule,
                                  self.tol, self.threads)
            out = np.where(res["status"][:, 0] == CONVERGED, res["values"][:, 0], np.nan)
        return out.reshape(shape)

    def gradient(self, X):
        """Plain partial derivatives via the variational equation at the horizon (``Tmax`` if unset)."""
        flat, shape = self._flat(X)
        T = self.horizon if self.horizon is not None else self.schedule.Tmax
        _, grads, _ = eigenfunction_jacobian(self.system, self.spec, flat, T, [self.index], self.tol)
        return grads[:, 0, :].reshape(shape + (self.system.dim,))

    def __repr__(self):
        return (f"Eigenfunction({self.system.name!r}, index={self.index}, "
                f"eigenvalue={self.eigenvalue:.6g}, horizon={self.horizon})")


def path_integral_eigenfunction(system, spec, i, x, T_end, quad_tol=1e-10, tol=DEFAULT_TOL):
    """Variation-of-constants form of the eigenfunction, truncated at ``T_end``.

    ``w_i^* x + int_0^T_end e^{-lambda_i s} w_i^* F_n(Phi(s, x)) ds`` with the
    nonlinear remainder ``F_n(x) = F(x) - DF(x0) (x - x0)``. The integral is
    taken by adaptive Gauss-Kronrod quadrature over the dense output of one
    trajectory.

    Raises
    ------
    DivergedTrajectoryError
        The trajectory from ``x`` did not complete.
    """
    x = check_point(x, system.dim)
    i = check_index(i, spec.dim)
    T_end = check_positive(float(T_end), "T_end", strict=False)
    lam = complex(spec.eigenvalues[i])
    if abs(lam.real) * T_end > EXPONENT_GUARD:
        raise ValueError("T_end too large for the exponential weight")
    w = spec.left_vectors[i]
    x0 = np.asarray(system.equilibrium)
    J0 = np.asarray(spec.jacobian if spec.jacobian is not None else system.jac(x0))
    base = complex(w @ (x - x0))
    if T_end == 0:
        return base
    traj = flow(system, x, T_end, tol, decay_rate=_decay_rate(spec))
    if traj.status != "completed":
        raise DivergedTrajectoryError(f"trajectory from {x.tolist()} {traj.status}")

    def integrand(s):
        y = traj(s)
        fn = system.rhs(y) - J0 @ (y - x0)
        v = np.exp(-lam * s) * (w @ fn)
        return np.array([v.real, v.imag])

    # the dense output is continuous across steps, so plain adaptive
    # subdivision converges; step breakpoints only multiply the work
    eps_abs = quad_tol * max(abs(base), 1e-12)
    val, _ = quad_vec(integrand, 0.0, T_end, epsabs=eps_abs, epsrel=quad_tol)
    return base + complex(val[0], val[1])
