"""Adaptive Dormand-Prince 5(4) integration of flows and variational equations.

The stepper advances a batch of independent initial conditions at once. Each
point keeps its own time, step size and status, and every arithmetic
operation is row-wise, so a point's trajectory does not depend on which
other points share its batch.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-9
DEFAULT_TOL = (DEFAULT_ATOL, DEFAULT_RTOL)
DIVERGENCE_NORM = 1e6

COMPLETED = "completed"
DIVERGED = "diverged"
STEP_FAILURE = "step-failure"
_STATUS_NAMES = {0: COMPLETED, 1: DIVERGED, 2: STEP_FAILURE}

# Dormand & Prince (1980) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# quartic continuous extension (Shampine 1986), rows are stages
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MAX_ITER = 1_000_000


def _check_tol(tol):
    atol, rtol = (float(v) for v in tol)
    if not (atol > 0 and rtol > 0):
        raise ValueError("absolute and relative tolerances must be positive")
    return atol, rtol


def _combine(coeffs, K):
    # explicit elementwise accumulation keeps rounding independent of batch size
    acc = None
    for c, k in zip(coeffs, K):
        if c == 0.0:
            continue
        acc = c * k if acc is None else acc + c * k
    return acc


def _project(W, Y):
    # row-wise sums rather than a matmul, so rounding is independent of batch size
    return np.stack([_combine(w, Y.T) for w in W], axis=-1)


def _rms(v):
    return np.sqrt(np.mean(v * v, axis=-1))


class _Stepper:
    """Batch Dormand-Prince stepper with per-point step control.

    ``decay_rate`` makes the absolute tolerance time dependent,
    ``atol * exp(decay_rate * t)``. With a negative rate this keeps the error
    control meaningful for states that decay towards zero exponentially.

    ``modes = (W, x0, rates)`` adds a second error norm on the coordinates
    ``z = (y - x0) @ W.T``, each with absolute tolerance
    ``atol * |w_i| * exp(rates_i * t)`` and the same relative tolerance. A
    step must pass both norms; the modal one is a max norm. Use it when a fast-decaying coordinate is read
    off a state dominated by slower ones.
    """

    def __init__(self, fun, y0, atol, rtol, decay_rate=0.0, norm_dims=None,
                 max_norm=DIVERGENCE_NORM, record=False, modes=None):
        self.fun = fun
        self.y = np.array(y0, dtype=float)
        self.m, self.d = self.y.shape
        self.t = np.zeros(self.m)
        self.atol, self.rtol = atol, rtol
        self.decay_rate = float(decay_rate)
        self.norm_dims = self.d if norm_dims is None else norm_dims
        self.max_norm = max_norm
        self.status = np.zeros(self.m, dtype=np.int8)
        with np.errstate(all="ignore"):
            self.f = np.asarray(fun(self.y), dtype=float)
        self.h = np.full(self.m, np.nan)
        bad = ~np.all(np.isfinite(self.y), axis=-1) | ~np.all(np.isfinite(self.f), axis=-1)
        self.status[bad] = 1
        self.record = record
        self.steps = [[] for _ in range(self.m)] if record else None
        self.modes = None
        if modes is not None:
            W, x0, rates = modes
            W = np.atleast_2d(np.asarray(W))
            x0 = np.zeros(self.d) if x0 is None else np.asarray(x0, dtype=float)
            self.modes = (W, x0, np.asarray(rates, dtype=float), np.linalg.norm(W, axis=1))

    def _atol(self, t):
        if self.decay_rate == 0.0:
            return np.full(t.shape, self.atol)
        return self.atol * np.exp(np.maximum(self.decay_rate * t, -700.0))

    def _modal_norm(self, t, y, y_new, err):
        W, x0, rates, wn = self.modes
        zs = np.maximum(np.abs(_project(W, y - x0)), np.abs(_project(W, y_new - x0)))
        atol = self.atol * wn * np.exp(np.maximum(rates * t[:, None], -700.0))
        # max norm: every coordinate is an output in its own right
        return np.max(np.abs(_project(W, err)) / (atol + self.rtol * zs), axis=-1)

    def _initial_step(self, idx, span):
        y, f = self.y[idx], self.f[idx]
        scale = self._atol(self.t[idx])[:, None] + self.rtol * np.abs(y)
        d0 = _rms(y / scale)
        d1 = _rms(f / scale)
        small = (d0 < 1e-5) | (d1 < 1e-5)
        h0 = np.where(small, 1e-6, 0.01 * d0 / np.where(small, 1.0, d1))
        h0 = np.minimum(h0, span)
        with np.errstate(all="ignore"):
            f1 = np.asarray(self.fun(y + h0[:, None] * f), dtype=float)
            d2 = _rms((f1 - f) / scale) / h0
        dmax = np.maximum(d1, d2)
        tiny = ~(dmax > 1e-15)
        h1 = np.where(tiny, np.maximum(1e-6, h0 * 1e-3),
                      (0.01 / np.where(tiny, 1.0, dmax)) ** 0.2)
        h1 = np.where(np.isfinite(h1), h1, 1e-6)
        return np.minimum(100 * h0, h1)

    def advance(self, target):
        """Integrate every live point up to its ``target`` time (scalar or per point)."""
        target = np.broadcast_to(np.asarray(target, dtype=float), (self.m,))
        act = np.flatnonzero((self.status == 0) & (self.t < target))
        if act.size:
            fresh = act[np.isnan(self.h[act])]
            if fresh.size:
                self.h[fresh] = self._initial_step(fresh, target[fresh] - self.t[fresh])
        for _ in range(_MAX_ITER):
            if act.size == 0:
                return
            self._attempt(act, target[act])
            act = act[(self.status[act] == 0) & (self.t[act] < target[act])]
        raise RuntimeError("integration exceeded the iteration budget")

    def _attempt(self, idx, tgt):
        y, t, f = self.y[idx], self.t[idx], self.f[idx]
        span = tgt - t
        h = np.minimum(self.h[idx], span)
        last = self.h[idx] >= span
        hc = h[:, None]
        K = np.empty((7,) + y.shape)
        K[0] = f
        with np.errstate(all="ignore"):
            for s in range(1, 6):
                ys = y + hc * _combine(_A[s], K[:s])
                K[s] = self.fun(ys)
            y_new = y + hc * _combine(_B, K[:6])
            K[6] = self.fun(y_new)
            err = hc * _combine(_E, K)
            scale = self._atol(t)[:, None] + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = _rms(err / scale)
            if self.modes is not None:
                en = np.maximum(en, self._modal_norm(t, y, y_new, err))
        finite = np.isfinite(en) & np.all(np.isfinite(y_new), axis=-1)
        accept = finite & (en <= 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(en > 0, _SAFETY * en ** -0.2, _MAX_FACTOR)
        factor = np.where(finite, np.clip(factor, _MIN_FACTOR, _MAX_FACTOR), _MIN_FACTOR)
        # no growth right after a rejection (Hairer's heuristic)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h_next = h * factor

        ai = idx[accept]
        t_new = np.where(last, tgt, t + h)[accept]
        if self.record:
            Ka, ta, ha = K[:, accept], t[accept], h[accept]
            ya, yn = y[accept], y_new[accept]
            for j, p in enumerate(ai):
                self.steps[p].append((ta[j], t_new[j], ha[j], ya[j], yn[j], Ka[:, j]))
        self.t[ai] = t_new
        self.y[ai] = y_new[accept]
        self.f[ai] = K[6][accept]
        self.h[idx] = h_next

        norms = np.linalg.norm(y_new[accept][:, : self.norm_dims], axis=-1)
        self.status[ai[~(norms <= self.max_norm)]] = 1
        underflow = h_next < 1e-13 * np.maximum(1.0, np.abs(t + h))
        self.status[idx[underflow & (self.status[idx] == 0)]] = 2

    def status_names(self):
        return np.array([_STATUS_NAMES[int(s)] for s in self.status], dtype=object)


@dataclass
class Trajectory:
    """Accepted steps of one integration, with dense output.

    ``times`` and ``states`` hold the step endpoints. Calling the trajectory
    evaluates the quartic continuous extension at arbitrary times in
    ``[times[0], times[-1]]``.
    """

    times: np.ndarray
    states: np.ndarray
    status: str
    _t_old: np.ndarray = dc_field(default=None, repr=False)
    _h: np.ndarray = dc_field(default=None, repr=False)
    _y_old: np.ndarray = dc_field(default=None, repr=False)
    _Q: np.ndarray = dc_field(default=None, repr=False)

    @property
    def final(self):
        return self.states[-1]

    @property
    def t_final(self):
        return self.times[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if self._Q is None or len(self._h) == 0:
            out = np.broadcast_to(self.states[-1], t.shape + self.states.shape[1:]).copy()
            return out[0] if scalar else out
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("requested time outside the integrated interval")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self._h) - 1)
        s = (t - self._t_old[k]) / self._h[k]
        powers = np.stack([s, s**2, s**3, s**4], axis=-1)
        out = self._y_old[k] + self._h[k][:, None] * np.einsum("kdj,kj->kd", self._Q[k], powers)
        return out[0] if scalar else out


def _trajectory_from_steps(y0, steps, status):
    if not steps:
        return Trajectory(np.array([0.0]), np.asarray(y0, dtype=float)[None, :].copy(), status)
    t_old = np.array([s[0] for s in steps])
    times = np.concatenate([[t_old[0]], [s[1] for s in steps]])
    h = np.array([s[2] for s in steps])
    y_old = np.array([s[3] for s in steps])
    states = np.vstack([y_old[:1], [s[4] for s in steps]])
    K = np.array([s[5] for s in steps])                    # (k, 7, d)
    Q = np.einsum("ksd,sj->kdj", K, _P)
    return Trajectory(times, states, status, t_old, h, y_old, Q)


def _prepare(system, x, T):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (system.dim,):
        raise ValueError(f"state must have length {system.dim}")
    T = float(T)
    if not T >= 0:
        raise ValueError("duration T must be non-negative")
    return x, T


def flow(system, x, T, tol=DEFAULT_TOL, *, decay_rate=0.0):
    """Integrate ``x' = F(x)`` from ``x`` for a duration ``T``.

    Returns
    -------
    Trajectory
        With status ``completed`` the last state is ``Phi(T, x)``. ``diverged``
        means the state norm exceeded ``DIVERGENCE_NORM``; ``step-failure``
        means the step size underflowed.
    """
    x, T = _prepare(system, x, T)
    atol, rtol = _check_tol(tol)
    stepper = _Stepper(system.rhs, x[None, :], atol, rtol, decay_rate, record=True)
    stepper.advance(T)
    return _trajectory_from_steps(x, stepper.steps[0], stepper.status_names()[0])


def flow_batch(system, X, T, tol=DEFAULT_TOL, *, decay_rate=0.0):
    """Final states ``Phi(T, x)`` for a batch of initial conditions.

    ``T`` is a scalar or one duration per point. Returns ``(states, status)``
    where ``status`` is an object array of status names.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    atol, rtol = _check_tol(tol)
    T = np.broadcast_to(np.asarray(T, dtype=float), (X.shape[0],))
    if np.any(~(T >= 0)):
        raise ValueError("durations must be non-negative")
    stepper = _Stepper(system.rhs, X, atol, rtol, decay_rate)
    stepper.advance(T)
    return stepper.y.copy(), stepper.status_names()


def variational_field(system):
    """Right-hand side of the state plus state-transition-matrix system."""
    n = system.dim

    def fun(z):
        x = z[..., :n]
        M = z[..., n:].reshape(z.shape[:-1] + (n, n))
        dM = system.jac(x) @ M
        return np.concatenate([system.rhs(x), dM.reshape(z.shape[:-1] + (n * n,))], axis=-1)

    return fun


def flow_with_sensitivity(system, x, T, tol=DEFAULT_TOL, *, decay_rate=0.0):
    """Flow plus the state-transition matrix ``d Phi(T, x) / dx``.

    Solves ``M' = DF(Phi(t, x)) M`` with ``M(0) = I`` alongside the state.
    Returns ``(trajectory, M)``; the trajectory carries state components only.
    """
    x, T = _prepare(system, x, T)
    atol, rtol = _check_tol(tol)
    n = system.dim
    z0 = np.concatenate([x, np.eye(n).reshape(-1)])
    stepper = _Stepper(variational_field(system), z0[None, :], atol, rtol, decay_rate,
                       norm_dims=n, record=True)
    stepper.advance(T)
    full = _trajectory_from_steps(z0, stepper.steps[0], stepper.status_names()[0])
    M = full.states[-1, n:].reshape(n, n).copy()
    traj = Trajectory(full.times, full.states[:, :n].copy(), full.status,
                      full._t_old, full._h,
                      None if full._y_old is None else full._y_old[:, :n],
                      None if full._Q is None else full._Q[:, :n])
    return traj, M


def flow_with_sensitivity_batch(system, X, T, tol=DEFAULT_TOL, *, decay_rate=0.0):
    """Batch version of :func:`flow_with_sensitivity`; returns ``(states, M, status)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    atol, rtol = _check_tol(tol)
    m, n = X.shape
    Z0 = np.concatenate([X, np.broadcast_to(np.eye(n).reshape(-1), (m, n * n))], axis=-1)
    stepper = _Stepper(variational_field(system), Z0, atol, rtol, decay_rate, norm_dims=n)
    stepper.advance(T)
    return (stepper.y[:, :n].copy(), stepper.y[:, n:].reshape(m, n, n).copy(),
            stepper.status_names())
