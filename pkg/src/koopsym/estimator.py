"""Estimator wrapper: principal eigenfunctions as a fitted state transform."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points
from .dynamics import get_system
from .dynamics.systems import SystemSpec
from .exceptions import ResonanceError
from .koopman import CONVERGED, ConvergenceSchedule, Eigenfunction, estimate_points
from .koopman.estimate import eigenfunction_jacobian, eigenfunctions_at_horizon
from .spectral import check_resonance, linearize


class PrincipalEigenfunctions(TransformerMixin, BaseEstimator):
    """Map states to principal Koopman eigenfunction coordinates ``psi_i(x)``.

    ``fit`` linearizes the system at its equilibrium and applies the
    Hurwitz, diagonalizability and non-resonance gates; no data is learned,
    so ``X`` is only checked for shape. ``transform`` evaluates the limit
    estimator (or the fixed-horizon estimate when ``horizon`` is set).

    Parameters
    ----------
    system : str or SystemSpec
        Registry name, path to a YAML/JSON system file, or a spec.
    params : dict, optional
        Parameter overrides passed to the registry.
    indices : sequence of int, optional
        Eigenvalue indices (zero-based); all by default.
    T0, growth, Tmax, rel_tol, floor : float
        Convergence schedule.
    atol, rtol : float
        Integrator tolerances.
    max_degree : int
        Degree for the non-resonance gate.
    force : bool
        Skip the non-resonance gate.
    n_jobs : int
        Threads for point batches; results do not depend on it.
    horizon : float, optional
        Use the fixed-horizon estimate instead of the schedule.

    Attributes
    ----------
    system_ : SystemSpec
    spectral_ : SpectralData
    resonance_ : ResonanceReport
    eigenvalues_ : ndarray of complex
        Eigenvalues of the selected indices.
    n_features_in_ : int
    """

    def __init__(self, system="vdp-reverse", params=None, indices=None, T0=4.0, growth=1.5,
                 Tmax=64.0, rel_tol=1e-6, floor=1e-12, atol=1e-10, rtol=1e-9, max_degree=10,
                 force=False, n_jobs=1, horizon=None):
        self.system = system
        self.params = params
        self.indices = indices
        self.T0 = T0
        self.growth = growth
        self.Tmax = Tmax
        self.rel_tol = rel_tol
        self.floor = floor
        self.atol = atol
        self.rtol = rtol
        self.max_degree = max_degree
        self.force = force
        self.n_jobs = n_jobs
        self.horizon = horizon

    def _resolve_system(self):
        if isinstance(self.system, SystemSpec):
            return self.system
        return get_system(self.system, **dict(self.params or {}))

    def fit(self, X=None, y=None):
        self.system_ = self._resolve_system()
        self.spectral_ = linearize(self.system_)
        self.resonance_ = check_resonance(self.spectral_, self.max_degree)
        if self.resonance_.resonant and not self.force:
            raise ResonanceError(self.resonance_)
        n = self.system_.dim
        self.indices_ = list(range(n)) if self.indices is None else [int(i) for i in self.indices]
        for i in self.indices_:
            if not 0 <= i < n:
                raise IndexError(f"eigenvalue index {i} out of range for dimension {n}")
        self.schedule_ = ConvergenceSchedule(self.T0, self.growth, self.Tmax, self.rel_tol, self.floor)
        self.eigenvalues_ = np.asarray(self.spectral_.eigenvalues)[self.indices_]
        self.n_features_in_ = n
        if X is not None:
            check_points(X, n)
        return self

    @property
    def _tol(self):
        return (self.atol, self.rtol)

    def estimate(self, X):
        """Full scheduled estimate: dict of ``values``, ``status``, ``converged_T``,
        ``last_rel_change``, ``history`` and ``horizons``."""
        check_is_fitted(self, "spectral_")
        X = check_points(X, self.n_features_in_)
        return estimate_points(self.system_, self.spectral_, X, self.indices_, self.schedule_,
                               self._tol, self.n_jobs)

    def transform(self, X):
        """Complex eigenfunction values, shape ``(m, k)``; NaN where not converged."""
        check_is_fitted(self, "spectral_")
        X = check_points(X, self.n_features_in_)
        if self.horizon is not None:
            vals, _ = eigenfunctions_at_horizon(self.system_, self.spectral_, X, self.horizon,
                                                self.indices_, self._tol, self.n_jobs)
            return vals
        res = self.estimate(X)
        return np.where(res["status"] == CONVERGED, res["values"], np.nan)

    def gradient(self, X):
        """Plain gradients ``(m, k, n)`` at the fixed horizon (``Tmax`` if unset)."""
        check_is_fitted(self, "spectral_")
        X = check_points(X, self.n_features_in_)
        T = self.horizon if self.horizon is not None else self.Tmax
        _, grads, _ = eigenfunction_jacobian(self.system_, self.spectral_, X, T, self.indices_, self._tol)
        return grads

    def eigenfunction(self, i):
        """Callable :class:`Eigenfunction` for eigenvalue index ``i``."""
        check_is_fitted(self, "spectral_")
        return Eigenfunction(self.system_, self.spectral_, i, self.horizon, self.schedule_,
                             self._tol, self.n_jobs)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "spectral_")
        return np.array([f"psi{i + 1}" for i in self.indices_], dtype=object)
