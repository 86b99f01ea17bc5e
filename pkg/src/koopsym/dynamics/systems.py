"""Vector fields, sampling grids and the built-in system registry.

All fields are vectorized: ``field(x)`` accepts an array of shape ``(..., n)``
and returns the same shape; ``jacobian(x)`` returns ``(..., n, n)``.
"""

from dataclasses import dataclass, field as dc_field
from pathlib import Path
import math

import numpy as np
import yaml

from ..exceptions import EquilibriumError, ExpressionError, UnknownSystemError
from .expr import compile_field

EQUILIBRIUM_TOL = 1e-10
JACOBIAN_CHECK_RTOL = 1e-5
_FD_STEP = np.cbrt(np.finfo(float).eps)


def fd_jacobian(fun, x):
    """Central-difference Jacobian of a vectorized field.

    The step for component k is ``cbrt(eps) * max(1, |x_k|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for k in range(n):
        h = _FD_STEP * np.maximum(1.0, np.abs(x[..., k]))
        xp = x.copy()
        xm = x.copy()
        xp[..., k] += h
        xm[..., k] -= h
        # use the actually representable step
        dk = (xp[..., k] - xm[..., k])[..., None]
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / dk)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class SystemSpec:
    """A smooth autonomous system ``x' = F(x)`` with a known equilibrium.

    Parameters
    ----------
    name : str
    dim : int
    field : callable
        Vectorized right-hand side ``F``.
    equilibrium : array_like
        The equilibrium ``x0``; ``|F(x0)|`` must be below ``EQUILIBRIUM_TOL``.
    jacobian : callable, optional
        Vectorized analytic Jacobian. When omitted, :meth:`jac` falls back to
        central differences.
    params : dict
        Named real parameters used to build the field (informational).
    """

    name: str
    dim: int
    field: object
    equilibrium: np.ndarray
    jacobian: object = None
    params: dict = dc_field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        x0 = np.asarray(self.equilibrium, dtype=float).reshape(-1)
        if x0.shape != (self.dim,):
            raise ValueError(f"equilibrium must have length {self.dim}")
        x0.setflags(write=False)
        object.__setattr__(self, "equilibrium", x0)
        object.__setattr__(self, "params", dict(self.params))
        residual = float(np.linalg.norm(self.rhs(x0)))
        if not residual <= EQUILIBRIUM_TOL:
            raise EquilibriumError(
                f"{self.name}: |F(x0)| = {residual:.3e} exceeds {EQUILIBRIUM_TOL:.0e}"
            )
        if self.jacobian is not None:
            self._check_jacobian()

    def _check_jacobian(self, n_points=10, seed=0):
        rng = np.random.default_rng(seed)
        pts = self.equilibrium + rng.uniform(-1.0, 1.0, size=(n_points, self.dim))
        analytic = self.jac(pts)
        numeric = fd_jacobian(self.field, pts)
        err = np.linalg.norm(analytic - numeric, axis=(-2, -1))
        scale = np.maximum(1.0, np.linalg.norm(numeric, axis=(-2, -1)))
        if np.any(err > JACOBIAN_CHECK_RTOL * scale):
            raise ValueError(
                f"{self.name}: analytic Jacobian disagrees with finite differences "
                f"(max relative error {np.max(err / scale):.2e})"
            )

    def rhs(self, x):
        return np.asarray(self.field(np.asarray(x, dtype=float)), dtype=float)

    def jac(self, x):
        x = np.asarray(x, dtype=float)
        if self.jacobian is None:
            return fd_jacobian(self.field, x)
        return np.asarray(self.jacobian(x), dtype=float)

    def scaled(self, c):
        """The time-rescaled system ``x' = c F(x)``."""
        f, J = self.field, self.jacobian
        return SystemSpec(
            name=f"{self.name}*{c:g}",
            dim=self.dim,
            field=lambda x: c * f(x),
            equilibrium=self.equilibrium,
            jacobian=None if J is None else (lambda x: c * J(x)),
            params=self.params,
        )


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned rectangular grid.

    Axes with ``lower == upper`` contribute a single coordinate, which is how
    a one-point grid at the equilibrium is expressed.
    """

    lower: tuple
    upper: tuple
    spacing: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        sp = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if sp.size == 1:
            sp = np.repeat(sp, len(lo))
        if not (len(lo) == len(hi) == len(sp)) or len(lo) == 0:
            raise ValueError("lower, upper and spacing must have matching length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("grid lower bound exceeds upper bound")
        if any(not (s > 0 and math.isfinite(s)) for s in sp):
            raise ValueError("grid spacing must be positive and finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "spacing", tuple(float(s) for s in sp))

    @property
    def dim(self):
        return len(self.lower)

    def axes(self):
        out = []
        for lo, hi, h in zip(self.lower, self.upper, self.spacing):
            count = int(math.floor((hi - lo) / h + 1e-9)) + 1
            out.append(lo + h * np.arange(count))
        return out

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes())

    def points(self):
        """Grid points in row-major order (last axis varies fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @classmethod
    def parse(cls, text):
        """Parse ``lo1,lo2:hi1,hi2:step`` (step may be per-axis, comma separated)."""
        try:
            lo, hi, step = text.split(":")
            return cls(
                tuple(float(v) for v in lo.split(",")),
                tuple(float(v) for v in hi.split(",")),
                tuple(float(v) for v in step.split(",")),
            )
        except ValueError as exc:
            raise ValueError(f"bad grid specification {text!r}: {exc}") from None

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "spacing": list(self.spacing)}


# -- registry ---------------------------------------------------------------


def van_der_pol_reverse(mu=0.5):
    """Reverse-time van der Pol oscillator; the origin is asymptotically stable."""
    mu = float(mu)

    def field(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-x2, x1 - mu * (1.0 - x1**2) * x2], axis=-1)

    def jacobian(x):
        x1, x2 = x[..., 0], x[..., 1]
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 0.0
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = 1.0 + 2.0 * mu * x1 * x2
        J[..., 1, 1] = -mu * (1.0 - x1**2)
        return J

    return SystemSpec(
        "vdp-reverse", 2, field, np.zeros(2), jacobian, {"mu": mu},
        "x1' = -x2, x2' = x1 - mu (1 - x1^2) x2",
    )


def van_der_pol(mu=0.5):
    """Forward-time van der Pol oscillator (unstable origin)."""
    rev = van_der_pol_reverse(mu)
    f, J = rev.field, rev.jacobian
    return SystemSpec(
        "vdp", 2, lambda x: -f(x), np.zeros(2), lambda x: -J(x), {"mu": float(mu)},
        "x1' = x2, x2' = -x1 + mu (1 - x1^2) x2",
    )


def resonant_quadratic():
    """``x1' = -x1, x2' = -2 x2 + x1^2``: eigenvalues -1, -2 with 2(-1) = -2."""

    def field(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-x1, -2.0 * x2 + x1**2], axis=-1)

    def jacobian(x):
        x1 = x[..., 0]
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = -1.0
        J[..., 1, 0] = 2.0 * x1
        J[..., 1, 1] = -2.0
        return J

    return SystemSpec(
        "resonant-quadratic", 2, field, np.zeros(2), jacobian, {},
        "x1' = -x1, x2' = -2 x2 + x1^2",
    )


def linear_system(A=None, name="linear", **entries):
    """Linear system ``x' = A x``.

    ``A`` may be given directly or as entries ``a11``, ``a12``, ... (1-based).
    Entries override the corresponding elements of ``A``. The default is
    ``diag(-1, -2)``.
    """
    if A is None:
        if entries:
            n = int(round(math.sqrt(len(entries))))
            A = np.zeros((n, n))
        else:
            A = np.diag([-1.0, -2.0])
    A = np.array(A, dtype=float)
    for key, value in entries.items():
        if len(key) != 3 or key[0] != "a" or not key[1:].isdigit():
            raise ValueError(f"linear system parameters are a<i><j>; got {key!r}")
        i, j = int(key[1]) - 1, int(key[2]) - 1
        if not (0 <= i < A.shape[0] and 0 <= j < A.shape[1]):
            raise ValueError(f"entry {key} outside a {A.shape[0]}x{A.shape[1]} matrix")
        A[i, j] = float(value)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    n = A.shape[0]
    A.setflags(write=False)
    params = {f"a{i + 1}{j + 1}": float(A[i, j]) for i in range(n) for j in range(n)} if n <= 9 else {}

    def field(x):
        x = np.asarray(x, dtype=float)
        cols = [sum(A[i, j] * x[..., j] for j in range(n)) for i in range(n)]
        return np.stack(cols, axis=-1)

    return SystemSpec(
        name, n, field, np.zeros(n),
        lambda x: np.broadcast_to(A, np.shape(x)[:-1] + (n, n)).copy(), params,
        "x' = A x",
    )


_FACTORIES = {
    "vdp-reverse": van_der_pol_reverse,
    "vdp": van_der_pol,
    "resonant-quadratic": resonant_quadratic,
    "linear": linear_system,
}


def registry():
    """Default instances of every built-in system."""
    return [factory() for factory in _FACTORIES.values()]


def get_system(name, **params):
    """Look up a built-in system by name, or load an expression config by path."""
    if name in _FACTORIES:
        try:
            return _FACTORIES[name](**params)
        except TypeError as exc:
            raise ValueError(f"bad parameters for {name!r}: {exc}") from None
    path = Path(name)
    if path.suffix.lower() in {".yaml", ".yml", ".json"} and path.exists():
        return load_system_config(path, **params)
    raise UnknownSystemError(name)


def load_system_config(source, **overrides):
    """Build a :class:`SystemSpec` from a YAML/JSON config.

    Schema::

        name: my-system              # optional, defaults to the file stem
        dim: 2                       # optional, defaults to len(rhs)
        equilibrium: [0, 0]          # optional, defaults to the origin
        params: {mu: 0.5}            # optional
        rhs:
          - "-x2"
          - "x1 - mu*(1 - x1^2)*x2"

    ``source`` is a path or an already-loaded mapping. Keyword overrides
    replace entries of ``params``.
    """
    if isinstance(source, dict):
        cfg, default_name = source, "user"
    else:
        path = Path(source)
        with path.open() as fh:
            cfg = yaml.safe_load(fh)
        default_name = path.stem
    if not isinstance(cfg, dict) or "rhs" not in cfg:
        raise ExpressionError("system config must be a mapping with an 'rhs' list")
    rhs = cfg["rhs"]
    if isinstance(rhs, str) or not all(isinstance(r, (str, int, float)) for r in rhs):
        raise ExpressionError("'rhs' must be a list of expression strings")
    rhs = [str(r) for r in rhs]
    dim = int(cfg.get("dim", len(rhs)))
    if dim != len(rhs):
        raise ExpressionError(f"dim = {dim} but rhs has {len(rhs)} components")
    params = {k: float(v) for k, v in (cfg.get("params") or {}).items()}
    for k, v in overrides.items():
        if k not in params:
            raise ValueError(f"unknown parameter {k!r} for system config")
        params[k] = float(v)
    eq = cfg.get("equilibrium", [0.0] * dim)
    return SystemSpec(
        str(cfg.get("name", default_name)), dim, compile_field(rhs, params), eq,
        None, params, "; ".join(rhs),
    )
