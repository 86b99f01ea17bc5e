"""Linearization at the equilibrium: eigenvalues, bi-orthonormal eigenvectors
and the non-resonance test."""

from dataclasses import dataclass
from itertools import combinations_with_replacement
import math

import numpy as np

from .exceptions import NotDiagonalizableError, NotHurwitzError

DIAGONALIZABLE_COND = 1e10
RESONANCE_RTOL = 1e-9
BETA_MARGIN = 1e-3


@dataclass(frozen=True)
class SpectralData:
    """Eigendecomposition ``DF(x0) = V diag(lambda) W`` with ``W V = I``.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n,)
        Canonically ordered: descending real part, then ascending ``|imag|``,
        with the positive-imaginary member of a conjugate pair first.
    right_vectors : ndarray, shape (n, n)
        Columns ``v_i``, unit norm, largest entry real and positive.
    left_vectors : ndarray, shape (n, n)
        Rows ``w_i^*``; computed as ``inv(V)`` so ``W V = I`` by construction.
    ordering : ndarray of int
        Permutation applied to the raw LAPACK output.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    ordering: np.ndarray
    jacobian: np.ndarray = None
    equilibrium: np.ndarray = None
    condition_number: float = float("nan")
    system_name: str = ""

    @property
    def dim(self):
        return len(self.eigenvalues)

    def left_vector(self, i):
        """The column vector ``w_i`` (so that ``w_i^* = left_vectors[i]``)."""
        return self.left_vectors[i].conj()

    def linear_coordinates(self, x):
        """``w_i^* (x - x0)`` for every i; x has shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        if self.equilibrium is not None:
            x = x - self.equilibrium
        return x @ self.left_vectors.T

    def to_dict(self):
        def cmat(M):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]

        out = {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "right_vectors": cmat(self.right_vectors),
            "left_vectors": cmat(self.left_vectors),
            "ordering": [int(k) for k in self.ordering],
            "condition_number": float(self.condition_number),
        }
        if self.jacobian is not None:
            out["jacobian"] = np.asarray(self.jacobian, dtype=float).tolist()
        if self.equilibrium is not None:
            out["equilibrium"] = np.asarray(self.equilibrium, dtype=float).tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        def cmat(rows):
            return np.array([[complex(re, im) for re, im in row] for row in rows])

        return cls(
            eigenvalues=np.array([complex(re, im) for re, im in d["eigenvalues"]]),
            right_vectors=cmat(d["right_vectors"]),
            left_vectors=cmat(d["left_vectors"]),
            ordering=np.array(d.get("ordering", range(len(d["eigenvalues"])))),
            jacobian=None if "jacobian" not in d else np.array(d["jacobian"]),
            equilibrium=None if "equilibrium" not in d else np.array(d["equilibrium"]),
            condition_number=d.get("condition_number", float("nan")),
        )


def _canonical_order(lam):
    return sorted(range(len(lam)), key=lambda k: (-lam[k].real, abs(lam[k].imag), -lam[k].imag))


def _normalize(v):
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v) > (1 - 1e-12) * np.max(np.abs(v))))
    return v * (abs(v[k]) / v[k])


def decompose(A, cond_threshold=DIAGONALIZABLE_COND):
    """Ordered, bi-orthonormal eigendecomposition of a square matrix.

    Eigenvalues come from LAPACK ``geev`` via :func:`numpy.linalg.eig`. For a
    real matrix the members of each conjugate pair are made exact conjugates
    of each other (values, right and left vectors), so quantities derived
    from the pair stay conjugate to roundoff.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    real = not np.iscomplexobj(A) or np.all(A.imag == 0)
    lam_raw, V_raw = np.linalg.eig(A)
    order = np.array(_canonical_order(lam_raw), dtype=int)
    lam = np.asarray(lam_raw, dtype=complex)[order]
    V = np.asarray(V_raw, dtype=complex)[:, order]
    n = len(lam)
    k = 0
    while k < n:
        V[:, k] = _normalize(V[:, k])
        if real and lam[k].imag == 0.0:
            V[:, k] = V[:, k].real
        elif real and k + 1 < n and np.isclose(lam[k + 1], lam[k].conjugate(), rtol=1e-12, atol=0):
            lam[k + 1] = lam[k].conjugate()
            V[:, k + 1] = V[:, k].conj()
            k += 1
        k += 1
    cond = float(np.linalg.cond(V))
    if not cond <= cond_threshold:
        raise NotDiagonalizableError(cond, cond_threshold)
    W = np.linalg.inv(V)
    if real:
        k = 0
        while k < n:
            if lam[k].imag == 0.0:
                W[k] = W[k].real
            elif k + 1 < n and lam[k + 1] == lam[k].conjugate():
                W[k + 1] = W[k].conj()
                k += 1
            k += 1
    return lam, V, W, order, cond


def linearize(system, cond_threshold=DIAGONALIZABLE_COND):
    """Linearize ``system`` at its equilibrium.

    Raises
    ------
    NotHurwitzError
        Some eigenvalue has non-negative real part.
    NotDiagonalizableError
        The eigenvector matrix condition number exceeds ``cond_threshold``.
    """
    J = np.asarray(system.jac(system.equilibrium), dtype=float)
    lam, V, W, order, cond = decompose(J, cond_threshold)
    if np.any(lam.real >= 0):
        raise NotHurwitzError(list(lam))
    for arr in (lam, V, W):
        arr.setflags(write=False)
    return SpectralData(lam, V, W, order, J, np.array(system.equilibrium), cond, system.name)


@dataclass(frozen=True)
class ResonanceReport:
    """Result of the non-resonance test up to ``requested_degree``.

    ``violations`` holds ``(alpha, k, gap)`` triples with ``k`` zero-based and
    ``gap = |sum_i alpha_i lambda_i - lambda_k|``.
    """

    requested_degree: int
    non_resonant_up_to: int
    violations: list
    sufficient_degree: int
    tolerance: float

    @property
    def resonant(self):
        return bool(self.violations)

    def to_dict(self):
        return {
            "requested_degree": self.requested_degree,
            "non_resonant_up_to": self.non_resonant_up_to,
            "sufficient_degree": self.sufficient_degree,
            "tolerance": self.tolerance,
            "violations": [
                {"alpha": list(a), "k": k + 1, "gap": g} for a, k, g in self.violations
            ],
        }


def multi_indices(n, degree):
    """All ``alpha`` in N^n with ``sum(alpha) == degree``, as an int array."""
    rows = [np.bincount(c, minlength=n) for c in combinations_with_replacement(range(n), degree)]
    return np.array(rows, dtype=int).reshape(-1, n)


def sufficient_degree(eigenvalues, margin=BETA_MARGIN):
    """Smallest normal-form truncation order for which the convergence bound decays.

    With ``beta = (1 - margin) * max_j Re(lambda_j)`` the bound is integrable
    once ``(N + 1) beta - Re(lambda_i) < 0`` for every i.
    """
    re = np.real(eigenvalues)
    beta = (1.0 - margin) * re.max()
    ratio = float(np.max(re / beta))
    return max(2, math.ceil(ratio) - 1) + 1


def check_resonance(spec, max_degree, rtol=RESONANCE_RTOL):
    """Search for resonances ``sum_i alpha_i lambda_i = lambda_k`` with ``2 <= |alpha| <= max_degree``."""
    if int(max_degree) != max_degree or max_degree < 2:
        raise ValueError("max_degree must be an integer >= 2")
    max_degree = int(max_degree)
    lam = np.asarray(spec.eigenvalues if hasattr(spec, "eigenvalues") else spec, dtype=complex)
    if np.any(lam.real >= 0):
        raise NotHurwitzError(list(lam))
    n = len(lam)
    tol = rtol * float(np.max(np.abs(lam)))
    violations = []
    clean_to = max_degree
    for deg in range(2, max_degree + 1):
        alphas = multi_indices(n, deg)
        combos = alphas @ lam
        gaps = np.abs(combos[:, None] - lam[None, :])
        for a, k in zip(*np.nonzero(gaps <= tol)):
            violations.append((tuple(int(v) for v in alphas[a]), int(k), float(gaps[a, k])))
        if violations and clean_to == max_degree:
            clean_to = deg - 1
    return ResonanceReport(max_degree, clean_to, violations, sufficient_degree(lam), tol)
