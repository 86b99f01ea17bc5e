import json
from itertools import permutations

import numpy as np
import pytest

from koopsym import SpectralData, check_resonance, get_system, linearize
from koopsym.dynamics import linear_system
from koopsym.exceptions import NotDiagonalizableError, NotHurwitzError
from koopsym.spectral import decompose, multi_indices, sufficient_degree

from conftest import random_hurwitz


def _invariants(spec):
    A = spec.jacobian
    V, W, lam = spec.right_vectors, spec.left_vectors, spec.eigenvalues
    assert np.allclose(W @ V, np.eye(len(lam)), atol=1e-10)
    scale = np.linalg.norm(A)
    for i in range(len(lam)):
        assert np.linalg.norm(A @ V[:, i] - lam[i] * V[:, i]) <= 1e-8 * scale
        assert np.linalg.norm(W[i] @ A - lam[i] * W[i]) <= 1e-8 * scale * np.linalg.norm(W[i])


def test_vdp_eigenvalues(vdp_spec):
    expected = np.roots([1.0, 0.5, 1.0])
    assert vdp_spec.eigenvalues[0] == pytest.approx(-0.25 + 0.968246j, abs=1e-6)
    assert vdp_spec.eigenvalues[1] == pytest.approx(-0.25 - 0.968246j, abs=1e-6)
    assert np.allclose(np.sort_complex(vdp_spec.eigenvalues), np.sort_complex(expected))
    _invariants(vdp_spec)


def test_conjugate_pair_exact(vdp_spec):
    lam, V, W = vdp_spec.eigenvalues, vdp_spec.right_vectors, vdp_spec.left_vectors
    assert lam[1] == lam[0].conjugate()
    assert np.array_equal(V[:, 1], V[:, 0].conj())
    assert np.array_equal(W[1], W[0].conj())


def test_diagonal_is_identity():
    spec = linearize(linear_system(np.diag([-1.0, -2.0])))
    assert np.array_equal(spec.eigenvalues, [-1.0, -2.0])
    assert np.allclose(spec.right_vectors, np.eye(2))
    assert np.allclose(spec.left_vectors, np.eye(2))


def test_forward_vdp_not_hurwitz():
    with pytest.raises(NotHurwitzError):
        linearize(get_system("vdp"))


def test_defective_rejected():
    with pytest.raises(NotDiagonalizableError):
        decompose(np.array([[-1.0, 1.0], [0.0, -1.0]]))


def test_resonant_eigenvalues(resonant):
    spec = linearize(resonant)
    assert np.allclose(spec.eigenvalues, [-1.0, -2.0])
    _invariants(spec)


def test_random_matrices(rng):
    for _ in range(5):
        spec = linearize(linear_system(random_hurwitz(rng)))
        _invariants(spec)
        assert np.all(np.diff(spec.eigenvalues.real) <= 0)


def test_canonical_ordering_with_pairs():
    A = np.diag([-3.0, -1.0, -1.0, -2.0])
    A[1, 2], A[2, 1] = 2.0, -2.0          # -1 +- 2j block
    spec = linearize(linear_system(A))
    lam = spec.eigenvalues
    assert lam[0] == pytest.approx(-1 + 2j)
    assert lam[1] == pytest.approx(-1 - 2j)
    assert lam[2].real == pytest.approx(-2) and lam[3].real == pytest.approx(-3)
    _invariants(spec)


def test_scaling_property(vdp, vdp_spec):
    for c in (0.5, 3.0):
        spec_c = linearize(vdp.scaled(c))
        assert np.allclose(spec_c.eigenvalues, c * vdp_spec.eigenvalues)
        for i in range(2):
            a, b = spec_c.right_vectors[:, i], vdp_spec.right_vectors[:, i]
            phase = np.vdot(b, a)
            assert abs(abs(phase) - 1) < 1e-10
            assert np.allclose(a, phase * b, atol=1e-10)
        assert check_resonance(spec_c, 6).resonant == check_resonance(vdp_spec, 6).resonant


def test_biorthonormal_under_permutation(rng):
    spec = linearize(linear_system(random_hurwitz(rng)))
    for p in permutations(range(3)):
        p = list(p)
        assert np.allclose(spec.left_vectors[p] @ spec.right_vectors[:, p], np.eye(3), atol=1e-10)


def test_json_roundtrip(vdp_spec):
    text = json.dumps(vdp_spec.to_dict())
    back = SpectralData.from_dict(json.loads(text))
    assert np.array_equal(back.eigenvalues, vdp_spec.eigenvalues)
    assert np.array_equal(back.left_vectors, vdp_spec.left_vectors)
    assert np.array_equal(back.right_vectors, vdp_spec.right_vectors)


# -- resonance -----------------------------------------------------------------


def test_resonance_found():
    rep = check_resonance(np.array([-1.0, -2.0]), 3)
    assert ((2, 0), 1, 0.0) in rep.violations
    assert rep.resonant
    assert rep.non_resonant_up_to == 1
    assert rep.to_dict()["violations"][0]["k"] == 2


def test_vdp_nonresonant(vdp_spec):
    rep = check_resonance(vdp_spec, 10)
    assert rep.violations == []
    assert rep.non_resonant_up_to == 10


def test_scalar_nonresonant():
    rep = check_resonance(np.array([-1.0]), 5)
    assert not rep.resonant


def test_degree_below_two_rejected():
    with pytest.raises(ValueError):
        check_resonance(np.array([-1.0, -2.0]), 1)


def test_multi_indices_count():
    from math import comb
    for n, d in [(2, 2), (3, 4), (4, 3)]:
        A = multi_indices(n, d)
        assert len(A) == comb(n + d - 1, d)
        assert np.all(A.sum(axis=1) == d)
        assert len({tuple(a) for a in A}) == len(A)


def test_sufficient_degree():
    assert sufficient_degree(np.array([-0.25 + 1j, -0.25 - 1j])) == 3
    # max Re / beta ratio near 2 for (-1, -2): ceil(2.002) - 1 = 2 -> 3
    assert sufficient_degree(np.array([-1.0, -2.0])) == 3
    assert sufficient_degree(np.array([-1.0, -5.0])) == 6
