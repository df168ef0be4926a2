import numpy as np
import pytest

from tensorfill import ModeMatrix, svt
from tensorfill.completion.svt import svt_array, svt_gram_array
from tensorfill.exceptions import ContractViolation


def eig_oracle_svt(a, tau):
    """Independent reference: SVD assembled from the eigendecomposition of a^T a."""
    gram = a.T @ a
    lam, v = np.linalg.eigh(gram)
    s = np.sqrt(np.clip(lam, 0.0, None))
    order = np.argsort(s)[::-1]
    s = s[order]
    v = v[:, order]
    out = np.zeros_like(a, dtype=np.float64)
    for i in range(s.size):
        shrunk = s[i] - tau
        if shrunk <= 0.0:
            continue
        u_i = a @ v[:, i] / s[i]
        out += shrunk * np.outer(u_i, v[:, i])
    return out


def test_zero_threshold_reproduces_input():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 4))
    m = ModeMatrix(mode=1, data=a)
    out = svt(m, 0.0)
    assert np.linalg.norm(out.data - a) <= 1e-6 * np.linalg.norm(a)


def test_diagonal_case_analytic():
    m = ModeMatrix(mode=1, data=np.diag([3.0, 1.0]))
    out = svt(m, 2.0)
    assert np.allclose(out.data, np.diag([1.0, 0.0]), atol=1e-12)


def test_matches_eigendecomposition_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        rows = int(rng.integers(1, 9))
        cols = int(rng.integers(1, 7))
        a = rng.standard_normal((rows, cols))
        tau = float(rng.uniform(0.05, 0.9)) * np.linalg.norm(a, 2)
        got = svt_array(a, tau)
        want = eig_oracle_svt(a, tau)
        scale = max(np.linalg.norm(a), 1e-30)
        assert np.linalg.norm(got - want) <= 1e-8 * scale


def test_gram_path_matches_direct_svd():
    rng = np.random.default_rng(2)
    for shape in [(5, 9), (9, 5), (1, 7), (8, 8), (14, 60)]:
        a = rng.standard_normal(shape)
        for frac in (0.0, 0.1, 0.5, 1.1):
            tau = frac * np.linalg.norm(a, 2)
            d = np.linalg.norm(svt_gram_array(a, tau) - svt_array(a, tau))
            assert d <= 1e-10 * max(np.linalg.norm(a), 1.0)


def test_non_expansive():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.standard_normal((int(rng.integers(1, 10)), int(rng.integers(1, 10))))
        tau = float(rng.uniform(0.0, 2.0))
        assert np.linalg.norm(svt_array(a, tau)) <= np.linalg.norm(a) + 1e-12


def test_everything_annihilated():
    a = np.ones((3, 3))
    out = svt_array(a, 10.0)
    assert np.all(out == 0.0)


def test_negative_tau_rejected():
    with pytest.raises(ContractViolation):
        svt(ModeMatrix(mode=1, data=np.ones((2, 2))), -0.5)


def test_non_finite_input_rejected():
    bad = np.ones((2, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ContractViolation):
        svt(ModeMatrix(mode=1, data=bad), 0.1)
