import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.linalg import eigh_tridiagonal

from dnwaveguide.modes import (
    Geometry,
    ModeBasis,
    chi,
    chi_matrix,
    mu,
    mu_array,
    overlap,
    overlap_block,
    overlap_matrix,
    overlap_quadrature,
)

idx = st.integers(min_value=1, max_value=60)


def test_mu_first_values():
    g = Geometry(1.0)
    assert mu(1, g) == pytest.approx(math.pi**2 / 4, rel=1e-15)
    assert mu(2, g) == pytest.approx(9 * math.pi**2 / 4, rel=1e-15)
    assert mu(1, Geometry(2.0)) == pytest.approx(math.pi**2 / 16, rel=1e-15)
    np.testing.assert_allclose(mu_array(3, g), [mu(n, g) for n in (1, 2, 3)], rtol=1e-15)


@pytest.mark.parametrize("bad", [0, -1, 1.5, True])
def test_mu_rejects_bad_index(bad):
    with pytest.raises(ValueError):
        mu(bad, Geometry())


def test_geometry_rejects_nonpositive_width():
    with pytest.raises(ValueError):
        Geometry(0.0)


def test_lowest_eigenvalue_from_finite_differences():
    # -u'' on (0, d) with u(0) = 0 and u'(d) = 0, second order with a ghost node at y = d
    d, n = 1.0, 4000
    h = d / n
    diag = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    # ghost node gives the last row (-2, 2) / h^2; a diagonal similarity makes it symmetric
    off[-1] = -math.sqrt(2.0) / h**2
    w = eigh_tridiagonal(diag, off, select="i", select_range=(0, 1), eigvals_only=True)
    g = Geometry(d)
    assert w[0] == pytest.approx(mu(1, g), rel=1e-5)
    assert w[1] == pytest.approx(mu(2, g), rel=1e-4)


def test_chi_boundary_conditions():
    g = Geometry(1.3)
    assert chi(ModeBasis.SINE, 3, 0.0, g) == 0.0
    assert chi(ModeBasis.COSINE, 3, g.d, g) == 0.0
    assert abs(chi(ModeBasis.SINE, 1, g.d, g)) == pytest.approx(math.sqrt(2 / g.d))
    with pytest.raises(ValueError):
        chi(ModeBasis.SINE, 1, -0.1, g)
    with pytest.raises(ValueError):
        chi(ModeBasis.COSINE, 1, g.d + 0.1, g)


def test_chi_matrix_matches_chi():
    g = Geometry(0.7)
    y = np.linspace(0.1, 0.6, 7)
    M = chi_matrix(ModeBasis.COSINE, 4, y, g)
    np.testing.assert_allclose(M[2], chi(ModeBasis.COSINE, 3, y, g), rtol=1e-14)


@pytest.mark.parametrize("basis", [ModeBasis.SINE, ModeBasis.COSINE])
def test_orthonormal_families(basis):
    for n in range(1, 6):
        for m in range(1, 6):
            val = overlap_quadrature(n, m, pair=(basis, basis))
            assert val == pytest.approx(1.0 if n == m else 0.0, abs=1e-12)


def test_overlap_known_values():
    assert overlap(1, 1) == pytest.approx(2 / math.pi, abs=1e-15)
    assert overlap(2, 3) == pytest.approx(-2 / math.pi, abs=1e-15)
    assert overlap(3, 2) == pytest.approx(2 / math.pi, abs=1e-15)
    assert overlap(2, 2) == pytest.approx(2 / (3 * math.pi), abs=1e-15)


def test_overlap_against_scipy_quad_with_physical_width():
    d = 2.5
    g = Geometry(d)
    for n, m in [(1, 1), (2, 3), (4, 1), (5, 5)]:
        val, _ = integrate.quad(lambda y: chi(ModeBasis.SINE, n, y, g) * chi(ModeBasis.COSINE, m, y, g), 0, d, limit=200)
        assert val == pytest.approx(overlap(n, m), abs=1e-12)


def test_overlap_block_matches_scalar():
    B = overlap_block(7, 9)
    assert B.shape == (7, 9)
    for n in range(1, 8):
        for m in range(1, 10):
            assert B[n - 1, m - 1] == overlap(n, m)


def test_overlap_matrix_readonly():
    O = overlap_matrix(4)
    assert O.N == 4 and O.shape == (4, 4)
    with pytest.raises(ValueError):
        np.asarray(O)[0, 0] = 1.0


@given(idx, idx)
def test_overlap_antisymmetry_across_parity(n, m):
    # (n, m) and (m, n) agree when n + m is even and flip sign otherwise
    sign = 1 if (n + m) % 2 == 0 else -1
    assert overlap(m, n) == pytest.approx(sign * overlap(n, m), rel=1e-15)


@given(st.integers(min_value=1, max_value=8))
@settings(max_examples=8, deadline=None)
def test_overlap_rows_are_complete(n):
    # the cosine family is complete, so sum_m O_nm^2 = 1; the tail decays like 1/M
    M = 200000
    row = overlap_block(n, M)[n - 1]
    assert np.sum(row**2) == pytest.approx(1.0, abs=5.0 / M)


@given(st.integers(min_value=1, max_value=40))
@settings(max_examples=15, deadline=None)
def test_overlap_singular_values_below_one(N):
    s = np.linalg.svd(overlap_block(N, N), compute_uv=False)
    assert s[0] <= 1.0 + 1e-12
