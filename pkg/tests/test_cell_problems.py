import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammahom.cell_problems import (CorrectorSet, PeriodicField, cell_energy, compute_b,
                                    compute_correctors, homogenized_matrix,
                                    solve_first_corrector, solve_second_corrector)
from gammahom.coefficients import (PRESETS, SMOOTH_PRESETS, CellGrid, CoefficientField,
                                   make_coefficient)
from oracles import Cell1D, a_cos, a_fourier, psi_cos_closed

SQRT3 = np.sqrt(3.0)


def test_identity_gives_zero_correctors():
    A = make_coefficient("identity", CellGrid(2, 8))
    cs = compute_correctors(A)
    assert all(np.all(p.values == 0) for p in cs.psi)
    assert all(np.all(x.values == 0) for row in cs.chi for x in row)
    assert np.allclose(cs.A_hom, np.eye(2), atol=1e-14, rtol=0)
    assert np.all(cs.c == 0)
    for i in range(2):
        for j in range(2):
            assert np.allclose(cs.b[i][j].values, float(i == j), atol=1e-13)
    assert np.abs(cs.moments.moments).max() < 1e-14
    assert np.abs(cs.moments.psiA).max() == 0


def test_constant_diagonal_has_no_off_diagonal_chi():
    grid = CellGrid(2, 8)
    A = CoefficientField.from_function(
        lambda y: np.broadcast_to(np.diag([2.0, 3.0]), y.shape[:-1] + (2, 2)).copy(),
        grid, 2.0, 3.0)
    cs = compute_correctors(A)
    assert np.all(cs.chi[0][1].values == 0) and np.all(cs.chi[1][0].values == 0)
    assert np.allclose(cs.A_hom, np.diag([2.0, 3.0]))


class TestCos1D:
    """``a(y) = 2 + cos(2 pi y)`` against closed forms and quadrature oracles."""

    oracle = Cell1D(a_cos)

    def test_corrector_matches_closed_form(self, cos1d_256):
        _, cs = cos1d_256
        y = np.arange(256) / 256
        closed = psi_cos_closed(y)
        closed -= closed.mean()
        # nodal mean vs exact mean differ at O(h^2) only
        assert np.abs(cs.psi[0].values - closed).max() < 2e-5

    def test_corrector_matches_quadrature_oracle(self, cos1d_256):
        _, cs = cos1d_256
        y = np.arange(0, 256, 16) / 256
        ref = np.array([self.oracle.psi(v) for v in y])
        assert np.abs(cs.psi[0].values[::16] - ref).max() < 2e-5

    def test_homogenized_coefficient_is_harmonic_mean(self, cos1d_256):
        _, cs = cos1d_256
        assert cs.A_hom[0, 0] == pytest.approx(SQRT3, abs=1e-12)

    def test_b_mean_equals_a_hom(self, cos1d_256):
        _, cs = cos1d_256
        assert cs.b[0][0].mean() == pytest.approx(SQRT3, abs=1e-12)

    def test_second_corrector_matches_double_primitive(self, cos1d_256):
        _, cs = cos1d_256
        y = np.arange(0, 256, 16) / 256
        ref = np.array([self.oracle.chi(v) for v in y])
        assert np.abs(cs.chi[0][0].values[::16] - ref).max() < 1e-5

    def test_c111_vanishes(self, cos1d_256):
        _, cs = cos1d_256
        # 1D oracle: c = <a chi' + a psi> = <-a psi + a psi> = 0
        assert abs(cs.c[0, 0, 0]) < 1e-6


class TestFourier1D:
    """Asymmetric 1D coefficient, so first moments do not vanish."""

    oracle = Cell1D(a_fourier)

    def test_a_hom(self, fourier1d_512):
        assert fourier1d_512[1].A_hom[0, 0] == pytest.approx(self.oracle.A_hom, abs=1e-12)

    def test_first_moment(self, fourier1d_512):
        m = fourier1d_512[1].moments.moments[0, 0, 0]
        assert abs(self.oracle.moment()) > 1e-3
        assert m == pytest.approx(self.oracle.moment(), abs=1e-6)

    def test_cell_averages(self, fourier1d_512):
        mo = fourier1d_512[1].moments
        assert mo.psiA[0, 0, 0] == pytest.approx(self.oracle.psi_a(), abs=1e-6)
        assert mo.psiA_gradpsi[0, 0, 0] == pytest.approx(self.oracle.psi_a_dpsi(), abs=1e-6)
        assert abs(mo.psi_mean[0]) < 1e-12


def test_laminate_reduces_to_1d(laminate_32):
    _, cs = laminate_32
    assert np.abs(cs.psi[1].values).max() < 1e-12
    psi1 = cs.psi[0].values
    assert np.abs(psi1 - psi1[:, :1]).max() < 1e-12
    one_d = compute_correctors(make_coefficient("cos1d", CellGrid(1, 32)))
    assert np.abs(psi1[:, 0] - one_d.psi[0].values).max() < 1e-10
    assert np.allclose(cs.A_hom, np.diag([SQRT3, 1.0]), atol=1e-12)


@pytest.mark.parametrize("name,dim", [(n, d) for n in SMOOTH_PRESETS for d in (1, 2)
                                      if not (n == "laminate" and d == 1)])
def test_invariants_smooth_presets(name, dim):
    A = make_coefficient(name, CellGrid(dim, 32 if dim == 2 else 128))
    cs = compute_correctors(A)
    checks = cs.check_invariants(A.alpha, A.beta)
    assert all(checks.values()), checks


def test_checkerboard_monotone_grid_convergence():
    vals = []
    for M in (8, 16, 32, 64):
        cs = compute_correctors(make_coefficient("checkerboard", CellGrid(2, M)))
        vals.append(cs.A_hom[0, 0])
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])
    # Keller-Dykhne: exact value sqrt(a1 a2) for the two-phase checkerboard
    assert abs(vals[-1] - np.sqrt(10.0)) < abs(vals[0] - np.sqrt(10.0))


def test_grid_convergence_order():
    out = []
    for M in (16, 32, 64):
        A = make_coefficient("fourier", CellGrid(2, M), angle=0.4, anisotropy=1.5)
        cs = compute_correctors(A)
        nonzero_c = cs.c[np.abs(cs.c) > 1e-8]
        out.append(np.concatenate([cs.A_hom.ravel(), nonzero_c,
                                   cs.moments.moments.ravel()]))
    d1, d2 = np.abs(out[1] - out[0]), np.abs(out[2] - out[1])
    keep = d1 > 1e-12
    assert np.all(np.log2(d1[keep] / d2[keep]) >= 1.8)


def test_energy_identity_and_minimality(fourier2d_32, rng):
    A, cs = fourier2d_32
    for j in range(2):
        e = cell_energy(A, cs.psi[j], j)
        assert e == pytest.approx(cs.A_hom[j, j], abs=1e-10)
        for _ in range(5):
            pert = PeriodicField(A.grid, cs.psi[j].values + 1e-2 * rng.normal(size=(32, 32)))
            assert cell_energy(A, pert, j) >= e


def test_b_average_matches_a_hom_off_diagonal(fourier2d_32):
    A, cs = fourier2d_32
    for i in range(2):
        for j in range(2):
            assert cs.b[i][j].mean() == pytest.approx(cs.A_hom[i, j], abs=1e-10)
    assert abs(cs.A_hom[0, 1]) > 1e-3


@given(st.lists(st.tuples(st.integers(1, 3), st.floats(-0.5, 0.5), st.floats(0, 6.28)),
                min_size=1, max_size=3))
def test_1d_a_hom_is_discrete_harmonic_mean(rows):
    rows = [[k, a, p] for k, a, p in rows]
    if sum(abs(r[1]) for r in rows) >= 1.9:
        return
    A = make_coefficient("fourier", CellGrid(1, 32), coefficients=rows)
    cs = compute_correctors(A)
    harm = 1.0 / np.mean(1.0 / A.samples[:, 0, 0])
    assert cs.A_hom[0, 0] == pytest.approx(harm, rel=1e-10)


@given(st.floats(0.0, 3.0), st.floats(0.3, 3.0), st.floats(0.0, 1.5))
def test_2d_a_hom_between_reuss_and_voigt(angle, aniso, amp):
    A = make_coefficient("fourier", CellGrid(2, 16), angle=angle, anisotropy=aniso,
                         coefficients=[[1, 1, amp / 2, 0.3], [1, 0, amp / 2]])
    cs = compute_correctors(A)
    s = A.samples.reshape(-1, 2, 2)
    voigt = s.mean(axis=0)
    reuss = np.linalg.inv(np.linalg.inv(s).mean(axis=0))
    assert np.abs(cs.A_hom - cs.A_hom.T).max() < 1e-12
    assert np.linalg.eigvalsh(voigt - cs.A_hom).min() > -1e-10
    assert np.linalg.eigvalsh(cs.A_hom - reuss).min() > -1e-10


def test_save_load_roundtrip(tmp_path, fourier2d_32):
    _, cs = fourier2d_32
    cs.save(tmp_path / "set")
    back = CorrectorSet.load(tmp_path / "set")
    assert back.fingerprint() == cs.fingerprint()
    assert np.array_equal(back.moments.cross["Ae_gradchi"], cs.moments.cross["Ae_gradchi"])


def test_grid_mismatch_errors(cos1d_256):
    A, cs = cos1d_256
    with pytest.raises(ValueError):
        solve_first_corrector(A, 0, CellGrid(1, 128))
    other = make_coefficient("cos1d", CellGrid(1, 128))
    with pytest.raises(ValueError):
        compute_b(other, cs.psi, 0, 0)
    with pytest.raises(ValueError):
        solve_second_corrector(other, cs.b[0][0])


def test_axis_index_out_of_range(cos1d_256):
    with pytest.raises(ValueError):
        solve_first_corrector(cos1d_256[0], 1)


def test_periodic_interpolation_wraps(cos1d_256):
    _, cs = cos1d_256
    p = cs.psi[0]
    y = np.array([[0.123], [1.123], [-0.877]])
    v = p.interpolate(y)
    assert np.allclose(v, v[0], atol=1e-14)
    assert p.interpolate(np.array([[5 / 256]]))[0] == p.values[5]


def test_homogenized_matrix_symmetric_for_all_presets():
    for name in PRESETS:
        if name == "laminate":
            continue
        A = make_coefficient(name, CellGrid(2, 16))
        cs = compute_correctors(A)
        assert np.abs(homogenized_matrix(A, cs.psi) - cs.A_hom).max() == 0
        assert np.abs(cs.A_hom - cs.A_hom.T).max() < 1e-12
