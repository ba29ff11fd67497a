import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammahom.cell_problems import compute_correctors
from gammahom.coefficients import CellGrid, make_coefficient
from gammahom.fem import Lattice
from gammahom.fine_scale import FineGrid
from gammahom.gamma_expansion import (ExpansionReport, F0_hom, F1_hom, F1_n, NRecord,
                                      derivative_products, fit_rates, limit_fit, loglog_slope,
                                      recovery_sequence, richardson)
from gammahom.macro_fields import FineField, MacroFunction, solve_u1_tilde, source_from_g
from oracles import sine4_dirichlet_energy

SQRT3 = np.sqrt(3.0)


def test_F0_examples():
    g = MacroFunction("sine4", 1)
    f = source_from_g(g, SQRT3)
    # F0(g) = int A g'^2 - 2 int f g = -A int g'^2 when f = -A g''
    assert F0_hom(g, SQRT3, f) == pytest.approx(-SQRT3 * sine4_dirichlet_energy(), rel=1e-10)
    assert F0_hom(g, SQRT3, f) == pytest.approx(-10.6841601708076, abs=1e-9)
    lat = Lattice(1, 64, periodic=False)
    assert F0_hom(FineField(1, 64, np.zeros(65)), SQRT3, f) == 0.0
    # lambda = 1 moves the minimum of the quadratic part to g / 2
    assert F0_hom(g, SQRT3, f, linear_term_factor=1.0) == pytest.approx(0.0, abs=1e-10)
    assert F0_hom(FineField.interpolate(lat, g), SQRT3, f) == pytest.approx(
        -SQRT3 * sine4_dirichlet_energy(), rel=1e-2)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("profile", ["sine4", "bump"])
def test_derivative_products_vanish(dim, profile):
    # int d_a g d_bc g integrates a total derivative for every index pattern when N <= 2
    assert np.abs(derivative_products(MacroFunction(profile, dim))).max() <= 1e-8


def test_F1_hom_constant_coefficient():
    for dim in (1, 2):
        A = make_coefficient("identity", CellGrid(dim, 8))
        cs = compute_correctors(A)
        g = MacroFunction("sine4", dim)
        r = F1_hom(g, cs, source_from_g(g, cs.A_hom))
        assert abs(r.value) <= 1e-10
        assert all(abs(v) <= 1e-10 for v in r.groups.values())


@pytest.mark.parametrize("fixture", ["fourier1d_512", "fourier2d_32"])
@pytest.mark.parametrize("profile", ["sine4", "bump"])
def test_F1_hom_groups_vanish(fixture, profile, request):
    A, cs = request.getfixturevalue(fixture)
    g = MacroFunction(profile, A.dim)
    r = F1_hom(g, cs, source_from_g(g, cs.A_hom))
    assert set(r.groups) == {"moments", "psiA", "psiA_gradpsi", "mean_psi"}
    assert abs(r.groups["moments"]) <= 1e-6
    assert abs(r.groups["mean_psi"]) <= 1e-6
    assert abs(r.value) <= 1e-6


def test_1d_psi_groups_vanish(fourier1d_512):
    # in 1D both psi groups carry the factor int g' g'' = 0
    A, cs = fourier1d_512
    g = MacroFunction("sine4", 1)
    r = F1_hom(g, cs, source_from_g(g, cs.A_hom))
    assert abs(r.groups["psiA"] + r.groups["psiA_gradpsi"]) <= 1e-10


def test_cancelled_terms_pairwise(fourier2d_32):
    A, cs = fourier2d_32
    cr = cs.moments.cross
    assert np.abs(cr["Ae_gradchi"] + cr["gradpsi_A_gradchi"]).max() <= 1e-9
    assert np.abs(cr["Ae_gradpsi"] + cr["gradpsi_A_gradpsi"]).max() <= 1e-9
    g = MacroFunction("bump", 2)
    ut = solve_u1_tilde(cs.A_hom, cs.c, g, Lattice(2, 32, periodic=False))
    r = F1_hom(g, cs, source_from_g(g, cs.A_hom), u1_tilde=ut)
    assert abs(r.with_cancelled_terms - r.value) <= 1e-6


def test_F1_hom_validation(fourier2d_32):
    _, cs = fourier2d_32
    g = MacroFunction("sine4", 1)
    with pytest.raises(ValueError):
        F1_hom(g, cs, source_from_g(g, 1.0))


@given(st.floats(0.1, 10), st.floats(0.5, 3.0))
def test_loglog_slope_exact(c, p):
    ns = [4, 8, 16, 32]
    assert loglog_slope(ns, [c * n**-p for n in ns]) == pytest.approx(p, rel=1e-10)


def test_loglog_slope_examples_and_errors():
    ns = np.array([4, 8, 16])
    assert loglog_slope(ns, 1.0 / ns) == pytest.approx(1.0)
    assert loglog_slope(ns, 1.0 / ns**2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        loglog_slope([4, 8], [1.0, 0.5])
    with pytest.raises(ValueError):
        loglog_slope(ns, [1.0, 0.0, 0.5])


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_richardson_cancels_quadratic_error(L, b):
    m = 16
    assert richardson(L + b / m**2, L + b / (2 * m) ** 2) == pytest.approx(L, abs=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_limit_fit_exact_on_quadratic(L, b, c):
    ns = np.array([4, 8, 16, 32, 64])
    L_fit, _ = limit_fit(ns, L + b / ns + c / ns**2, tail=4)
    assert L_fit == pytest.approx(L, abs=1e-9)
    L_lin, coef = limit_fit(ns, L + b / ns, tail=3)
    assert L_lin == pytest.approx(L, abs=1e-9)
    assert coef[1] == pytest.approx(b, abs=1e-8)


def test_recovery_equals_g_for_constant_coefficient():
    cs = compute_correctors(make_coefficient("identity", CellGrid(1, 16)))
    g = MacroFunction("sine4", 1)
    lat = Lattice(1, 128, periodic=False)
    u = recovery_sequence(g, cs, 8, lat)
    assert np.allclose(u.values, FineField.interpolate(lat, g).values, atol=1e-14)


def test_F1_n_of_g_diverges(cos1d_256):
    # g itself is not a recovery sequence: F_n(g) - F0 stays of order one
    A = make_coefficient("cos1d", CellGrid(1, 32))
    g = MacroFunction("sine4", 1)
    f = source_from_g(g, SQRT3)
    F0 = F0_hom(g, SQRT3, f)
    vals = []
    for n in (4, 8, 16):
        lat = FineGrid(1, n, 32).lattice
        vals.append(F1_n(FineField.interpolate(lat, g), n, A, f, F0))
    assert vals[0] > 0
    assert vals[2] / vals[1] == pytest.approx(2.0, rel=0.05)


def _records(ns, F1):
    return [NRecord(n, -1.0, v, 1.0 / n**2, 1.0 / n) for n, v in zip(ns, F1)]


def test_report_and_fit_rates():
    ns = [4, 8, 16, 32]
    rep = ExpansionReport(_records(ns[::-1], [0.5 + 1.0 / n for n in ns[::-1]]), -1.0, None)
    assert rep.ns == ns
    fit_rates(rep, tail=3)
    assert rep.rates["h1_resid"] == pytest.approx(2.0)
    assert rep.rates["l2_err"] == pytest.approx(1.0)
    assert rep.limits["F1_n"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ExpansionReport(_records([4], [float("nan")]), -1.0, None)
    with pytest.raises(ValueError):
        fit_rates(ExpansionReport(_records([4, 8], [1.0, 1.0]), -1.0, None))
