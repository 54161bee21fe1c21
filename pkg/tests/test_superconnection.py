from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from scipy.integrate import quad

from etaform.errors import ContractViolation, OutOfDomain
from etaform.families import CutoffPair, chart_from_generator, constant_chart, cp2_triple, rotating_l1, three_param_test
from etaform.maslov import model_triple
from etaform.numerics import dd_exp
from etaform.spectral_eta import boundary_phases, eta_closed_form, lattice_low
from etaform.superconnection import (
    PAIRS,
    bianchi_residual,
    curvature,
    discretize_family,
    dd2_repeated,
    eta_form,
    eta_integrand,
    eta_integrand_duhamel,
    germ_eta_form,
    integrand_from_spectrum,
    lattice_degree2,
    lattice_sums,
    mellin_degree2,
    spectral_data,
    write_integrand_csv,
)
from etaform.symplectic import standard_space


@pytest.fixture(scope="module")
def chart():
    return three_param_test()


def _direct_lattice_sums(alpha, beta, M):
    k = np.arange(-M, M + 1)
    a = alpha + math.pi * k
    b = beta + math.pi * k
    W = 1 / (np.abs(a)[:, None] + np.abs(b)[None, :]) ** 2
    s = np.sign(a)[:, None]
    alt = (-1.0) ** (k[:, None] - k[None, :])
    return np.array([np.sum(s * W), np.sum(s * alt * W)])


class TestOperator:
    def test_diagonal_at_base(self, chart):
        op = discretize_family(chart, K=8)
        D = op.matrix(chart.basepoint)
        np.testing.assert_array_equal(D, np.diag(op.lambdas))

    def test_constant_family(self):
        fam = constant_chart(model_triple(), shape=(3, 3))
        op = discretize_family(fam, K=4, pair=(1, 2))
        np.testing.assert_allclose(op.matrix((0, 2)), np.diag(op.lambdas), atol=1e-14)
        X = curvature(op, (1, 1), 0.5)
        assert all(np.max(np.abs(X[((mu,), 1)])) < 1e-12 for mu in range(2))

    def test_hermitian(self, chart):
        op = discretize_family(chart, K=16)
        D = op.matrix((3, 2, 1))
        assert np.max(np.abs(D - D.conj().T)) <= 1e-10
        for N in op.boundary_forms((3, 2, 1)):
            assert np.max(np.abs(N - N.conj().T)) <= 1e-10

    def test_low_spectrum_is_unitarily_equivalent(self, chart):
        v = (4, 1, 3)
        op = discretize_family(chart, K=128, pair=(2, 0))
        ev = np.linalg.eigvalsh(op.matrix(v))
        low = np.sort(ev[np.argsort(np.abs(ev))[:8]])
        th = boundary_phases(chart.frame(v, 2), chart.frame(v, 0), chart.space).thetas
        np.testing.assert_allclose(low, lattice_low(th, 8), atol=1e-4)

    def test_boundary_vertex(self, chart):
        op = discretize_family(chart, K=4)
        with pytest.raises(OutOfDomain):
            op.boundary_forms((0, 2, 2))

    def test_curvature_self_adjoint(self, chart):
        X = curvature(discretize_family(chart, K=6), (2, 3, 2), 0.7)
        assert (X.adjoint() - X).norm() <= 1e-9 * X.norm()

    def test_bianchi_second_order(self):
        res = []
        for h in (0.05, 0.025):
            fam = three_param_test(h=h)
            res.append(bianchi_residual(discretize_family(fam, K=32), (3, 2, 2)))
        assert res[0] < 5e-3
        assert math.log2(res[0] / res[1]) > 1.7

    def test_lattice_needs_base(self, chart):
        op = discretize_family(chart, K=4)
        with pytest.raises(ContractViolation):
            lattice_degree2(op, (3, 2, 2))


class TestIntegrand:
    @pytest.mark.parametrize("v", [(2, 2, 2), (3, 2, 1)])
    @pytest.mark.parametrize("s", [0.05, 0.8])
    def test_fast_formula_matches_duhamel(self, chart, v, s):
        op = discretize_family(chart, K=3, pair=(1, 2))
        a, b = eta_integrand_duhamel(op, v, s), eta_integrand(op, v, s)
        for key in a:
            assert abs(a[key] - b[key]) <= 1e-10 * max(1.0, abs(a[key]))

    def test_constant_family_degree0(self):
        fam = constant_chart(model_triple(), shape=(3,))
        op = discretize_family(fam, K=20, pair=(1, 2))
        lam = op.lambdas
        s = 0.3
        expected = 2 / (2 * math.sqrt(math.pi)) * np.sum(lam * np.exp(-s * lam**2)) / math.sqrt(s)
        assert eta_integrand(op, (1,), s)[()].real == pytest.approx(expected, rel=1e-12)

    def test_dd2_repeated(self):
        x, y, s = 0.7, 2.1, 0.4
        assert dd2_repeated(x, y, s) == pytest.approx(dd_exp(np.array([-s * x, -s * x, -s * y])), rel=1e-12)
        assert dd2_repeated(x, x + 1e-9, s) == pytest.approx(0.5 * math.exp(-s * x), rel=1e-8)

    def test_large_s_decay(self, chart):
        op = discretize_family(chart, K=8)
        sd = spectral_data(op, (3, 2, 2))
        lmin = np.min(np.abs(sd.lam))
        g1, g2 = (abs(integrand_from_spectrum(sd, s)[()]) for s in (20.0, 30.0))
        assert math.log(g1 / g2) / 10 == pytest.approx(lmin**2, rel=0.05)

    def test_mellin_matches_quadrature(self, chart):
        sd = spectral_data(discretize_family(chart, K=6, pair=(1, 2)), (3, 2, 2))
        m = mellin_degree2(sd)
        for key, Mp in sd.pair_products().items():
            f = lambda s: integrand_from_spectrum(sd, s, products={key: Mp})[key]  # noqa: E731
            re = quad(lambda s: f(s).real, 0, np.inf, limit=400)[0]
            assert m[key].real == pytest.approx(re, rel=1e-7, abs=1e-10)
            assert abs(m[key].imag) < 1e-12


class TestLatticeSums:
    @pytest.mark.parametrize("alpha,beta", [(0.4, 2.0), (1.3, 1.3), (2.9, 0.2)])
    def test_against_truncated_sums(self, alpha, beta):
        r = [_direct_lattice_sums(alpha, beta, M) for M in (250, 500, 1000)]
        r1 = [2 * r[1] - r[0], 2 * r[2] - r[1]]
        ref = (4 * r1[1] - r1[0]) / 3
        np.testing.assert_allclose(lattice_sums(alpha, beta), ref, atol=1e-6)

    def test_truncation_limit(self, chart):
        # Mellin values at K and 2K extrapolate linearly in 1/K to the lattice value
        vals = []
        for K in (128, 256):
            op = discretize_family(chart, K=K, pair=(1, 2))
            vals.append(mellin_degree2(spectral_data(op, chart.basepoint)))
        exact = lattice_degree2(op, chart.basepoint)
        for key in exact:
            assert 2 * vals[1][key].real - vals[0][key].real == pytest.approx(exact[key].real, abs=2e-5)
            assert abs(exact[key].imag) < 1e-12


class TestEtaForm:
    def test_f0_is_spectral_eta(self):
        fam = rotating_l1()
        op = discretize_family(fam, K=64)
        v = fam.basepoint
        e = eta_form(op, v)
        assert e.f2.shape == (0,)
        assert e.f0 == pytest.approx(eta_closed_form(fam.frame(v, 0), fam.frame(v, 1)), abs=1e-2)

    def test_constant_family(self):
        fam = constant_chart(model_triple(), shape=(3, 3))
        e = eta_form(discretize_family(fam, K=64, pair=(1, 2)), (1, 1), method="quadrature")
        assert e.f0 == pytest.approx(-0.5, abs=1e-2)
        np.testing.assert_allclose(e.f2, 0, atol=1e-12)

    def test_antisymmetric_in_pair(self, chart):
        a = germ_eta_form(chart, (2, 2, 2), (0, 1), 64)
        b = germ_eta_form(chart, (2, 2, 2), (1, 0), 64)
        assert a.f0 == pytest.approx(-b.f0, abs=1e-9)
        np.testing.assert_allclose(a.f2, -b.f2, atol=1e-9)

    def test_methods_agree_at_base(self, chart):
        op = discretize_family(chart, K=128, pair=(2, 0))
        v = chart.basepoint
        q = eta_form(op, v, method="quadrature")
        m = eta_form(op, v, method="mellin")
        lat = eta_form(op, v, method="lattice")
        np.testing.assert_allclose(q.f2, m.f2, atol=2e-4)
        np.testing.assert_allclose(m.f2, lat.f2, atol=5e-4)
        assert q.diagnostics["imag_residual"] < 1e-9 and lat.diagnostics["imag_residual"] < 1e-9

    def test_grid_contract(self, chart):
        op = discretize_family(chart, K=8)
        with pytest.raises(ContractViolation):
            eta_form(op, chart.basepoint, s_min=1e-2)
        with pytest.raises(ContractViolation):
            eta_form(op, chart.basepoint, method="spline")

    def test_report_dict(self, chart):
        e = germ_eta_form(chart, (2, 2, 2), (0, 1), 64)
        d = e.to_dict()
        assert set(d) == {"f0", "f2", "diagnostics"} and len(d["f2"]) == 3

    @pytest.mark.parametrize("theta,phi", [(1.0, 0.3), (2.4, 5.0)])
    def test_cp2_density(self, theta, phi):
        # germ on a fine chart in (theta, phi); the sphere density of the sum is -sin(theta) / (2 pi)
        space = standard_space(2)
        fam = chart_from_generator(space, lambda b: cp2_triple(*b), (theta, phi), 1e-3)
        total = sum(germ_eta_form(fam, fam.basepoint, p, 64).f2[0] for p in PAIRS)
        assert total == pytest.approx(-math.sin(theta) / (2 * math.pi), rel=1e-5)

    def test_gauge_choice(self, chart):
        v = (3, 2, 2)
        vals = []
        for cutoff, transport in [(CutoffPair(), "standard"), (CutoffPair(0.25, 0.35), "alt")]:
            op = discretize_family(chart, K=128, pair=(0, 1), cutoff=cutoff, transport=transport)
            vals.append(eta_form(op, v, method="quadrature"))
        assert vals[0].f0 == pytest.approx(vals[1].f0, abs=1e-6)
        np.testing.assert_allclose(vals[0].f2, vals[1].f2, atol=1e-4)


def test_integrand_csv(chart, tmp_path):
    op = discretize_family(chart, K=8)
    path = tmp_path / "trace.csv"
    write_integrand_csv(op, (3, 2, 2), path, points=20)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["s", "g", "g01", "g02", "g12"] and len(rows) == 21
