import math
import warnings

import numpy as np
import pytest

from progenykit.errors import ConvergenceError, DomainError, HonestyWarning
from progenykit.gwmodel import GWModel, OffspringSpec
from progenykit.progeny import (
    closed_form_21,
    closed_form_stay,
    progeny_pgf_point,
    progeny_series_21,
    progeny_series_bivariate,
    progeny_series_stay,
    smallest_root_in_unit,
)
from progenykit.series import substitute_weighted
from progenykit.walks import WalkSpec, simple_hitting_pgf


def stay_model(p, q, r):
    return WalkSpec.stay(p, q, r).branching_model()


def two_one_model(p, q1, q2):
    return WalkSpec.two_one(p, q1, q2).branching_model()


def random_cases(n, seed):
    """(kind, params, s) triples over both families, honest and defective."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        w = rng.dirichlet([2, 2, 2])
        w = np.maximum(w, 0.02)
        w /= w.sum()
        s = rng.uniform(0.02, 0.98, size=2)
        out.append(("stay" if i % 2 == 0 else "two_one", tuple(float(x) for x in w), s))
    return out


def closed(kind, params, s):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HonestyWarning)
        return closed_form_stay(*params, s) if kind == "stay" else closed_form_21(*params, s)


class TestPointSolver:
    def test_stay_example(self):
        pt = progeny_pgf_point(stay_model(0.4, 0.3, 0.3), [0.9, 0.9], tol=1e-13)
        np.testing.assert_allclose(pt.rho, closed_form_stay(0.4, 0.3, 0.3, [0.9, 0.9]), atol=1e-10)
        assert pt.residual < 1e-10

    @pytest.mark.parametrize("s", [[0.0, 0.5], [0.5, 1.0], [1.2, 0.5], [0.5]])
    def test_rejects_boundary_points(self, s):
        with pytest.raises(ValueError):
            progeny_pgf_point(stay_model(0.4, 0.3, 0.3), s)

    def test_childless_model(self):
        m = GWModel((OffspringSpec.sterile(2), OffspringSpec.sterile(2)))
        pt = progeny_pgf_point(m, [0.3, 0.7])
        np.testing.assert_array_equal(pt.rho, [0.3, 0.7])

    def test_critical_near_one_raises_with_last_iterate(self):
        m = stay_model(0.35, 0.35, 0.3)
        with pytest.raises(ConvergenceError) as info:
            progeny_pgf_point(m, [1 - 1e-9, 1 - 1e-9], tol=1e-15, max_iter=200)
        err = info.value
        assert err.iterations == 200 and err.last is not None
        assert np.all(err.last <= 1.0)

    @pytest.mark.parametrize("kind,params,s", random_cases(40, 3))
    def test_residual_and_bounds(self, kind, params, s):
        model = stay_model(*params) if kind == "stay" else two_one_model(*params)
        tol = 1e-12
        pt = progeny_pgf_point(model, s, tol=tol)
        assert pt.residual < 1e-10
        assert np.all(pt.rho <= s + 1e-15)
        assert np.all(pt.rho >= 0)

    @pytest.mark.parametrize("kind,params,s", random_cases(20, 4))
    def test_restart_consistency(self, kind, params, s):
        model = stay_model(*params) if kind == "stay" else two_one_model(*params)
        tol = 1e-10
        a = progeny_pgf_point(model, s, tol=tol).rho
        b = progeny_pgf_point(model, s, tol=tol / 2).rho
        assert np.max(np.abs(a - b)) < 2 * tol

    def test_supercritical_near_one_approaches_pi(self):
        m = stay_model(0.2, 0.6, 0.2)
        pt = progeny_pgf_point(m, [1 - 1e-7, 1 - 1e-7], tol=1e-14)
        np.testing.assert_allclose(pt.rho, m.pi, atol=1e-4)

    def test_general_model(self):
        # three types with tables: residual contract only
        m = GWModel(
            (
                OffspringSpec.table([((0, 0, 0), 0.5), ((1, 1, 0), 0.3), ((0, 0, 2), 0.2)]),
                OffspringSpec.table([((0, 0, 0), 0.7), ((1, 0, 1), 0.3)]),
                OffspringSpec.geometric(0.6, [0.1, 0.1, 0.2]),
            )
        )
        pt = progeny_pgf_point(m, [0.9, 0.8, 0.95])
        assert pt.residual < 1e-11


class TestClosedForms:
    @pytest.mark.parametrize("kind,params,s", random_cases(100, 7))
    def test_agreement_with_iteration(self, kind, params, s):
        model = stay_model(*params) if kind == "stay" else two_one_model(*params)
        pt = progeny_pgf_point(model, s, tol=1e-13)
        np.testing.assert_allclose(pt.rho, closed(kind, params, s), atol=1e-8, rtol=0)

    def test_stay_at_ones(self):
        np.testing.assert_allclose(closed_form_stay(0.4, 0.3, 0.3, [1, 1]), [1, 1], atol=1e-15)

    def test_stay_zero_first_component(self):
        np.testing.assert_array_equal(closed_form_stay(0.4, 0.3, 0.3, [0, 1]), [0, 1])

    def test_stay_defective_warns_and_gives_pi(self):
        with pytest.warns(HonestyWarning):
            rho = closed_form_stay(0.2, 0.6, 0.2, [1, 1])
        assert rho[0] == pytest.approx(1 / 3, abs=1e-15)

    def test_stay_negative_discriminant(self):
        with pytest.raises(DomainError):
            closed_form_stay(0.35, 0.35, 0.3, [1.1, 1.0])

    def test_stay_r_to_zero(self):
        rng = np.random.default_rng(2)
        r = 1e-13
        for _ in range(20):
            p = rng.uniform(0.5, 0.95)
            q = 1 - p - r
            u = rng.uniform(0.05, 0.999)
            rho1 = closed_form_stay(p, q, r, [u * u, u])[0]
            # first-passage PGF of the simple walk times one extra u
            assert rho1 == pytest.approx(u * simple_hitting_pgf(p, u), abs=1e-11)
            quad = (1 - math.sqrt(1 - 4 * p * q * u * u)) / (2 * q)
            assert rho1 == pytest.approx(quad, abs=1e-11)

    def test_21_at_ones(self):
        for params in [(0.7, 0.2, 0.1), (0.6, 0.2, 0.2), (0.5, 0.3, 0.1 + 0.1)]:
            if params[0] - params[1] - 2 * params[2] >= -1e-12:
                np.testing.assert_allclose(closed_form_21(*params, [1, 1]), [1, 1], atol=1e-12)

    def test_21_boundary_of_drift(self):
        # p - q1 - 2 q2 = 0: double root at 1
        np.testing.assert_allclose(closed_form_21(0.6, 0.2, 0.2, [1, 1]), [1, 1], atol=1e-12)

    def test_21_defective_gives_pi(self):
        params = (0.3, 0.4, 0.3)
        rho = closed_form_21(*params, [1, 1])
        np.testing.assert_allclose(rho, two_one_model(*params).pi, atol=1e-12)

    def test_21_q2_to_zero(self):
        rng = np.random.default_rng(9)
        q2 = 1e-13
        for _ in range(20):
            p = rng.uniform(0.05, 0.95)
            q1 = 1 - p - q2
            u1, u2 = rng.uniform(0.05, 1.0, size=2)
            g = closed_form_21(p, q1, q2, [u1, u2])[0]
            quad = (1 - math.sqrt(1 - 4 * p * q1 * u1)) / (2 * q1)
            assert g == pytest.approx(quad, abs=1e-9)

    def test_21_second_component_relation(self):
        rho = closed_form_21(0.6, 0.25, 0.15, [0.4, 0.8])
        assert rho[1] == pytest.approx(rho[0] ** 2 * 0.8 / 0.4, rel=1e-15)

    def test_root_finder_reports_missing_root(self):
        with pytest.raises(DomainError):
            smallest_root_in_unit(lambda x: 1.0 + x)

    def test_root_finder_picks_smallest(self):
        # roots at 0.2, 0.5, 0.9
        root = smallest_root_in_unit(lambda x: -(x - 0.2) * (x - 0.5) * (x - 0.9))
        assert root == pytest.approx(0.2, abs=1e-13)


class TestSeries:
    def test_stay_leading_coefficients(self):
        c = progeny_series_stay(0.4, 0.3, 0.3, 32).coeffs
        assert c[0] == 0.0 and c[1] == 0.0
        assert c[2] == pytest.approx(0.4, abs=1e-15)

    @pytest.mark.parametrize("params", [(0.5, 0.2, 0.3), (0.4, 0.3, 0.3), (0.6, 0.1, 0.3)])
    def test_stay_honest_mass(self, params):
        c = progeny_series_stay(*params, 4096)
        assert c(1.0) == pytest.approx(1.0, abs=1e-6)
        assert c.coeffs.min() >= -1e-12

    def test_stay_defective_mass(self):
        with pytest.warns(HonestyWarning):
            c = progeny_series_stay(0.2, 0.5, 0.3, 4096)
        assert c(1.0) == pytest.approx(stay_model(0.2, 0.5, 0.3).pi[0], abs=1e-4)

    def test_stay_matches_bivariate_substitution(self):
        N = 40
        G1, _ = progeny_series_bivariate(stay_model(0.45, 0.25, 0.3), N)
        uni = substitute_weighted(G1, (2, 1))
        np.testing.assert_allclose(uni.coeffs, progeny_series_stay(0.45, 0.25, 0.3, N).coeffs, atol=1e-14)

    def test_21_leading_coefficients(self):
        g = progeny_series_21(0.6, 0.25, 0.15, 32).coeffs
        assert g[0] == 0.0 and g[1] == 0.0
        # P(T = 1) = p sits at s^2 since g = E(s^(T+1))
        assert g[2] == pytest.approx(0.6, abs=1e-15)

    def test_21_sweep_equals_passes(self):
        a = progeny_series_21(0.6, 0.25, 0.15, 200, method="sweep").coeffs
        b = progeny_series_21(0.6, 0.25, 0.15, 200, method="passes").coeffs
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-17)

    def test_21_matches_bivariate_substitution(self):
        N = 40
        G1, _ = progeny_series_bivariate(two_one_model(0.6, 0.25, 0.15), N)
        uni = substitute_weighted(G1, (2, 1))
        np.testing.assert_allclose(uni.coeffs, progeny_series_21(0.6, 0.25, 0.15, N).coeffs, atol=1e-14)

    def test_21_bivariate_is_fixed_point(self):
        model = two_one_model(0.5, 0.3, 0.2)
        G1, G2 = progeny_series_bivariate(model, 16)
        for s in ([0.3, 0.4], [0.1, 0.2]):
            # a truncation at total degree 16 is accurate at small s
            assert G1(*s) == pytest.approx(closed_form_21(0.5, 0.3, 0.2, s)[0], abs=1e-6)

    @pytest.mark.parametrize("params", [(0.7, 0.2, 0.1), (0.8, 0.1, 0.1), (0.6, 0.3, 0.1)])
    def test_21_honest_mass(self, params):
        g = progeny_series_21(*params, 4096)
        assert g(1.0) == pytest.approx(1.0, abs=1e-6)
        assert g.coeffs.min() >= -1e-12

    def test_21_defective_mass_matches_pi(self):
        params = (0.3, 0.4, 0.3)
        with pytest.warns(HonestyWarning):
            g = progeny_series_21(*params, 4096)
        assert g(1.0) == pytest.approx(two_one_model(*params).pi[0], abs=1e-4)

    def test_21_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            progeny_series_21(0.6, 0.25, 0.15, 10, method="newton")
