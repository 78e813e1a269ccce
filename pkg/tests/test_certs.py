"""Closed-form certificates, inequality scans, and the falsifier.

Expected values are frozen from a 40-digit mpmath evaluation of the same
closed forms, computed independently before the implementation.
"""

import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dqbsde as q

from conftest import make, planted_h2_config, remark22_config, structured_config

# frozen oracle values (mpmath, 40 digits)
LOG_INEQ_111 = 0.9867597430533607
LOG_INEQ_TINY = 0.6799069236123060
LOG_INEQ_114 = 1.7796204359617528
C1_1111 = 14.33974220141150148
LAM_1111 = 288.02142145544312
C1_2211 = 26.67307553474483481
LAM_2211 = 79511.31755426493276
KS_111 = 2.0132402569466393
BMO_LOG_SPEC_LAMBDA = 295.49820503646179   # lambda pinned at 288.0226
BMO_INNER_SPEC_LAMBDA = 441.11723333333333
EXPMOM_1011 = 3.2974425414002564
EXPMOM_HALF = 4.6501393205542421


class TestLogInequality:
    def test_frozen_values(self):
        assert q.check_log_inequality(1, 1, 1) == pytest.approx(LOG_INEQ_111, rel=1e-12)
        assert q.check_log_inequality(1e-12, 1, 1) == pytest.approx(LOG_INEQ_TINY, rel=1e-12)
        assert q.check_log_inequality(1, 1, 4) == pytest.approx(LOG_INEQ_114, rel=1e-12)

    def test_rejects_nonpositive(self):
        for bad in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
            with pytest.raises(ValueError):
                q.check_log_inequality(*bad)

    def test_scan_positive_on_modest_grid(self):
        scan = q.scan_log_inequality((1e-6, 1e6, 24), (1e-6, 1e6, 24), (1e-6, 1e6, 24))
        assert scan.min_residual > 0
        assert scan.max_argmin_cell_offset <= 1

    def test_single_point_matches_direct_evaluation(self):
        scan = q.scan_log_inequality((1.0, 1.0, 1), (1.0, 1.0, 1), (1.0, 1.0, 1))
        assert scan.min_residual == pytest.approx(q.check_log_inequality(1, 1, 1),
                                                  rel=1e-14)

    def test_slice_argmin_brackets_exact_minimizer(self):
        # (y, C) = (1, 4): stationarity gives 2 x0^2 + 2 x0 = 4, so x0 = 1
        scan = q.scan_log_inequality((0.25, 4.0, 33), (1.0, 1.0, 1), (4.0, 4.0, 1))
        x_star = scan.argmin[0]
        step = (math.log(4.0) - math.log(0.25)) / 32
        assert abs(math.log(x_star) - math.log(1.0)) <= step + 1e-12

    def test_range_validation(self):
        with pytest.raises(ValueError, match="inverted"):
            q.scan_log_inequality((2.0, 1.0, 4), (1, 1, 1), (1, 1, 1))
        with pytest.raises(ValueError, match="empty"):
            q.scan_log_inequality((1.0, 2.0, 0), (1, 1, 1), (1, 1, 1))
        with pytest.raises(ValueError, match="positive"):
            q.scan_log_inequality((-1.0, 2.0, 4), (1, 1, 1), (1, 1, 1))


class TestC1Lambda:
    def test_frozen_golden_values(self):
        c1, lam = q.compute_c1_lambda(1, 1.0, 1.0, 1.0)
        assert c1 == pytest.approx(C1_1111, rel=1e-12)
        assert lam == pytest.approx(LAM_1111, rel=1e-12)
        c1, lam = q.compute_c1_lambda(2, 2.0, 1.0, 1.0)
        assert c1 == pytest.approx(C1_2211, rel=1e-12)
        assert lam == pytest.approx(LAM_2211, rel=1e-12)

    def test_all_integral_terms_collapse(self):
        c1, lam = q.compute_c1_lambda(1, 1.0, 0.0, 0.0)
        assert c1 == pytest.approx(math.log(4.0), rel=1e-12)
        assert lam == pytest.approx(c1, rel=1e-15)

    def test_log_space_variant(self):
        log_lam = q.compute_lambda_log(1, 1.0, 1.0, 1.0)
        assert log_lam == pytest.approx(math.log(LAM_1111), rel=1e-12)
        # past the double range the plain value saturates, the log stays exact
        c1, lam = q.compute_c1_lambda(4, 4.0, 50.0, 1.0)
        assert math.isinf(lam)
        assert q.compute_lambda_log(4, 4.0, 50.0, 1.0) == pytest.approx(
            math.log(c1) + 4 * 50.0 * 6.0, rel=1e-12)

    def test_monotone_in_n_c0_T(self):
        grid_n = [1, 2, 3]
        grid_c0 = [0.25, 1.0, 2.0]
        grid_T = [0.0, 0.5, 2.0]
        for gamma in (0.5, 1.0, 3.0):
            for c0, T in product(grid_c0, grid_T):
                vals = [q.compute_c1_lambda(n, gamma, c0, T) for n in grid_n]
                assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(vals, vals[1:]))
            for n, T in product(grid_n, grid_T):
                vals = [q.compute_c1_lambda(n, gamma, c0, T) for c0 in grid_c0]
                assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(vals, vals[1:]))
            for n, c0 in product(grid_n, grid_c0):
                vals = [q.compute_c1_lambda(n, gamma, c0, T) for T in grid_T]
                assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(vals, vals[1:]))

    def test_range_validation(self):
        with pytest.raises(ValueError):
            q.compute_c1_lambda(0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            q.compute_c1_lambda(1, 0.0, 1.0, 1.0)


class TestKs:
    def test_eta_zero(self):
        assert q.compute_ks(0.0, 1.0, 1) == pytest.approx(1 / 6, rel=1e-15)

    def test_frozen_value(self):
        assert q.compute_ks(1.0, 1.0, 1) == pytest.approx(KS_111, rel=1e-12)

    def test_gamma_over_6n_coincidence(self):
        assert q.compute_ks(1.0, 2.0, 2) == pytest.approx(KS_111, rel=1e-12)

    def test_exact_integral(self):
        eta = q.CoefficientFunction(((0.0, 1.0), (0.5, 0.0)))
        got = q.compute_ks_integral(eta, 1.0, 1, 1.0)
        expected = 1 / 6 + 0.5 * (0.5 * (1 + math.log(2.0) + 2.0))
        assert got == pytest.approx(expected, rel=1e-14)


class TestH3Budget:
    ZERO = q.CoefficientFunction(((0.0, 0.0),))
    ONE = q.CoefficientFunction(((0.0, 1.0),))

    def test_terminal_only(self):
        assert q.compute_h3_budget(0.5, self.ZERO, self.ZERO, self.ZERO, 1.0) == 0.5

    def test_all_ones(self):
        got = q.compute_h3_budget(0.5, self.ONE, self.ONE, self.ONE, 1.0)
        assert got == pytest.approx(0.5 + 2.0 + math.log(2.0), rel=1e-14)

    def test_eta_only(self):
        got = q.compute_h3_budget(0.0, self.ZERO, self.ZERO, self.ONE, 1.0)
        assert got == pytest.approx(math.log(2.0), rel=1e-14)

    def test_zero_coefficients_equal_bound_exactly(self):
        for xi in (0.0, 0.25, 3.75):
            assert q.compute_h3_budget(xi, self.ZERO, self.ZERO, self.ZERO, 2.0) == xi


class TestBmoBound:
    def test_frozen_log_value(self):
        got = q.compute_bmo_bound_log(1, 1.0, 1.0, 1.0, 288.0226)
        assert got == pytest.approx(BMO_LOG_SPEC_LAMBDA, abs=1e-9)

    def test_inner_factor_composition(self):
        # bound = log 4 + logaddexp(gamma c0 + log(n/gamma^2), gamma lam + log(n/gamma * inner))
        lam = 288.0226
        expected = math.log(4.0) + np.logaddexp(
            1.0, lam + math.log(BMO_INNER_SPEC_LAMBDA))
        assert q.compute_bmo_bound_log(1, 1.0, 1.0, 1.0, lam) == pytest.approx(
            expected, abs=1e-6)

    def test_no_overflow_path(self):
        got = q.compute_bmo_bound_log(1, 1.0, 1e-12, 0.0, math.log(4.0))
        assert math.isfinite(got)

    def test_monotone_in_lambda(self):
        lo = q.compute_bmo_bound_log(1, 1.0, 1.0, 1.0, 288.0226)
        hi = q.compute_bmo_bound_log(1, 1.0, 1.0, 1.0, 300.0)
        assert hi > lo


class TestContractionHorizon:
    def test_values(self):
        assert q.contraction_horizon(2.0) == 0.25
        assert q.contraction_horizon(0.5) == 1.0
        assert math.isinf(q.contraction_horizon(0.0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            q.contraction_horizon(-1.0)


class TestYoungPower:
    def test_frozen_values(self):
        assert q.check_young_power(1.0, 0.0, 1.0, 2.0) == pytest.approx(0.5, rel=1e-14)
        assert q.check_young_power(1.0, 0.5, 1.0, 0.0) == pytest.approx(0.25, rel=1e-14)

    def test_equality_case(self):
        assert q.check_young_power(1.0, 0.0, 1.0, 1.0) == 0.0
        for L in (0.1, 0.5, 1.0, 2.0, 10.0):
            for eps in (0.1, 0.5, 1.0, 2.0, 10.0):
                assert abs(q.check_young_power(L, 0.0, eps, L / eps)) <= 1e-12

    def test_scan_nonnegative(self):
        scan = q.scan_young_power((0.0, 0.25, 0.5, 0.9),
                                  (1e-2, 1e2, 10), (1e-2, 1e2, 10), (1e-2, 1e2, 10))
        assert scan.min_residual >= -1e-9

    def test_range_validation(self):
        with pytest.raises(ValueError):
            q.check_young_power(0.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            q.check_young_power(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            q.scan_young_power((), (1, 1, 1), (1, 1, 1), (1, 1, 1))


class TestExpMomentBound:
    def test_frozen_values(self):
        assert q.exp_moment_bound(1.0, 0.0, 1.0, 1.0) == pytest.approx(
            EXPMOM_1011, rel=1e-12)
        assert q.exp_moment_bound(1.0, 0.5, 1.0, 1.0) == pytest.approx(
            EXPMOM_HALF, rel=1e-12)

    def test_vanishing_weight(self):
        assert q.exp_moment_bound(1e-300, 0.0, 1.0, 1.0) == pytest.approx(2.0, rel=1e-14)

    @given(st.floats(min_value=0.01, max_value=5.0),
           st.floats(min_value=0.01, max_value=3.0),
           st.floats(min_value=0.0, max_value=4.0))
    @settings(max_examples=100, deadline=None)
    def test_alpha_zero_closed_form(self, L, b, T):
        got = q.exp_moment_bound(L, 0.0, b, T)
        expected = 2.0 * math.exp(L ** 2 * b ** 2 * T / 2.0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_log_form_handles_overflow(self):
        log_val = q.exp_moment_bound_log(10.0, 0.5, 10.0, 10.0)
        assert math.isfinite(log_val)
        assert math.isinf(q.exp_moment_bound(10.0, 0.5, 10.0, 10.0))


class TestCertificateAssembly:
    def test_remark22_certificate(self):
        inst, _ = make(remark22_config())
        cert = q.build_certificate(inst)
        assert cert.h3_budget == pytest.approx(0.25 + 2.0 + math.log(2.0), rel=1e-12)
        assert cert.h3_satisfied
        assert cert.lambda_bound == pytest.approx(
            cert.c1 * math.exp(2 * 3.0 * 4.5), rel=1e-12)
        assert math.isinf(cert.contraction_horizon)
        assert not cert.lambda_log_space
        # the a priori bound always dominates the terminal norm under the budget
        assert cert.lambda_bound >= inst.terminal.declared_bound

    def test_log_space_flag(self):
        cfg = structured_config(**{"params.C0": 150.0, "params.gamma": 4.0})
        inst, _ = make(cfg)
        cert = q.build_certificate(inst)
        assert cert.lambda_log_space and math.isinf(cert.lambda_bound)
        assert math.isfinite(cert.lambda_log)


class TestFalsifier:
    def test_clean_on_compliant_instance(self):
        inst, _ = make(remark22_config())
        report = q.falsify_assumptions(inst, seed=0, count=2000, radius=10.0)
        assert report.clean
        assert report.sample_count == 2000
        assert not report.domain_errors

    def test_planted_linear_growth_caught(self):
        inst, _ = make(planted_h2_config())
        report = q.falsify_assumptions(inst, seed=7, count=2000, radius=1e6)
        assert not report.clean
        assert {v.assumption for v in report.violations} == {"H2"}

    def test_every_violation_reverifies(self):
        inst, _ = make(planted_h2_config())
        report = q.falsify_assumptions(inst, seed=11, count=500, radius=1e6)
        assert report.violations
        for v in report.violations:
            assert q.reverify_violation(inst, v, tol=1e-12)
            lhs, rhs = q.certs.evaluate_assumption(inst, v)
            assert lhs == pytest.approx(v.lhs, rel=1e-12)
            assert rhs == pytest.approx(v.rhs, rel=1e-12)

    def test_zero_generator_clean(self):
        inst, _ = make(structured_config(**{"terminal.1": "0", "terminal.bound": 0.0}))
        report = q.falsify_assumptions(inst, seed=1, count=1000, radius=100.0)
        assert report.clean

    def test_deterministic_for_fixed_seed(self):
        inst, _ = make(planted_h2_config())
        a = q.falsify_assumptions(inst, seed=5, count=300, radius=1e6)
        b = q.falsify_assumptions(inst, seed=5, count=300, radius=1e6)
        assert a.violation_count == b.violation_count
        assert [(v.t, v.lhs, v.rhs) for v in a.violations] \
            == [(v.t, v.lhs, v.rhs) for v in b.violations]

    def test_triangular_assumptions(self):
        # own-row quadratic k cannot satisfy a growth bound with C1 = 0
        cfg = {
            "problem.n": 1, "problem.d": 1, "problem.T": 1.0, "grid.N": 2,
            "generator.kind": "triangular", "generator.1.k": "norm2(z1)",
            "terminal.1": "0", "terminal.bound": 0.0,
            "params.gamma": 2.0, "params.K": 1.0, "params.delta": 0.0, "params.C0": 1.0,
            "triangular.C1": 0.0, "triangular.C2": 2.0, "triangular.lipBeta": 0.0,
        }
        inst, _ = make(cfg)
        report = q.falsify_assumptions(inst, seed=3, count=500, radius=2.0)
        assert "A1" in {v.assumption for v in report.violations}
        for v in report.violations:
            assert q.reverify_violation(inst, v)

    def test_domain_errors_recorded_not_fatal(self):
        cfg = structured_config(**{"generator.1.h": "log(y1)"})
        inst, _ = make(cfg)
        report = q.falsify_assumptions(inst, seed=2, count=64, radius=5.0)
        assert report.domain_errors  # log of negative y1 at some samples
