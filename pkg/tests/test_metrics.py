"""Metric arithmetic, statistics, and the measurement suites."""

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudrerun.errors import InsufficientSamples, NonPositiveBaseline, OpenLedger
from cloudrerun.metrics import (
    cost_by_usage,
    efficiency_comparison,
    make_suite_request,
    measure,
    pooled_t_statistic,
    regularized_incomplete_beta,
    reproducibility_overhead,
    run_efficiency_suite,
    run_scaling_suite,
    two_sided_p_value,
)
from cloudrerun.simcloud.ledger import CostLedger

from helpers import make_request, run_serverless

from oracles import student_t_reference

# Frozen reference values (independent implementation) for a fixed fixture.
FIXTURE_A = [10.0, 11.0, 12.0]
FIXTURE_B = [20.0, 21.0, 22.0]
FIXTURE_T = -12.24744871391589
FIXTURE_P = 0.00025521674944192687


class TestCoreMetrics:
    def test_m3_is_product_of_m1_m2(self):
        outcome, env = run_serverless(make_request(engine="dask", nodes=2))
        report = measure(outcome, env.ledger)
        assert report.m3_ppr == report.m1_hours * report.m2_cost
        assert report.m1_hours == outcome.duration_s / 3600

    def test_m2_matches_manual_breakdown(self):
        outcome, env = run_serverless(make_request(engine="dask", nodes=2))
        report = measure(outcome, env.ledger)
        assert sum(report.breakdown.values(), Fraction(0)) == report.m2_cost
        assert set(report.breakdown) == {"compute", "network", "requests"}

    def test_open_ledger_rejected(self):
        ledger = CostLedger()
        ledger.open_entry("x", "compute", Fraction(1), Fraction(0), scope="run-1")
        with pytest.raises(OpenLedger):
            ledger.compute_cost(scope="run-1")

    def test_cost_by_usage(self):
        assert cost_by_usage(8, 0.25) == 2
        assert cost_by_usage(8, Fraction(1, 3)) == Fraction(8, 3)
        assert cost_by_usage("7/2", "1/7") == Fraction(1, 2)

    def test_reproducibility_overhead(self):
        assert reproducibility_overhead(12, 10) == Fraction(1, 5)
        assert reproducibility_overhead(10, 10) == 0
        with pytest.raises(NonPositiveBaseline):
            reproducibility_overhead(5, 0)


class TestStudentT:
    def test_frozen_fixture(self):
        t, dof = pooled_t_statistic(FIXTURE_A, FIXTURE_B)
        assert dof == 4
        assert math.isclose(t, FIXTURE_T, rel_tol=0, abs_tol=1e-12)
        assert math.isclose(two_sided_p_value(t, dof), FIXTURE_P, rel_tol=0, abs_tol=1e-12)

    def test_identical_samples(self):
        t, dof = pooled_t_statistic([5.0, 5.0, 5.0], [5.0, 5.0, 5.0])
        assert t == 0.0
        assert two_sided_p_value(t, dof) == 1.0

    def test_zero_variance_different_means(self):
        t, dof = pooled_t_statistic([5.0, 5.0], [9.0, 9.0])
        assert math.isinf(t)
        assert two_sided_p_value(t, dof) == 0.0

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            pooled_t_statistic([1.0], [2.0, 3.0])
        with pytest.raises(InsufficientSamples):
            efficiency_comparison([1], [2, 3])

    def test_symmetry(self):
        t_ab, _ = pooled_t_statistic(FIXTURE_A, FIXTURE_B)
        t_ba, _ = pooled_t_statistic(FIXTURE_B, FIXTURE_A)
        assert t_ab == -t_ba

    # scipy warns about precision on near-identical samples; the comparison
    # still holds at the tolerances below.
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @settings(max_examples=60, deadline=None)
    @given(
        a=st.lists(st.integers(-1000, 1000), min_size=2, max_size=12),
        b=st.lists(st.integers(-1000, 1000), min_size=2, max_size=12),
    )
    def test_matches_reference_implementation(self, a, b):
        a = [float(x) for x in a]
        b = [float(x) for x in b]
        t, dof = pooled_t_statistic(a, b)
        ref_t, ref_p = student_t_reference(a, b)
        if math.isinf(t) or math.isnan(ref_t):
            return
        assert math.isclose(t, ref_t, rel_tol=1e-12, abs_tol=1e-12)
        assert math.isclose(two_sided_p_value(t, dof), ref_p, rel_tol=1e-10, abs_tol=1e-12)

    def test_incomplete_beta_edges(self):
        assert regularized_incomplete_beta(2.0, 0.5, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 0.5, 1.0) == 1.0
        # symmetric case with known closed form: I_x(1,1) = x
        for x in (0.1, 0.37, 0.5, 0.93):
            assert math.isclose(regularized_incomplete_beta(1.0, 1.0, x), x, abs_tol=1e-14)


class TestEfficiencyReport:
    def test_percent_reduction_formula(self):
        report = efficiency_comparison([90, 110], [80, 120])
        assert report.percent_reduction == 0
        report = efficiency_comparison([126, 126], [100, 100])
        assert report.percent_reduction == 26

    def test_suite_runs_and_p_value_is_sane(self):
        report = run_efficiency_suite(repeats=6, poll_window=10)
        assert report.n_sdk == report.n_serverless == 6
        assert report.mean_sdk_s > report.mean_serverless_s
        assert report.percent_reduction > 0
        assert 0 <= report.p_value <= 1


class TestScalingSuites:
    def test_scale_up_trends(self):
        report = run_scaling_suite("scale_up", levels=(1, 2, 4, 8))
        durations = [row.metrics.duration_s for row in report.rows]
        costs = [row.metrics.m2_cost for row in report.rows]
        assert all(a > b for a, b in zip(durations, durations[1:]))
        # one node at a fixed rate: shorter run means cheaper run
        assert all(a > b for a, b in zip(costs, costs[1:]))
        assert [row.nodes for row in report.rows] == [1, 1, 1, 1]
        assert [row.parallelism for row in report.rows] == [1, 2, 4, 8]

    def test_scale_out_trends(self):
        report = run_scaling_suite("scale_out", levels=(1, 2, 4, 8))
        durations = [row.metrics.duration_s for row in report.rows]
        costs = [row.metrics.m2_cost for row in report.rows]
        assert all(a > b for a, b in zip(durations, durations[1:]))
        # more nodes cost more in total
        assert all(a < b for a, b in zip(costs, costs[1:]))
        assert [row.nodes for row in report.rows] == [1, 2, 4, 8]

    def test_usage_cost_fraction(self):
        report = run_scaling_suite("scale_up", levels=(1, 2, 4))
        last = report.rows[-1]
        assert last.usage_fraction == 1
        assert last.usage_cost == last.metrics.m2_cost
        first = report.rows[0]
        assert first.usage_cost == first.metrics.m2_cost * Fraction(1, 4)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            run_scaling_suite("sideways", levels=(1, 2))

    def test_suite_request_shape(self):
        req = make_suite_request(nodes=4, parallelism=2, seed=3)
        assert req.resources.cloud_aws.instance_number == 4
        assert "--parallelism 2" in req.application.command
        assert "--seed 3" in req.application.command
