import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from legrad.diagnostics import VarianceTracker, fixed_point_variance_study, write_variance_csv
from legrad.estimators import EstimatorConfig
from legrad.targets import CorrelatedGaussianTarget, FunctionTarget
from legrad.variational import Bernoulli, Categorical, VariationalModel, factorized_gaussian


class TestVarianceTracker:
    def test_constant_stream(self):
        tr = VarianceTracker([0])
        out = [tr.push_and_variance(0, 3.0) for _ in range(15)]
        assert out[:9] == [None] * 9
        assert out[9:] == [0.0] * 6

    def test_alternating_signs(self):
        tr = VarianceTracker([4])
        for k in range(10):
            v = tr.push_and_variance(4, (-1.0) ** k)
        assert v == pytest.approx(10 / 9, abs=1e-15)

    def test_missing_until_full(self):
        tr = VarianceTracker([0], window=3)
        assert tr.push_and_variance(0, 1.0) is None
        assert tr.push_and_variance(0, 2.0) is None
        assert tr.push_and_variance(0, 4.0) == pytest.approx(np.var([1, 2, 4], ddof=1))

    def test_unregistered_index(self):
        with pytest.raises(KeyError):
            VarianceTracker([0]).push_and_variance(1, 0.0)

    def test_push_reads_tracked_entries(self):
        tr = VarianceTracker([1, 3], window=2)
        tr.push(np.array([0.0, 1.0, 0.0, 5.0]))
        out = tr.push(np.array([0.0, 3.0, 0.0, 5.0]))
        assert out == [pytest.approx(2.0), pytest.approx(0.0)]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=10, max_size=40), st.integers(2, 10))
    def test_matches_two_pass_variance(self, values, window):
        tr = VarianceTracker([0], window=window)
        for k, v in enumerate(values):
            got = tr.push_and_variance(0, v)
            if k + 1 >= window:
                w = np.array(values[k + 1 - window:k + 1])
                direct = ((w - w.mean()) ** 2).sum() / (window - 1)
                assert got == pytest.approx(direct, rel=1e-12, abs=1e-12 * max(1.0, np.abs(w).max() ** 2))


class TestFixedPointStudy:
    def test_legrad_on_constant_target(self):
        model = VariationalModel([Bernoulli(0.2), Categorical([0.1, 0.2, 0.7])])
        target = FunctionTarget(lambda X: np.full(X.shape[0], 5.0), 2)
        table = fixed_point_variance_study(model, target, {"le": EstimatorConfig("legrad")}, 50)
        assert (table["le"] == 0).all()

    def test_single_bernoulli_ldgrad_two_point_variance(self):
        p = 0.6
        model = VariationalModel([Bernoulli(p)])
        target = FunctionTarget(lambda X: X[:, 0], 1)
        table = fixed_point_variance_study(model, target, {"ld": EstimatorConfig("ldgrad")}, 40_000, seed=1)
        # outcomes: 1 - p with probability p, 0 otherwise
        expected = p * (1 - p) ** 2 - (p * (1 - p)) ** 2
        assert table["ld"][0] == pytest.approx(expected, rel=0.04)

    def test_legrad_beats_regrad_on_gaussian_fit(self):
        target = CorrelatedGaussianTarget(100)
        model = factorized_gaussian(np.full(100, 1.5), 0.5)
        table = fixed_point_variance_study(
            model, target, {"legrad": EstimatorConfig("legrad"), "regrad": EstimatorConfig("regrad")}, 500, coords=[0]
        )
        assert table["legrad"][0] < table["regrad"][0]

    def test_order_of_estimators_does_not_matter(self):
        target = CorrelatedGaussianTarget(10)
        model = factorized_gaussian(np.zeros(10), 1.0)
        a = {"legrad": EstimatorConfig("legrad"), "ldgrad": EstimatorConfig("ldgrad", 5)}
        b = dict(reversed(list(a.items())))
        ta = fixed_point_variance_study(model, target, a, 30, seed=3)
        tb = fixed_point_variance_study(model, target, b, 30, seed=3)
        for k in a:
            np.testing.assert_array_equal(ta[k], tb[k])

    def test_needs_two_calls(self):
        with pytest.raises(ValueError):
            fixed_point_variance_study(factorized_gaussian(0.0, 1.0), FunctionTarget(np.sum, 1), {}, 1)

    def test_csv_layout(self):
        fh = io.StringIO()
        write_variance_csv({"legrad": np.array([0.5, 0.25])}, [0, 2], fh)
        assert fh.getvalue() == "estimator,coordinate,variance\nlegrad,0,0.5\nlegrad,2,0.25\n"
