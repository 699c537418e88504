"""Fidelity measures, bound composition, reports, scaling fits."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridprep.analysis import (
    BoundCheck,
    CostRow,
    PreparationReport,
    cost_table,
    fit_exponent,
    format_float,
    linear_error_bound,
    mixed_fidelity,
    mixed_infidelity,
    product_error_bound,
    pure_infidelity,
    verify_bounds,
)
from gridprep.errors import ValidationError
from gridprep.statevec import DensityMatrix


class TestPureInfidelity:
    def test_identical_states(self):
        v = np.array([0.6, 0.8j])
        assert pure_infidelity(v, v) == 0.0

    def test_global_phase_invariant(self):
        v = np.array([0.6, 0.8])
        assert pure_infidelity(v, np.exp(0.7j) * v) == pytest.approx(0.0)

    def test_orthogonal_states(self):
        assert pure_infidelity([1, 0], [0, 1]) == pytest.approx(1.0)

    def test_normalizes_inputs(self):
        assert pure_infidelity([2, 0], [5, 0]) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            pure_infidelity([1, 0], [1, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValidationError):
            pure_infidelity([0, 0], [1, 0])


class TestMixedFidelity:
    def test_identical_density_matrices(self):
        rho = np.diag([0.7, 0.3])
        assert mixed_fidelity(rho, rho) == pytest.approx(1.0)

    def test_pure_state_reduction(self):
        # rank-one inputs recover |<a|b>|
        a = np.array([1.0, 0.0])
        b = np.array([0.6, 0.8])
        f = mixed_fidelity(np.outer(a, a), np.outer(b, b))
        assert f == pytest.approx(0.6, abs=1e-10)

    def test_orthogonal_mixtures(self):
        assert mixed_fidelity(np.diag([1.0, 0.0]),
                              np.diag([0.0, 1.0])) == pytest.approx(0.0)

    def test_classical_distributions(self):
        # commuting case: fidelity = sum sqrt(p_i q_i)
        p = np.array([0.7, 0.3])
        q = np.array([0.4, 0.6])
        expected = np.sum(np.sqrt(p * q))
        assert mixed_fidelity(np.diag(p), np.diag(q)) == pytest.approx(
            expected, abs=1e-10)

    def test_accepts_density_matrix_objects(self):
        rho = DensityMatrix(np.eye(2) / 2)
        assert mixed_infidelity(rho, rho) == pytest.approx(0.0, abs=1e-8)


class TestBoundComposition:
    def test_product_bound(self):
        assert product_error_bound([0.1, 0.2]) == pytest.approx(0.28)

    def test_linear_dominates_product(self):
        eps = [0.01, 0.02, 0.03]
        assert product_error_bound(eps) <= linear_error_bound(
            3, max(eps)) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 0.2), min_size=1, max_size=6))
    def test_product_bound_below_sum(self, eps):
        assert product_error_bound(eps) <= sum(eps) + 1e-12

    def test_bound_check_ledger(self):
        ok = BoundCheck("a", 0.01, 0.05)
        bad = BoundCheck("b", 0.10, 0.05)
        assert ok.satisfied and not bad.satisfied
        assert verify_bounds([ok])
        assert not verify_bounds([ok, bad])


class TestReports:
    def test_float_format_is_stable(self):
        assert format_float(1 / 3) == "0.333333333333"
        assert format_float(0.0) == "0"

    def test_text_and_rows(self):
        rep = PreparationReport(kind="slater", l=3, m=2, qubits=8,
                                infidelity=1e-10, error_bound=1e-6,
                                counters={"comparators": 1})
        rep.bound_checks.append(BoundCheck("infidelity", 1e-10, 1e-6))
        text = rep.to_text()
        assert "slater" in text and "comparators: 1" in text
        keys = dict(rep.to_rows())
        assert keys["l"] == "3"
        assert keys["comparators"] == "1"
        assert rep.all_bounds_hold()


class TestScalingFits:
    def test_fit_recovers_power_law(self):
        xs = [2, 4, 8, 16]
        ys = [3 * x**2.5 for x in xs]
        slope, _ = fit_exponent(xs, ys)
        assert slope == pytest.approx(2.5, abs=1e-10)

    def test_cost_table(self):
        rows = [CostRow(parameter=2**l, costs={"rot": 2**l - 1})
                for l in range(3, 8)]
        exps = cost_table(rows)
        assert exps["rot"] == pytest.approx(1.0, abs=0.1)

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            cost_table([CostRow(parameter=2, costs={"a": 1})])

    def test_positive_samples_required(self):
        with pytest.raises(ValidationError):
            fit_exponent([1, 2], [0, 1])
