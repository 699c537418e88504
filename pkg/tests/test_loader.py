"""Amplitude loading: multiplexed rotations, phase kickback, error bounds."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridprep.basis import (
    IntegrationSpec,
    box_sine,
    delta_at_site,
    harmonic_hermite,
    ring_plane_wave,
    tabulated,
    uniform,
)
from gridprep.errors import ValidationError
from gridprep.loader import (
    load_amplitude_table,
    load_error_bound,
    load_orbital,
)
from gridprep.statevec import QuantumState, RegisterLayout

CDF = IntegrationSpec(backend="analytic-cdf", epsilon_i=1e-9)


def fresh(l, extra=()):
    layout = RegisterLayout([("x", "particle", l), *extra])
    return QuantumState.zero(layout)


def infidelity(vec, target):
    return 1.0 - abs(np.vdot(vec, target))


class TestLoadOrbital:
    @pytest.mark.parametrize("orb", [
        uniform(), box_sine(1), box_sine(3), ring_plane_wave(2),
        delta_at_site(5, 3), tabulated(np.arange(1, 9, dtype=complex)),
    ])
    def test_matches_sampled_orbital(self, orb):
        l = 3
        state, _ = load_orbital(fresh(l), "x", orb, CDF)
        np.testing.assert_allclose(
            state.amplitudes, orb.grid_values(l), atol=1e-9)

    def test_plan_counters(self):
        l = 4
        state, plan = load_orbital(fresh(l), "x", box_sine(1), CDF)
        assert plan.stages == l
        assert plan.integral_requests == (1 << l) - 1
        assert plan.rotation_applications + plan.empty_blocks == \
            plan.integral_requests

    def test_delta_orbital_skips_empty_blocks(self):
        l = 3
        state, plan = load_orbital(fresh(l), "x", delta_at_site(0, l), CDF)
        assert plan.empty_blocks > 0
        assert abs(state.amplitudes[0]) == pytest.approx(1.0)

    def test_requires_blank_segment(self):
        state = fresh(2)
        state, _ = load_orbital(state, "x", uniform(), CDF)
        with pytest.raises(ValidationError):
            load_orbital(state, "x", uniform(), CDF)

    def test_conditional_load(self):
        layout = RegisterLayout([("x", "particle", 2), ("c", "scratch", 1)])
        amps = np.zeros(8, dtype=complex)
        amps[0b000] = 0.6  # c=0
        amps[0b100] = 0.8  # c=1
        state = QuantumState(layout, amps)
        state, _ = load_orbital(state, "x", uniform(), CDF,
                                controls=[("c", 1)])
        # c=0 branch untouched
        assert state.amplitudes[0] == pytest.approx(0.6)
        # c=1 branch uniform
        for x in range(4):
            assert state.amplitudes[0b100 | x] == pytest.approx(0.4)

    def test_ratio_cache_shared_across_loads(self):
        cache = {}
        _, p1 = load_orbital(fresh(3), "x", box_sine(1), CDF, cache=cache)
        _, p2 = load_orbital(fresh(3), "x", box_sine(1), CDF, cache=cache)
        assert p1.integral_evaluations == 7
        assert p2.integral_evaluations == 0
        assert p2.integral_requests == 7

    def test_phase_kickback(self):
        l = 3
        orb = ring_plane_wave(1)
        state, _ = load_orbital(fresh(l), "x", orb, CDF)
        target = orb.grid_values(l)
        assert infidelity(state.amplitudes, target) < 1e-12
        assert np.abs(np.angle(state.amplitudes[1])) > 1e-3  # genuinely complex


class TestErrorBound:
    def test_formula(self):
        assert load_error_bound(6, 0.01) == pytest.approx(0.03)

    def test_validation(self):
        with pytest.raises(ValidationError):
            load_error_bound(0, 0.01)
        with pytest.raises(ValidationError):
            load_error_bound(4, 1.5)

    @pytest.mark.parametrize("l", [4, 6, 8])
    @pytest.mark.parametrize("eps", [1e-2, 1e-3])
    @pytest.mark.parametrize("sign", [+1, -1])
    def test_worst_sign_noise_respects_bound(self, l, eps, sign):
        orb = box_sine(1)
        perturb = lambda i, k, r: r + sign * eps
        state, _ = load_orbital(fresh(l), "x", orb, CDF,
                                ratio_perturb=perturb)
        measured = infidelity(state.amplitudes, orb.grid_values(l))
        assert measured <= load_error_bound(l, eps)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([1e-2, 1e-3]))
    def test_random_noise_respects_bound(self, seed, eps):
        rng = np.random.default_rng(seed)
        orb = box_sine(2)
        l = 5
        perturb = lambda i, k, r: r + rng.uniform(-eps, eps)
        state, _ = load_orbital(fresh(l), "x", orb, CDF,
                                ratio_perturb=perturb)
        measured = infidelity(state.amplitudes, orb.grid_values(l))
        assert measured <= load_error_bound(l, eps) + 1e-12


class TestAmplitudeTable:
    def test_loads_arbitrary_table(self):
        amps = np.array([0.5, -0.5, 0.5j, -0.5j])
        state, _ = load_amplitude_table(fresh(2), "x", amps, CDF)
        assert infidelity(state.amplitudes, amps) < 1e-12

    def test_pads_to_segment_dimension(self):
        amps = np.array([0.6, 0.8])
        state, _ = load_amplitude_table(fresh(2), "x", amps, CDF)
        np.testing.assert_allclose(np.abs(state.amplitudes),
                                   [0.6, 0.8, 0, 0], atol=1e-12)

    def test_rejects_oversized_table(self):
        with pytest.raises(ValidationError):
            load_amplitude_table(fresh(1), "x", np.ones(4), CDF)


class TestQuadratureFamilies:
    def test_hermite_loading_via_quadrature(self):
        spec = IntegrationSpec(backend="adaptive-quadrature", epsilon_i=1e-9)
        orb = harmonic_hermite(1)
        l = 5
        state, _ = load_orbital(fresh(l), "x", orb, spec)
        assert infidelity(state.amplitudes, orb.grid_values(l)) < 1e-9
