"""Occupation vectors, permutation machinery, (anti)symmetrization."""
import math
from itertools import combinations, permutations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridprep.assemble import (
    OccupationVector,
    antisymmetrize,
    network_comparator_count,
    odd_even_network,
    particle_segments,
    permutation_segments,
    prepare_hartree_product,
    quword_width,
    rank_to_permutation,
    slater_oracle,
)
from gridprep.basis import BasisSet, IntegrationSpec, box_sine, delta_at_site
from gridprep.errors import StructuralError, ValidationError
from gridprep.statevec import QuantumState, RegisterLayout, swap_segments

CDF = IntegrationSpec(backend="analytic-cdf", epsilon_i=1e-9)


class TestOccupationVector:
    def test_parse_bitstring(self):
        occ = OccupationVector.parse("1100")
        assert occ.n == (1, 1, 0, 0)
        assert occ.m == 2
        assert occ.occupied_indices() == [0, 1]

    def test_parse_count_list(self):
        occ = OccupationVector.parse("2,0,1", "bosonic")
        assert occ.n == (2, 0, 1)
        assert occ.m == 3
        assert occ.occupied_indices() == [0, 0, 2]
        assert occ.multiplicity_factor() == 2

    def test_pauli_exclusion(self):
        with pytest.raises(ValidationError):
            OccupationVector((2, 0), "fermionic")

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            OccupationVector((-1, 1))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            OccupationVector((0, 0))


class TestPermutationMachinery:
    def test_quword_width(self):
        assert quword_width(1) == 0
        assert quword_width(2) == 1
        assert quword_width(3) == 2
        assert quword_width(4) == 2
        assert quword_width(5) == 3

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_rank_mapping_is_bijective(self, m):
        tuples = list(product(*[range(1, m - i + 1) for i in range(m)]))
        perms = {rank_to_permutation(t) for t in tuples}
        assert len(perms) == math.factorial(m)
        assert perms == set(permutations(range(1, m + 1)))

    def test_rank_selection_rule(self):
        # digit d picks the d-th smallest unused value
        assert rank_to_permutation((1, 1, 1)) == (1, 2, 3)
        assert rank_to_permutation((3, 2, 1)) == (3, 2, 1)
        assert rank_to_permutation((2, 1, 1)) == (2, 1, 3)

    def test_rank_digit_validation(self):
        with pytest.raises(ValidationError):
            rank_to_permutation((4, 1, 1))

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_network_sorts_everything(self, m):
        layers = odd_even_network(m)
        assert len(layers) == m
        assert network_comparator_count(m) == m * (m - 1) // 2
        for perm in permutations(range(m)):
            lanes = list(perm)
            for layer in layers:
                for a, b in layer:
                    if lanes[a] > lanes[b]:
                        lanes[a], lanes[b] = lanes[b], lanes[a]
            assert lanes == sorted(lanes)


def _pipeline(occ, basis, l):
    m = occ.m
    layout = RegisterLayout(particle_segments(m, l)
                            + permutation_segments(m))
    state = QuantumState.zero(layout)
    p_names = [f"particle{i}" for i in range(m)]
    b_names = [f"perm{i}" for i in range(m)]
    state, _ = prepare_hartree_product(state, occ, basis, CDF, p_names)
    state, counters = antisymmetrize(state, b_names, p_names,
                                     occ.statistics)
    return state, counters, p_names


class TestAntisymmetrization:
    def test_two_fermions_match_determinant(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        occ = OccupationVector((1, 1))
        state, counters, p_names = _pipeline(occ, bas, 3)
        vec = state.amplitudes[: 1 << 6]
        oracle = slater_oracle(occ, bas, 3)
        assert abs(np.vdot(vec, oracle)) == pytest.approx(1.0, abs=1e-10)
        assert counters["comparators"] == 1

    def test_fermion_swap_antisymmetry(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        occ = OccupationVector((1, 1))
        state, _, p_names = _pipeline(occ, bas, 3)
        swapped = swap_segments(state, p_names[0], p_names[1])
        overlap = np.vdot(state.amplitudes, swapped.amplitudes)
        assert overlap.real == pytest.approx(-1.0, abs=1e-10)

    def test_boson_swap_symmetry(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        occ = OccupationVector((1, 1), "bosonic")
        state, _, p_names = _pipeline(occ, bas, 3)
        swapped = swap_segments(state, p_names[0], p_names[1])
        overlap = np.vdot(state.amplitudes, swapped.amplitudes)
        assert overlap.real == pytest.approx(1.0, abs=1e-10)

    def test_three_fermions(self):
        bas = BasisSet([box_sine(1), box_sine(2), box_sine(3)])
        occ = OccupationVector((1, 1, 1))
        state, counters, _ = _pipeline(occ, bas, 2)
        vec = state.amplitudes[: 1 << 6]
        oracle = slater_oracle(occ, bas, 2)
        assert abs(np.vdot(vec, oracle)) == pytest.approx(1.0, abs=1e-10)
        assert counters["comparators"] == 3

    def test_boson_with_multiplicity(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        occ = OccupationVector((2, 1), "bosonic")
        state, _, _ = _pipeline(occ, bas, 2)
        vec = state.amplitudes[: 1 << 6]
        oracle = slater_oracle(occ, bas, 2)
        assert abs(np.vdot(vec, oracle)) == pytest.approx(1.0, abs=1e-10)

    def test_repeated_fermionic_orbital_annihilates(self):
        bas = BasisSet([delta_at_site(0, 2), delta_at_site(1, 2)])
        m = 2
        layout = RegisterLayout(particle_segments(m, 2)
                                + permutation_segments(m))
        state = QuantumState.zero(layout)
        # both registers hold the SAME orbital: determinant must vanish
        from gridprep.loader import load_orbital
        for name in ("particle0", "particle1"):
            state, _ = load_orbital(state, name, bas.orbitals[0], CDF)
        with pytest.raises(ValidationError):
            antisymmetrize(state, ["perm0", "perm1"],
                           ["particle0", "particle1"], "fermionic")

    def test_single_particle_passthrough(self):
        bas = BasisSet([box_sine(1)])
        occ = OccupationVector((1,))
        state, counters, _ = _pipeline(occ, bas, 3)
        np.testing.assert_allclose(state.amplitudes[:8],
                                   bas.orbitals[0].grid_values(3), atol=1e-10)
        assert counters["comparators"] == 0


class TestOracle:
    def test_determinant_antisymmetry(self):
        bas = BasisSet([box_sine(1), box_sine(2), box_sine(3)])
        occ = OccupationVector((1, 0, 1))
        l = 2
        vec = slater_oracle(occ, bas, l).reshape(4, 4)  # [x1, x0]
        np.testing.assert_allclose(vec, -vec.T, atol=1e-12)

    def test_permanent_symmetry(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        occ = OccupationVector((1, 1), "bosonic")
        vec = slater_oracle(occ, bas, 2).reshape(4, 4)
        np.testing.assert_allclose(vec, vec.T, atol=1e-12)

    def test_oracle_normalized(self):
        bas = BasisSet([box_sine(1), box_sine(2), box_sine(3)])
        for n, stat in (((1, 1, 0), "fermionic"), ((2, 0, 1), "bosonic")):
            occ = OccupationVector(n, stat)
            v = slater_oracle(occ, bas, 3)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-10)


class TestHartreeProduct:
    def test_register_count_mismatch(self):
        bas = BasisSet([box_sine(1), box_sine(2)])
        layout = RegisterLayout(particle_segments(1, 2))
        state = QuantumState.zero(layout)
        with pytest.raises(StructuralError):
            prepare_hartree_product(state, OccupationVector((1, 1)), bas,
                                    CDF, ["particle0"])

    def test_orbital_outside_basis(self):
        bas = BasisSet([box_sine(1)])
        layout = RegisterLayout(particle_segments(1, 2))
        state = QuantumState.zero(layout)
        with pytest.raises(ValidationError):
            prepare_hartree_product(state, OccupationVector((0, 1)), bas,
                                    CDF, ["particle0"])

    @settings(max_examples=15, deadline=None)
    @given(st.integers(2, 4))
    def test_pipeline_preserves_norm(self, mchoice):
        orbs = [box_sine(n) for n in range(1, mchoice + 1)]
        bas = BasisSet(orbs)
        occ = OccupationVector(tuple([1] * mchoice))
        state, _, _ = _pipeline(occ, bas, 3)
        assert state.norm == pytest.approx(1.0, abs=1e-10)
