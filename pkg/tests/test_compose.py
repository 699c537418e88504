"""End-to-end preparation drivers and their oracles."""
import numpy as np
import pytest

from gridprep.analysis import mixed_infidelity, pure_infidelity
from gridprep.basis import (
    BasisSet,
    IntegrationSpec,
    box_sine,
    ring_plane_wave,
)
from gridprep.assemble import OccupationVector
from gridprep.compose import (
    FockSuperposition,
    MixedSpec,
    boson_counter_width,
    fock_encode,
    mixed_oracle,
    prepare_diagonal_mixed,
    prepare_mixed,
    prepare_orbital,
    prepare_slater,
    prepare_superposition,
    prepare_two_species,
    superposition_oracle,
)
from gridprep.discriminate import SymmetryOperator
from gridprep.errors import ValidationError

CDF = IntegrationSpec(backend="analytic-cdf", epsilon_i=1e-9)


def dyadic_basis(count):
    return BasisSet([box_sine(n, energy=float(n - 1))
                     for n in range(1, count + 1)])


class TestFockEncoding:
    def test_fermion_bits(self):
        occ = OccupationVector((1, 0, 1, 1))
        assert fock_encode(occ) == 0b1101

    def test_boson_counters(self):
        occ = OccupationVector((2, 0, 3), "bosonic")
        assert fock_encode(occ, counter_width=2) == (2 | (3 << 4))

    def test_boson_counter_overflow(self):
        occ = OccupationVector((4, 0), "bosonic")
        with pytest.raises(ValidationError):
            fock_encode(occ, counter_width=2)

    def test_counter_width(self):
        assert boson_counter_width(1) == 1
        assert boson_counter_width(3) == 2
        assert boson_counter_width(4) == 3


class TestFockSuperposition:
    def test_normalizes(self):
        sup = FockSuperposition.from_strings([(3.0, "10"), (4.0, "01")])
        amps = sorted(abs(a) for a, _ in sup.terms)
        assert amps == pytest.approx([0.6, 0.8])

    def test_rejects_mixed_particle_number(self):
        with pytest.raises(ValidationError):
            FockSuperposition.from_strings([(0.6, "10"), (0.8, "11")])

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            FockSuperposition.from_strings([(0.6, "10"), (0.8, "10")])

    def test_rejects_mixed_multiplicity_bosons(self):
        with pytest.raises(ValidationError):
            FockSuperposition.from_strings([(0.6, "2,0"), (0.8, "1,1")],
                                           "bosonic")


class TestMixedSpec:
    def test_thermal_gibbs_weights(self):
        mix = MixedSpec.thermal(
            1.0, [(0.0, OccupationVector((1, 0))),
                  (1.0, OccupationVector((0, 1)))])
        probs = [p for p, _ in mix.components]
        assert probs[0] == pytest.approx(0.731059, abs=1e-6)
        assert probs[1] == pytest.approx(0.268941, abs=1e-6)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            MixedSpec.from_probabilities([(0.5, "10"), (0.3, "01")])


class TestPureDrivers:
    def test_prepare_orbital(self):
        prep = prepare_orbital(box_sine(2), 4, CDF)
        assert pure_infidelity(prep.vector,
                               box_sine(2).grid_values(4)) < 1e-12
        assert prep.report.counters["integral_requests"] == 15

    def test_prepare_slater_matches_oracle(self):
        bas = dyadic_basis(3)
        occ = OccupationVector((1, 1, 0))
        prep = prepare_slater(occ, bas, 3, CDF)
        from gridprep.assemble import slater_oracle
        assert pure_infidelity(prep.vector,
                               slater_oracle(occ, bas, 3)) < 1e-10

    def test_prepare_superposition_exact_phases(self):
        bas = dyadic_basis(4)
        sup = FockSuperposition.from_strings([(0.6, "1100"), (0.8, "1010")])
        prep = prepare_superposition(sup, bas, 3, CDF, t=2 * np.pi / 8,
                                     seed=0)
        assert pure_infidelity(prep.vector,
                               superposition_oracle(sup, bas, 3)) < 1e-10
        assert prep.report.retries == 0

    def test_superposition_with_phases_in_amplitudes(self):
        bas = dyadic_basis(3)
        sup = FockSuperposition.from_terms(
            [(0.6j, OccupationVector((1, 1, 0))),
             (0.8, OccupationVector((0, 1, 1)))])
        prep = prepare_superposition(sup, bas, 3, CDF, t=2 * np.pi / 4,
                                     seed=1)
        assert pure_infidelity(prep.vector,
                               superposition_oracle(sup, bas, 3)) < 1e-10

    def test_bosonic_superposition(self):
        bas = dyadic_basis(2)
        sup = FockSuperposition.from_strings([(0.6, "2,0"), (0.8, "0,2")],
                                             "bosonic")
        prep = prepare_superposition(sup, bas, 2, CDF, t=2 * np.pi / 4,
                                     seed=2)
        assert pure_infidelity(prep.vector,
                               superposition_oracle(sup, bas, 2)) < 1e-10

    def test_superposition_with_symmetry_readout(self):
        ring = BasisSet([ring_plane_wave(0, energy=0.0),
                         ring_plane_wave(1, energy=1.0),
                         ring_plane_wave(-1, energy=1.0)])
        sup = FockSuperposition.from_strings([(0.6, "110"), (0.8, "101")])
        prep = prepare_superposition(
            sup, ring, 3, CDF, t=2 * np.pi / 4,
            symmetry=SymmetryOperator("cyclic-shift"), seed=3)
        assert pure_infidelity(prep.vector,
                               superposition_oracle(sup, ring, 3)) < 1e-10


class TestMixedDrivers:
    def test_purification_matches_direct_mixture(self):
        bas = dyadic_basis(3)
        mix = MixedSpec.from_probabilities([(0.7, "110"), (0.3, "101")])
        prep = prepare_mixed(mix, bas, 2, CDF)
        target = mixed_oracle(mix, bas, 2)
        np.testing.assert_allclose(prep.rho.matrix, target.matrix,
                                   atol=1e-8)
        assert mixed_infidelity(prep.rho, target) < 1e-8

    def test_thermal_state_eigenvalues(self):
        bas = dyadic_basis(2)
        mix = MixedSpec.thermal(1.0, [(0.0, OccupationVector((1, 0))),
                                      (1.0, OccupationVector((0, 1)))])
        prep = prepare_mixed(mix, bas, 3, CDF)
        evals = np.sort(prep.rho.eigenvalues())[::-1]
        assert evals[0] == pytest.approx(0.731059, abs=1e-6)
        assert evals[1] == pytest.approx(0.268941, abs=1e-6)

    def test_diagonal_mixture_from_superposition(self):
        bas = dyadic_basis(3)
        sup = FockSuperposition.from_strings([(0.6, "110"), (0.8, "101")])
        prep = prepare_diagonal_mixed(sup, bas, 2, CDF)
        mix = MixedSpec.from_probabilities([(0.36, "110"), (0.64, "101")])
        target = mixed_oracle(mix, bas, 2)
        np.testing.assert_allclose(prep.rho.matrix, target.matrix,
                                   atol=1e-8)


class TestTwoSpecies:
    def test_product_state_purity(self):
        bas = dyadic_basis(3)
        prep = prepare_two_species(OccupationVector((1, 1, 0)),
                                   OccupationVector((1, 0, 1)),
                                   bas, bas, 2, CDF)
        from gridprep.statevec import partial_trace
        rho_a = partial_trace(prep.state, ["a_particle0", "a_particle1"])
        assert rho_a.purity() == pytest.approx(1.0, abs=1e-8)

    def test_species_product_structure(self):
        bas = dyadic_basis(2)
        prep = prepare_two_species(OccupationVector((1, 1)),
                                   OccupationVector((1, 0)),
                                   bas, bas, 2, CDF)
        from gridprep.assemble import slater_oracle
        va = slater_oracle(OccupationVector((1, 1)), bas, 2)
        vb = slater_oracle(OccupationVector((1, 0)), bas, 2)
        # species a occupies the low bits of the returned vector
        target = np.kron(vb, va)
        assert pure_infidelity(prep.vector, target) < 1e-10


class TestRetryAndErrors:
    def test_orbital_outside_basis(self):
        bas = dyadic_basis(2)
        sup = FockSuperposition.from_strings([(0.6, "110"), (0.8, "011")])
        with pytest.raises(ValidationError):
            prepare_superposition(sup, bas, 2, CDF, seed=0)

    def test_report_counters_present(self):
        bas = dyadic_basis(2)
        sup = FockSuperposition.from_strings([(0.6, "10"), (0.8, "01")])
        prep = prepare_superposition(sup, bas, 2, CDF, t=2 * np.pi / 4,
                                     seed=0)
        for key in ("integral_requests", "rotation_applications",
                    "comparators", "max_ambiguous_mass"):
            assert key in prep.report.counters
