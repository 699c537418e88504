"""End-to-end preparation drivers: single orbitals, (anti)symmetrized
occupation states, superpositions of occupation states, two-species
products, and mixed states via purification.

The superposition path follows the occupation-register scheme: amplitudes
are loaded onto an occupation register, orbitals are loaded conditionally
per branch, the occupation register is disentangled particle-by-particle
(phase-estimate which orbital a register holds, remove that quantum), its
emptiness is verified by measurement (retry on failure), and only then is
the particle register (anti)symmetrized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import PreparationReport
from .assemble import (
    OccupationVector,
    antisymmetrize,
    particle_segments,
    permutation_segments,
    prepare_hartree_product,
    quword_width,
)
from .basis import BasisSet, IntegrationSpec, Orbital
from .discriminate import PhaseEstimationConfig, SymmetryOperator, \
    identify_and_decrement, verify_uncomputation
from .errors import RetryBudgetError, StructuralError, ValidationError
from .loader import LoadPlan, load_amplitude_table, load_orbital, \
    load_error_bound
from .statevec import DensityMatrix, QuantumState, RegisterLayout, \
    extract_segment_vector, partial_trace


def boson_counter_width(max_count: int) -> int:
    """Bits per orbital counter; must hold counts 0..max_count."""
    return max(1, math.ceil(math.log2(max_count + 1)))


def fock_width(num_orbitals: int, statistics: str,
               counter_width: int = 1) -> int:
    if statistics == "fermionic":
        return num_orbitals
    return num_orbitals * counter_width


def fock_encode(occupation: OccupationVector, counter_width: int = 1) -> int:
    """Occupation register value: bit i per orbital for fermions, packed
    little-endian counters for bosons.
    """
    code = 0
    if occupation.statistics == "fermionic":
        for i, v in enumerate(occupation.n):
            code |= v << i
    else:
        cap = (1 << counter_width) - 1
        for i, v in enumerate(occupation.n):
            if v > cap:
                raise ValidationError(
                    f"count {v} exceeds the {counter_width}-bit counter"
                )
            code |= v << (i * counter_width)
    return code


@dataclass(frozen=True)
class FockSuperposition:
    """Normalized superposition sum_w alpha_w |n_w> of occupation states.

    All terms must share orbital count, statistics, and particle number
    (branches of unequal particle number cannot share one first-quantized
    register bank).
    """

    terms: tuple[tuple[complex, OccupationVector], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValidationError("superposition needs at least one term")
        occs = [occ for _, occ in self.terms]
        if len({occ.num_orbitals for occ in occs}) != 1:
            raise ValidationError("terms must share the orbital count")
        if len({occ.statistics for occ in occs}) != 1:
            raise ValidationError("terms must share particle statistics")
        if len({occ.m for occ in occs}) != 1:
            raise ValidationError("terms must share the particle number")
        if len({occ.n for occ in occs}) != len(occs):
            raise ValidationError("duplicate occupation term")
        norm = math.sqrt(sum(abs(a) ** 2 for a, _ in self.terms))
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"amplitudes have norm {norm}, expected 1")
        if self.statistics == "bosonic":
            factors = {occ.multiplicity_factor() for occ in occs}
            if len(factors) != 1:
                raise ValidationError(
                    "bosonic terms with differing orbital multiplicities "
                    "are not supported in one superposition"
                )

    @classmethod
    def from_terms(cls, terms) -> "FockSuperposition":
        amps = np.array([a for a, _ in terms], dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValidationError("superposition amplitudes are all zero")
        return cls(tuple((complex(a / norm), occ) for a, occ in terms))

    @classmethod
    def from_strings(cls, pairs, statistics: str = "fermionic"):
        """pairs: iterable of (amplitude, occupation string)."""
        return cls.from_terms(
            [(a, OccupationVector.parse(s, statistics)) for a, s in pairs]
        )

    @property
    def statistics(self) -> str:
        return self.terms[0][1].statistics

    @property
    def num_orbitals(self) -> int:
        return self.terms[0][1].num_orbitals

    @property
    def m(self) -> int:
        return self.terms[0][1].m

    @property
    def max_count(self) -> int:
        return max(max(occ.n) for _, occ in self.terms)


@dataclass(frozen=True)
class MixedSpec:
    """Classical ensemble {p_i, |n_i>} to prepare as a density matrix."""

    components: tuple[tuple[float, OccupationVector], ...]

    def __post_init__(self):
        if not self.components:
            raise ValidationError("ensemble needs at least one component")
        probs = [p for p, _ in self.components]
        if any(p < 0 for p in probs):
            raise ValidationError("ensemble weights must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValidationError(
                f"ensemble weights sum to {sum(probs)}, expected 1"
            )
        occs = [occ for _, occ in self.components]
        if len({occ.num_orbitals for occ in occs}) != 1:
            raise ValidationError("components must share the orbital count")
        if len({occ.statistics for occ in occs}) != 1:
            raise ValidationError("components must share particle statistics")
        if len({occ.m for occ in occs}) != 1:
            raise ValidationError("components must share the particle number")

    @classmethod
    def from_probabilities(cls, pairs, statistics: str = "fermionic"):
        return cls(tuple(
            (float(p), occ if isinstance(occ, OccupationVector)
             else OccupationVector.parse(occ, statistics))
            for p, occ in pairs
        ))

    @classmethod
    def thermal(cls, beta: float, pairs, statistics: str = "fermionic"):
        """Gibbs weights exp(-beta E_i)/Z over (energy, occupation) pairs."""
        energies = np.array([e for e, _ in pairs], dtype=float)
        weights = np.exp(-beta * (energies - energies.min()))
        weights /= weights.sum()
        return cls.from_probabilities(
            [(w, occ) for w, (_, occ) in zip(weights, pairs)], statistics
        )

    @property
    def statistics(self) -> str:
        return self.components[0][1].statistics

    @property
    def m(self) -> int:
        return self.components[0][1].m


@dataclass
class PreparedState:
    """Output bundle: final object plus the run report."""

    vector: np.ndarray | None
    rho: DensityMatrix | None
    report: PreparationReport
    state: QuantumState | None = None


def _merge_plans(counters: dict, plans: list[LoadPlan]) -> None:
    for plan in plans:
        counters["integral_requests"] = (
            counters.get("integral_requests", 0) + plan.integral_requests)
        counters["integral_evaluations"] = (
            counters.get("integral_evaluations", 0)
            + plan.integral_evaluations)
        counters["rotation_applications"] = (
            counters.get("rotation_applications", 0)
            + plan.rotation_applications)
        counters["empty_blocks"] = (
            counters.get("empty_blocks", 0) + plan.empty_blocks)
        if plan.mc_samples_per_integral:
            counters["mc_samples_per_integral"] = plan.mc_samples_per_integral


def _relabel_segment(state: QuantumState, segment: str,
                     mapping: np.ndarray) -> QuantumState:
    """Branch-wise classical relabeling value -> mapping[value] (must be a
    permutation of the segment's value range).
    """
    seg = state.layout.segment(segment)
    mapping = np.asarray(mapping, dtype=np.int64)
    if sorted(mapping.tolist()) != list(range(seg.dim)):
        raise StructuralError("relabeling must be a permutation")
    idx = np.arange(state.layout.dim)
    vals = (idx >> seg.offset) & seg.mask
    dest = (idx & ~(seg.mask << seg.offset)) | (mapping[vals] << seg.offset)
    amps = np.empty_like(state.amplitudes)
    amps[dest] = state.amplitudes
    return QuantumState(state.layout, amps)


def _index_to_code_permutation(codes: list[int], dim: int) -> np.ndarray:
    """Permutation sending loader index i to the i-th branch code; unused
    indices fill the unused codes in ascending order.
    """
    if len(set(codes)) != len(codes):
        raise ValidationError("duplicate occupation code")
    mapping = np.full(dim, -1, dtype=np.int64)
    mapping[: len(codes)] = codes
    leftovers = iter(sorted(set(range(dim)) - set(codes)))
    for i in range(len(codes), dim):
        mapping[i] = next(leftovers)
    return mapping


def prepare_orbital(
    orbital: Orbital,
    l: int,
    spec: IntegrationSpec,
    ratio_perturb=None,
) -> PreparedState:
    """Load one orbital onto a single grid register."""
    layout = RegisterLayout([("particle0", "particle", l)])
    state = QuantumState.zero(layout)
    state, plan = load_orbital(state, "particle0", orbital, spec,
                               ratio_perturb=ratio_perturb)
    counters: dict = {}
    _merge_plans(counters, [plan])
    report = PreparationReport(
        kind="orbital", l=l, m=1, statistics="n/a",
        qubits=layout.n_total, counters=counters,
        error_bound=load_error_bound(l, spec.epsilon_i),
    )
    return PreparedState(vector=extract_segment_vector(state, ["particle0"]),
                         rho=None, report=report, state=state)


def _particle_names(m: int) -> list[str]:
    return [f"particle{i}" for i in range(m)]


def _perm_names(m: int) -> list[str]:
    return [f"perm{i}" for i in range(m)]


def prepare_slater(
    occupation: OccupationVector,
    basis: BasisSet,
    l: int,
    spec: IntegrationSpec,
    ratio_perturb=None,
    cache: dict | None = None,
) -> PreparedState:
    """Hartree product of the occupied orbitals, then (anti)symmetrization.

    The occupation is classical here, so no occupation register or phase
    estimation is needed.
    """
    m = occupation.m
    layout = RegisterLayout(
        particle_segments(m, l) + permutation_segments(m)
    )
    state = QuantumState.zero(layout)
    counters: dict = {}
    state, plans = prepare_hartree_product(
        state, occupation, basis, spec, _particle_names(m),
        ratio_perturb=ratio_perturb, cache=cache,
    )
    _merge_plans(counters, plans)
    statistics = occupation.statistics
    state, sym_counters = antisymmetrize(
        state, _perm_names(m), _particle_names(m), statistics)
    counters.update(sym_counters)
    eps_phi = load_error_bound(l, spec.epsilon_i)
    report = PreparationReport(
        kind="slater" if statistics == "fermionic" else "permanent",
        l=l, m=m, statistics=statistics, qubits=layout.n_total,
        counters=counters,
        error_bound=m * eps_phi,
    )
    vec = extract_segment_vector(state, _particle_names(m))
    return PreparedState(vector=vec, rho=None, report=report, state=state)


def prepare_two_species(
    occupation_a: OccupationVector,
    occupation_b: OccupationVector,
    basis_a: BasisSet,
    basis_b: BasisSet,
    l: int,
    spec: IntegrationSpec,
) -> PreparedState:
    """Product of two independently (anti)symmetrized species sharing one
    grid; exchange symmetry is applied within each species only.

    Register order: species-a particles, species-b particles, then the two
    permutation banks.  The returned vector covers species-a then species-b
    particle registers (species a least significant).
    """
    ma, mb = occupation_a.m, occupation_b.m
    a_parts = particle_segments(ma, l, prefix="a_particle")
    b_parts = particle_segments(mb, l, prefix="b_particle")
    a_perms = permutation_segments(ma, prefix="a_perm")
    b_perms = permutation_segments(mb, prefix="b_perm")
    layout = RegisterLayout(a_parts + b_parts + a_perms + b_perms)
    state = QuantumState.zero(layout)
    counters: dict = {}

    a_names = [n for n, _, _ in a_parts]
    b_names = [n for n, _, _ in b_parts]
    state, plans = prepare_hartree_product(
        state, occupation_a, basis_a, spec, a_names)
    _merge_plans(counters, plans)
    state, plans = prepare_hartree_product(
        state, occupation_b, basis_b, spec, b_names)
    _merge_plans(counters, plans)

    state, ca = antisymmetrize(state, [n for n, _, _ in a_perms], a_names,
                               occupation_a.statistics)
    state, cb = antisymmetrize(state, [n for n, _, _ in b_perms], b_names,
                               occupation_b.statistics)
    counters["comparators"] = ca["comparators"] + cb["comparators"]
    counters["swapped_qubits"] = ca["swapped_qubits"] + cb["swapped_qubits"]

    eps_phi = load_error_bound(l, spec.epsilon_i)
    report = PreparationReport(
        kind="two-species", l=l, m=ma + mb,
        statistics=f"{occupation_a.statistics}+{occupation_b.statistics}",
        qubits=layout.n_total, counters=counters,
        error_bound=(ma + mb) * eps_phi,
    )
    vec = extract_segment_vector(state, a_names + b_names)
    return PreparedState(vector=vec, rho=None, report=report, state=state)


def _superposition_layout(
    sup: FockSuperposition, l: int, config: PhaseEstimationConfig,
    counter_width: int,
) -> RegisterLayout:
    m = sup.m
    w_fock = fock_width(sup.num_orbitals, sup.statistics, counter_width)
    segments = [("fock", "fock", w_fock)]
    segments += particle_segments(m, l)
    segments += permutation_segments(m)
    segments += [("readout", "readout", config.q)]
    if config.symmetry is not None:
        segments += [("symread", "readout", config.q_sym)]
    return RegisterLayout(segments)


def _load_branch_amplitudes(
    state: QuantumState, sup: FockSuperposition, spec: IntegrationSpec,
    counter_width: int, counters: dict, cache: dict | None,
) -> tuple[QuantumState, list[int]]:
    """Load the superposition amplitudes onto the occupation register:
    amplitude table on indices 0..K-1, then a classical relabeling from
    index to occupation code (codes ascending).
    """
    terms = sorted(sup.terms, key=lambda t: fock_encode(t[1], counter_width))
    amps = np.array([a for a, _ in terms], dtype=complex)
    codes = [fock_encode(occ, counter_width) for _, occ in terms]
    state, plan = load_amplitude_table(state, "fock", amps, spec, cache=cache)
    _merge_plans(counters, [plan])
    seg = state.layout.segment("fock")
    state = _relabel_segment(
        state, "fock", _index_to_code_permutation(codes, seg.dim))
    return state, codes


def prepare_superposition(
    sup: FockSuperposition,
    basis: BasisSet,
    l: int,
    spec: IntegrationSpec,
    t: float | None = None,
    eps_pe: float | None = None,
    symmetry: SymmetryOperator | None = None,
    seed: int | None = None,
    max_attempts: int = 20,
    cache: dict | None = None,
) -> PreparedState:
    """Prepare sum_w alpha_w |Psi_w> in first quantization.

    Repeat-until-success: an attempt whose occupation register fails to
    verify as empty after disentangling is discarded and the whole
    preparation restarts with fresh measurement randomness.
    """
    if sup.num_orbitals > basis.size:
        raise ValidationError("superposition refers to orbitals outside "
                              "the basis")
    m = sup.m
    statistics = ("fermion" if sup.statistics == "fermionic" else "boson")
    counter_width = (1 if statistics == "fermion"
                     else boson_counter_width(sup.max_count))
    config = PhaseEstimationConfig.build(
        basis, l, t=t, eps_pe=eps_pe, symmetry=symmetry)
    layout = _superposition_layout(sup, l, config, counter_width)
    if cache is None:
        cache = {}

    seed_seq = np.random.SeedSequence(seed)
    counters: dict = {}
    retries = 0
    for attempt in range(1, max_attempts + 1):
        rng = np.random.default_rng(seed_seq.spawn(1)[0])
        state = QuantumState.zero(layout)
        state, codes = _load_branch_amplitudes(
            state, sup, spec, counter_width, counters, cache)

        terms = sorted(sup.terms,
                       key=lambda trm: fock_encode(trm[1], counter_width))
        for code, (_, occ) in zip(codes, terms):
            state, plans = prepare_hartree_product(
                state, occ, basis, spec, _particle_names(m),
                controls=[("fock", code)], cache=cache)
            _merge_plans(counters, plans)

        ambiguous = 0.0
        for b in range(m):
            state, record = identify_and_decrement(
                state, config, "fock", f"particle{b}", "readout",
                sym_readout_segment=("symread" if symmetry is not None
                                     else None),
                statistics=statistics,
                counter_width=counter_width,
                rng=rng,
            )
            ambiguous = max(ambiguous, record.ambiguous_mass)
        counters["max_ambiguous_mass"] = float(ambiguous)

        ok, outcome, state = verify_uncomputation(state, "fock", rng)
        if not ok:
            retries += 1
            continue

        state, sym_counters = antisymmetrize(
            state, _perm_names(m), _particle_names(m), sup.statistics)
        counters.update(sym_counters)

        eps_phi = load_error_bound(l, spec.epsilon_i)
        report = PreparationReport(
            kind="superposition", l=l, m=m, statistics=sup.statistics,
            qubits=layout.n_total, attempts=attempt, retries=retries,
            counters=counters,
            error_bound=(m + 1) * eps_phi,
        )
        vec = extract_segment_vector(state, _particle_names(m))
        return PreparedState(vector=vec, rho=None, report=report,
                             state=state)
    raise RetryBudgetError(
        f"occupation register failed to verify empty in {max_attempts} "
        "attempts"
    )


def superposition_oracle(sup: FockSuperposition, basis: BasisSet,
                         l: int) -> np.ndarray:
    """Ground truth sum_w alpha_w |Psi_w> from the brute-force
    determinant/permanent oracle.
    """
    from .assemble import slater_oracle

    total = None
    for a, occ in sup.terms:
        term = a * slater_oracle(occ, basis, l)
        total = term if total is None else total + term
    return total / np.linalg.norm(total)


def prepare_mixed(
    mixed: MixedSpec,
    basis: BasisSet,
    l: int,
    spec: IntegrationSpec,
    cache: dict | None = None,
) -> PreparedState:
    """Prepare sum_i p_i |Psi_i><Psi_i| by purification: a spec register
    holds sqrt(p_i) amplitudes, orbitals load conditionally per branch, the
    particle bank is (anti)symmetrized, and the spec register is traced out.

    Each branch has a definite occupation, so no occupation register or
    phase estimation is required.
    """
    comps = mixed.components
    k = len(comps)
    w_spec = max(1, math.ceil(math.log2(k)))
    m = mixed.m
    layout = RegisterLayout(
        [("branch", "spec", w_spec)]
        + particle_segments(m, l)
        + permutation_segments(m)
    )
    state = QuantumState.zero(layout)
    counters: dict = {}
    if cache is None:
        cache = {}

    amps = np.sqrt(np.array([p for p, _ in comps], dtype=float))
    state, plan = load_amplitude_table(state, "branch", amps, spec,
                                       cache=cache)
    _merge_plans(counters, [plan])

    for i, (_, occ) in enumerate(comps):
        state, plans = prepare_hartree_product(
            state, occ, basis, spec, _particle_names(m),
            controls=[("branch", i)], cache=cache)
        _merge_plans(counters, plans)

    state, sym_counters = antisymmetrize(
        state, _perm_names(m), _particle_names(m), mixed.statistics)
    counters.update(sym_counters)

    rho = partial_trace(state, _particle_names(m))
    eps_phi = load_error_bound(l, spec.epsilon_i)
    report = PreparationReport(
        kind="mixed", l=l, m=m, statistics=mixed.statistics,
        qubits=layout.n_total, counters=counters,
        error_bound=(m + 1) * eps_phi,
    )
    return PreparedState(vector=None, rho=rho, report=report, state=state)


def mixed_oracle(mixed: MixedSpec, basis: BasisSet, l: int) -> DensityMatrix:
    from .assemble import slater_oracle

    dim = 1 << (mixed.m * l)
    rho = np.zeros((dim, dim), dtype=complex)
    for p, occ in mixed.components:
        v = slater_oracle(occ, basis, l)
        rho += p * np.outer(v, v.conj())
    return DensityMatrix(rho)


def prepare_diagonal_mixed(
    sup: FockSuperposition,
    basis: BasisSet,
    l: int,
    spec: IntegrationSpec,
    cache: dict | None = None,
) -> PreparedState:
    """Skip the disentangling step: leave the occupation register entangled
    and trace it out, yielding the dephased ensemble with weights
    |alpha_w|^2.
    """
    statistics = ("fermion" if sup.statistics == "fermionic" else "boson")
    counter_width = (1 if statistics == "fermion"
                     else boson_counter_width(sup.max_count))
    m = sup.m
    w_fock = fock_width(sup.num_orbitals, sup.statistics, counter_width)
    layout = RegisterLayout(
        [("fock", "fock", w_fock)]
        + particle_segments(m, l)
        + permutation_segments(m)
    )
    state = QuantumState.zero(layout)
    counters: dict = {}
    if cache is None:
        cache = {}
    state, codes = _load_branch_amplitudes(
        state, sup, spec, counter_width, counters, cache)
    terms = sorted(sup.terms,
                   key=lambda trm: fock_encode(trm[1], counter_width))
    for code, (_, occ) in zip(codes, terms):
        state, plans = prepare_hartree_product(
            state, occ, basis, spec, _particle_names(m),
            controls=[("fock", code)], cache=cache)
        _merge_plans(counters, plans)
    state, sym_counters = antisymmetrize(
        state, _perm_names(m), _particle_names(m), sup.statistics)
    counters.update(sym_counters)
    rho = partial_trace(state, _particle_names(m))
    report = PreparationReport(
        kind="diagonal-mixed", l=l, m=m, statistics=sup.statistics,
        qubits=layout.n_total, counters=counters,
        error_bound=(m + 1) * load_error_bound(l, spec.epsilon_i),
    )
    return PreparedState(vector=None, rho=rho, report=report, state=state)
