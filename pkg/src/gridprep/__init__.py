"""Classical emulator for grid-based many-particle quantum state
preparation: orbital loading, (anti)symmetrization, occupation-register
disentangling by phase estimation, and the proved error bounds.
"""

from .analysis import (
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
from .assemble import (
    OccupationVector,
    antisymmetrize,
    apply_rank_to_permutation,
    generate_permutation_superposition,
    network_comparator_count,
    odd_even_network,
    particle_segments,
    permutation_segments,
    prepare_hartree_product,
    quword_width,
    rank_to_permutation,
    slater_oracle,
    sort_and_entangle,
)
from .basis import (
    BasisSet,
    IntegrationSpec,
    Orbital,
    box_sine,
    build_fock_matrix,
    delta_at_site,
    harmonic_hermite,
    kronecker_delta,
    mc_sample_count,
    normal_quantile,
    perturb_fock,
    ring_plane_wave,
    split_ratio,
    tabulated,
    uniform,
)
from .compose import (
    FockSuperposition,
    MixedSpec,
    PreparedState,
    mixed_oracle,
    prepare_diagonal_mixed,
    prepare_mixed,
    prepare_orbital,
    prepare_slater,
    prepare_superposition,
    prepare_two_species,
    superposition_oracle,
)
from .discriminate import (
    IdentificationRecord,
    PhaseEstimationConfig,
    SymmetryOperator,
    extra_qubits_for,
    identify_and_decrement,
    misidentification_probability,
    phase_estimate,
    symmetry_discriminate,
    verify_uncomputation,
)
from .errors import (
    AmbiguousIdentificationError,
    DegeneracyError,
    GridprepError,
    ImpossibleOutcomeError,
    PipelineError,
    ResourceError,
    RetryBudgetError,
    StructuralError,
    ValidationError,
)
from .loader import (
    LoadPlan,
    apply_phases,
    load_amplitude_table,
    load_error_bound,
    load_orbital,
)
from .statevec import (
    DensityMatrix,
    QuantumState,
    RegisterLayout,
    Segment,
    apply_diagonal_phase,
    apply_rotation,
    apply_unitary_on_segment,
    extract_segment_vector,
    measure_segment,
    partial_trace,
    qft,
    qft_matrix,
    qubit_cap,
    segment_probabilities,
    swap_segments,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
