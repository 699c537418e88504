"""Dense statevector emulation of multi-register qubit systems.

Conventions (fixed once, obeyed everywhere):
  * Bit 0 of the global basis index is qubit 0.  A segment of width w at
    offset o occupies global bits o .. o+w-1; its integer value is
    (index >> o) & (2**w - 1), i.e. little-endian within the segment.
  * The QFT forward kernel is exp(+2*pi*1j*j*k / 2**w), so phase
    estimation reads the eigenphase directly after the inverse transform.
  * All state comparisons elsewhere are modulo global phase.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    ImpossibleOutcomeError,
    ResourceError,
    StructuralError,
    ValidationError,
)

DEFAULT_QUBIT_CAP = 26
DENSITY_MATRIX_CAP = 12
NORM_TOL = 1e-10

SEGMENT_ROLES = ("fock", "particle", "readout", "spec", "scratch")


def qubit_cap() -> int:
    """Total-width cap; override with the GRIDPREP_QUBIT_CAP env var."""
    raw = os.environ.get("GRIDPREP_QUBIT_CAP")
    return int(raw) if raw else DEFAULT_QUBIT_CAP


@dataclass(frozen=True)
class Segment:
    name: str
    role: str
    width: int
    offset: int

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    @property
    def dim(self) -> int:
        return 1 << self.width


class RegisterLayout:
    """Named, contiguous, disjoint qubit segments tiling [0, n_total)."""

    def __init__(self, segments: list[tuple[str, str, int]]):
        offset = 0
        self._segments: dict[str, Segment] = {}
        for name, role, width in segments:
            if role not in SEGMENT_ROLES:
                raise StructuralError(f"unknown segment role {role!r}")
            if width < 0:
                raise StructuralError(f"segment {name!r} has negative width")
            if name in self._segments:
                raise StructuralError(f"duplicate segment name {name!r}")
            self._segments[name] = Segment(name, role, width, offset)
            offset += width
        self.n_total = offset
        cap = qubit_cap()
        if self.n_total > cap:
            raise ResourceError(
                f"layout needs {self.n_total} qubits, cap is {cap} "
                "(override with GRIDPREP_QUBIT_CAP)"
            )

    def __iter__(self):
        return iter(self._segments.values())

    def segment(self, name: str) -> Segment:
        try:
            return self._segments[name]
        except KeyError:
            raise StructuralError(f"no segment named {name!r}") from None

    def names(self) -> list[str]:
        return list(self._segments)

    @property
    def dim(self) -> int:
        return 1 << self.n_total

    def values(self, name: str, indices: np.ndarray) -> np.ndarray:
        seg = self.segment(name)
        return (indices >> seg.offset) & seg.mask


@dataclass
class QuantumState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.layout.dim,):
            raise StructuralError(
                f"amplitude vector has length {self.amplitudes.size}, "
                f"layout needs {self.layout.dim}"
            )

    @classmethod
    def zero(cls, layout: RegisterLayout) -> "QuantumState":
        amps = np.zeros(layout.dim, dtype=np.complex128)
        amps[0] = 1.0
        return cls(layout, amps)

    @classmethod
    def from_basis_index(cls, layout: RegisterLayout, index: int) -> "QuantumState":
        if not 0 <= index < layout.dim:
            raise StructuralError(f"basis index {index} out of range")
        amps = np.zeros(layout.dim, dtype=np.complex128)
        amps[index] = 1.0
        return cls(layout, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def check_norm(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm - 1.0) > tol:
            raise ValidationError(f"state norm {self.norm} deviates from 1")

    def segment_values(self, name: str) -> np.ndarray:
        return self.layout.values(name, np.arange(self.layout.dim))

    def segment_is_blank(self, name: str, tol: float = 1e-9) -> bool:
        vals = self.segment_values(name)
        stray = np.linalg.norm(self.amplitudes[vals != 0])
        return stray <= tol


@dataclass
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d):
            raise ValidationError("density matrix must be square")
        if abs(np.trace(self.matrix).real - 1.0) > 1e-8:
            raise ValidationError(f"trace {np.trace(self.matrix)} != 1")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-8:
            raise ValidationError("density matrix is not Hermitian")
        if np.min(np.linalg.eigvalsh(self.matrix)) < -1e-8:
            raise ValidationError("density matrix has negative eigenvalues")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _check_qubit(state: QuantumState, qubit: int) -> None:
    if not 0 <= qubit < state.layout.n_total:
        raise StructuralError(f"qubit index {qubit} outside layout")


def apply_rotation(
    state: QuantumState,
    target: int,
    angle: float,
    controls: list[tuple[int, int]] | None = None,
) -> QuantumState:
    """Real rotation |0> -> cos t|0> + sin t|1>, |1> -> -sin t|0> + cos t|1>
    on `target`, applied only where every (qubit, bit) control matches.
    """
    _check_qubit(state, target)
    if not np.isfinite(angle):
        raise ValidationError("rotation angle must be finite")
    controls = controls or []
    for q, _ in controls:
        _check_qubit(state, q)
        if q == target:
            raise StructuralError("rotation target cannot be its own control")

    amps = state.amplitudes.copy()
    idx = np.arange(amps.size)
    ok = np.ones(amps.size, dtype=bool)
    for q, bit in controls:
        ok &= ((idx >> q) & 1) == bit
    sel = ok & (((idx >> target) & 1) == 0)
    i0 = idx[sel]
    i1 = i0 | (1 << target)
    c, s = np.cos(angle), np.sin(angle)
    a0, a1 = amps[i0], amps[i1]
    amps[i0] = c * a0 - s * a1
    amps[i1] = s * a0 + c * a1
    return QuantumState(state.layout, amps)


def apply_diagonal_phase(state: QuantumState, segment: str, phase_fn) -> QuantumState:
    """Multiply each amplitude by exp(i * phase_fn(x)), x = segment value."""
    seg = state.layout.segment(segment)
    table = np.array([phase_fn(x) for x in range(seg.dim)], dtype=float)
    vals = state.segment_values(segment)
    amps = state.amplitudes * np.exp(1j * table[vals])
    return QuantumState(state.layout, amps)


def _reshape_on_segment(amps: np.ndarray, layout: RegisterLayout, seg: Segment):
    hi = amps.size >> (seg.offset + seg.width)
    return amps.reshape(hi, seg.dim, 1 << seg.offset)


def check_unitary(u: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    d = u.shape[0]
    if u.shape != (d, d):
        raise ValidationError("matrix must be square")
    if np.max(np.abs(u.conj().T @ u - np.eye(d))) > tol:
        raise ValidationError("matrix is not unitary")
    return u


def apply_unitary_on_segment(
    state: QuantumState,
    segment: str,
    u: np.ndarray,
    controls: list[tuple[int, int]] | None = None,
) -> QuantumState:
    """Apply a d x d unitary to one segment (identity elsewhere).

    Optional controls are (global qubit, required bit) pairs outside the
    segment; amplitudes whose control bits do not match are untouched.
    """
    seg = state.layout.segment(segment)
    u = check_unitary(u)
    if u.shape[0] != seg.dim:
        raise ValidationError(
            f"unitary dimension {u.shape[0]} != segment dimension {seg.dim}"
        )
    amps = state.amplitudes.copy()
    cube = _reshape_on_segment(amps, state.layout, seg)
    hi_n, _, lo_n = cube.shape
    hi_sel = np.ones(hi_n, dtype=bool)
    lo_sel = np.ones(lo_n, dtype=bool)
    for q, bit in controls or []:
        _check_qubit(state, q)
        if seg.offset <= q < seg.offset + seg.width:
            raise StructuralError("control qubit lies inside the target segment")
        if q < seg.offset:
            lo_sel &= ((np.arange(lo_n) >> q) & 1) == bit
        else:
            shift = q - seg.offset - seg.width
            hi_sel &= ((np.arange(hi_n) >> shift) & 1) == bit
    block = cube[np.ix_(hi_sel, np.arange(seg.dim), lo_sel)]
    cube[np.ix_(hi_sel, np.arange(seg.dim), lo_sel)] = np.einsum(
        "ab,hbl->hal", u, block
    )
    return QuantumState(state.layout, amps)


def qft_matrix(width: int, inverse: bool = False) -> np.ndarray:
    d = 1 << width
    jk = np.outer(np.arange(d), np.arange(d))
    sign = -1.0 if inverse else 1.0
    return np.exp(sign * 2j * np.pi * jk / d) / np.sqrt(d)


def qft(state: QuantumState, segment: str, inverse: bool = False) -> QuantumState:
    return apply_unitary_on_segment(state, segment, qft_matrix(
        state.layout.segment(segment).width, inverse))


def swap_segments(state: QuantumState, seg_a: str, seg_b: str) -> QuantumState:
    a = state.layout.segment(seg_a)
    b = state.layout.segment(seg_b)
    if a.width != b.width:
        raise StructuralError(
            f"cannot swap segments of widths {a.width} and {b.width}"
        )
    idx = np.arange(state.layout.dim)
    va = (idx >> a.offset) & a.mask
    vb = (idx >> b.offset) & b.mask
    stripped = idx & ~(a.mask << a.offset) & ~(b.mask << b.offset)
    dest = stripped | (vb << a.offset) | (va << b.offset)
    amps = np.empty_like(state.amplitudes)
    amps[dest] = state.amplitudes[idx]
    return QuantumState(state.layout, amps)


def measure_segment(
    state: QuantumState, segment: str, rng
) -> tuple[int, QuantumState]:
    """Born-rule measurement of a segment's integer value.

    `rng` is a numpy Generator or an integer seed; a fixed seed gives a
    deterministic outcome.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    state.check_norm(1e-8)
    seg = state.layout.segment(segment)
    vals = state.segment_values(segment)
    probs = np.bincount(vals, weights=np.abs(state.amplitudes) ** 2,
                        minlength=seg.dim)
    total = probs.sum()
    if total <= 0:
        raise ImpossibleOutcomeError("state carries no probability mass")
    outcome = int(rng.choice(seg.dim, p=probs / total))
    p = probs[outcome]
    if p <= 0:
        raise ImpossibleOutcomeError(f"outcome {outcome} has zero probability")
    amps = np.where(vals == outcome, state.amplitudes, 0.0) / np.sqrt(p)
    return outcome, QuantumState(state.layout, amps)


def segment_probabilities(state: QuantumState, segment: str) -> np.ndarray:
    seg = state.layout.segment(segment)
    vals = state.segment_values(segment)
    return np.bincount(vals, weights=np.abs(state.amplitudes) ** 2,
                       minlength=seg.dim)


def partial_trace(
    state: QuantumState,
    keep_segments: list[str],
    cap: int = DENSITY_MATRIX_CAP,
) -> DensityMatrix:
    """Reduced density matrix over the kept segments.

    The kept segments contribute to the row/column index in list order,
    first segment least significant.
    """
    kept = [state.layout.segment(name) for name in keep_segments]
    k_width = sum(s.width for s in kept)
    if k_width > cap:
        raise ResourceError(
            f"partial trace over {k_width} qubits exceeds the cap of {cap}"
        )
    idx = np.arange(state.layout.dim)
    kvals = np.zeros(idx.size, dtype=np.int64)
    shift = 0
    for s in kept:
        kvals |= (((idx >> s.offset) & s.mask).astype(np.int64)) << shift
        shift += s.width
    keep_names = set(keep_segments)
    rvals = np.zeros(idx.size, dtype=np.int64)
    shift = 0
    for s in state.layout:
        if s.name in keep_names or s.width == 0:
            continue
        rvals |= (((idx >> s.offset) & s.mask).astype(np.int64)) << shift
        shift += s.width
    table = np.zeros((1 << k_width, 1 << max(shift, 0)), dtype=np.complex128)
    table[kvals, rvals] = state.amplitudes
    return DensityMatrix(table @ table.conj().T)


def extract_segment_vector(
    state: QuantumState, keep_segments: list[str], tol: float = 1e-8
) -> np.ndarray:
    """Pure-state shortcut for partial_trace: slice out the kept segments
    assuming every other segment sits in |0>.  Raises if leakage outside
    that slice exceeds `tol`.
    """
    kept = [state.layout.segment(name) for name in keep_segments]
    idx = np.arange(state.layout.dim)
    keep_names = set(keep_segments)
    rest_zero = np.ones(idx.size, dtype=bool)
    for s in state.layout:
        if s.name in keep_names:
            continue
        rest_zero &= ((idx >> s.offset) & s.mask) == 0
    leak = np.linalg.norm(state.amplitudes[~rest_zero])
    if leak > tol:
        raise ValidationError(
            f"segments outside {keep_segments} are not blank (leak {leak:.3g})"
        )
    kvals = np.zeros(idx.size, dtype=np.int64)
    shift = 0
    for s in kept:
        kvals |= (((idx >> s.offset) & s.mask).astype(np.int64)) << shift
        shift += s.width
    vec = np.zeros(1 << shift, dtype=np.complex128)
    vec[kvals[rest_zero]] = state.amplitudes[rest_zero]
    n = np.linalg.norm(vec)
    return vec / n
