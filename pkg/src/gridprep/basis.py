"""Orbital families, integration backends, and the Fock operator model.

An orbital carries three oracles: the probability density |phi(x)|^2, the
phase arg phi(x), and (when available in closed form) the cumulative
integral C(x) = int_0^x |phi|^2.  Grid-native families (kronecker-delta,
tabulated) define their mass directly on sites; their cumulative oracle is
a step function evaluated in time independent of the grid resolution.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .errors import ValidationError

BACKENDS = ("analytic-cdf", "adaptive-quadrature", "monte-carlo")

#: Returned by split_ratio when the block carries no probability mass.
EMPTY_BLOCK = "empty-block"

#: Denominator mass below this is treated as zero (double-precision noise).
EMPTY_MASS_THRESHOLD = 1e-14


@dataclass(frozen=True)
class Orbital:
    """One member of an orthonormal single-particle basis.

    family parameters live in `params`; `energy` is the eigenvalue of the
    Fock operator for this orbital.
    """

    family: str
    length: float
    energy: float
    params: tuple = ()

    # -- continuum oracles -------------------------------------------------
    def density(self, x):
        x = np.asarray(x, dtype=float)
        L = self.length
        if self.family == "uniform":
            return np.full_like(x, 1.0 / L)
        if self.family == "box-sine":
            n = self.params[0]
            return (2.0 / L) * np.sin(n * np.pi * x / L) ** 2
        if self.family == "ring-plane-wave":
            return np.full_like(x, 1.0 / L)
        if self.family == "harmonic-hermite":
            n, width = self.params
            u = (x - L / 2.0) / width
            h = _hermite_value(n, u)
            norm = 1.0 / (2.0**n * math.factorial(n) * math.sqrt(math.pi))
            return norm * h**2 * np.exp(-(u**2)) / width
        raise ValidationError(
            f"family {self.family!r} has no continuum density oracle"
        )

    def phase(self, x):
        """arg phi(x); real sign changes appear as a phase of pi."""
        x = np.asarray(x, dtype=float)
        L = self.length
        if self.family == "ring-plane-wave":
            k = self.params[0]
            return 2.0 * np.pi * k * x / L
        if self.family == "box-sine":
            n = self.params[0]
            return np.where(np.sin(n * np.pi * x / L) < 0, np.pi, 0.0)
        if self.family == "harmonic-hermite":
            n, width = self.params
            h = _hermite_value(n, (x - L / 2.0) / width)
            return np.where(h < 0, np.pi, 0.0)
        if self.family in ("uniform", "kronecker-delta"):
            return np.zeros_like(x)
        raise ValidationError(f"family {self.family!r} has no phase oracle")

    def cdf(self, x):
        """Closed-form cumulative integral of |phi|^2, or None."""
        if not self.has_cdf:
            return None
        x = np.asarray(x, dtype=float)
        L = self.length
        if self.family in ("uniform", "ring-plane-wave"):
            return np.clip(x / L, 0.0, 1.0)
        if self.family == "box-sine":
            n = self.params[0]
            return x / L - np.sin(2 * n * np.pi * x / L) / (2 * n * np.pi)
        if self.family == "kronecker-delta":
            return (x > self.params[0]).astype(float)
        if self.family == "tabulated":
            values = self.params[0]
            prob = np.abs(np.asarray(values)) ** 2
            prob = prob / prob.sum()
            edges = np.arange(1, prob.size + 1) * (L / prob.size)
            cum = np.concatenate([[0.0], np.cumsum(prob)])
            return cum[np.searchsorted(edges, x, side="right")]
        raise AssertionError("unreachable")

    @property
    def has_cdf(self) -> bool:
        return self.family in ("uniform", "box-sine", "ring-plane-wave",
                               "kronecker-delta", "tabulated")

    @property
    def is_grid_family(self) -> bool:
        return self.family in ("kronecker-delta", "tabulated")

    def density_bound(self) -> float | None:
        """Upper bound on the density, used as a rejection envelope."""
        L = self.length
        if self.family in ("uniform", "ring-plane-wave"):
            return 1.0 / L
        if self.family == "box-sine":
            return 2.0 / L
        if self.family == "harmonic-hermite":
            xs = np.linspace(0.0, L, 4097)
            return float(self.density(xs).max()) * 1.05
        return None

    # -- grid oracles ------------------------------------------------------
    def grid_values(self, l: int) -> np.ndarray:
        """Normalized complex amplitudes at the sites x_j = j*L/2^l."""
        n_sites = 1 << l
        if self.family == "kronecker-delta":
            site = int(self.params[0] / self.length * n_sites)
            vec = np.zeros(n_sites, dtype=np.complex128)
            vec[site] = 1.0
            return vec
        if self.family == "tabulated":
            values = np.asarray(self.params[0], dtype=np.complex128)
            if values.size != n_sites:
                raise ValidationError(
                    f"tabulated orbital has {values.size} entries, "
                    f"grid needs {n_sites}"
                )
            return values / np.linalg.norm(values)
        xs = np.arange(n_sites) * (self.length / n_sites)
        mags = np.sqrt(self.density(xs))
        vec = mags * np.exp(1j * self.phase(xs))
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValidationError("orbital vanishes on every grid site")
        return vec / norm

    def grid_prob(self, l: int) -> np.ndarray:
        return np.abs(self.grid_values(l)) ** 2

    def check_normalization(self, tol: float = 1e-8) -> None:
        """Quadrature check that the continuum density integrates to 1."""
        if self.is_grid_family:
            return
        total, _ = integrate.quad(lambda x: float(self.density(x)),
                                  0.0, self.length, limit=200)
        if abs(total - 1.0) > tol:
            raise ValidationError(
                f"{self.family} orbital density integrates to {total}"
            )


def _hermite_value(n: int, u: np.ndarray) -> np.ndarray:
    return np.polynomial.hermite.hermval(u, [0.0] * n + [1.0])


# -- family constructors ---------------------------------------------------

def uniform(length: float = 1.0, energy: float = 0.0) -> Orbital:
    return Orbital("uniform", length, energy)


def box_sine(n: int, length: float = 1.0, energy: float | None = None) -> Orbital:
    if n < 1:
        raise ValidationError("box-sine quantum number must be >= 1")
    return Orbital("box-sine", length, float(n**2 if energy is None else energy),
                   (n,))


def ring_plane_wave(k: int, length: float = 1.0,
                    energy: float | None = None) -> Orbital:
    return Orbital("ring-plane-wave", length,
                   float(k**2 if energy is None else energy), (k,))


def harmonic_hermite(n: int, length: float = 1.0, width: float | None = None,
                     energy: float | None = None) -> Orbital:
    if n < 0:
        raise ValidationError("hermite index must be >= 0")
    if width is None:
        width = length / 20.0
    return Orbital("harmonic-hermite", length,
                   float(n + 0.5 if energy is None else energy),
                   (n, float(width)))


def kronecker_delta(position: float, length: float = 1.0,
                    energy: float = 0.0) -> Orbital:
    if not 0 <= position < length:
        raise ValidationError("delta position must lie in [0, L)")
    return Orbital("kronecker-delta", length, energy, (float(position),))


def delta_at_site(site: int, l: int, length: float = 1.0,
                  energy: float = 0.0) -> Orbital:
    return kronecker_delta(site * length / (1 << l), length, energy)


def tabulated(values, length: float = 1.0, energy: float = 0.0) -> Orbital:
    values = tuple(complex(v) for v in values)
    if len(values) & (len(values) - 1):
        raise ValidationError("tabulated orbital needs a power-of-two table")
    if not any(abs(v) > 0 for v in values):
        raise ValidationError("tabulated orbital is identically zero")
    return Orbital("tabulated", length, energy, (values,))


# -- integration -----------------------------------------------------------

@dataclass(frozen=True)
class IntegrationSpec:
    backend: str = "analytic-cdf"
    epsilon_i: float = 1e-6
    delta: float = 0.05
    sigma2: float | None = None
    bounds: tuple[float, float] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValidationError(f"unknown integration backend {self.backend!r}")
        if not 0 < self.epsilon_i < 1:
            raise ValidationError("epsilon_i must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if self.bounds is not None and self.bounds[0] > self.bounds[1]:
            raise ValidationError("lower bound exceeds upper bound")


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0 < p < 1:
        raise ValidationError("quantile argument must lie in (0, 1)")
    return statistics.NormalDist().inv_cdf(p)


def normal_cdf(z: float) -> float:
    return statistics.NormalDist().cdf(z)


def mc_sample_count(spec: IntegrationSpec, bounded: bool = True) -> int:
    """Worst-case Monte Carlo sample count for an (epsilon_i, delta)
    absolute-error estimate: the bounded-range formula when `bounded`,
    the variance formula otherwise.
    """
    z = normal_quantile(1.0 - spec.delta / 2.0)
    if bounded:
        if spec.bounds is None:
            raise ValidationError("bounded sample count needs (lower, upper)")
        lo, hi = spec.bounds
        return math.ceil((z * (hi - lo) / (2.0 * spec.epsilon_i)) ** 2)
    if spec.sigma2 is None:
        raise ValidationError("variance sample count needs sigma2")
    return math.ceil(z**2 * spec.sigma2 / spec.epsilon_i**2)


def _interval_mass(orbital: Orbital, a: float, b: float,
                   spec: IntegrationSpec) -> float:
    if orbital.is_grid_family or orbital.has_cdf and \
            spec.backend == "analytic-cdf":
        return float(orbital.cdf(b) - orbital.cdf(a))
    if spec.backend == "analytic-cdf":
        raise ValidationError(
            f"family {orbital.family!r} has no closed-form cumulative oracle"
        )
    val, _ = integrate.quad(lambda x: float(orbital.density(x)), a, b,
                            epsabs=1e-12, limit=200)
    return val


def split_ratio(orbital: Orbital, i: int, k: int, spec: IntegrationSpec):
    """Probability that mass in the dyadic block [k, k+2)*L/2^i lies in the
    left half, estimated to (epsilon_i, delta) absolute error.

    Returns EMPTY_BLOCK when the block carries no mass.
    """
    if i < 1:
        raise ValidationError("subdivision level must be >= 1")
    if not 0 <= k <= (1 << i) - 2:
        raise ValidationError(f"block index {k} out of range at level {i}")
    L = orbital.length
    a = k * L / (1 << i)
    mid = (k + 1) * L / (1 << i)
    b = (k + 2) * L / (1 << i)
    if spec.backend == "monte-carlo" and not orbital.is_grid_family:
        return _mc_split_ratio(orbital, a, mid, b, spec)
    num = _interval_mass(orbital, a, mid, spec)
    den = _interval_mass(orbital, a, b, spec)
    if den < EMPTY_MASS_THRESHOLD:
        return EMPTY_BLOCK
    return float(np.clip(num / den, 0.0, 1.0))


def _mc_split_ratio(orbital: Orbital, a: float, mid: float, b: float,
                    spec: IntegrationSpec):
    """Rejection-sampled Bernoulli estimate of the left-half probability.

    Candidates are uniform on the block and accepted against the family's
    density envelope; the accepted fraction below `mid` estimates the
    ratio.  The sample count follows the worst-case formulas.
    """
    if spec.bounds is None and spec.sigma2 is None:
        raise ValidationError(
            "monte-carlo backend needs bounds or a variance estimate"
        )
    envelope = orbital.density_bound()
    if envelope is None:
        raise ValidationError(
            f"family {orbital.family!r} has no density bound for sampling"
        )
    n = mc_sample_count(spec, bounded=spec.bounds is not None)
    n = max(n, 1)
    rng = np.random.default_rng(spec.seed)
    accepted = np.empty(0)
    candidates = 0
    mass_sum = 0.0
    while accepted.size < n:
        batch = max(4 * n, 256)
        xs = rng.uniform(a, b, size=batch)
        dens = orbital.density(xs)
        mass_sum += dens.sum()
        candidates += batch
        keep = rng.uniform(0.0, envelope, size=batch) < dens
        accepted = np.concatenate([accepted, xs[keep]])
        if candidates >= 64 * n:
            mass = mass_sum / candidates * (b - a)
            if mass < EMPTY_MASS_THRESHOLD or accepted.size == 0:
                return EMPTY_BLOCK
    accepted = accepted[:n]
    return float(np.clip(np.mean(accepted < mid), 0.0, 1.0))


# -- basis set and Fock operator -------------------------------------------

class BasisSet:
    """M orthonormal orbitals plus the Fock operator they diagonalize."""

    def __init__(self, orbitals: list[Orbital], orthonormality_tol: float = 1e-6):
        if not orbitals:
            raise ValidationError("basis needs at least one orbital")
        lengths = {o.length for o in orbitals}
        if len(lengths) != 1:
            raise ValidationError("orbitals must share one domain length")
        self.orbitals = list(orbitals)
        self.orthonormality_tol = orthonormality_tol
        self._grid_cache: dict[int, np.ndarray] = {}

    @property
    def size(self) -> int:
        return len(self.orbitals)

    @property
    def length(self) -> float:
        return self.orbitals[0].length

    @property
    def energies(self) -> np.ndarray:
        return np.array([o.energy for o in self.orbitals])

    def gap(self) -> float:
        """Half the minimum spacing between distinct energies (0 if all tie)."""
        distinct = np.unique(np.round(self.energies, 12))
        if distinct.size < 2:
            return 0.0
        return float(np.min(np.diff(distinct)) / 2.0)

    def grid_matrix(self, l: int) -> np.ndarray:
        """(2^l, M) matrix of grid-discretized, re-orthonormalized orbitals.

        Columns are the point-sampled orbitals after symmetric (Loewdin)
        re-orthonormalization, so the Gram matrix is the identity.
        """
        if l in self._grid_cache:
            return self._grid_cache[l]
        if self.size > (1 << l):
            raise ValidationError(
                f"{self.size} orbitals cannot be independent on {1 << l} sites"
            )
        raw = np.column_stack([o.grid_values(l) for o in self.orbitals])
        gram = raw.conj().T @ raw
        evals, evecs = np.linalg.eigh(gram)
        if np.min(evals) < 1e-10:
            raise ValidationError(
                "grid-discretized orbitals are (numerically) linearly dependent"
            )
        inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.conj().T
        ortho = raw @ inv_sqrt
        check = np.max(np.abs(ortho.conj().T @ ortho - np.eye(self.size)))
        if check > self.orthonormality_tol:
            raise ValidationError(
                f"re-orthonormalization residual {check:.3g} exceeds tolerance"
            )
        self._grid_cache[l] = ortho
        return ortho

    def fock_matrix(self, l: int) -> np.ndarray:
        """F = sum_i E_i |phi_i><phi_i| on the 2^l grid."""
        phi = self.grid_matrix(l)
        return (phi * self.energies) @ phi.conj().T

    def fock_unitary(self, l: int, t: float) -> np.ndarray:
        """exp(-i F t), computed exactly from the factored eigen-form."""
        phi = self.grid_matrix(l)
        d = phi.shape[0]
        # unit eigenphase on the complement keeps support untouched (phase 0)
        u = np.eye(d, dtype=np.complex128)
        u = u + (phi * (np.exp(-1j * self.energies * t) - 1.0)) @ phi.conj().T
        return u

    def perturbed(self, target: int, strength: float) -> "BasisSet":
        """Shift one orbital's energy by `strength` (projector perturbation);
        eigenvectors are untouched.
        """
        if not 0 <= target < self.size:
            raise ValidationError(f"orbital index {target} out of range")
        gap = self.gap()
        if gap > 0 and abs(strength) >= gap / 2 and strength != 0:
            raise ValidationError(
                f"perturbation {strength} exceeds half the spectral gap {gap}"
            )
        new = list(self.orbitals)
        new[target] = replace(new[target],
                              energy=new[target].energy + strength)
        if strength != 0:
            e_new = new[target].energy
            for j, orb in enumerate(new):
                if j != target and abs(orb.energy - e_new) < 1e-12:
                    raise ValidationError(
                        f"perturbation leaves orbitals {target} and {j} "
                        f"degenerate at energy {e_new}"
                    )
        out = BasisSet(new, self.orthonormality_tol)
        out._grid_cache = dict(self._grid_cache)
        return out


def build_fock_matrix(basis: BasisSet, l: int) -> np.ndarray:
    return basis.fock_matrix(l)


def perturb_fock(basis: BasisSet, target: int, strength: float) -> BasisSet:
    return basis.perturbed(target, strength)
