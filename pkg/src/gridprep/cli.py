"""Command-line driver.

Usage: gridprep <command> --config <path> [--seed N] [--out DIR]

Commands: validate, prepare-orbital, prepare-slater, prepare-superposition,
prepare-two-species, prepare-mixed, verify-bounds, sweep, cost-table.

Artifacts land in the output directory: report.txt and report.csv always;
state.csv (index, re, im) for pure-state preparations; rho.csv
(row, col, re, im) for mixed-state preparations.  Floats are rendered with
12 significant digits so identical runs produce bit-identical files.

Exit codes: 0 success, 2 configuration/validation error, 3 pipeline error
(degeneracy, retry budget, bound violation), 4 resource limit.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import basis as basis_mod
from .analysis import (
    BoundCheck,
    CostRow,
    PreparationReport,
    cost_table,
    cost_table_text,
    format_float,
    mixed_infidelity,
    pure_infidelity,
)
from .assemble import OccupationVector, slater_oracle
from .basis import BasisSet, IntegrationSpec, Orbital
from .compose import (
    FockSuperposition,
    MixedSpec,
    PreparedState,
    mixed_oracle,
    prepare_mixed,
    prepare_orbital,
    prepare_slater,
    prepare_superposition,
    prepare_two_species,
    superposition_oracle,
)
from .discriminate import SymmetryOperator
from .errors import (
    GridprepError,
    PipelineError,
    ResourceError,
    ValidationError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_RESOURCE = 4


def read_orbital_csv(path: Path) -> np.ndarray:
    """Tabulated orbital: rows of (index, re, im); a header row is allowed.
    Indices must form 0..2^l-1 for some l.
    """
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                i = int(rec[0])
            except ValueError:
                continue  # header
            if len(rec) < 3:
                raise ValidationError(
                    f"{path}: rows need (index, re, im), got {rec}"
                )
            rows[i] = float(rec[1]) + 1j * float(rec[2])
    n = len(rows)
    if n == 0 or n & (n - 1):
        raise ValidationError(
            f"{path}: table length {n} is not a power of two"
        )
    if sorted(rows) != list(range(n)):
        raise ValidationError(f"{path}: indices must cover 0..{n - 1}")
    return np.array([rows[i] for i in range(n)])


def _build_orbital(entry: dict, length: float, config_dir: Path) -> Orbital:
    family = entry.get("family")
    if family is None:
        raise ValidationError("orbital entry needs a 'family'")
    energy = entry.get("energy")
    if family == "uniform":
        return basis_mod.uniform(length, energy=energy or 0.0)
    if family == "box-sine":
        return basis_mod.box_sine(int(entry.get("n", 1)), length,
                                  energy=energy)
    if family == "ring-plane-wave":
        return basis_mod.ring_plane_wave(int(entry.get("k", 0)), length,
                                         energy=energy)
    if family == "harmonic-hermite":
        return basis_mod.harmonic_hermite(
            int(entry.get("n", 0)), length,
            width=entry.get("width"), energy=energy)
    if family == "kronecker-delta":
        if "site" in entry:
            raise ValidationError(
                "kronecker-delta takes 'x0', not a raw site; use x0 = "
                "site * length / 2^l"
            )
        return basis_mod.kronecker_delta(float(entry["x0"]), length,
                                         energy=energy or 0.0)
    if family == "tabulated":
        table = read_orbital_csv(config_dir / entry["path"])
        return basis_mod.tabulated(table, length, energy=energy or 0.0)
    raise ValidationError(f"unknown orbital family {family!r}")


def _build_basis(cfg: dict, config_dir: Path, key: str = "basis") -> BasisSet:
    entries = cfg.get(key)
    if not entries:
        raise ValidationError(f"config needs a '{key}' orbital list")
    length = float(cfg.get("length", 1.0))
    orbs = [_build_orbital(e, length, config_dir) for e in entries]
    return BasisSet(orbs)


def _build_integration(cfg: dict, seed: int | None) -> IntegrationSpec:
    raw = cfg.get("integration", {}) or {}
    bounds = raw.get("bounds")
    return IntegrationSpec(
        backend=raw.get("backend", "analytic-cdf"),
        epsilon_i=float(raw.get("epsilon_i", 0.01)),
        delta=float(raw.get("delta", 0.05)),
        sigma2=raw.get("sigma2"),
        bounds=tuple(bounds) if bounds is not None else None,
        seed=seed if seed is not None else raw.get("seed"),
    )


def _build_symmetry(cfg: dict) -> SymmetryOperator | None:
    raw = cfg.get("phase_estimation", {}) or {}
    sym = raw.get("symmetry")
    if sym is None:
        return None
    return SymmetryOperator(kind=sym["kind"], step=int(sym.get("step", 1)))


def _amplitude(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(float(value[0]), float(value[1]))
    return complex(float(value), 0.0)


def _build_superposition(cfg: dict) -> FockSuperposition:
    raw = cfg.get("superposition")
    if not raw:
        raise ValidationError("config needs a 'superposition' term list")
    statistics = cfg.get("statistics", "fermionic")
    return FockSuperposition.from_strings(
        [(_amplitude(t["amplitude"]), str(t["occupation"])) for t in raw],
        statistics,
    )


def _build_mixed(cfg: dict) -> MixedSpec:
    raw = cfg.get("mixed")
    if not raw:
        raise ValidationError("config needs a 'mixed' section")
    statistics = cfg.get("statistics", "fermionic")
    if "thermal" in raw:
        th = raw["thermal"]
        pairs = [(float(c["energy"]), str(c["occupation"]))
                 for c in th["components"]]
        return MixedSpec.thermal(float(th["beta"]), pairs, statistics)
    comps = raw.get("components")
    if not comps:
        raise ValidationError("'mixed' needs 'components' or 'thermal'")
    return MixedSpec.from_probabilities(
        [(float(c["probability"]), str(c["occupation"])) for c in comps],
        statistics,
    )


def _require_l(cfg: dict) -> int:
    if "l" not in cfg:
        raise ValidationError("config needs grid width 'l'")
    l = int(cfg["l"])
    if l < 1:
        raise ValidationError("grid width l must be >= 1")
    return l


def write_report(out_dir: Path, report: PreparationReport) -> None:
    (out_dir / "report.txt").write_text(report.to_text())
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerows(report.to_rows())


def write_state(out_dir: Path, vector: np.ndarray) -> None:
    with open(out_dir / "state.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i, a in enumerate(vector):
            w.writerow([i, format_float(a.real), format_float(a.imag)])


def write_rho(out_dir: Path, rho) -> None:
    matrix = rho.matrix
    with open(out_dir / "rho.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for r in range(matrix.shape[0]):
            for c in range(matrix.shape[1]):
                w.writerow([r, c, format_float(matrix[r, c].real),
                            format_float(matrix[r, c].imag)])


def _emit(out_dir: Path, prepared: PreparedState) -> None:
    write_report(out_dir, prepared.report)
    if prepared.vector is not None:
        write_state(out_dir, prepared.vector)
    if prepared.rho is not None:
        write_rho(out_dir, prepared.rho)


def _occupation(cfg: dict, key: str = "occupation") -> OccupationVector:
    if key not in cfg:
        raise ValidationError(f"config needs an '{key}' string")
    return OccupationVector.parse(str(cfg[key]),
                                  cfg.get("statistics", "fermionic"))


def _noise_perturb(cfg: dict, spec: IntegrationSpec):
    """Worst-sign constant ratio perturbation of magnitude epsilon_i,
    enabled by `noise: adversarial`.
    """
    if cfg.get("noise") != "adversarial":
        return None
    eps = spec.epsilon_i
    return lambda i, k, ratio: ratio - eps


def _run_preparation(cfg: dict, config_dir: Path, seed: int | None):
    """Dispatch on the config 'task' (or infer it) and run one preparation;
    used by verify-bounds, sweep, and cost-table.
    """
    task = cfg.get("task")
    if task is None:
        if "superposition" in cfg:
            task = "superposition"
        elif "mixed" in cfg:
            task = "mixed"
        elif "occupation" in cfg:
            task = "slater"
        else:
            task = "orbital"
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    perturb = _noise_perturb(cfg, spec)
    if task == "orbital":
        bas = _build_basis(cfg, config_dir)
        prepared = prepare_orbital(bas.orbitals[int(cfg.get("orbital", 0))],
                                   l, spec, ratio_perturb=perturb)
        oracle = bas.orbitals[int(cfg.get("orbital", 0))].grid_values(l)
        infid = pure_infidelity(prepared.vector, oracle)
    elif task == "slater":
        bas = _build_basis(cfg, config_dir)
        occ = _occupation(cfg)
        prepared = prepare_slater(occ, bas, l, spec, ratio_perturb=perturb)
        infid = pure_infidelity(prepared.vector, slater_oracle(occ, bas, l))
    elif task == "superposition":
        bas = _build_basis(cfg, config_dir)
        sup = _build_superposition(cfg)
        pe = cfg.get("phase_estimation", {}) or {}
        prepared = prepare_superposition(
            sup, bas, l, spec,
            t=pe.get("t"), eps_pe=pe.get("eps_pe"),
            symmetry=_build_symmetry(cfg),
            seed=seed,
            max_attempts=int(cfg.get("max_attempts", 20)),
        )
        infid = pure_infidelity(prepared.vector,
                                superposition_oracle(sup, bas, l))
    elif task == "mixed":
        bas = _build_basis(cfg, config_dir)
        mix = _build_mixed(cfg)
        prepared = prepare_mixed(mix, bas, l, spec)
        infid = mixed_infidelity(prepared.rho, mixed_oracle(mix, bas, l))
    else:
        raise ValidationError(f"unknown task {task!r}")
    prepared.report.infidelity = infid
    return prepared


def cmd_validate(cfg, config_dir, seed, out_dir):
    # touch every section that is present so malformed ones are rejected
    if "basis" in cfg:
        _build_basis(cfg, config_dir)
    if "l" in cfg:
        _require_l(cfg)
    _build_integration(cfg, seed)
    if "superposition" in cfg:
        _build_superposition(cfg)
    if "mixed" in cfg:
        _build_mixed(cfg)
    if "occupation" in cfg:
        _occupation(cfg)
    _build_symmetry(cfg)
    print("config ok")
    return EXIT_OK


def cmd_prepare_orbital(cfg, config_dir, seed, out_dir):
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    bas = _build_basis(cfg, config_dir)
    prepared = prepare_orbital(bas.orbitals[int(cfg.get("orbital", 0))], l,
                               spec)
    _emit(out_dir, prepared)
    print(prepared.report.to_text(), end="")
    return EXIT_OK


def cmd_prepare_slater(cfg, config_dir, seed, out_dir):
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    bas = _build_basis(cfg, config_dir)
    prepared = prepare_slater(_occupation(cfg), bas, l, spec)
    _emit(out_dir, prepared)
    print(prepared.report.to_text(), end="")
    return EXIT_OK


def cmd_prepare_superposition(cfg, config_dir, seed, out_dir):
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    bas = _build_basis(cfg, config_dir)
    sup = _build_superposition(cfg)
    pe = cfg.get("phase_estimation", {}) or {}
    prepared = prepare_superposition(
        sup, bas, l, spec,
        t=pe.get("t"), eps_pe=pe.get("eps_pe"),
        symmetry=_build_symmetry(cfg), seed=seed,
        max_attempts=int(cfg.get("max_attempts", 20)),
    )
    _emit(out_dir, prepared)
    print(prepared.report.to_text(), end="")
    return EXIT_OK


def cmd_prepare_two_species(cfg, config_dir, seed, out_dir):
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    if "species_a" not in cfg or "species_b" not in cfg:
        raise ValidationError(
            "config needs 'species_a' and 'species_b' sections"
        )
    sections = []
    for key in ("species_a", "species_b"):
        sec = cfg[key]
        bas = _build_basis(sec, config_dir) if "basis" in sec \
            else _build_basis(cfg, config_dir)
        occ = OccupationVector.parse(
            str(sec["occupation"]), sec.get("statistics", "fermionic"))
        sections.append((occ, bas))
    (occ_a, bas_a), (occ_b, bas_b) = sections
    prepared = prepare_two_species(occ_a, occ_b, bas_a, bas_b, l, spec)
    _emit(out_dir, prepared)
    print(prepared.report.to_text(), end="")
    return EXIT_OK


def cmd_prepare_mixed(cfg, config_dir, seed, out_dir):
    l = _require_l(cfg)
    spec = _build_integration(cfg, seed)
    bas = _build_basis(cfg, config_dir)
    prepared = prepare_mixed(_build_mixed(cfg), bas, l, spec)
    _emit(out_dir, prepared)
    print(prepared.report.to_text(), end="")
    return EXIT_OK


def cmd_verify_bounds(cfg, config_dir, seed, out_dir):
    prepared = _run_preparation(cfg, config_dir, seed)
    report = prepared.report
    report.bound_checks.append(BoundCheck(
        name="infidelity",
        measured=report.infidelity,
        bound=report.error_bound,
    ))
    _emit(out_dir, prepared)
    print(report.to_text(), end="")
    return EXIT_OK if report.all_bounds_hold() else EXIT_PIPELINE


def _sweep_cells(cfg, config_dir, seed):
    """Cartesian product of sweep axes (l, epsilon_i, occupations); every
    cell runs one preparation with its own sub-config.
    """
    sweep = cfg.get("sweep")
    if not sweep:
        raise ValidationError("config needs a 'sweep' section")
    ls = sweep.get("l") or [cfg.get("l")]
    if any(v is None for v in ls):
        raise ValidationError("sweep needs 'l' values (or a top-level l)")
    epss = sweep.get("epsilon_i") or [None]
    occs = sweep.get("occupations") or [cfg.get("occupation")]
    cells = []
    for occ in occs:
        for l in ls:
            for eps in epss:
                sub = dict(cfg)
                sub["l"] = int(l)
                if occ is not None:
                    sub["occupation"] = occ
                if eps is not None:
                    integ = dict(sub.get("integration", {}) or {})
                    integ["epsilon_i"] = float(eps)
                    sub["integration"] = integ
                prepared = _run_preparation(sub, config_dir, seed)
                cells.append((occ, int(l), eps, prepared))
    return cells


def cmd_sweep(cfg, config_dir, seed, out_dir):
    cells = _sweep_cells(cfg, config_dir, seed)
    lines = ["occupation,l,epsilon_i,m,qubits,infidelity,error_bound,"
             "bound_ok,integral_requests,rotation_applications"]
    all_ok = True
    for occ, l, eps, prepared in cells:
        r = prepared.report
        ok = r.infidelity <= r.error_bound + 1e-12
        all_ok &= ok
        lines.append(",".join([
            str(occ if occ is not None else ""),
            str(l),
            format_float(eps) if eps is not None else "",
            str(r.m), str(r.qubits),
            format_float(r.infidelity), format_float(r.error_bound),
            "pass" if ok else "FAIL",
            str(r.counters.get("integral_requests", 0)),
            str(r.counters.get("rotation_applications", 0)),
        ]))
    text = "\n".join(lines) + "\n"
    (out_dir / "report.csv").write_text(text)
    (out_dir / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if all_ok else EXIT_PIPELINE


def cmd_cost_table(cfg, config_dir, seed, out_dir):
    cells = _sweep_cells(cfg, config_dir, seed)
    if len(cells) < 2:
        raise ValidationError("cost table needs at least two sweep cells")
    cost_rows = []
    for _, l, _, prepared in cells:
        costs = {
            k: prepared.report.counters[k]
            for k in ("integral_requests", "rotation_applications")
            if k in prepared.report.counters
        }
        cost_rows.append(CostRow(parameter=1 << l, costs=costs))
    exponents = cost_table(cost_rows)
    text = cost_table_text(cost_rows, exponents)
    (out_dir / "report.csv").write_text(text)
    (out_dir / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "prepare-orbital": cmd_prepare_orbital,
    "prepare-slater": cmd_prepare_slater,
    "prepare-superposition": cmd_prepare_superposition,
    "prepare-two-species": cmd_prepare_two_species,
    "prepare-mixed": cmd_prepare_mixed,
    "verify-bounds": cmd_verify_bounds,
    "sweep": cmd_sweep,
    "cost-table": cmd_cost_table,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridprep",
        description="grid-based many-particle state preparation emulator",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True,
                        help="YAML configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="measurement / sampling seed")
    parser.add_argument("--out", default=".",
                        help="output directory (created if missing)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config_path = Path(args.config)
    try:
        if not config_path.is_file():
            raise ValidationError(f"config file not found: {config_path}")
        try:
            cfg = yaml.safe_load(config_path.read_text())
        except yaml.YAMLError as exc:
            raise ValidationError(f"malformed YAML: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a YAML mapping")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, config_path.parent, args.seed,
                                      out_dir)
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValidationError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except GridprepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
