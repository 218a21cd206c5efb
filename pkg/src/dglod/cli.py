"""Experiment drivers: convergence studies, corrector decay, single solves.

Configuration is a plain-text key = value file (see DEFAULTS for the keys and
``parse_config`` for their meaning).  Each run writes a CSV results file with
a fixed header plus a verbatim echo of the configuration next to it.  All CSV
content is reproducible byte-for-byte for a fixed config and seed, regardless
of thread count; measured wall times are therefore printed to the console and
only written into the CSV when ``timing = live`` is requested.
"""

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dg, lod, vtkio
from .coeff import CoefficientField, load_raster, make_highcontrast, make_layered
from .mesh import MeshLevel, build_hierarchy, patch_layers_for
from .solver import is_positive_definite

CSV_HEADER = "H,N_dof,L,rel_energy_error,energy_error_diff_part,energy_error_conv_part,wall_seconds"


def default_forcing(x, y):
    return 1.0 + np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)


@dataclass
class ExperimentConfig:
    coarse_exponents: tuple = (2, 3, 4)  # H = 2^-i per entry
    fine_exponent: int = 6  # h = 2^-k
    coefficient: str = "constant"  # constant | layered | highcontrast | raster
    constant_value: float = 1.0
    layered_resolution: int = 64
    layered_hi: float = 1.0
    layered_lo: float = 0.01
    highcontrast_resolution: int = 64
    highcontrast_floor: float = 0.05
    highcontrast_contrast: float = 4e5
    raster_path: str = ""
    b: tuple = (32.0, 0.0)
    patch_growth: float = 2.0
    patch_log_base: float = 2.0  # dyadic H makes layer counts exact integers
    sigma_scale: float = 10.0
    corrector_mode: str = "convective"  # convective | diffusion
    forcing: str = "default"  # default | zero
    output_dir: str = "out"
    seed: int = 0
    decay_element: str = "center"  # 'center' or a coarse element index
    decay_layers: tuple = ()  # empty: 0 .. layers needed for full coverage
    timing: str = "none"  # none | live
    threads: int = 1
    config_text: str = field(default="", repr=False)  # verbatim source, for provenance

    def validate(self):
        if not self.coarse_exponents:
            raise ValueError("at least one coarse exponent is required")
        if any(i < 0 for i in self.coarse_exponents):
            raise ValueError("coarse exponents must be nonnegative")
        if self.fine_exponent < max(self.coarse_exponents):
            raise ValueError("fine exponent must be at least the largest coarse exponent")
        if self.coefficient not in ("constant", "layered", "highcontrast", "raster"):
            raise ValueError("unknown coefficient spec %r" % (self.coefficient,))
        if self.coefficient == "raster" and not os.path.isfile(self.raster_path):
            raise ValueError("raster file %r does not exist" % (self.raster_path,))
        if self.corrector_mode not in ("convective", "diffusion", "diffusion-only"):
            raise ValueError("unknown corrector mode %r" % (self.corrector_mode,))
        if self.forcing not in ("default", "zero"):
            raise ValueError("unknown forcing %r" % (self.forcing,))
        if self.timing not in ("none", "live"):
            raise ValueError("timing must be 'none' or 'live'")
        return self


_LIST_KEYS = {"coarse_exponents", "decay_layers"}
_INT_KEYS = {"fine_exponent", "layered_resolution", "highcontrast_resolution", "seed", "threads"}
_FLOAT_KEYS = {"constant_value", "layered_hi", "layered_lo", "highcontrast_floor",
               "highcontrast_contrast", "patch_growth", "sigma_scale"}
_STR_KEYS = {"coefficient", "raster_path", "corrector_mode", "forcing", "output_dir",
             "decay_element", "timing"}


def parse_config(path):
    """Read a key = value config file; unknown keys are an error."""
    with open(path) as fh:
        text = fh.read()
    cfg = parse_config_text(text)
    return replace(cfg, config_text=text)


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("line %d: expected 'key = value', got %r" % (lineno, raw))
        key, val = (part.strip() for part in line.split("=", 1))
        if key in _LIST_KEYS:
            values[key] = tuple(int(v) for v in val.replace(",", " ").split())
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key == "b":
            parts = val.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError("line %d: b needs two components" % lineno)
            values[key] = (float(parts[0]), float(parts[1]))
        elif key == "patch_log_base":
            values[key] = math.e if val in ("e", "E") else float(val)
        elif key in _STR_KEYS:
            values[key] = val
        else:
            raise ValueError("line %d: unknown config key %r" % (lineno, key))
    return ExperimentConfig(**values).validate()


def make_field(cfg):
    """Build the CoefficientField described by the config."""
    if cfg.coefficient == "constant":
        raster = np.array([[cfg.constant_value]])
    elif cfg.coefficient == "layered":
        raster = make_layered(cfg.layered_resolution, cfg.layered_hi, cfg.layered_lo)
    elif cfg.coefficient == "highcontrast":
        raster = make_highcontrast(cfg.highcontrast_resolution, cfg.seed,
                                   cfg.highcontrast_floor, cfg.highcontrast_contrast)
    else:
        raster = load_raster(cfg.raster_path)
    return CoefficientField(raster, cfg.b)


def forcing_fn(cfg):
    if cfg.forcing == "zero":
        return lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    return default_forcing


def _fmt(x):
    return "%.12e" % x


def _fmt_seconds(cfg, seconds):
    return "%.3f" % seconds if cfg.timing == "live" else "nan"


def _write_outputs(cfg, out_dir, csv_name, header, rows):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, csv_name)
    with open(csv_path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    echo = cfg.config_text if cfg.config_text else serialize_config(cfg)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(echo)
    return csv_path


def serialize_config(cfg):
    """Key = value text for the effective configuration (provenance echo)."""
    lines = []
    # fixed order for reproducibility
    ordered = ["coarse_exponents", "fine_exponent", "coefficient", "constant_value",
               "layered_resolution", "layered_hi", "layered_lo",
               "highcontrast_resolution", "highcontrast_floor", "highcontrast_contrast",
               "raster_path", "b", "patch_growth", "patch_log_base", "sigma_scale",
               "corrector_mode", "forcing", "output_dir", "seed", "decay_element",
               "decay_layers", "timing", "threads"]
    for key in ordered:
        val = getattr(cfg, key)
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append("%s = %s" % (key, val))
    return "\n".join(lines) + "\n"


class _Study:
    """Shared fine-level setup: reference solve, norms, diagnostics."""

    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.N_h = 2 ** cfg.fine_exponent
        self.field = make_field(cfg)
        self.field.check_resolved_by(self.N_h)
        self.space = dg.DGSpace(MeshLevel(self.N_h))
        self.assembly = dg.AssemblyConfig(sigma_scale=cfg.sigma_scale)
        self.f = forcing_fn(cfg)
        self.ops = lod.FineOperators(self.space, self.field, self.assembly, self.f)
        if not is_positive_definite(self.ops.diffusion):
            raise RuntimeError(
                "diffusion form is not positive definite at sigma_scale=%g; "
                "increase the penalty" % cfg.sigma_scale
            )
        self.u_ref = None

    def reference(self):
        if self.u_ref is None:
            from .solver import Factorization
            self.u_ref = Factorization(self.ops.full.tocsc()).solve(self.ops.load)
        return self.u_ref

    def solve_coarse_level(self, i):
        """Multiscale solve at H = 2^-i; returns the row of result numbers."""
        cfg = self.cfg
        N_H = 2 ** i
        H = 1.0 / N_H
        t0 = time.perf_counter()
        hier = build_hierarchy(N_H, self.N_h)
        proj = lod.build_projection(hier)
        L = patch_layers_for(H, cfg.patch_growth, cfg.patch_log_base)
        basis = lod.compute_correctors(hier, self.field, self.assembly, proj, L,
                                       cfg.corrector_mode, self.ops,
                                       n_workers=cfg.threads)
        K, rhs = lod.assemble_multiscale(basis, self.ops, self.ops.load)
        sol = lod.solve_multiscale(K, rhs, basis)
        u_ref = self.reference()
        err = np.asarray(u_ref) - sol.fine_representation
        ref_norm = self.ops.energy_norm(u_ref)
        wall = time.perf_counter() - t0
        if ref_norm == 0.0:
            rel = rel_d = rel_c = 0.0
        else:
            rel = dg.energy_norm(err, self.ops.norm_d, self.ops.norm_c) / ref_norm
            rel_d = dg.energy_norm(err, self.ops.norm_d) / ref_norm
            rel_c = dg.energy_norm(err, self.ops.norm_c) / ref_norm
        return {
            "H": H, "N_dof": 4 * N_H * N_H, "L": L, "rel_energy_error": rel,
            "energy_error_diff_part": rel_d, "energy_error_conv_part": rel_c,
            "wall_seconds": wall, "solution": sol,
        }


def fit_slope(rows):
    """Least-squares slope of log(error) vs log(N_dof); None with < 2 points."""
    pts = [(r["N_dof"], r["rel_energy_error"]) for r in rows if r["rel_energy_error"] > 0]
    if len(pts) < 2:
        return None
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def run_convergence(cfg, out_dir=None):
    """Convergence study over the configured coarse sizes; returns (rows, slope)."""
    study = _Study(cfg)
    print("convection size indicator H*|b|/alpha at coarsest H: %.6g"
          % lod.convection_size_indicator(study.field, 2.0 ** -min(cfg.coarse_exponents)))
    rows = []
    for i in cfg.coarse_exponents:
        row = study.solve_coarse_level(i)
        rows.append(row)
        print("H=2^-%d  N_dof=%d  L=%d  rel_energy_error=%.6e  (%.2fs)"
              % (i, row["N_dof"], row["L"], row["rel_energy_error"], row["wall_seconds"]))
    slope = fit_slope(rows)
    print("fitted slope of log(error) vs log(N_dof): %s"
          % ("n/a" if slope is None else "%.3f" % slope))
    csv_rows = [
        [_fmt(r["H"]), str(r["N_dof"]), str(r["L"]), _fmt(r["rel_energy_error"]),
         _fmt(r["energy_error_diff_part"]), _fmt(r["energy_error_conv_part"]),
         _fmt_seconds(cfg, r["wall_seconds"])]
        for r in rows
    ]
    _write_outputs(cfg, out_dir or cfg.output_dir, "results.csv", CSV_HEADER, csv_rows)
    return rows, slope


def _decay_element_index(cfg, N_H):
    if cfg.decay_element == "center":
        return (N_H // 2) * N_H + N_H // 2
    return int(cfg.decay_element)


def run_decay(cfg, out_dir=None):
    """Corrector decay study at a single coarse size; returns (rows, gamma)."""
    if len(cfg.coarse_exponents) != 1:
        raise ValueError("decay study needs exactly one coarse exponent")
    study = _Study(cfg)
    i = cfg.coarse_exponents[0]
    N_H = 2 ** i
    hier = build_hierarchy(N_H, study.N_h)
    proj = lod.build_projection(hier)
    T = _decay_element_index(cfg, N_H)
    if cfg.decay_layers:
        L_values = list(cfg.decay_layers)
    else:
        tx, ty = T % N_H, T // N_H
        cover = max(tx, N_H - 1 - tx, ty, N_H - 1 - ty)
        L_values = list(range(cover + 1))
    t0 = time.perf_counter()
    rows = lod.corrector_decay_profile(hier, study.field, study.assembly, proj, T,
                                       L_values, cfg.corrector_mode, study.ops)
    wall = time.perf_counter() - t0
    gamma = lod.fit_decay_rate(rows)
    for (L, d) in rows:
        print("L=%d  energy_distance=%.6e" % (L, d))
    print("fitted decay ratio gamma: %s  (%.2fs)"
          % ("n/a" if gamma is None else "%.4f" % gamma, wall))
    csv_rows = [[str(L), _fmt(d)] for (L, d) in rows]
    _write_outputs(cfg, out_dir or cfg.output_dir, "decay.csv", "L,energy_distance", csv_rows)
    return rows, gamma


def run_single(cfg, out_dir=None):
    """One reference + multiscale solve; writes VTK fields and a one-row CSV."""
    if len(cfg.coarse_exponents) != 1:
        raise ValueError("single run needs exactly one coarse exponent")
    study = _Study(cfg)
    row = study.solve_coarse_level(cfg.coarse_exponents[0])
    u_ref = study.reference()
    sol = row["solution"]
    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    n = study.N_h
    vtkio.write_cell_scalars(os.path.join(out, "reference.vtk"), n, "reference",
                             dg.cell_averages(study.space, u_ref))
    vtkio.write_cell_scalars(os.path.join(out, "multiscale.vtk"), n, "multiscale",
                             dg.cell_averages(study.space, sol.fine_representation))
    vtkio.write_cell_scalars(os.path.join(out, "difference.vtk"), n, "difference",
                             dg.cell_averages(study.space,
                                              np.asarray(u_ref) - sol.fine_representation))
    ref_norm = study.ops.energy_norm(u_ref)
    ms_norm = study.ops.energy_norm(sol.fine_representation)
    H = row["H"]
    indicator = lod.convection_size_indicator(study.field, H)
    print("energy norm of reference solution:  %.12e" % ref_norm)
    print("energy norm of multiscale solution: %.12e" % ms_norm)
    print("convection size indicator H*|b|/alpha: %.6g" % indicator)
    csv_rows = [[_fmt(row["H"]), str(row["N_dof"]), str(row["L"]),
                 _fmt(row["rel_energy_error"]), _fmt(row["energy_error_diff_part"]),
                 _fmt(row["energy_error_conv_part"]), _fmt_seconds(cfg, row["wall_seconds"])]]
    _write_outputs(cfg, out, "results.csv", CSV_HEADER, csv_rows)
    return row


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dglod",
        description="Two-level DG multiscale experiments on the unit square.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("convergence", "relative energy error over a range of coarse sizes"),
        ("decay", "energy distance between ideal and localized correctors"),
        ("single", "one multiscale solve with VTK output"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, help="corrector solver threads")
    args = parser.parse_args(argv)

    cfg = parse_config(args.config) if args.config else ExperimentConfig().validate()
    if args.threads is not None:
        cfg = replace(cfg, threads=max(1, args.threads))

    try:
        if args.command == "convergence":
            run_convergence(cfg, args.out)
        elif args.command == "decay":
            run_decay(cfg, args.out)
        else:
            run_single(cfg, args.out)
    except Exception as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
