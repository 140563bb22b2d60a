"""Command line driver: ``hurwitzwp {uniformize,gram,curvature,verify,sweep}``.

Runs are configured by a JSON file.  Reports are written as JSON (sorted
keys, no timestamps) plus CSV tables; identical inputs give byte-identical
outputs.  Exit codes: 0 success, 1 numerical failure or failed check,
2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covering import BranchConfiguration, ConfigError, TargetMetric
from .family import DeformationDirection

log = logging.getLogger("hurwitzwp")

OUTPUTS = ("gram", "curvature", "identities", "all")
DISK_FAMILIES = ("mobius", "warped", "trivial")


@dataclass
class RunConfig:
    """Validated run configuration."""

    branch: BranchConfiguration
    resolution: int = 16
    tol_pde: float = 1e-9
    tol_identity: float = 1e-10
    h_s: float = 1e-3
    directions: list = field(default_factory=list)
    outputs: tuple = ("all",)
    out: Path = Path("out")
    threads: int = 1
    disk_family: str = "warped"
    samples: int = 200
    sweep_resolutions: tuple = (8, 12, 16)
    sweep_h_s: tuple = (1e-3,)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        branch = _branch(d, base_dir)
        kw: dict = {"branch": branch}
        if "resolution" in d:
            kw["resolution"] = _int(d["resolution"], "resolution", minimum=4)
        tols = d.get("tolerances", {})
        if not isinstance(tols, dict):
            raise ConfigError("tolerances: expected an object")
        for name in ("tol_pde", "tol_identity"):
            if name in tols:
                kw[name] = _positive(tols[name], f"tolerances.{name}")
        if "h_s" in d:
            kw["h_s"] = _positive(d["h_s"], "h_s")
        dirs = d.get("directions", [])
        if not isinstance(dirs, list):
            raise ConfigError("directions: expected a list")
        parsed = []
        for k, item in enumerate(dirs):
            try:
                parsed.append(DeformationDirection.from_dict(item, branch.b))
            except ConfigError as exc:
                raise ConfigError(f"directions[{k}]: {exc}") from None
        kw["directions"] = parsed
        outputs = d.get("outputs", ["all"])
        if isinstance(outputs, str):
            outputs = [outputs]
        for o in outputs:
            if o not in OUTPUTS:
                raise ConfigError(f"outputs: unknown entry {o!r} (choose from {', '.join(OUTPUTS)})")
        kw["outputs"] = tuple(outputs)
        if "out" in d:
            kw["out"] = Path(d["out"])
        disk = d.get("disk_model", {})
        if disk:
            fam = disk.get("family", "warped")
            if fam not in DISK_FAMILIES:
                raise ConfigError(f"disk_model.family: unknown family {fam!r}")
            kw["disk_family"] = fam
            if "samples" in disk:
                kw["samples"] = _int(disk["samples"], "disk_model.samples", minimum=1)
        sweep = d.get("sweep", {})
        if sweep:
            if "resolutions" in sweep:
                kw["sweep_resolutions"] = tuple(_int(r, "sweep.resolutions", minimum=4) for r in sweep["resolutions"])
            if "h_s" in sweep:
                kw["sweep_h_s"] = tuple(_positive(h, "sweep.h_s") for h in sweep["h_s"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config: file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: malformed JSON ({exc})") from None
        return cls.from_dict(data, path.parent)

    def kinds(self) -> set:
        return {d.kind for d in self.directions}


def _branch(d: dict, base_dir: Path | None) -> BranchConfiguration:
    if "branch" not in d:
        raise ConfigError("branch: missing field")
    b = d["branch"]
    if isinstance(b, str):
        p = Path(b)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return BranchConfiguration.from_json(p)
    if not isinstance(b, dict):
        raise ConfigError("branch: expected an object or a file path")
    if "preset" in b:
        if b["preset"] != "roots_of_unity":
            raise ConfigError(f"branch.preset: unknown preset {b['preset']!r}")
        genus = _int(b.get("genus", 2), "branch.genus", minimum=0)
        radius = _positive(b.get("radius", 1.0), "branch.radius")
        return BranchConfiguration.roots_of_unity(genus, radius)
    try:
        return BranchConfiguration.from_dict(b)
    except ConfigError as exc:
        raise ConfigError(f"branch.{exc}") from None


def _int(v, name: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    v = int(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {v}")
    return v


def _positive(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    if not v > 0:
        raise ConfigError(f"{name}: must be > 0, got {v}")
    return float(v)


# -- output helpers ----------------------------------------------------------------

def convention(target: TargetMetric | None = None) -> dict:
    target = target if target is not None else TargetMetric(1)
    return {
        "epsilon": target.epsilon,
        "c": target.c,
        "target_metric": "h = c / (1 + eps |w|^2)^2",
        "fiber_metric": "d_z d_zbar log g = g, dA = 2 dx dy",
    }


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


class CheckFailed(RuntimeError):
    """A verification check did not pass."""


# -- commands ------------------------------------------------------------------------

def _solve(cfg: RunConfig, resolution: int | None = None):
    from .mesh import build_mesh
    from .uniformization import solve_liouville

    mesh = build_mesh(cfg.branch, resolution or cfg.resolution)
    return mesh, solve_liouville(mesh, tol=cfg.tol_pde)


def cmd_uniformize(cfg: RunConfig) -> dict:
    mesh, metric = _solve(cfg)
    target = metric.gauss_bonnet_target
    report = {
        "command": "uniformize",
        "convention": convention(),
        "branch": cfg.branch.to_dict(),
        "resolution": cfg.resolution,
        "nodes": mesh.n_nodes,
        "triangles": mesh.n_tris,
        "euler_characteristic": mesh.euler_characteristic,
        "newton": {"iterations": metric.iterations, "residual": metric.residual, "tol_pde": cfg.tol_pde},
        "gauss_bonnet": {
            "area": metric.area,
            "target": target,
            "rel_error": metric.area_rel_error,
            "tolerance": 5e-3,
            "pass": metric.area_rel_error < 5e-3,
        },
    }
    write_json(cfg.out / "uniformize.json", report)
    rows = [
        (n, int(mesh.node_chart[n]), float(np.real(mesh.w[n])), float(np.imag(mesh.w[n])), float(metric.u[n]), float(metric.log_g_node[n]))
        for n in range(mesh.n_nodes)
    ]
    write_csv(cfg.out / "metric.csv", ["node", "chart", "w_re", "w_im", "u", "log_g"], rows)
    return report


def _need_directions(cfg: RunConfig, what: str):
    if not cfg.directions:
        raise ConfigError(f"directions: a {what} run needs at least one direction")
    if len(cfg.kinds()) != 1:
        raise ConfigError("directions: mix of fixed-x and branch-move directions is not supported in one run")


def cmd_gram(cfg: RunConfig) -> dict:
    from .operators import OperatorContext
    from .wp import wp_gram

    _need_directions(cfg, "gram")
    mesh, metric = _solve(cfg)
    ctx = OperatorContext(metric)
    kw = {} if cfg.kinds() == {"fixed-x"} else {"h_s": cfg.h_s, "tol": cfg.tol_pde, "threads": cfg.threads}
    gram = wp_gram(cfg.directions, mesh, ctx, **kw)
    nulls = gram.null_directions()
    report = {
        "command": "gram",
        "convention": convention(),
        "branch": cfg.branch.to_dict(),
        "resolution": cfg.resolution,
        "directions": [d.to_dict() for d in cfg.directions],
        **gram.to_dict(),
        "hermitian_defect": gram.hermitian_defect(),
        "wp_null_directions": nulls,
        "flags": [f"direction {i} is WP-null (non-effective)" for i in nulls],
    }
    write_json(cfg.out / "gram.json", report)
    r = len(cfg.directions)
    rows = [
        (i, j, float(gram.G0[i, j].real), float(gram.G0[i, j].imag), float(gram.G1[i, j].real), float(gram.G1[i, j].imag), float(gram.error[i, j]))
        for i in range(r)
        for j in range(r)
    ]
    write_csv(cfg.out / "gram.csv", ["i", "j", "G0_re", "G0_im", "G1_re", "G1_im", "error"], rows)
    return report


def _curvature_rows(R: np.ndarray, oracle: np.ndarray | None = None):
    rows = []
    for idx in np.ndindex(*R.shape):
        z = R[idx]
        row = [*map(int, idx), float(z.real), float(z.imag)]
        if oracle is not None:
            row += [float(oracle[idx].real), float(oracle[idx].imag)]
        rows.append(row)
    return rows


def cmd_curvature(cfg: RunConfig) -> dict:
    from .curvature import (
        CurvatureTensor, FiberQuadrature, MobiusFamily, curvature_fixed_x, curvature_full,
        family_directions, family_phi, fd_curvature_oracle, fixed_x_directions, fixed_x_gram,
        orthonormal_frame, relative_frobenius,
    )
    from .operators import OperatorContext

    _need_directions(cfg, "curvature")
    mesh, metric = _solve(cfg)
    ctx = OperatorContext(metric)
    report = {
        "command": "curvature",
        "convention": convention(),
        "branch": cfg.branch.to_dict(),
        "resolution": cfg.resolution,
        "directions": [d.to_dict() for d in cfg.directions],
    }
    if cfg.kinds() == {"fixed-x"}:
        fam = MobiusFamily([d.q for d in cfg.directions])
        quad = FiberQuadrature.from_context(ctx)
        G = fixed_x_gram(fam, quad)
        C0 = orthonormal_frame(G)
        ct = curvature_fixed_x(fam, ctx, quad)
        oracle = fd_curvature_oracle(lambda s: fixed_x_gram(fam, quad, s), fam.r, h_s=cfg.h_s)
        full = curvature_full(ctx, fam.q, fixed_x_directions(fam, mesh))
        R = ct.in_frame(C0)
        Ro = CurvatureTensor(oracle.R).in_frame(C0)
        Rf = full.tensor.in_frame(C0, "kl")
        err = relative_frobenius(R.R, Ro.R)
        report.update({
            "frame": "orthonormal: C0^T G conj(C0) = id (Cholesky)",
            "frame_matrix": C0,
            "R": R.R,
            "summands": {"green": R.parts["green"], "quartic": R.parts["quartic"]},
            "hermitian_defect": ct.hermitian_defect(),
            "ik_symmetry_defect": ct.ik_symmetry_defect(),
            "oracle": {
                "R": Ro.R,
                "richardson_error": oracle.error,
                "h_s": cfg.h_s,
                "rel_frobenius_error": err,
                "tolerance": 0.02,
                "pass": err <= 0.02,
            },
            "full_formula": {
                "R": Rf.R,
                "rel_frobenius_vs_fixed_x": relative_frobenius(Rf.R, R.R),
                "rel_frobenius_vs_oracle": relative_frobenius(Rf.R, Ro.R),
            },
        })
        write_csv(cfg.out / "curvature.csv", ["i", "j", "k", "l", "R_re", "R_im", "oracle_re", "oracle_im"], _curvature_rows(R.R, Ro.R))
    else:
        from .family import FamilyCalculus
        from .uniformization import metric_family

        fam = metric_family(
            mesh, [d.velocities for d in cfg.directions], h_s=cfg.h_s, second="full",
            metric=metric, tol=cfg.tol_pde, threads=cfg.threads,
        )
        fc = FamilyCalculus(fam)
        full = curvature_full(ctx, np.eye(3), family_directions(fc), phi=family_phi(fc))
        first = full.tensor.parts["first"]
        four_sum = sum(full.four_terms.values())
        report.update({
            "frame": "holomorphic sections 1, w, w^2 normalized to G = id, dG = 0; base directions in coordinates",
            "R": full.tensor.R,
            "summands": full.tensor.parts,
            "hermitian_defect": full.tensor.hermitian_defect(),
            "stokes": {
                "value": full.stokes,
                "rel_frobenius_vs_direct": relative_frobenius(full.stokes, full.tensor.parts["box_phi"]),
                "tolerance": 0.01,
            },
            "four_terms": {
                "terms": full.four_terms,
                "rel_frobenius_sum_vs_first": relative_frobenius(four_sum, first),
                "tolerance": 0.01,
            },
            "noise_floor": {"d1": fam.noise_floor("d1"), "dmix": fam.noise_floor("dmix")},
        })
        write_csv(cfg.out / "curvature.csv", ["i", "j", "k", "l", "R_re", "R_im"], _curvature_rows(full.tensor.R))
    write_json(cfg.out / "curvature.json", report)
    return report


def cmd_verify(cfg: RunConfig) -> dict:
    from .diskmodel import DiskModelFamily, verify_pointwise_identities

    fam = getattr(DiskModelFamily, f"{cfg.disk_family}_family")()
    rep = verify_pointwise_identities(fam, n_samples=cfg.samples)
    checks = {name: {"residual": v, "tolerance": cfg.tol_identity, "pass": v < cfg.tol_identity} for name, v in rep["residuals"].items()}
    report = {
        "command": "verify",
        "convention": convention(),
        "disk_model": {"family": rep["family"], "samples": rep["samples"], "skipped": rep["skipped"]},
        "checks": checks,
        "pass": all(c["pass"] for c in checks.values()),
    }
    if "identities" in cfg.outputs or "all" in cfg.outputs:
        from .operators import OperatorContext

        mesh, metric = _solve(cfg)
        ctx = OperatorContext(metric)
        rng = np.random.default_rng(0)
        adj = max(
            ctx.adjointness_defect(rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes),
                                   rng.normal(size=mesh.n_tris) + 1j * rng.normal(size=mesh.n_tris))
            for _ in range(5)
        )
        recon = max(ctx.reconstruction_residual(rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)) for _ in range(20))
        kr = ctx.kernel_report()
        expected = 2 * cfg.branch.n - cfg.branch.genus + 1
        mesh_checks = {
            "adjointness": {"residual": adj, "tolerance": 1e-8, "pass": adj < 1e-8},
            "reconstruction": {"residual": recon, "tolerance": 1e-6, "pass": recon < 1e-6},
            "dim_H0": {"value": kr.dimension, "expected": expected, "gap": kr.gap, "pass": kr.dimension == expected},
        }
        report["mesh"] = {"resolution": cfg.resolution, "checks": mesh_checks}
        report["pass"] = report["pass"] and all(c["pass"] for c in mesh_checks.values())
    write_json(cfg.out / "verify.json", report)
    write_csv(cfg.out / "verify.csv", ["identity", "residual", "tolerance", "pass"],
              [(k, float(v["residual"]), float(v["tolerance"]), bool(v["pass"])) for k, v in checks.items()])
    if not report["pass"]:
        raise CheckFailed("verification failed: " + ", ".join(k for k, v in checks.items() if not v["pass"]))
    return report


def cmd_sweep(cfg: RunConfig) -> dict:
    from .curvature import (
        CurvatureTensor, FiberQuadrature, MobiusFamily, curvature_fixed_x, fd_curvature_oracle,
        fixed_x_gram, orthonormal_frame, relative_frobenius,
    )
    from .operators import OperatorContext

    rows = []
    fixed = [d for d in cfg.directions if d.kind == "fixed-x"]
    fam = MobiusFamily([d.q for d in fixed]) if fixed else None
    for res in cfg.sweep_resolutions:
        mesh, metric = _solve(cfg, res)
        row = {"resolution": res, "nodes": mesh.n_nodes, "area_rel_error": metric.area_rel_error}
        if fam is not None:
            ctx = OperatorContext(metric)
            quad = FiberQuadrature.from_context(ctx)
            C0 = orthonormal_frame(fixed_x_gram(fam, quad))
            R = curvature_fixed_x(fam, ctx, quad).in_frame(C0).R
            for h in cfg.sweep_h_s:
                oracle = fd_curvature_oracle(lambda s: fixed_x_gram(fam, quad, s), fam.r, h_s=h)
                rows.append({**row, "h_s": h, "curvature_rel_error": relative_frobenius(R, CurvatureTensor(oracle.R).in_frame(C0).R),
                             "oracle_richardson_error": oracle.error})
        else:
            rows.append({**row, "h_s": float("nan"), "curvature_rel_error": float("nan"), "oracle_richardson_error": float("nan")})
    errs = [r["area_rel_error"] for r in rows]
    res = [r["resolution"] for r in rows]
    orders = [float(np.log(errs[i] / errs[i + 1]) / np.log(res[i + 1] / res[i])) for i in range(len(rows) - 1) if res[i + 1] != res[i]]
    report = {"command": "sweep", "convention": convention(), "branch": cfg.branch.to_dict(), "rows": rows, "area_observed_orders": orders}
    write_json(cfg.out / "sweep.json", report)
    keys = ["resolution", "nodes", "h_s", "area_rel_error", "curvature_rel_error", "oracle_richardson_error"]
    write_csv(cfg.out / "sweep.csv", keys, [[r[k] for k in keys] for r in rows])
    return report


COMMANDS = {
    "uniformize": cmd_uniformize,
    "gram": cmd_gram,
    "curvature": cmd_curvature,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hurwitzwp", description="Weil-Petersson geometry of hyperelliptic Hurwitz spaces")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--resolution", type=int, help="mesh resolution (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for stencil solves")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .operators import OperatorError
    from .uniformization import SolverError
    from .wp import WPError

    try:
        cfg = RunConfig.load(args.config)
        if args.out:
            cfg.out = Path(args.out)
        if args.resolution is not None:
            cfg.resolution = _int(args.resolution, "--resolution", minimum=4)
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg.threads = args.threads
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, OperatorError, WPError, CheckFailed, np.linalg.LinAlgError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "out": str(cfg.out)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
