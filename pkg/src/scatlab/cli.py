"""Command-line runner: ``scatlab --config run.json --out results/``.

Exit codes: 0 success, 1 a checklist reported failing hypotheses,
2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__, config, flow, jacobi, riccati2d, scattering, sphere_tensors, tables, volume
from .metrics import sphere_directions

log = logging.getLogger("scatlab")

EXIT_OK, EXIT_CHECKLIST, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (flow.IntegrationError, riccati2d.ConjugatePointError, riccati2d.LadderNonConvergence,
                  np.linalg.LinAlgError, FloatingPointError, ArithmeticError)


class CommandResult:
    def __init__(self, tables_=None, report=None, ok=True):
        self.tables = tables_ or {}
        self.report = report or {}
        self.ok = ok


def _require(cond, msg):
    if not cond:
        raise config.ConfigError(msg)


def _tol(cfg):
    n = cfg["numeric"]
    return dict(rtol=n["rtol"], atol=n["atol"])


# ---------------------------------------------------------------------------
# commands


def cmd_scatter(model, cfg, pool):
    cmd, num = cfg["command"], cfg["numeric"]
    _require(model.has_compact_chart, "scatter needs euclidean or normal_form_ae")
    n = model.dim
    dirs = sphere_directions(n, cmd.get("directions", 20))
    norms = cmd.get("eta_norms", [0.5, 5.0, 50.0])
    bds = scattering.scattering_grid(model, dirs, norms, np.random.default_rng(num["seed"]))
    tol = _tol(cfg)
    samples = list(pool.map(lambda bd: scattering.scattering_map(model, bd, **tol), bds))
    rows = []
    for s in samples:
        en = np.linalg.norm(s.incoming.eta)
        rows.append([*s.incoming.y, *s.incoming.eta, *s.outgoing.y, *s.outgoing.eta, s.tau_plus,
                     s.tau_plus * en / np.pi - 1.0, s.deviation])
    header = (tables.vector_columns("y", n) + tables.vector_columns("eta", n) + tables.vector_columns("y_out", n)
              + tables.vector_columns("eta_out", n) + ["tau_plus", "tau_rel_shift", "deviation"])
    dev = max(s.deviation for s in samples)
    report = {"samples": len(samples), "max_deviation": dev}
    ok = True
    if model.kind == "euclidean":
        report["tolerance"] = num["tolerance"]
        ok = dev < num["tolerance"]
    return CommandResult({"scatter": (header, rows)}, report, ok)


def cmd_conjugates(model, cfg, pool):
    cmd = cfg["command"]
    _require(model.dim == 2, "conjugates sweeps planar geodesics (dim 2)")
    impacts = cmd.get("impacts", list(np.linspace(-2.0, 2.0, 9)))
    start = cmd.get("start", 60.0)
    window = tuple(cmd.get("window", [0.0, 200.0]))

    def run(b):
        x0 = np.array([-start, b])
        v0 = np.array([1.0, 0.0])
        v0 = v0 / np.sqrt(v0 @ model.metric(x0) @ v0)
        return jacobi.conjugate_scan(model, x0, v0, window)

    found = list(pool.map(run, impacts))
    rows = [[b, k, t] for b, ts in zip(impacts, found) for k, t in enumerate(ts)]
    counts = [[b, len(ts)] for b, ts in zip(impacts, found)]
    report = {"geodesics": len(impacts), "with_conjugate_points": int(sum(1 for ts in found if ts)),
              "conjugate_points": len(rows)}
    return CommandResult({"conjugates": (["impact", "index", "t"], rows),
                          "conjugate_counts": (["impact", "count"], counts)}, report)


def _circle(cmd, n):
    y0 = np.asarray(cmd.get("y0", np.eye(n)[0]), dtype=float)
    e0 = np.asarray(cmd.get("eta0", np.eye(n)[1]), dtype=float)
    _require(y0.size == n and e0.size == n, "y0 and eta0 must have length dim")
    return sphere_tensors.GreatCircle.from_vectors(y0, e0)


def cmd_linearize(model, cfg, pool):
    cmd, num = cfg["command"], cfg["numeric"]
    _require(model.kind == "normal_form_ae", "linearize needs a normal_form_ae metric")
    n, m = model.dim, model.decay_order
    circle = _circle(cmd, n)
    h = model.spec.h_m
    lin = scattering.linearized_scattering(h, m, circle)
    moments = scattering.moment_identities(h, m, circle, N=num["grid"])
    rows = [[s, *c] for s, c in zip(lin.s, lin.c_m)]
    header = ["s", "rho", "xi"] + tables.vector_columns("y", n) + tables.vector_columns("eta", n)
    comp = lin.components()
    report = {
        "m": m,
        "field": h.name,
        "mismatch": comp,
        "liouville_component": lin.liouville_component(),
        "energy_component": lin.energy_component(),
        "tau_m": lin.tau_m,
        "moments": moments,
        "diagnostics": lin.diagnostics,
    }
    return CommandResult({"linearize": (header, rows)}, report)


def cmd_volume(model, cfg, pool):
    cmd, num = cfg["command"], cfg["numeric"]
    _require(model.dim in (2, 3), "volume cylinders are implemented for dim 2 and 3")
    Rs = cmd.get("R_values", [10.0, 20.0, 40.0, 80.0])
    rows, p = volume.volume_growth(model, Rs, angular_nodes=num["angular_nodes"], radial_nodes=num["radial_nodes"])
    out = [[r.R, r.vol_g, r.vol_g0, r.difference, r.min_det] for r in rows]
    report = {"fitted_exponent": p, "differences": [r.difference for r in rows]}
    if model.decay_order:
        report["bound_exponent"] = model.dim - model.decay_order + 1
    return CommandResult({"volume": (["R", "vol_g", "vol_g0", "difference", "min_det"], out)}, report)


def cmd_funk(model, cfg, pool):
    cmd, num = cfg["command"], cfg["numeric"]
    n = model.dim
    if "field" in cmd:
        f = config.build_field(cmd["field"], n)
    else:
        _require(model.kind == "normal_form_ae", "funk needs command.field or a normal_form_ae metric")
        f = model.spec.h_m
    j, k = cmd.get("weights", [0, 0])
    rng_name = cmd.get("range", "full")
    rng = np.random.default_rng(num["seed"])
    rows = []
    for y in sphere_directions(n, cmd.get("circles", 16)):
        c = sphere_tensors.GreatCircle.from_vectors(y, rng.normal(size=n))
        val = sphere_tensors.weighted_xray(f, c, j, k, rng_name, num["grid"])
        rows.append([*c.y, *c.eta_hat, val])
    header = tables.vector_columns("y", n) + tables.vector_columns("eta", n) + ["value"]
    report = {"field": f.name, "rank": f.rank, "max_abs": max(abs(r[-1]) for r in rows)}
    return CommandResult({"funk": (header, rows)}, report)


def cmd_rigidity2d(model, cfg, pool):
    cmd = cfg["command"]
    _require(model.dim == 2, "rigidity2d needs a two-dimensional metric")
    surf = riccati2d.surface(model)
    rep = riccati2d.rigidity_checklist(surf, j_max=cmd.get("j_max", 64.0), samples=cmd.get("samples", 64))
    rows = [[a.j, a.area_curvature, a.length, a.boundary_curvature, a.defect, a.max_boundary_K, mg, d]
            for a, mg, d in zip(rep.audit, rep.convexity_margin, rep.decay_values)]
    header = ["j", "area_curvature", "length", "boundary_curvature", "defect", "max_boundary_K",
              "convexity_margin", "decay_value"]
    report = {"hypotheses": rep.hypotheses, "passed": rep.passed, "decay_exponent": rep.decay_exponent,
              "max_defect": max(abs(a.defect) for a in rep.audit)}
    out = {"rigidity2d": (header, rows)}
    if "T_ladder" in cmd:
        x0 = np.array([float(rep.j[0]), 0.0])
        hu = riccati2d.hopf_u(surf, x0, np.array([0.0, 1.0]), cmd["T_ladder"])
        report["hopf_u"] = {"u": hu.u, "increments": hu.increments, "sturm_bound": hu.sturm_bound}
        out["hopf_ladder"] = (["T", "u"], [[T, u] for T, u in zip(hu.ladder, hu.values)])
    return CommandResult(out, report, rep.passed)


COMMAND_TABLE = {
    "scatter": cmd_scatter,
    "conjugates": cmd_conjugates,
    "linearize": cmd_linearize,
    "volume": cmd_volume,
    "funk": cmd_funk,
    "rigidity2d": cmd_rigidity2d,
}


# ---------------------------------------------------------------------------
# driver


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions():
    return {"python": platform.python_version(), "numpy": metadata.version("numpy"),
            "scipy": metadata.version("scipy"), "jsonschema": metadata.version("jsonschema"), "scatlab": __version__}


def run(cfg: dict, out_dir=None, threads: int = 1) -> int:
    """Execute a validated configuration; returns the exit code."""
    t0 = time.perf_counter()
    out = Path(out_dir or cfg["output"].get("dir", "out"))
    prefix = cfg["output"].get("prefix", "")
    model = config.build_model(cfg["metric"])
    name = cfg["command"]["name"]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        result = COMMAND_TABLE[name](model, cfg, pool)
    artifacts = {}
    for key, (header, rows) in result.tables.items():
        p = tables.write_csv(out / f"{prefix}{key}.csv", header, rows)
        artifacts[p.name] = _sha256(p)
    p = tables.write_json(out / f"{prefix}{name}_report.json", {"command": name, "ok": result.ok, **result.report})
    artifacts[p.name] = _sha256(p)
    code = EXIT_OK if result.ok else EXIT_CHECKLIST
    manifest = {
        "command": name,
        "config_sha256": config.canonical_hash(cfg),
        "config": cfg,
        "versions": _versions(),
        "threads": threads,
        "wall_time_s": time.perf_counter() - t0,
        "artifacts": artifacts,
        "exit_code": code,
    }
    tables.write_json(out / f"{prefix}manifest.json", manifest)
    log.info("%s finished in %.2f s -> %s", name, manifest["wall_time_s"], out)
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="scatlab", description="Geodesic scattering experiments from a JSON config.")
    p.add_argument("--config", required=True, help="path to the JSON experiment document")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = config.load(args.config)
        return run(cfg, args.out, args.threads)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
