"""Command-line experiment runner.

Every subcommand reads the same configuration (defaults, then ``--config``,
then flag overrides), computes everything in memory, and only then writes
``results.json``, ``tables/*.csv``, ``tables/plots.json`` and
``manifest.json`` into the output directory.  ``results.json`` and the
tables are deterministic; run-specific data (timings, threads, versions)
lives in the manifest only.

Exit codes: 0 success, 1 configuration error, 2 numerical or pipeline
stage failure (stage named on stderr).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import Any, Callable, Iterator

import numpy as np

from rieszlab import __version__
from rieszlab._summation import resolve_threads
from rieszlab.config import Config, ConfigError, describe_schema, load_config
from rieszlab.diagnostics import (FDeltaParams, PipelineSettings, pv_classify,
                                  run_pipeline, sample_atoms, select_scale)
from rieszlab.geometry import select_spread_points
from rieszlab.measure import (AmbientParams, DiscreteMeasure, IfsSpec, SimilarityMap, build_ifs_measure,
                              build_rectifiable_measure, cantor_spec, density_profile, dyadic_radii,
                              embed_measure, growth_constant, load_measure, measure_csv,
                              radial_power_measure, upper_density_estimate)
from rieszlab.riesz import pv_scan, smoothed_riesz_many, truncated_riesz
from rieszlab.smoothing import build_profile, junction_table

JUNCTION_TOL = 1e-6


class StageFailure(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@contextlib.contextmanager
def stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    """Time a block and turn any numerical failure inside it into a StageFailure."""
    start = time.perf_counter()
    try:
        yield
    except (ConfigError, StageFailure):
        raise
    except Exception as exc:  # noqa: BLE001 - every failure becomes exit code 2
        inner = getattr(exc, "stage", None)
        raise StageFailure(f"{name}/{inner}" if inner else name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


class Outputs:
    def __init__(self) -> None:
        self.results: dict[str, Any] = {}
        self.tables: dict[str, str] = {}
        self.documents: dict[str, dict[str, Any]] = {}
        self.plots: list[dict[str, Any]] = []

    def table(self, name: str, header: list[str], rows: list[list[Any]]) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        self.tables[name] = buf.getvalue()


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_finite(json.loads(json.dumps(obj, default=_json_default))), indent=2,
                      sort_keys=True, allow_nan=False) + "\n"


# ------------------------------------------------------------- measures


def build_measure(cfg: Config) -> tuple[DiscreteMeasure, float]:
    """The configured measure and its exponent s."""
    mc = cfg["measure"]
    fam, m = mc["family"], mc["m"]
    s = cfg["ambient"]["s"]
    if fam in ("cantor", "ifs"):
        if fam == "cantor":
            spec = cantor_spec(mc["ratio"], mc["depth"])
        else:
            maps = tuple(SimilarityMap(float(f["ratio"]), tuple(float(t) for t in f["translation"]),
                                       None if f.get("rotation") is None
                                       else tuple(tuple(map(float, row)) for row in f["rotation"]))
                         for f in mc["maps"])
            spec = IfsSpec(maps, mc["depth"])
        mu = build_ifs_measure(spec, cap=mc["cap"])
        mu = embed_measure(mu, max(m, spec.m))
        s = spec.similarity_dimension if s is None else s
    elif fam == "segment":
        start = mc["start"] or [0.0] * m
        end = mc["end"] or [1.0] + [0.0] * (m - 1)
        mu = build_rectifiable_measure("segment", {"start": start, "end": end}, mc["resolution"])
        s = 1.0 if s is None else s
    elif fam == "circle":
        center = mc["center"] or [0.0] * max(m, 2)
        mu = build_rectifiable_measure("circle", {"radius": mc["radius"], "center": center}, mc["resolution"])
        s = 1.0 if s is None else s
    elif fam == "k_plane_patch":
        basis = mc["basis"] if mc["basis"] is not None else np.eye(2, max(m, 2)).tolist()
        params = {"basis": basis, "sides": mc["sides"] or [1.0] * len(basis)}
        if mc["origin"] is not None:
            params["origin"] = mc["origin"]
        mu = build_rectifiable_measure("k_plane_patch", params, mc["resolution"])
        s = float(len(basis)) if s is None else s
    elif fam == "radial_power":
        center = mc["center"] or [0.0] * m
        mu = radial_power_measure(center, mc["exponent"], mc["r_min"], mc["r_max"], mc["per_octave"])
    else:
        mu, meta = load_measure(mc["path"])
        s = meta.get("s") if s is None else s
        if s is None:
            raise ConfigError(f"{cfg.source}: measure file has no s; set [ambient] s")
    if mc["floor_factor"] != mu.floor_factor:
        mu = DiscreteMeasure(mu.positions, mu.weights, mu.resolution, mc["floor_factor"], mu.generator,
                             mu.warnings, _tree=mu.tree)
    AmbientParams(mu.m, float(s))
    return mu, float(s)


def _points(cfg: Config, section: str, mu: DiscreteMeasure) -> np.ndarray:
    pts = cfg[section]["points"]
    if pts is None:
        return sample_atoms(mu, cfg[section]["sample"], cfg["run"]["seed"])
    idx = np.asarray(pts, dtype=np.int64)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= mu.n_atoms:
        raise ConfigError(f"{cfg.source}: [{section}] points must be atom indices in [0, {mu.n_atoms})")
    return idx


def _measure_summary(mu: DiscreteMeasure, s: float) -> dict[str, Any]:
    return {"n_atoms": mu.n_atoms, "m": mu.m, "s": s, "total_mass": mu.total_mass,
            "resolution": mu.resolution, "radius_floor": mu.radius_floor,
            "generator": mu.generator, "warnings": list(mu.warnings)}


def _profile(cfg: Config, s: float):
    return build_profile(s, cfg["smoothing"]["rho"], cfg["smoothing"]["slack"])


# ------------------------------------------------------------- commands


def cmd_generate(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    out.results["measure"] = _measure_summary(mu, s)
    out.tables["measure.csv"] = measure_csv(mu)
    out.documents["measure.json"] = {"m": mu.m, "s": s, "n_atoms": mu.n_atoms, "total_mass": mu.total_mass,
                                     "resolution": mu.resolution, "floor_factor": mu.floor_factor,
                                     "generator": mu.generator, "warnings": list(mu.warnings)}


def cmd_density(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    dc = cfg["density"]
    idx = _points(cfg, "density", mu)
    with stage("density", timings):
        r_min = mu.radius_floor if dc["r_min"] is None else dc["r_min"]
        radii = dyadic_radii(dc["r_max"], r_min, dc["per_octave"], include_min=True)
        rows, per_point = [], []
        for i in idx:
            prof = density_profile(mu, mu.positions[i], s, radii)
            rows += [[int(i), r, th] for r, th in zip(prof.radii, prof.thetas)]
            per_point.append({"index": int(i), "upper_density": prof.upper, "radii_used": int(prof.radii.size)})
        M = growth_constant(mu, s, mu.positions[idx], dc["r_max"], r_min, dc["per_octave"])
    out.results["measure"] = _measure_summary(mu, s)
    out.results["density"] = {"points": per_point, "growth_constant": M,
                              "grid": {"r_max": dc["r_max"], "r_min": r_min, "per_octave": dc["per_octave"]}}
    out.table("density.csv", ["index", "r", "theta"], rows)
    out.plots.append({"file": "density.csv", "x": "r", "y": "theta", "group": "index", "logx": True})


def cmd_transform(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    tc = cfg["transform"]
    idx = _points(cfg, "transform", mu)
    with stage("transform", timings):
        prof = _profile(cfg, s)
        rows = []
        for eps in tc["eps"]:
            if tc["kind"] == "smoothed":
                vals, counts = smoothed_riesz_many(mu, mu.positions[idx], eps, prof, threads)
            else:
                res = [truncated_riesz(mu, mu.positions[i], eps, s) for i in idx]
                vals = np.array([r.value for r in res])
                counts = np.array([r.atom_count for r in res])
            rows += [[int(i), eps, *v, int(c)] for i, v, c in zip(idx, vals, counts)]
    out.results["measure"] = _measure_summary(mu, s)
    out.results["transform"] = {"kind": tc["kind"], "eps": tc["eps"], "points": idx.tolist()}
    out.table("transform.csv", ["index", "eps"] + [f"comp_{j + 1}" for j in range(mu.m)] + ["atom_count"], rows)


def cmd_select_points(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    sc = cfg["selection"]
    if not 0 <= sc["x0"] < mu.n_atoms:
        raise ConfigError(f"{cfg.source}: [selection] x0 must be an atom index")
    count = sc["count"] or AmbientParams(mu.m, s).n + 2
    with stage("select_spread_points", timings):
        sel = select_spread_points(mu.positions, mu.positions[sc["x0"]], sc["r"], count)
    out.results["measure"] = _measure_summary(mu, s)
    out.results["selection"] = sel.to_dict()
    dists = [None] + sel.hull_distances.tolist()
    out.table("selection.csv", ["index"] + [f"x{j + 1}" for j in range(mu.m)] + ["hull_distance"],
              [[int(i), *p, d] for i, p, d in zip(sel.indices, sel.points, dists)])


def cmd_select_scale(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    sc = cfg["scale"]
    if not 0 <= sc["y0"] < mu.n_atoms:
        raise ConfigError(f"{cfg.source}: [scale] y0 must be an atom index")
    with stage("select_scale", timings):
        sel = select_scale(mu, mu.positions[sc["y0"]], sc["eps1"], cfg["smoothing"]["rho"], s, sc["max_k"])
    out.results["measure"] = _measure_summary(mu, s)
    out.results["scale"] = sel.to_dict()
    out.table("delta_k.csv", ["k", "delta_k"], [[k + 1, d] for k, d in enumerate(sel.delta_k)])


def _settings(cfg: Config, mu: DiscreteMeasure, with_pv: bool) -> PipelineSettings:
    fc, pc, pv = cfg["fdelta"], cfg["pipeline"], cfg["pv"]
    fparams = FDeltaParams.with_dyadic_grid(fc["delta"], fc["r0"], fc["eps0"], fc["c0"],
                                            mu.radius_floor * fc["eps_min_factor"], fc["per_octave"],
                                            limsup_octaves=fc["limsup_octaves"])
    pv_eps = tuple(dyadic_radii(pv["eps_max"], pv["eps_min"], pv["per_octave"])) if with_pv else ()
    return PipelineSettings(fparams, tuple(pc["tau"]), pc["eps1"], pc["max_k"], fc["sample"],
                            cfg["run"]["seed"], pc["lemma1_bases"], pv_eps, pv["tol_conv"], pv["tol_osc_rel"])


_CHECK_KEYS = {"lemma1": "lemma1", "lemma3": "lemma3", "lemma4": "lemma4", "lemma5": "lemma5",
               "section3": "section3", "pv": "pvClass"}


def _pipeline(cfg: Config, out: Outputs, threads: int, timings: dict, checks: list[str]) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    with stage("smoothing", timings):
        prof = _profile(cfg, s)
    with stage("settings", timings):
        settings = _settings(cfg, mu, "pv" in checks)
    sub: dict[str, float] = {}
    with stage("pipeline", timings):
        reports = run_pipeline(mu, prof, settings, threads, sub)
    timings.update({f"pipeline.{k}": v for k, v in sub.items()})
    keep = {"s", "rho", "measure", "fdelta", "base_ball", "selection", "scale", "notes", "schema_version"}
    keep |= {_CHECK_KEYS[c] for c in checks}
    blocks = [{k: v for k, v in rep.to_dict().items() if k in keep} for rep in reports]
    out.results["measure"] = _measure_summary(mu, s)
    out.results["reports"] = blocks
    rows = [rep.flat() for rep in reports]
    cols = sorted({k for r in rows for k in r if k.split(".")[0] in keep})
    out.table("report.csv", cols, [[r.get(c) for c in cols] for r in rows])
    if "section3" in checks:
        sec = [rep.section3 for rep in reports]
        cols3 = ["tau", "r", "eps", "delta_theory", "lhs", "rhs", "ratio", "rhs_measured", "ratio_measured",
                 "chain_middle", "retention_at_theory_delta"]
        out.table("section3.csv", cols3, [[blk[c] for c in cols3] for blk in sec])
        out.plots.append({"file": "section3.csv", "x": "tau", "y": "ratio", "logx": True, "logy": True})


def cmd_lemmas(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    _pipeline(cfg, out, threads, timings, ["lemma1", "lemma3", "lemma4", "lemma5"])


def cmd_contradiction(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    _pipeline(cfg, out, threads, timings, ["lemma4", "section3"])


def cmd_run(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    _pipeline(cfg, out, threads, timings, list(cfg["pipeline"]["checks"]))


def cmd_pv_scan(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    with stage("measure", timings):
        mu, s = build_measure(cfg)
    pv = cfg["pv"]
    if pv["x"] is not None:
        if len(pv["x"]) != mu.m:
            raise ConfigError(f"{cfg.source}: [pv] x must have {mu.m} coordinates")
        targets = [("x", np.asarray(pv["x"], dtype=float))]
    else:
        targets = [(str(int(i)), mu.positions[i]) for i in _points(cfg, "pv", mu)]
    with stage("pv_scan", timings):
        prof = _profile(cfg, s)
        grid = dyadic_radii(pv["eps_max"], pv["eps_min"], pv["per_octave"])
        verdicts = []
        for label, x in targets:
            scan = pv_scan(mu, x, grid, prof, kind=pv["kind"], threads=threads)
            radii = dyadic_radii(pv["eps_max"], mu.radius_floor, 16, include_min=True)
            theta_hat = upper_density_estimate(mu, x, s, radii).value
            cls = pv_classify(scan, pv["tol_conv"], pv["tol_osc_rel"] * theta_hat)
            verdicts.append({"point": label, "x": x.tolist(), "theta_hat": theta_hat,
                             "scan": scan.to_dict(), "pvClass": cls.to_dict()})
            name = f"pv_scan_{label}.csv"
            out.tables[name] = scan.to_csv()
            out.plots.append({"file": name, "x": "eps", "y": [f"comp_{j + 1}" for j in range(mu.m)],
                              "logx": True})
    out.results["measure"] = _measure_summary(mu, s)
    out.results["pv"] = {"kind": pv["kind"], "grid": grid.tolist(), "scans": verdicts}


def cmd_verify_phi(cfg: Config, out: Outputs, threads: int, timings: dict) -> None:
    ss = cfg["verify"]["s"] or [cfg["ambient"]["s"] if cfg["ambient"]["s"] is not None else 0.5]
    rhos = cfg["verify"]["rho"] or [cfg["smoothing"]["rho"]]
    rows, checks = [], []
    with stage("smoothing", timings):
        for s in ss:
            for rho in rhos:
                prof = build_profile(s, rho, cfg["smoothing"]["slack"])
                table = junction_table(prof)
                worst = max(max(r["jump_phi"], r["jump_dphi"], r["jump_d2phi"]) for r in table)
                rows += [[s, rho, r["junction"], r["jump_phi"], r["jump_dphi"], r["jump_d2phi"],
                          r["dphi_left"], r["dphi_right"], r["d2phi_left"], r["d2phi_right"]] for r in table]
                tail = prof.evaluate(np.array([prof.support_end, prof.support_end * 1.5]), 0)
                checks.append({"s": s, "rho": rho, "max_jump": worst, "continuous": worst <= JUNCTION_TOL,
                               "bounds": prof.bounds, "support_end": prof.support_end,
                               "vanishes_beyond_support": bool(np.all(tail == 0)), "profile": prof.to_dict()})
    out.results["verify_phi"] = checks
    out.table("junctions.csv", ["s", "rho", "junction", "jump_phi", "jump_dphi", "jump_d2phi",
                                "dphi_left", "dphi_right", "d2phi_left", "d2phi_right"], rows)


COMMANDS: dict[str, tuple[Callable, str]] = {
    "generate": (cmd_generate, "build a measure and write it as CSV + JSON sidecar"),
    "density": (cmd_density, "density profiles, upper density estimates and growth constant"),
    "transform": (cmd_transform, "smoothed or truncated transform at atoms"),
    "select-points": (cmd_select_points, "greedy well-spread points in a ball"),
    "select-scale": (cmd_select_scale, "pigeonhole doubling-scale selection"),
    "lemmas": (cmd_lemmas, "Lemma 1/3/4/5 checks along the pipeline"),
    "pv-scan": (cmd_pv_scan, "transform along a dyadic scale grid with a convergence verdict"),
    "contradiction": (cmd_contradiction, "contradiction ratio for each tau"),
    "verify-phi": (cmd_verify_phi, "junction continuity and bounds of the cutoff"),
    "run": (cmd_run, "run the pipeline checks listed in [pipeline] checks"),
}

# flag -> (section, key), per command; shared flags first
_SHARED_FLAGS = {
    "family": ("measure", "family"), "ratio": ("measure", "ratio"), "depth": ("measure", "depth"),
    "m": ("measure", "m"), "s": ("ambient", "s"), "rho": ("smoothing", "rho"), "seed": ("run", "seed"),
}
_COMMAND_FLAGS = {
    "density": {"points": ("density", "points")},
    "transform": {"points": ("transform", "points"), "eps": ("transform", "eps"), "kind": ("transform", "kind")},
    "select-points": {"x0": ("selection", "x0"), "r": ("selection", "r"), "count": ("selection", "count")},
    "select-scale": {"y0": ("scale", "y0"), "eps1": ("scale", "eps1"), "max-k": ("scale", "max_k")},
    "lemmas": {"tau": ("pipeline", "tau")},
    "contradiction": {"tau": ("pipeline", "tau")},
    "pv-scan": {"points": ("pv", "points"), "x": ("pv", "x"), "eps-max": ("pv", "eps_max"),
                "eps-min": ("pv", "eps_min"), "kind": ("pv", "kind")},
    "verify-phi": {"s": ("verify", "s"), "rho": ("verify", "rho")},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rieszlab", description="Smoothed s-Riesz transform laboratory.")
    parser.add_argument("--version", action="version", version=f"rieszlab {__version__}")
    parser.add_argument("--schema", action="store_true", help="print the configuration schema and exit")
    subs = parser.add_subparsers(dest="command")
    for name, (_, help_text) in COMMANDS.items():
        p = subs.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="INI or JSON configuration file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--threads", type=int, help="worker threads (default: RIESZLAB_THREADS or 1)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any configuration key")
        flags = {**_SHARED_FLAGS, **_COMMAND_FLAGS.get(name, {})}
        for flag, (sec, key) in flags.items():
            p.add_argument(f"--{flag}", dest=f"flag_{flag.replace('-', '_')}", metavar="VALUE",
                           help=f"sets [{sec}] {key}")
    return parser


def _overrides(name: str, args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    ov: dict[str, dict[str, Any]] = {}
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"command line: --set expects SECTION.KEY=VALUE, got {item!r}")
        path, value = item.split("=", 1)
        sec, key = path.split(".", 1)
        ov.setdefault(sec.strip(), {})[key.strip()] = value
    flags = {**_SHARED_FLAGS, **_COMMAND_FLAGS.get(name, {})}
    for flag, (sec, key) in flags.items():
        value = getattr(args, f"flag_{flag.replace('-', '_')}")
        if value is not None:
            ov.setdefault(sec, {})[key] = value
    if args.out is not None:
        ov.setdefault("output", {})["dir"] = args.out
    if args.threads is not None:
        ov.setdefault("run", {})["threads"] = args.threads
    return ov


def _versions() -> dict[str, str]:
    import scipy

    return {"rieszlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_outputs(outdir: Path, command: str, cfg: Config, out: Outputs, threads: int,
                  timings: dict[str, float]) -> list[Path]:
    chash = cfg.hash()
    results = {"command": command, "config_hash": chash, "config": cfg.canonical(),
               "schema_version": 1, **out.results}
    files: dict[str, str] = {"results.json": dumps(results)}
    for name, text in sorted(out.tables.items()):
        if name.endswith(".csv"):
            text = f"# config_hash={chash}\n{text}"
        files[f"tables/{name}"] = text
    for name, doc in sorted(out.documents.items()):
        files[f"tables/{name}"] = dumps({**doc, "config_hash": chash})
    if out.plots:
        files["tables/plots.json"] = dumps({"config_hash": chash, "plots": out.plots})
    manifest = {"command": command, "config_hash": chash, "config_source": cfg.source, "threads": threads,
                "versions": _versions(), "timings_seconds": {k: round(v, 6) for k, v in sorted(timings.items())},
                "files": sorted(files)}
    files["manifest.json"] = dumps(manifest)
    written = []
    for rel, text in files.items():
        path = outdir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.schema:
        print(describe_schema())
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    fn = COMMANDS[args.command][0]
    timings: dict[str, float] = {}
    try:
        cfg = load_config(args.config, _overrides(args.command, args))
        threads = resolve_threads(cfg["run"]["threads"])
        out = Outputs()
        fn(cfg, out, threads, timings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except StageFailure as exc:
        print(f"stage '{exc.stage}' failed: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    outdir = Path(cfg["output"]["dir"])
    written = write_outputs(outdir, args.command, cfg, out, threads, timings)
    print(f"{args.command}: wrote {len(written)} files to {outdir} (config {cfg.hash()})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
