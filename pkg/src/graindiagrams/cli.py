"""Command line pipeline: ``python -m graindiagrams <command> ...``.

Scans are addressed by a path prefix ``P``: header ``P.json``, labels ``P.raw``.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "out": "out",
    "input": None,
    "synth": {"k": 20, "dims": [64, 64, 64], "spacing": [1.0, 1.0, 1.0]},
    "fit": {
        "method": "sgbpd",
        "tie_tol": None,
        "support": {
            "strategy": "none",
            "pencil": {"rays_per_site": 64, "batch_error": 4.0, "ellipsoidal": True},
            "resolution": {"tau": None, "eps": None},
            "interior_delta": None,
        },
        "dilpm": {"delta": 2, "ring": None, "margin": 1.0, "solver": "simplex"},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = dict(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def load_config(path=None) -> dict:
    """Defaults overlaid with a JSON config file, validated."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {doc.get('schema_version')}")
        cfg = _merge(cfg, doc)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    fit = cfg["fit"]
    if fit["method"] not in ("sgbpd", "dilpm"):
        raise ConfigError("fit.method must be 'sgbpd' or 'dilpm'")
    sup = fit["support"]
    if sup["strategy"] not in ("none", "pencil", "resolution"):
        raise ConfigError("fit.support.strategy must be none, pencil or resolution")
    if sup["strategy"] == "resolution":
        res = sup["resolution"]
        if (res["tau"] is None) == (res["eps"] is None):
            raise ConfigError("resolution strategy needs exactly one of tau or eps")
    if fit["method"] == "dilpm" and sup["interior_delta"] is not None:
        raise ConfigError("interior removal applies to sgbpd only")
    if fit["dilpm"]["solver"] not in ("simplex", "highs"):
        raise ConfigError("fit.dilpm.solver must be simplex or highs")


def _scan_paths(prefix) -> tuple[Path, Path]:
    p = Path(prefix)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".raw")


def _load(prefix):
    from .volume_io import load_scan

    header, data = _scan_paths(prefix)
    return load_scan(header, data)


def _save(scan, prefix) -> None:
    from .volume_io import save_scan

    header, data = _scan_paths(prefix)
    header.parent.mkdir(parents=True, exist_ok=True)
    save_scan(scan, header, data)


def _support_params(cfg: dict, k: int):
    from . import supports

    sup = cfg["fit"]["support"]
    pencil = resolution = interior = None
    if sup["strategy"] == "pencil":
        pencil = supports.PencilParams(**sup["pencil"])
    if sup["strategy"] == "resolution":
        res = sup["resolution"]
        tau = res["tau"]
        if tau is None:
            t = supports.advisory_tau(k, float(res["eps"]))
            tau = (t, t, t)
        elif isinstance(tau, int):
            tau = (tau, tau, tau)
        resolution = supports.ResolutionParams(tuple(tau))
    if sup["interior_delta"] is not None:
        interior = supports.InteriorParams(int(sup["interior_delta"]))
    return sup["strategy"], pencil, resolution, interior


def _write_slices(scan, out: Path, stem: str) -> None:
    from .volume_io import export_slice

    for axis, n in zip("xyz", scan.dims):
        export_slice(scan, axis, n // 2, out / f"{stem}_{axis}{n // 2}.ppm")


# ---- commands ----------------------------------------------------------------

def cmd_synth(args, cfg) -> int:
    from .pipeline import synth

    s = cfg["synth"]
    k = args.k if args.k is not None else s["k"]
    dims = args.dims if args.dims is not None else s["dims"]
    spacing = args.spacing if args.spacing is not None else s["spacing"]
    scan, truth = synth(int(k), dims, spacing, seed=int(cfg["seed"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _save(scan, out / "scan")
    truth.save(out / "truth_diagram.json")
    print(f"wrote {out / 'scan.json'} (k={scan.k}, dims={scan.dims}) and "
          f"{out / 'truth_diagram.json'}")
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    from .scan_stats import compute_neighbors, compute_stats

    scan = _load(args.scan)
    stats = compute_stats(scan)
    nbrs = compute_neighbors(scan)
    doc = stats.to_json()
    doc["neighbors"] = sorted([list(e) for e in nbrs.edges])
    doc["interior_grains"] = [i + 1 for i in range(scan.k) if nbrs.interior[i]]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(json.dumps(doc, indent=1))
    print(f"wrote {out / 'stats.json'} ({scan.k} grains, {len(nbrs.edges)} adjacent pairs)")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    from . import pipeline

    src = args.scan or cfg["input"]
    if src is None:
        raise ConfigError("fit needs a scan (argument or config key 'input')")
    scan = _load(src)
    fit = cfg["fit"]
    t0 = time.perf_counter()
    if fit["method"] == "sgbpd":
        strategy, pencil, resolution, interior = _support_params(cfg, scan.k)
        res = pipeline.fit_sgbpd(scan, strategy, pencil, resolution, interior,
                                 tie_tol=fit["tie_tol"])
    else:
        strategy, pencil, resolution, _ = _support_params(cfg, scan.k)
        d = fit["dilpm"]
        res = pipeline.fit_dilpm(scan, int(d["delta"]), d["ring"], strategy, pencil, resolution,
                                 float(d["margin"]), d["solver"], fit["tie_tol"])
    res.report.runtime_seconds["total"] = time.perf_counter() - t0
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    res.params.save(out / "diagram.json")
    _save(res.predicted, out / "predicted")
    res.report.save(out / "report.json")
    (out / "report.txt").write_text(res.report.table(fit["method"]) + "\n")
    _write_slices(res.predicted, out, "predicted")
    print(res.report.table(fit["method"]))
    return EXIT_OK


def cmd_rasterize(args, cfg) -> int:
    from .apd import DiagramParams, rasterize
    from .volume_io import read_header

    params = DiagramParams.load(args.diagram)
    header = read_header(_scan_paths(args.like)[0])
    pred = rasterize(params, header["dims"], header["spacing_um"], cfg["fit"]["tie_tol"])
    out = Path(cfg["out"])
    _save(pred, out / "rasterized")
    print(f"wrote {out / 'rasterized.json'}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .metrics import evaluate

    truth = _load(args.truth)
    pred = _load(args.predicted)
    report = evaluate(truth, pred)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "eval_report.json")
    print(report.table("eval"))
    return EXIT_OK


def cmd_slice(args, cfg) -> int:
    from .volume_io import export_slice

    scan = _load(args.scan)
    out = Path(args.image) if args.image else Path(cfg["out"]) / f"slice_{args.axis}{args.index}.ppm"
    out.parent.mkdir(parents=True, exist_ok=True)
    export_slice(scan, args.axis, args.index, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--seed", type=int, help="random seed (synth only)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="graindiagrams", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="rasterize a random diagram")
    p.add_argument("--k", type=int)
    p.add_argument("--dims", type=int, nargs=3)
    p.add_argument("--spacing", type=float, nargs=3)
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("stats", parents=[common], help="grain statistics and adjacency")
    p.add_argument("scan")
    p.set_defaults(func=cmd_stats)
    p = sub.add_parser("fit", parents=[common], help="fit a diagram and evaluate it")
    p.add_argument("scan", nargs="?")
    p.add_argument("--method", choices=["sgbpd", "dilpm"])
    p.set_defaults(func=cmd_fit)
    p = sub.add_parser("rasterize", parents=[common], help="label voxels by a diagram")
    p.add_argument("diagram")
    p.add_argument("like", help="scan whose dims and spacing are used")
    p.set_defaults(func=cmd_rasterize)
    p = sub.add_parser("eval", parents=[common], help="compare two labelings")
    p.add_argument("truth")
    p.add_argument("predicted")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("slice", parents=[common], help="export one slice as PPM")
    p.add_argument("scan")
    p.add_argument("--axis", choices=["x", "y", "z"], default="z")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--image", help="output PPM path")
    p.set_defaults(func=cmd_slice)
    return ap


def _limit_threads(n) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _limit_threads(args.threads)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        if getattr(args, "method", None):
            cfg["fit"]["method"] = args.method
        validate_config(cfg)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        from .dilpm import DilpmError
        from .pipeline import SynthError
        from .transport import SolverError

        if isinstance(exc, (SolverError, DilpmError, SynthError)):
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        if isinstance(exc, (OSError, ValueError, IndexError, KeyError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
