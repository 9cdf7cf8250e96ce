"""Command-line front end: ``cmtunmix {synth,cluster,unmix,eval,sweep,info}``.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 numeric divergence.

Every command writes into one output directory: ``--out`` when given, otherwise
``<base>/<command>-<UTC timestamp>-seed<seed>`` where ``<base>`` is
``$CMTUNMIX_OUTPUT_DIR`` or ``./runs``. Result matrices and ``report.json``
depend only on the inputs and seed; wall-clock timings and paths go to
``manifest.json``/``timing.json`` so reruns stay byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import HsiCube, SolverConfig
from .fcm import fcm_cluster, load_labels
from .io import (PRESETS, EnviParseError, MatrixFormatError, PresetError, apply_band_removal, atomic_write,
                 read_clean_cube, read_envi, read_matrix, read_scene_bundle, sha256_file,
                 write_abundance_maps, write_json, write_label_map, write_matrix, write_scene_bundle)
from .metrics import evaluate, reconstruction_error, write_table_csv
from .solver import VARIANTS, SolverDivergence, run
from .synth import (SNR_LEVELS, USGS_NOTE, LibraryParseError, SynthSpec, generate_scene, load_library,
                    monte_carlo_seed, standin_library)

log = logging.getLogger("cmtunmix")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGENCE = 0, 1, 2, 3
OUTPUT_ENV = "CMTUNMIX_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _size(text):
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x64, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return w, h


def _snr(text):
    return math.inf if text.strip().lower() in ("inf", "+inf") else float(text)


def _float_list(text, conv=float):
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [conv(t) for t in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_range(text):
    """``2..10`` (inclusive) or ``32,64,96``."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
        values = list(range(lo, hi + 1))
    else:
        values = _float_list(text, int)
    if not values:
        raise argparse.ArgumentTypeError(f"range {text!r} is empty")
    return values


def _lambda(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda takes 'auto' or a number, got {text!r}") from None


def _add_common(p):
    p.add_argument("--out", type=Path, help="output directory (default: per-run directory under "
                                            f"${OUTPUT_ENV} or ./runs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1, help="worker pool size")


def _add_solver_flags(p, endmembers=True):
    d = SolverConfig()
    if endmembers:      # sweep takes --variants instead
        p.add_argument("--variant", default="proposed",
                       help=f"one of {', '.join(sorted(VARIANTS))} (hyphens allowed)")
    p.add_argument("--init", default="vca-fcls", choices=["vca-fcls", "random"])
    if endmembers:
        p.add_argument("--endmembers", type=int, help="number of endmembers (default: ground-truth count)")
    p.add_argument("--clusters", type=int, default=d.clusters)
    p.add_argument("--mu", type=float, default=d.mu)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--q", type=float, default=d.q)
    p.add_argument("--lambda", dest="lam", type=_lambda, default=d.lambda_mode)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--connectivity", type=int, default=d.connectivity, choices=[4, 8])
    p.add_argument("--gradient-sign", default=d.gradient_sign,
                   choices=["descent_consistent", "paper_literal"])
    p.add_argument("--renormalize-rho", action="store_true")


def _add_synth_flags(p, snr_default="25"):
    d = SynthSpec()
    p.add_argument("--size", type=_size, default=(d.width, d.height), help="WIDTHxHEIGHT")
    p.add_argument("--endmembers", type=int, default=d.c)
    p.add_argument("--snr", type=lambda t: _float_list(t, _snr), default=_float_list(snr_default, _snr),
                   help="comma-separated SNR levels in dB ('inf' for noiseless)")
    p.add_argument("--runs", type=_positive_int, default=1)
    p.add_argument("--block-size", type=int, default=d.block_size)
    p.add_argument("--filter-size", type=int, default=d.filter_size)
    p.add_argument("--purity", type=float, default=d.purity_threshold)
    p.add_argument("--library", type=Path, help="spectral library CSV (default: packaged stand-in)")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(mu=args.mu, eta=args.eta, lambda_mode=args.lam, q=args.q, max_iter=args.max_iter,
                        epsilon=args.epsilon, clusters=args.clusters, connectivity=args.connectivity,
                        gradient_sign=args.gradient_sign, seed=args.seed,
                        renormalize_rho=args.renormalize_rho)


def _library(args):
    return load_library(args.library) if args.library else standin_library()


def _output_dir(args, command) -> Path:
    if args.out is not None:
        d = args.out
    else:
        base = Path(os.environ.get(OUTPUT_ENV, "runs"))
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        d = base / f"{command}-{stamp}-seed{args.seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(args, command, out, inputs=(), outputs=(), timings=None, extra=None):
    m = {
        "command": command,
        "argv": list(args._argv),
        "tool_version": __version__,
        "output_dir": str(out),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out)): sha256_file(p) for p in outputs},
        "timings": timings or {},
    }
    if extra:
        m.update(extra)
    write_json(out / "manifest.json", m)
    return m


def _pool_map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# input loading

def _load_input(path: Path, preset=None, reflectance_scale=None):
    """Returns ``(cube, A_true, S_true, clean_cube, scene_manifest, input_files)``."""
    if path.is_dir():
        cube, A_true, S_true, manifest = read_scene_bundle(path)
        clean = read_clean_cube(path)
        files = sorted(p for p in path.glob("*.mat"))
    elif path.suffix.lower() == ".hdr":
        cube = read_envi(path, reflectance_scale=reflectance_scale)
        A_true = S_true = clean = manifest = None
        files = [path]
    else:
        raise FileNotFoundError(f"{path}: expected a scene directory or an ENVI .hdr file")
    if preset and preset != "none":
        cube = apply_band_removal(cube, preset)
        if A_true is not None and A_true.bands != cube.bands:
            A_true = None
    return cube, A_true, S_true, clean, manifest, files


def _scene_dirs(root: Path):
    """Scene bundles under ``root`` (``root`` itself if it is one), in sorted order."""
    if (root / "manifest.json").exists() and (root / "Y.mat").exists():
        return [root]
    found = sorted(p.parent for p in root.rglob("manifest.json") if (p.parent / "Y.mat").exists())
    if not found:
        raise FileNotFoundError(f"{root}: no scene bundles found")
    return found


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    w, h = args.size
    if args.endmembers < 1:
        raise UsageError("--endmembers must be >= 1")
    library = _library(args)
    out = _output_dir(args, "synth")
    levels, runs = args.snr, args.runs
    single = len(levels) == 1 and runs == 1
    jobs = []
    for li, snr in enumerate(levels):
        for r in range(runs):
            seed = args.seed if single else monte_carlo_seed(args.seed, r, li)
            try:
                spec = SynthSpec(width=w, height=h, c=args.endmembers, block_size=args.block_size,
                                 filter_size=args.filter_size, purity_threshold=args.purity,
                                 snr_db=snr, seed=seed)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            sub = out if single else out / f"snr_{_fmt(snr)}" / f"run_{r:03d}"
            jobs.append((spec, sub, r, snr))
    if args.endmembers > library.n_endmembers:
        raise UsageError(f"--endmembers {args.endmembers} exceeds the library size {library.n_endmembers}")
    if args.block_size > min(w, h):
        raise UsageError(f"--block-size {args.block_size} exceeds the {w}x{h} grid")

    def make(job):
        spec, sub, r, snr = job
        scene = generate_scene(spec, library)
        write_scene_bundle(sub, scene, extra={"run": r, "snr_db": _json_num(snr),
                                              "base_seed": args.seed, "tool_version": __version__})
        return sub

    t0 = time.perf_counter()
    dirs = _pool_map(make, jobs, args.threads)
    if not single:
        _manifest(args, "synth", out, timings={"total_seconds": time.perf_counter() - t0},
                  extra={"scenes": [str(d.relative_to(out)) for d in dirs],
                         "snr_levels": [_json_num(s) for s in levels], "runs": runs})
    print(f"wrote {len(dirs)} scene(s) to {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cube, *_, files = _load_input(args.input, args.preset, args.reflectance_scale)
    if args.clusters < 1 or args.clusters > cube.n_pixels:
        raise UsageError(f"--clusters must lie in [1, {cube.n_pixels}]")
    out = _output_dir(args, "cluster")
    t0 = time.perf_counter()
    fcm_rng = np.random.default_rng(np.random.SeedSequence(args.seed).spawn(2)[0])
    res = fcm_cluster(cube, args.clusters, m=args.m, seed=fcm_rng)
    write_matrix(out / "membership.mat", res.membership)
    write_matrix(out / "centers.mat", res.centers)
    write_label_map(out / "labels", res.labels, cube.width, cube.height, args.clusters)
    report = {"clusters": args.clusters, "m": args.m, "seed": args.seed, "iterations": res.iterations,
              "final_shift": res.final_shift, "objective_history": res.objective_history,
              "cluster_sizes": np.bincount(res.labels, minlength=args.clusters).tolist(),
              "warnings": list(res.warnings)}
    write_json(out / "report.json", report)
    outputs = [out / n for n in ("membership.mat", "centers.mat", "labels.pgm", "labels.csv", "report.json")]
    _manifest(args, "cluster", out, files, outputs, {"total_seconds": time.perf_counter() - t0})
    print(f"clustered {cube.n_pixels} pixels into {args.clusters} clusters in {res.iterations} "
          f"iterations -> {out}")
    return EXIT_OK


def _unmix_one(args, cfg, src: Path, out: Path):
    cube, A_true, S_true, clean, scene_manifest, files = _load_input(src, args.preset, args.reflectance_scale)
    c = args.endmembers or (A_true.n_endmembers if A_true is not None else None)
    if c is None:
        raise UsageError("--endmembers is required when the input carries no ground truth")
    labels = load_labels(args.labels, cube.n_pixels) if args.labels else None
    truth = (A_true, S_true) if A_true is not None and A_true.n_endmembers == c else None
    state, report = run(cube, cfg, args.variant, init=args.init, n_endmembers=c, labels=labels,
                        ground_truth=truth)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "A.mat", state.A.data)
    write_matrix(out / "S.mat", state.S.data)
    maps = write_abundance_maps(out, state.S.data, cube.width, cube.height)
    rep = report.to_dict(include_timing=False)
    rep["input_digests"] = {p.name: sha256_file(p) for p in files}
    rep["re"] = reconstruction_error(cube, state.A.data @ state.S.data)
    if clean is not None:
        rep["re_clean"] = reconstruction_error(clean, state.A.data @ state.S.data)
    if scene_manifest is not None:
        rep["scene"] = {k: scene_manifest.get(k) for k in ("spec", "run", "snr_db", "seed")}
    write_json(out / "report.json", rep)
    write_json(out / "timing.json", {"wall_seconds": report.wall_seconds})
    return out, files, [out / "A.mat", out / "S.mat", out / "report.json", *maps], report


def cmd_unmix(args) -> int:
    try:
        cfg = _solver_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.variant.replace("-", "_") not in VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {sorted(VARIANTS)}")
    if args.endmembers is not None and args.endmembers < 1:
        raise UsageError("--endmembers must be >= 1")
    if not args.input.exists():
        raise FileNotFoundError(f"{args.input}: no such file or directory")
    out = _output_dir(args, "unmix")
    t0 = time.perf_counter()
    if args.input.is_dir():
        scenes = _scene_dirs(args.input)
        jobs = [(s, out if s == args.input else out / s.relative_to(args.input)) for s in scenes]
    else:
        jobs = [(args.input, out)]
    results = _pool_map(lambda job: _unmix_one(args, cfg, *job), jobs, args.threads)
    inputs, outputs = [], []
    for _, files, outs, _ in results:
        inputs += files
        outputs += outs
    _manifest(args, "unmix", out, inputs, outputs, {"total_seconds": time.perf_counter() - t0},
              extra={"variant": args.variant.replace("-", "_"), "runs": len(results)})
    for d, _, _, report in results:
        ev = report.evaluation
        tail = f", rmsSAD {ev['rms_sad']:.4f}" if ev else ""
        print(f"{d}: {report.iterations} iterations ({report.stopped_by}){tail}")
    return EXIT_OK


def _eval_single(result_dir: Path, truth_dir: Path):
    cube, A_true, S_true, _ = read_scene_bundle(truth_dir)
    if A_true is None:
        raise FileNotFoundError(f"{truth_dir}: no ground-truth signatures (A_true.mat)")
    A_hat = read_matrix(result_dir / "A.mat")
    S_hat = read_matrix(result_dir / "S.mat")
    return evaluate(A_true, S_true, A_hat, S_hat, cube)


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:g}"


def _json_num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _aggregate(result_roots):
    """Group per-run reports by (variant, SNR) into mean/std rows."""
    groups = {}
    for root in result_roots:
        reports = sorted(root.rglob("report.json")) if root.is_dir() else []
        if not reports:
            raise FileNotFoundError(f"{root}: no report.json files found")
        for p in reports:
            rep = json.loads(p.read_text())
            if "evaluation" not in rep:
                continue
            snr = (rep.get("scene") or {}).get("snr_db")
            key = (rep["variant"], float("inf") if snr == "inf" else float(snr) if snr is not None else None)
            groups.setdefault(key, []).append(rep)
    if not groups:
        raise FileNotFoundError("no evaluated runs among the given results")
    rows = []
    for (variant, snr), reps in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        for metric, get in (("rms_sad", lambda r: r["evaluation"]["rms_sad"]),
                            ("aad_rms", lambda r: r["evaluation"]["aad_rms"]),
                            ("re", lambda r: r["re"]),
                            ("re_clean", lambda r: r.get("re_clean", float("nan")))):
            vals = np.array([get(r) for r in reps], dtype=float)
            std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            rows.append((metric, variant, snr, float(np.mean(vals)), std, vals.size))
    return rows


def _write_series(path, rows, header=("series", "x", "y", "std")):
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    atomic_write(path, buf.getvalue())


def _cell(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return "" if v is None else str(v)


def cmd_eval(args) -> int:
    out = _output_dir(args, "eval")
    t0 = time.perf_counter()
    outputs = []
    if args.truth is not None:
        if len(args.results) != 1:
            raise UsageError("--truth compares exactly one result directory")
        rep = _eval_single(args.results[0], args.truth)
        write_json(out / "eval.json", rep.to_dict())
        write_table_csv(out / "table.csv", {"estimate": [rep]})
        outputs = [out / "eval.json", out / "table.csv"]
        print(f"rmsSAD {rep.rms_sad:.6f}  AAD(rms) {rep.aad_rms:.6f}  RE {rep.re:.6f}")
    else:
        rows = _aggregate(args.results)
        by_metric = {}
        for metric, variant, snr, mean, std, n in rows:
            by_metric.setdefault(metric, []).append((variant, snr, mean, std))
        for metric, series in by_metric.items():
            _write_series(out / f"{metric}.csv", series)
            outputs.append(out / f"{metric}.csv")
        _write_series(out / "summary.csv", rows, ("metric", "series", "snr_db", "mean", "std", "runs"))
        outputs.append(out / "summary.csv")
        for metric, variant, snr, mean, std, n in rows:
            if metric == "rms_sad":
                print(f"{variant:>20s}  SNR {_fmt(snr) if snr is not None else '-':>5s}  "
                      f"rmsSAD {mean:.4f} +- {std:.4f}  (n={n})")
    _manifest(args, "eval", out, outputs=outputs, timings={"total_seconds": time.perf_counter() - t0})
    return EXIT_OK


def _sweep_job(job):
    spec, library, cfg, variant, init_seed, axis, x = job
    scene = generate_scene(spec, library)
    cfg_run = SolverConfig(**{**cfg.to_dict(), "seed": init_seed})
    state, report = run(scene.noisy, cfg_run, variant, n_endmembers=spec.c,
                        ground_truth=(scene.A_true, scene.S_true))
    Y_hat = state.A.data @ state.S.data
    return {"variant": variant, "x": x, "rms_sad": report.evaluation["rms_sad"],
            "aad_rms": report.evaluation["aad_rms"],
            "re": reconstruction_error(scene.noisy, Y_hat),
            "re_clean": reconstruction_error(scene.clean, Y_hat)}


def cmd_sweep(args) -> int:
    try:
        base = _solver_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    variants = [v.replace("-", "_") for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}")
    if not variants:
        raise UsageError("--variants is empty")
    library = _library(args)
    w, h = args.size
    values = args.values
    if args.axis == "snr":
        values = [_snr(str(v)) for v in values]
    jobs = []
    for xi, x in enumerate(values):
        for r in range(args.runs):
            # the scene depends on the run only, so every x sees the same scenes where the axis allows it
            seed = monte_carlo_seed(args.seed, r, 0 if args.axis == "clusters" else xi)
            size = (int(x), int(x)) if args.axis == "pixels" else (w, h)
            snr = x if args.axis == "snr" else args.snr[0]
            try:
                spec = SynthSpec(width=size[0], height=size[1], c=args.endmembers, block_size=args.block_size,
                                 filter_size=args.filter_size, purity_threshold=args.purity,
                                 snr_db=snr, seed=seed)
                cfg = SolverConfig(**{**base.to_dict(), "clusters": int(x)}) if args.axis == "clusters" else base
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            xval = int(x) ** 2 if args.axis == "pixels" else x
            for v in variants:
                jobs.append((spec, library, cfg, v, r, args.axis, xval))
    out = _output_dir(args, "sweep")
    t0 = time.perf_counter()
    results = _pool_map(_sweep_job, jobs, args.threads)
    write_json(out / "runs.json", results)
    rows = []
    metric = {"clusters": "rms_sad", "snr": "rms_sad", "pixels": "re_clean"}[args.axis]
    for v in variants:
        for x in dict.fromkeys(r["x"] for r in results):
            for m in ("rms_sad", "aad_rms", "re", "re_clean"):
                vals = np.array([r[m] for r in results if r["variant"] == v and r["x"] == x])
                std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                rows.append((f"{v}:{m}", float(x), float(np.mean(vals)), std))
    _write_series(out / "sweep.csv", rows)
    headline = [r for r in rows if r[0].endswith(":" + metric)]
    _write_series(out / f"{args.axis}_{metric}.csv", headline)
    outputs = [out / "runs.json", out / "sweep.csv", out / f"{args.axis}_{metric}.csv"]
    _manifest(args, "sweep", out, outputs=outputs, timings={"total_seconds": time.perf_counter() - t0},
              extra={"axis": args.axis, "values": [_json_num(float(v)) for v in values]})
    for s, x, y, std in headline:
        print(f"{s:>24s}  x={_fmt(x):>6s}  {y:.5f} +- {std:.5f}")
    return EXIT_OK


def cmd_info(args) -> int:
    lib = standin_library()
    info = {
        "version": __version__,
        "variants": {k: {"clusters": v.clusters, "eta_zero": v.eta_zero, "lambda_mode": v.lambda_mode}
                     for k, v in VARIANTS.items()},
        "defaults": SolverConfig().to_dict(),
        "synth_defaults": SynthSpec().to_dict(),
        "snr_levels": list(SNR_LEVELS),
        "presets": {k: None if p is None else {"original_bands": p.n_original, "removed": list(p.removed),
                                                "retained": p.n_original - len(p.removed)}
                    for k, p in PRESETS.items()},
        "standin_library": {"bands": lib.bands, "materials": lib.n_endmembers},
        "output_dir_env": OUTPUT_ENV,
    }
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
    else:
        print(f"cmtunmix {__version__}")
        print("variants: " + ", ".join(sorted(VARIANTS)))
        print("presets:  " + ", ".join(f"{k} ({v['original_bands']}->{v['retained']})"
                                      for k, v in info["presets"].items() if v))
        print(f"stand-in library: {lib.bands} bands x {lib.n_endmembers} materials")
        print()
        print(USGS_NOTE)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmtunmix", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate synthetic scene bundles")
    _add_common(s)
    _add_synth_flags(s)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("cluster", help="fuzzy c-means clustering of a scene")
    c.add_argument("input", type=Path)
    _add_common(c)
    c.add_argument("--clusters", type=int, default=SolverConfig().clusters)
    c.add_argument("--m", type=float, default=2.0, help="fuzzifier")
    c.add_argument("--preset", choices=sorted(PRESETS), default="none")
    c.add_argument("--reflectance-scale", type=float)
    c.set_defaults(func=cmd_cluster)

    u = sub.add_parser("unmix", help="unmix a scene bundle, a tree of bundles, or an ENVI cube")
    u.add_argument("input", type=Path)
    _add_common(u)
    _add_solver_flags(u)
    u.add_argument("--labels", type=Path, help="precomputed cluster labels CSV")
    u.add_argument("--preset", choices=sorted(PRESETS), default="none", help="band-removal preset")
    u.add_argument("--reflectance-scale", type=float, help="divisor for uint16 ENVI data")
    u.set_defaults(func=cmd_unmix)

    e = sub.add_parser("eval", help="score one result against truth, or aggregate Monte-Carlo results")
    e.add_argument("results", type=Path, nargs="+")
    e.add_argument("--truth", type=Path, help="scene bundle holding A_true/S_true")
    _add_common(e)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="sweep clusters, SNR or image size and emit tidy CSV")
    w.add_argument("--axis", required=True, choices=["clusters", "snr", "pixels"])
    w.add_argument("--values", required=True, type=_int_range,
                   help="'2..10' or a comma list; pixels takes image side lengths")
    w.add_argument("--variants", default="proposed")
    _add_common(w)
    _add_synth_flags(w)
    _add_solver_flags(w, endmembers=False)
    w.set_defaults(func=cmd_sweep)

    i = sub.add_parser("info", help="show version, presets and defaults")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:      # --help / --version
        return int(exc.code or 0)
    args._argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverDivergence as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, EnviParseError, MatrixFormatError, LibraryParseError, PresetError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:      # bad argument combinations surfaced by the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
