"""
Command-line front door: trace inspection, fingerprint estimation, matching,
calibration, simulation, and evaluation as subcommands of one binary.

Exit codes: 0 success, 2 usage, 3 input format, 4 degenerate computation.
Every subcommand is reproducible: identical inputs and seed give
byte-identical outputs at any worker count, and no subcommand mutates its
inputs. BLOCKPRNU_WORKERS sets the default worker count.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bitstream import load_trace, save_trace
from .calibration import (CalibrationVideo, calibrate_lambda_rate,
                          calibrate_qp)
from .errors import (AllMaskedOut, BitstreamExhausted, ConfigError,
                     CoverageGap, DegenerateFingerprint, DimensionMismatch,
                     EmptyAccumulator, EmptyBucket, EmptyInput,
                     InsufficientData, InsufficientFrames, MalformedStream,
                     MissingAnchor, MissingKey, MissingParameterSet,
                     RangeError, SchemaError, TruncatedUnit,
                     UnsupportedProfile, UnsupportedTransform)
from .evaluation import (BPP_GROUP_EDGES, GridVideo, format_ratio,
                         improvement_ratios, run_grid, scheme_mean_pce,
                         threshold_table)
from .matching import (DEFAULT_THRESHOLD, PceConfig, format_report_records,
                       pce)
from .noise import DenoiseConfig, read_yuv420, write_yuv420
from .prnu import (Fingerprint, estimate_fingerprint, read_fingerprint,
                   write_fingerprint)
from .simulator import (CodecConfig, SensorModel, encode_sequence,
                        simulate_capture, synthetic_clean_frames)
from .trace import (BLOCK_TYPES, TraceFile, bits_per_pixel,
                    skipped_block_rate)
from .weighting import (ALL_SCHEMES, ANCHOR_LAMBDA_RATE, ANCHOR_QP,
                        TABLE_SCHEMES, SchemeConfig, WeightTable)

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DEGENERATE = 4

_INPUT_ERRORS = (SchemaError, CoverageGap, RangeError, MalformedStream,
                 TruncatedUnit, BitstreamExhausted, MissingParameterSet,
                 UnsupportedProfile, MissingKey, DimensionMismatch,
                 UnsupportedTransform, OSError)
_DEGENERATE_ERRORS = (EmptyInput, EmptyAccumulator, AllMaskedOut,
                      DegenerateFingerprint, MissingAnchor, InsufficientData,
                      InsufficientFrames, EmptyBucket)


def _outpath(path: str | Path) -> Path:
    p = Path(path)
    if p.parent != Path("."):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _outpath(path).write_text(text)


def _resolve_workers(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise ConfigError("workers must be at least 1")
        return value
    env = os.environ.get("BLOCKPRNU_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"BLOCKPRNU_WORKERS={env!r} is not an integer") from exc
        if value < 1:
            raise ConfigError("BLOCKPRNU_WORKERS must be at least 1")
        return value
    return os.cpu_count() or 1


def _denoise_config(args) -> DenoiseConfig:
    return DenoiseConfig(method=args.denoise, noise_var=args.noise_var)


def _pce_config(args, search: str = "full") -> PceConfig:
    if args.exclusion < 1 or args.exclusion % 2 == 0:
        raise ConfigError("exclusion window width must be odd and positive")
    return PceConfig(exclusion_half_width=args.exclusion // 2,
                     search_window=search)


def _load_pictures(frames_path: str, trace: TraceFile):
    pictures = read_yuv420(frames_path, trace.width, trace.height)
    if len(pictures) != trace.frame_count:
        raise DimensionMismatch(
            f"{frames_path}: {len(pictures)} frames but trace expects "
            f"{trace.frame_count}")
    return pictures


def _read_manifest(path: str, fields: tuple[str, ...],
                   optional: tuple[str, ...] = ()) -> list[dict]:
    """CSV rows of the named fields; relative paths resolve against the
    manifest's directory. '#' lines and blank lines are skipped."""
    base = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            row = [c.strip() for c in row]
            if not any(row):
                continue
            want = len(fields)
            if len(row) < want or len(row) > want + len(optional):
                raise SchemaError(f"{path}:{lineno}: expected "
                                  f"{want}-{want + len(optional)} fields, "
                                  f"got {len(row)}")
            rec = dict(zip(fields + optional, row))
            for key in rec:
                if key.endswith("_path"):
                    rec[key] = str(base / rec[key])
            rows.append(rec)
    if not rows:
        raise SchemaError(f"{path}: empty manifest")
    return rows


def _load_references(directory: str, camera_ids) -> dict[str, Fingerprint]:
    refs = {}
    for cam in sorted(set(camera_ids)):
        refs[cam] = read_fingerprint(Path(directory) / f"{cam}.bpf")
    return refs


def _table_for_scheme(parser: argparse.ArgumentParser, scheme: str,
                      path: str | None) -> WeightTable | None:
    if scheme not in TABLE_SCHEMES or scheme == "skip_eliminate":
        if path is not None:
            parser.error(f"scheme {scheme} does not take a weight table")
        return None
    if path is None:
        parser.error(f"scheme {scheme} needs a weight table")
    table = WeightTable.load(path)
    if table.scheme != scheme:
        raise SchemaError(f"{path} holds a {table.scheme} table, "
                          f"not {scheme}")
    return table


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_inspect(args) -> int:
    trace = load_trace(args.trace)
    frames = trace.frames()
    counts = {t: 0 for t in BLOCK_TYPES}
    for rec in trace.records:
        counts[rec.block_type] += 1
    lines = [
        f"width={trace.width}",
        f"height={trace.height}",
        f"frames={trace.frame_count}",
        f"blocks={len(trace.records)}",
    ]
    lines += [f"count_{t}={counts[t]}" for t in BLOCK_TYPES]
    lines += [
        f"skipped_block_rate={skipped_block_rate(frames)!r}",
        f"bits_per_pixel={bits_per_pixel(trace)!r}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_estimate(args, parser) -> int:
    table = _table_for_scheme(parser, args.scheme, args.table)
    trace = load_trace(args.trace)
    pictures = _load_pictures(args.frames, trace)
    scheme = SchemeConfig(args.scheme, table)
    source_id = args.source_id if args.source_id else Path(args.out).stem
    fp = estimate_fingerprint(pictures, trace.frames(), scheme,
                              denoise_config=_denoise_config(args),
                              denominator_floor=args.floor,
                              source_id=source_id,
                              workers=_resolve_workers(args.workers))
    write_fingerprint(fp, _outpath(args.out))
    meta = {
        "denoise": args.denoise,
        "floor": args.floor,
        "frame_count": trace.frame_count,
        "height": trace.height,
        "noise_var": args.noise_var,
        "scheme": args.scheme,
        "source_id": source_id,
        "table": Path(args.table).name if args.table else None,
        "width": trace.width,
    }
    meta["config_hash"] = hashlib.sha256(
        json.dumps(meta, sort_keys=True).encode()).hexdigest()
    _outpath(str(args.out) + ".json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_match(args) -> int:
    test = read_fingerprint(args.test)
    reference = read_fingerprint(args.reference)
    report = pce(test, reference, _pce_config(args, args.search),
                 args.threshold)
    test_id = test.source_id or Path(args.test).stem
    ref_id = reference.source_id or Path(args.reference).stem
    lines = format_report_records([[report]], [test_id], [ref_id])
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_simulate(args) -> int:
    if (args.qp is None) == (args.target_bits is None):
        raise ConfigError("set exactly one of --qp / --target-bits")
    model = SensorModel.random(args.height, args.width,
                               k_strength=args.k_strength,
                               read_noise_sigma=args.read_noise,
                               seed=args.seed)
    content_seed = (args.content_seed if args.content_seed is not None
                    else args.seed + 1)
    clean = synthetic_clean_frames(args.height, args.width, args.frames,
                                   seed=content_seed, motion=args.motion)
    captured = simulate_capture(model, clean, seed=content_seed + 1)
    config = CodecConfig(qp=args.qp, target_bits_per_frame=args.target_bits,
                         gop=args.gop, start_qp=args.start_qp)
    result = encode_sequence(captured, config)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_yuv420(result.pictures, f"{prefix}.yuv")
    save_trace(result.trace, f"{prefix}.trace")
    k = model.k_true - model.k_true.mean()
    k = k / np.sqrt((k * k).sum())
    write_fingerprint(Fingerprint(k_values=k,
                                  support=np.ones_like(k, dtype=bool),
                                  source_id="true"),
                      f"{prefix}.true.bpf")
    frames = result.trace.frames()
    summary = [
        f"frames={args.frames}",
        f"qp_last={result.qp_per_frame[-1]}",
        f"skipped_block_rate={skipped_block_rate(frames)!r}",
        f"bits_per_pixel={bits_per_pixel(result.trace)!r}",
    ]
    _emit("\n".join(summary) + "\n", args.out)
    return 0


def cmd_calibrate(args) -> int:
    if args.mode == "qp":
        rows = _read_manifest(args.manifest,
                              ("camera_id", "frames_path", "trace_path", "qp"))
    else:
        rows = _read_manifest(args.manifest,
                              ("camera_id", "frames_path", "trace_path"),
                              optional=("qp",))
    videos = []
    for row in rows:
        trace = load_trace(row["trace_path"])
        qp = None
        if row.get("qp"):
            try:
                qp = int(row["qp"])
            except ValueError as exc:
                raise SchemaError(f"bad qp {row['qp']!r} in manifest") from exc
        videos.append(CalibrationVideo(camera_id=row["camera_id"],
                                       pictures=_load_pictures(
                                           row["frames_path"], trace),
                                       trace=trace, qp=qp))
    references = _load_references(args.references,
                                  (v.camera_id for v in videos))
    denoise = _denoise_config(args)
    pce_config = _pce_config(args, args.search)
    if args.mode == "qp":
        table, report = calibrate_qp(videos, references,
                                     include_skip=args.include_skip,
                                     anchor_qp=args.anchor_qp,
                                     denoise_config=denoise,
                                     pce_config=pce_config,
                                     workers=_resolve_workers(args.workers))
    else:
        table, report = calibrate_lambda_rate(videos, references,
                                              n_buckets=args.buckets,
                                              anchor_lr=args.anchor_lambda_rate,
                                              include_skip=args.include_skip,
                                              denoise_config=denoise,
                                              pce_config=pce_config)
    table.save(_outpath(args.out))
    if args.report:
        _outpath(args.report).write_text("\n".join(report) + "\n")
    return 0


def cmd_evaluate(args, parser) -> int:
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if not schemes:
        parser.error("no schemes requested")
    for s in schemes:
        if s not in ALL_SCHEMES:
            parser.error(f"unknown scheme {s!r}")
    table_paths = {"qp_all": args.qp_all_table,
                   "qp_noskip": args.qp_noskip_table,
                   "lambda_r": args.lambda_table}
    configs = []
    for s in schemes:
        configs.append(SchemeConfig(s, _table_for_scheme(
            parser, s, table_paths.get(s))))

    rows = _read_manifest(args.manifest,
                          ("video_id", "camera_id", "frames_path",
                           "trace_path"))
    videos = []
    for row in rows:
        trace = load_trace(row["trace_path"])
        videos.append(GridVideo(video_id=row["video_id"],
                                camera_id=row["camera_id"],
                                pictures=_load_pictures(row["frames_path"],
                                                        trace),
                                trace=trace))
    references = _load_references(args.references,
                                  (v.camera_id for v in videos))
    edges = tuple(float(e) for e in args.edges.split(","))
    grid = run_grid(videos, configs, references,
                    denoise_config=_denoise_config(args),
                    pce_config=_pce_config(args, args.search),
                    threshold=args.threshold,
                    workers=_resolve_workers(args.workers))

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.table.txt").write_text(
        threshold_table(grid, edges, args.threshold).to_text())

    cell_lines = []
    for vid in grid.video_ids:
        matrix = [[grid.cells[(vid, s)] for s in grid.schemes]]
        cell_lines += format_report_records(matrix, [vid], grid.schemes)
    Path(f"{prefix}.cells.csv").write_text("\n".join(cell_lines) + "\n")

    means = scheme_mean_pce(grid)
    mean_lines = [f"{s},{means[s]!r}" for s in grid.schemes]
    if "conventional" in means:
        ratios = improvement_ratios(means)
        mean_lines += [f"ratio_{s},{format_ratio(ratios[s])}"
                       for s in grid.schemes]
    Path(f"{prefix}.means.txt").write_text("\n".join(mean_lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_denoise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--denoise", choices=("wavelet", "spatial"),
                   default="wavelet", help="residual extraction method")
    p.add_argument("--noise-var", type=float, default=3.0,
                   help="assumed noise variance for the Wiener step")


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="PCE decision threshold (default 60)")
    p.add_argument("--exclusion", type=int, default=11,
                   help="peak exclusion window width (default 11 for 11x11)")
    p.add_argument("--search", choices=("full", "zero"), default="full",
                   help="correlation peak search window")


def _add_workers_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None,
                   help="parallel residual workers (default: "
                        "BLOCKPRNU_WORKERS or all cores); results are "
                        "byte-identical at any count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockprnu",
        description="Sensor-pattern fingerprints from compressed video, "
                    "weighted by codec block metadata.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="summarize a block trace")
    p.add_argument("trace", help="trace file path")
    p.add_argument("--out", default=None, help="write summary here instead "
                                               "of stdout")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("estimate", help="estimate a fingerprint from frames "
                                        "plus their block trace")
    p.add_argument("--frames", required=True, help="8-bit 4:2:0 planar video")
    p.add_argument("--trace", required=True, help="block trace file")
    p.add_argument("--scheme", required=True, choices=ALL_SCHEMES)
    p.add_argument("--table", default=None,
                   help="weight table (required for qp_all / qp_noskip / "
                        "lambda_r)")
    p.add_argument("--floor", type=float, default=None,
                   help="absolute denominator floor (default: 1e-3 of the "
                        "mean accumulated energy)")
    p.add_argument("--source-id", default="",
                   help="identifier embedded in the fingerprint file")
    p.add_argument("--out", required=True, help="fingerprint output path; a "
                                                ".json sidecar is written "
                                                "next to it")
    _add_denoise_flags(p)
    _add_workers_flag(p)
    p.set_defaults(func=lambda a: cmd_estimate(a, parser))

    p = sub.add_parser("match", help="PCE match one fingerprint against "
                                     "another")
    p.add_argument("--test", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", default=None, help="write the report record here "
                                               "instead of stdout")
    _add_match_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="synthesize a sensor, capture a "
                                        "scene, encode it")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--seed", type=int, default=0,
                   help="sensor pattern seed: one camera per seed")
    p.add_argument("--content-seed", type=int, default=None,
                   help="scene and shot-noise seed; vary it to film several "
                        "videos with one camera (default: seed + 1)")
    p.add_argument("--qp", type=int, default=None, help="fixed QP encode")
    p.add_argument("--target-bits", type=float, default=None,
                   help="per-frame bit budget (rate-controlled encode)")
    p.add_argument("--gop", type=int, default=12)
    p.add_argument("--start-qp", type=int, default=30)
    p.add_argument("--k-strength", type=float, default=0.02,
                   help="sensor pattern amplitude")
    p.add_argument("--read-noise", type=float, default=2.0)
    p.add_argument("--motion", type=int, default=2,
                   help="object drift in pixels per frame")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.yuv, <prefix>.trace, "
                        "<prefix>.true.bpf")
    p.add_argument("--out", default=None, help="write the summary here "
                                               "instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit a weight table from known-"
                                         "camera videos")
    p.add_argument("--mode", required=True, choices=("qp", "lambda_r"))
    p.add_argument("--manifest", required=True,
                   help="CSV: camera_id,frames,trace[,qp] per row; paths "
                        "relative to the manifest")
    p.add_argument("--references", required=True,
                   help="directory of <camera_id>.bpf reference fingerprints")
    p.add_argument("--out", required=True, help="weight table output path")
    p.add_argument("--report", default=None,
                   help="write per-camera observation lines here")
    p.add_argument("--anchor-qp", type=int, default=ANCHOR_QP,
                   help="QP whose weight is fixed to 1 (default 15)")
    p.add_argument("--anchor-lambda-rate", type=float,
                   default=ANCHOR_LAMBDA_RATE,
                   help="lambda*rate whose weight is fixed to 1 (default 60)")
    p.add_argument("--buckets", type=int, default=20,
                   help="equal-population lambda*rate buckets (default 20)")
    p.add_argument("--include-skip", action="store_true",
                   help="let skip blocks contribute (qp_all-style tables)")
    _add_denoise_flags(p)
    _add_match_flags(p)
    _add_workers_flag(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="run a scheme-by-video matching grid "
                                        "and report detection tables")
    p.add_argument("--manifest", required=True,
                   help="CSV: video_id,camera_id,frames,trace per row")
    p.add_argument("--references", required=True,
                   help="directory of <camera_id>.bpf reference fingerprints")
    p.add_argument("--schemes", default=",".join(ALL_SCHEMES),
                   help="comma-separated scheme list (default: all)")
    p.add_argument("--qp-all-table", default=None)
    p.add_argument("--qp-noskip-table", default=None)
    p.add_argument("--lambda-table", default=None)
    p.add_argument("--edges", default=",".join(str(e) for e in BPP_GROUP_EDGES),
                   help="bits-per-pixel group edges for the detection table")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.table.txt, <prefix>.cells.csv, "
                        "<prefix>.means.txt")
    _add_denoise_flags(p)
    _add_match_flags(p)
    _add_workers_flag(p)
    p.set_defaults(func=lambda a: cmd_evaluate(a, parser))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _DEGENERATE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
