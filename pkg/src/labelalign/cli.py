"""Command-line entry points: synth, align, evaluate, analyze.

Every command is deterministic given its flags (all randomness is seeded)
and echoes its effective configuration into the files it writes. Flag
values override entries from an optional ``--config`` JSON file, which in
turn override built-in defaults. ``LABELALIGN_DATA_ROOT`` supplies the
default dataset directory when ``--dataset`` is omitted.

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 flagged instances
under --strict, 5 dataset/prediction validation failure (id mismatches,
malformed records).
"""
import argparse
import os
import sys

import numpy as np

from . import dataio, denoise, metrics, synth
from ._kernels import BACKEND
from .codec import OffsetCodec, OffsetVec, encode_array
from .geometry import AREA, CENTROID_MODES, batch_centroids, centroid, pad_batch
from .noising import NOISE_MODES, NoiseConfig, RIGID, inject, sample_noise
from .predictor import (CorrelationPredictor, HiddenTruth, NORMALIZED_OVERLAP,
                        OraclePredictor, OraclePredictorParams, PredictorContext, SCORE_MODES)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FLAGGED = 4
EXIT_VALIDATION = 5

DATA_ROOT_ENV = "LABELALIGN_DATA_ROOT"

ALIGN_DEFAULTS = {
    "predictor": "correlation",
    "steps": 5,
    "delta": 1.0,
    "kappa": 1.0,
    "rho": 0.0,
    "search_radius": 32,
    "score": NORMALIZED_OVERLAP,
    "tta": denoise.TTA_NONE,
    "runs": 4,
    "extra_steps": 5,
    "perturb_sigma": 5.0,
    "alpha": [0.0, 0.0],
    "beta": 200.0,
    "seed": 0,
    "noise_sigma": None,
    "noise_mode": RIGID,
}


def _echo(payload) -> None:
    sys.stdout.write(dataio.canonical_dumps(payload))


def _dataset_path(args, parser):
    path = args.dataset or os.environ.get(DATA_ROOT_ENV)
    if not path:
        parser.error(f"--dataset is required (or set {DATA_ROOT_ENV})")
    return path


def _effective(args, file_config: dict, keys: dict) -> dict:
    """Merge defaults, config file entries, and explicit flags (flags win)."""
    merged = dict(keys)
    for key in keys:
        if key in file_config:
            merged[key] = file_config[key]
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelalign",
        description="Align misplaced building polygons by iterative offset denoising "
                    f"(kernel backend: {BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--images", type=int, default=3, help="number of images (default 3)")
    p_synth.add_argument("--buildings", type=int, default=4, help="buildings per image (default 4)")
    p_synth.add_argument("--nu", type=float, default=20.0,
                         help="std of the rigid label misplacement in px (default 20)")
    p_synth.add_argument("--height-range", type=float, nargs=2, default=[20.0, 60.0],
                         metavar=("LO", "HI"), help="roof-offset magnitude range in px (default 20 60)")
    p_synth.add_argument("--azimuth", type=float, default=None,
                         help="shared view azimuth in radians (default: per-image random)")
    p_synth.add_argument("--size-range", type=int, nargs=2, default=[16, 40],
                         metavar=("LO", "HI"), help="building side lengths in px (default 16 40)")
    p_synth.add_argument("--blur", type=int, default=2, help="evidence blur radius in px (default 2)")
    p_synth.add_argument("--width", type=int, default=512, help="image width (default 512)")
    p_synth.add_argument("--height", type=int, default=512, help="image height (default 512)")
    p_synth.add_argument("--margin", type=int, default=96,
                         help="keep-out border for footprint placement (default 96)")
    p_synth.add_argument("--min-gap", type=int, default=64,
                         help="minimum edge separation between footprints (default 64)")
    p_synth.add_argument("--near-nadir-images", type=int, default=0,
                         help="render the first K images with zero roof offset (default 0)")
    p_synth.add_argument("--seed", type=int, default=0, help="master seed (default 0)")

    p_align = sub.add_parser("align", help="run the denoising aligner over a dataset")
    p_align.add_argument("--dataset", default=None, help=f"dataset directory (default ${DATA_ROOT_ENV})")
    p_align.add_argument("--out", required=True, help="predictions JSON path")
    p_align.add_argument("--config", default=None, help="JSON config file (flags override it)")
    p_align.add_argument("--predictor", choices=["oracle", "correlation"], default=None,
                         help="offset predictor (default correlation)")
    p_align.add_argument("--steps", type=int, default=None, help="denoising steps T (default 5)")
    p_align.add_argument("--delta", type=float, default=None,
                         help="step-weight base; weight_t = delta**(t-1) (default 1.0)")
    p_align.add_argument("--kappa", type=float, default=None,
                         help="oracle contraction toward truth in [0,1] (default 1.0)")
    p_align.add_argument("--rho", type=float, default=None,
                         help="oracle prediction-noise std in px (default 0)")
    p_align.add_argument("--search-radius", type=int, default=None,
                         help="correlation window half-size in px (default 32)")
    p_align.add_argument("--score", choices=list(SCORE_MODES), default=None,
                         help="correlation score (default normalized_overlap)")
    p_align.add_argument("--tta", choices=list(denoise.TTA_STRATEGIES), default=None,
                         help="test-time augmentation strategy (default none)")
    p_align.add_argument("--runs", type=int, default=None, help="t1: number of runs (default 4)")
    p_align.add_argument("--extra-steps", type=int, default=None,
                         help="t1_5: extra steps to average (default 5)")
    p_align.add_argument("--perturb-sigma", type=float, default=None,
                         help="t1: restart perturbation std in px (default 5)")
    p_align.add_argument("--alpha", type=float, nargs=2, default=None, metavar=("AX", "AY"),
                         help="codec offset center (default 0 0)")
    p_align.add_argument("--beta", type=float, default=None, help="codec scale (default 200)")
    p_align.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    p_align.add_argument("--noise-sigma", type=float, default=None,
                         help="replace dataset labels by footprints displaced with this sigma")
    p_align.add_argument("--noise-mode", choices=list(NOISE_MODES), default=None,
                         help="noise mode for --noise-sigma (default rigid)")
    p_align.add_argument("--trajectories", default=None, help="write a JSONL trajectory dump here")
    p_align.add_argument("--strict", action="store_true",
                         help="exit 4 if any instance was flagged")
    p_align.add_argument("--lenient", action="store_true",
                         help="drop invalid dataset records instead of failing")

    p_eval = sub.add_parser("evaluate", help="score predictions against a dataset")
    p_eval.add_argument("--dataset", default=None, help=f"dataset directory (default ${DATA_ROOT_ENV})")
    p_eval.add_argument("--predictions", required=True, help="predictions JSON path")
    p_eval.add_argument("--out", default=None, help="metrics JSON path (default metrics.json next to predictions)")
    p_eval.add_argument("--csv", default=None, help="metrics CSV path (default metrics.csv next to predictions)")
    p_eval.add_argument("--centroid-mode", choices=list(CENTROID_MODES), default=AREA,
                        help="centroid definition for localization error (default area)")
    p_eval.add_argument("--lenient", action="store_true",
                        help="drop invalid dataset records instead of failing")

    p_an = sub.add_parser("analyze", help="schedule energies and convergence diagnostics")
    p_an.add_argument("--grid", action="store_true", help="emit an energy table for a delta/steps grid")
    p_an.add_argument("--delta", type=float, nargs="+", default=None, help="grid delta values")
    p_an.add_argument("--steps", type=int, nargs="+", default=None, help="grid step counts")
    p_an.add_argument("--trajectories", nargs="+", default=None, help="trajectory JSONL dumps to analyze")
    p_an.add_argument("--dataset", default=None,
                      help=f"dataset for ground truth (default ${DATA_ROOT_ENV})")
    p_an.add_argument("--window-start", type=int, default=10,
                      help="first step of the energy windows (default 10)")
    p_an.add_argument("--out", default=None, help="output CSV path")
    p_an.add_argument("--svg", default=None, help="scatter SVG of energy vs final error")
    p_an.add_argument("--report", default=None, help="oscillation report JSON path")
    p_an.add_argument("--lenient", action="store_true",
                      help="drop invalid dataset records instead of failing")
    return parser


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args, parser) -> int:
    if args.images < 1:
        parser.error("--images must be >= 1")
    if not 0 <= args.near_nadir_images <= args.images:
        parser.error("--near-nadir-images must be between 0 and --images")
    try:
        cfg = synth.SceneConfig(
            width=args.width, height=args.height, n_buildings=args.buildings,
            size_range=tuple(args.size_range), height_range=tuple(args.height_range),
            view_azimuth=args.azimuth, osm_nu=args.nu, blur_radius=args.blur,
            margin=args.margin, min_gap=args.min_gap, seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))
    try:
        manifest = synth.build_dataset(cfg, args.images, args.out,
                                       near_nadir_images=args.near_nadir_images)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    _, records, _ = dataio.load_dataset(args.out)
    mean_disp = float(np.mean([rec.f_vec.norm() for rec in records])) if records else 0.0
    _echo({
        "images": len(manifest.images),
        "instances": len(records),
        "seed": args.seed,
        "mean_initial_displacement": mean_disp,
        "out": args.out,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------

def _build_predictor(cfg: dict):
    if cfg["predictor"] == "oracle":
        params = OraclePredictorParams(kappa=cfg["kappa"], rho=cfg["rho"], seed=cfg["seed"])
        return OraclePredictor(params)
    return CorrelationPredictor(search_radius=cfg["search_radius"], score=cfg["score"])


def _cmd_align(args, parser) -> int:
    dataset = _dataset_path(args, parser)
    file_config = dataio.read_json(args.config) if args.config else {}
    cfg = _effective(args, file_config, ALIGN_DEFAULTS)
    if cfg["steps"] < 1:
        parser.error("--steps must be >= 1")
    if cfg["tta"] != denoise.TTA_NONE and args.trajectories:
        parser.error("--trajectories requires --tta none")

    manifest, records, channels = dataio.load_dataset(dataset, lenient=args.lenient)
    schedule = denoise.Schedule(cfg["delta"], cfg["steps"])
    predictor = _build_predictor(cfg)
    codec = OffsetCodec(OffsetVec(*cfg["alpha"]), cfg["beta"])
    tta_cfg = denoise.TTAConfig(strategy=cfg["tta"], runs=cfg["runs"],
                                extra_steps=cfg["extra_steps"],
                                perturb_sigma=cfg["perturb_sigma"], seed=cfg["seed"])

    by_image = {}
    for rec in records:
        by_image.setdefault(rec.image_id, []).append(rec)

    preds_by_id = {}
    runs = {}
    epe_sums = np.zeros(cfg["steps"] + 1)
    final_epe_sum = 0.0
    loss_sum = 0.0
    total = 0
    flagged_total = 0
    for image in manifest.images:
        image_records = by_image.get(image.id, [])
        if not image_records:
            continue
        truth = HiddenTruth(
            np.array([centroid(r.footprint).as_array() for r in image_records]),
            np.array([centroid(r.roof).as_array() for r in image_records]),
        )
        ctx = PredictorContext(image.width, image.height, channels[image.id], truth)
        batch = pad_batch([r.osm for r in image_records])
        true_f = np.array([[r.f_vec.dx, r.f_vec.dy] for r in image_records])
        if cfg["noise_sigma"] is not None:
            noise_cfg = NoiseConfig(cfg["noise_sigma"], cfg["noise_mode"], cfg["seed"])
            footprints = pad_batch([r.footprint for r in image_records])
            batch, true_f = inject(footprints, sample_noise(footprints, noise_cfg))

        if cfg["tta"] == denoise.TTA_NONE:
            final, traj = denoise.denoise_footprint(ctx, batch, predictor, schedule,
                                                    record_positions=False)
            flagged = traj.flagged
            notes = traj.notes
            epe_sums += traj.mean_epe_series() * len(image_records)
            if args.trajectories:
                runs[f"img_{image.id:03d}"] = (traj, [r.id for r in image_records])
        else:
            if cfg["tta"] == denoise.TTA_T1:
                final = denoise.tta_t1(ctx, batch, predictor, schedule, tta_cfg)
            else:
                final = denoise.tta_t15(ctx, batch, predictor, schedule, tta_cfg)
            flagged = np.zeros(len(image_records), dtype=bool)
            notes = ("",) * len(image_records)
        final_epe_sum += float(np.linalg.norm(
            batch_centroids(final) - truth.footprint_centroids, axis=1).sum())

        lift = denoise.lift_to_roof(ctx, final, predictor, frozen=flagged)
        total_correction = batch_centroids(final) - batch_centroids(batch)
        enc_pred_f = encode_array(codec, total_correction)
        enc_true_f = encode_array(codec, true_f)
        enc_pred_o = encode_array(codec, lift.offsets)
        enc_true_o = encode_array(codec, np.array([[r.o_vec.dx, r.o_vec.dy] for r in image_records]))
        for j, rec in enumerate(image_records):
            ef = enc_pred_f[j] - enc_true_f[j]
            eo = enc_pred_o[j] - enc_true_o[j]
            loss_sum += 0.1 * (_smooth_sum(ef) + _smooth_sum(eo))
            flags = sorted({n for n in (notes[j], lift.notes[j]) if n})
            if flagged[j] or lift.flagged[j]:
                flags.append("flagged")
                flagged_total += 1
            preds_by_id[rec.id] = dataio.PredictionRecord(
                id=rec.id,
                footprint=final.instance(j),
                roof=lift.roofs.instance(j),
                o_hat=OffsetVec(float(lift.offsets[j, 0]), float(lift.offsets[j, 1])),
                flags=tuple(flags),
            )
        total += len(image_records)

    config_echo = dict(cfg)
    config_echo["alpha"] = list(cfg["alpha"])
    config_echo["dataset"] = str(dataset)
    preds = [preds_by_id[rec.id] for rec in records]
    try:
        dataio.write_predictions(preds, args.out, config=config_echo,
                                 trajectory=args.trajectories)
        if args.trajectories:
            dataio.write_trajectories(runs, args.trajectories)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    per_step = list(epe_sums / total) if cfg["tta"] == denoise.TTA_NONE and total else []
    _echo({
        "images": len(manifest.images),
        "instances": total,
        "flagged": flagged_total,
        "per_step_mean_epe": per_step,
        "final_mean_epe_footprint": final_epe_sum / total if total else 0.0,
        "alignment_loss": loss_sum / total if total else 0.0,
        "out": args.out,
    })
    if args.strict and flagged_total:
        return EXIT_FLAGGED
    return EXIT_OK


def _smooth_sum(err: np.ndarray) -> float:
    total = 0.0
    for e in err:
        a = abs(float(e))
        total += 0.5 * a * a if a < 1.0 else a - 0.5
    return total


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _cmd_evaluate(args, parser) -> int:
    dataset = _dataset_path(args, parser)
    manifest, records, _ = dataio.load_dataset(dataset, lenient=args.lenient)
    preds = dataio.load_predictions(args.predictions, records)
    sizes = {img.id: (img.width, img.height) for img in manifest.images}
    report = metrics.evaluate(records, preds, sizes, centroid_mode=args.centroid_mode)

    pred_payload = dataio.read_json(args.predictions)
    out_json = args.out or os.path.join(os.path.dirname(args.predictions) or ".", "metrics.json")
    out_csv = args.csv or os.path.join(os.path.dirname(args.predictions) or ".", "metrics.csv")
    payload = {"format_version": dataio.FORMAT_VERSION,
               "config": pred_payload.get("config", {}), **report.to_json()}
    try:
        dataio.write_json(payload, out_json)
        rows = report.to_json()
        lines = ["metric,value\n"]
        for key in ("mf", "mi", "mean_epe_roof", "mean_epe_footprint", "ale", "instances"):
            lines.append(f"{key},{dataio.format_float(float(rows[key]))}\n")
        for cls in ("roof", "footprint"):
            for name, value in sorted(rows[cls].items()):
                lines.append(f"{cls}_{name},{dataio.format_float(value)}\n")
        with open(out_csv, "wb") as fh:
            fh.write("".join(lines).encode("ascii"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    _echo({
        "mf": report.mf, "mi": report.mi,
        "mean_epe_roof": report.mean_epe_roof,
        "mean_epe_footprint": report.mean_epe_footprint,
        "ale": report.ale,
        "instances": report.instances,
        "out": out_json,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _cmd_analyze(args, parser) -> int:
    if args.grid == bool(args.trajectories):
        parser.error("use exactly one of --grid or --trajectories")
    if args.grid:
        if not args.delta or not args.steps:
            parser.error("--grid needs --delta and --steps")
        if any(d <= 0 or not np.isfinite(d) for d in args.delta):
            parser.error("grid delta values must be positive and finite")
        if any(t < 1 for t in args.steps):
            parser.error("grid step counts must be >= 1")
        rows = [(d, t, denoise.energy(d, t)) for d in args.delta for t in args.steps]
        out = args.out or "energy_grid.csv"
        try:
            dataio.write_grid_csv(out, rows)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        for d, t, e in rows:
            print(f"{d:g},{t},{e:.4f}")
        return EXIT_OK

    dataset = _dataset_path(args, parser)
    _, records, _ = dataio.load_dataset(dataset, lenient=args.lenient)
    truth_by_id = {rec.id: centroid(rec.footprint).as_array() for rec in records}

    reports = {}
    points = []
    out_csv = args.out or "convergence.csv"
    try:
        series_by_run = {}
        for path in args.trajectories:
            for run_id, series in dataio.load_trajectories(path).items():
                series_by_run[run_id] = series
        for run_id in sorted(series_by_run):
            series = series_by_run[run_id]
            steps = series.weights.shape[0]
            if steps < 2:
                parser.error(f"run {run_id!r} has {steps} step(s); analysis needs at least 2")
            if args.window_start >= steps:
                parser.error(f"--window-start {args.window_start} >= steps {steps}")
            delta = float(series.weights[1] / series.weights[0])
            schedule = denoise.Schedule(delta, steps)
            traj = denoise.Trajectory(
                weights=series.weights,
                raw_offsets=series.raw_offsets,
                cumulative=series.centroids - series.centroids[0:1],
                centroids=series.centroids,
                flagged=np.zeros(len(series.instance_ids), dtype=bool),
                notes=("",) * len(series.instance_ids),
            )
            truth = np.array([truth_by_id[rid] for rid in series.instance_ids])
            report = denoise.analyze_oscillation(traj, schedule, args.window_start, truth=truth)
            reports[run_id] = report
            points.append((report.energy, report.mean_epe[-1]))
            suffix = "" if len(series_by_run) == 1 else f"_{run_id}"
            base, ext = os.path.splitext(out_csv)
            dataio.write_convergence_csv(f"{base}{suffix}{ext or '.csv'}",
                                         report.mean_epe, report.window_means,
                                         args.window_start)
        if args.svg:
            dataio.write_scatter_svg(args.svg, points, "energy", "final mean EPE (px)",
                                     "schedule energy vs final error")
    except KeyError as exc:
        print(f"error: trajectory references unknown record id {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    payload = {run_id: {
        "energy": rep.energy,
        "converged": rep.converged,
        "relative_spread": rep.relative_spread,
        "stationary_radius": rep.stationary_radius,
        "window_start": rep.window_start,
        "final_mean_epe": rep.mean_epe[-1],
    } for run_id, rep in sorted(reports.items())}
    if args.report:
        dataio.write_json(payload, args.report)
    _echo(payload)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args, parser)
        if args.command == "align":
            return _cmd_align(args, parser)
        if args.command == "evaluate":
            return _cmd_evaluate(args, parser)
        if args.command == "analyze":
            return _cmd_analyze(args, parser)
    except (dataio.ValidationError, dataio.DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
