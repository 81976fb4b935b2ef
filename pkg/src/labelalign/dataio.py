"""Bit-exact file formats: datasets, predictions, metrics, trajectories.

All JSON output is canonical — sorted keys, two-space indent, LF line
endings, floats fixed to six decimals — so semantically equal payloads are
byte-identical and reruns can be diffed. Raster channels are stored as
binary PGM (P5, maxval 255, byte = round(255 * evidence)); annotations and
predictions are JSON. Every file embeds ``format_version`` and loading
refuses other versions.

Directory layout::

    manifest.json                          image table + generator echo
    annotations.json                       per-instance polygons and offsets
    channels/img_<id>_<channel>.pgm        evidence rasters
    predictions.json                       aligner output (written elsewhere)
    metrics.json / metrics.csv             evaluation reports

Loading validates every record: unique ids, resolvable image references,
>= 3 finite vertices per polygon, and the offset closure
|f_vec + o_vec - r_vec| <= 1e-6 px. Offending records fail the load unless
``lenient`` is set, in which case they are dropped with a warning.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import OffsetVec
from .geometry import Polygon

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"
CLOSURE_TOL = 1e-6

ANNOTATIONS_FILE = "annotations.json"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.json"


class DataFormatError(ValueError):
    """File does not parse as the expected format/version."""


class ValidationError(ValueError):
    """Record-level validation failures; offenders listed in ``rejected``."""

    def __init__(self, message: str, rejected: list[tuple[int, str]]):
        super().__init__(message)
        self.rejected = rejected


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite float in output: {x}")
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return f"{x:.6f}"


def _is_scalar(v) -> bool:
    return v is None or isinstance(v, (bool, int, float, str))


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"unsupported scalar {type(v).__name__}")


def _write(obj, out: list, depth: int):
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if _is_scalar(obj):
        out.append(_scalar(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj)
        for k, key in enumerate(keys):
            if not isinstance(key, str):
                raise TypeError(f"JSON keys must be strings, got {type(key).__name__}")
            out.append(f"{inner}{json.dumps(key)}: ")
            _write(obj[key], out, depth + 1)
            out.append(",\n" if k + 1 < len(keys) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        if all(_is_scalar(v) for v in items):
            out.append("[" + ", ".join(_scalar(v) for v in items) + "]")
            return
        out.append("[\n")
        for k, v in enumerate(items):
            out.append(inner)
            _write(v, out, depth + 1)
            out.append(",\n" if k + 1 < len(items) else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"unsupported JSON value {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    out: list[str] = []
    _write(obj, out, 0)
    return "".join(out) + "\n"


def canonical_dumps_compact(obj) -> str:
    """Single-line canonical form (for JSON-lines files)."""
    if _is_scalar(obj):
        return _scalar(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(
            f"{json.dumps(k)}: {canonical_dumps_compact(obj[k])}" for k in sorted(obj)
        ) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(canonical_dumps_compact(v) for v in obj) + "]"
    raise TypeError(f"unsupported JSON value {type(obj).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_bytes(canonical_dumps(obj).encode("ascii"))


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from exc


def _check_version(payload: dict, path) -> None:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: format_version {version!r} is not supported (expected {FORMAT_VERSION!r})"
        )


# ---------------------------------------------------------------------------
# PGM channels
# ---------------------------------------------------------------------------

def write_pgm(evidence: np.ndarray, path) -> None:
    """Store an evidence layer as binary PGM; byte value = round(255 * evidence)."""
    arr = np.asarray(evidence, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"evidence must be 2-D, got shape {arr.shape}")
    data = np.rint(arr * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise DataFormatError(f"{path}: expected binary PGM with maxval 255")
    try:
        w, h = (int(tok) for tok in parts[1].split())
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad PGM dimensions") from exc
    data = parts[3]
    if len(data) != w * h:
        raise DataFormatError(f"{path}: PGM payload is {len(data)} bytes, expected {w * h}")
    img = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return img.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Dataset records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageEntry:
    id: int
    width: int
    height: int
    view: str
    channels: dict[str, str]


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    images: list[ImageEntry]
    generator: dict = field(default_factory=dict)
    annotations: str = ANNOTATIONS_FILE


@dataclass(frozen=True, eq=False)
class AnnotationRecord:
    id: int
    image_id: int
    osm: Polygon
    footprint: Polygon
    roof: Polygon
    f_vec: OffsetVec
    o_vec: OffsetVec
    r_vec: OffsetVec

    def closure_error(self) -> float:
        return math.hypot(self.f_vec.dx + self.o_vec.dx - self.r_vec.dx,
                          self.f_vec.dy + self.o_vec.dy - self.r_vec.dy)


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    id: int
    footprint: Polygon
    roof: Polygon
    o_hat: OffsetVec
    flags: tuple[str, ...] = ()


def _poly_json(poly: Polygon) -> list:
    return [[float(x), float(y)] for x, y in poly.vertices]


def _vec_json(v: OffsetVec) -> list:
    return [v.dx, v.dy]


def _poly_from_json(data) -> Polygon:
    return Polygon(np.asarray(data, dtype=np.float64))


def _vec_from_json(data) -> OffsetVec:
    return OffsetVec.from_array(np.asarray(data, dtype=np.float64))


def write_dataset(manifest: DatasetManifest, records: list[AnnotationRecord],
                  channels: dict[int, dict[str, np.ndarray]], path) -> None:
    """Write a dataset directory; the manifest goes last so partial writes are obvious."""
    root = Path(path)
    (root / "channels").mkdir(parents=True, exist_ok=True)
    for image in manifest.images:
        per_image = channels.get(image.id, {})
        for name, rel in sorted(image.channels.items()):
            if name not in per_image:
                raise ValueError(f"missing channel {name!r} for image {image.id}")
            write_pgm(per_image[name], root / rel)
    write_json({
        "format_version": FORMAT_VERSION,
        "records": [{
            "id": rec.id,
            "image_id": rec.image_id,
            "osm": _poly_json(rec.osm),
            "footprint": _poly_json(rec.footprint),
            "roof": _poly_json(rec.roof),
            "f_vec": _vec_json(rec.f_vec),
            "o_vec": _vec_json(rec.o_vec),
            "r_vec": _vec_json(rec.r_vec),
        } for rec in records],
    }, root / manifest.annotations)
    write_json({
        "format_version": FORMAT_VERSION,
        "generator": manifest.generator,
    }, root / CONFIG_FILE)
    write_json({
        "format_version": FORMAT_VERSION,
        "annotations": manifest.annotations,
        "generator": manifest.generator,
        "images": [{
            "id": img.id, "width": img.width, "height": img.height,
            "view": img.view, "channels": img.channels,
        } for img in manifest.images],
    }, root / MANIFEST_FILE)


def load_dataset(path, lenient: bool = False):
    """Load and validate a dataset; returns (manifest, records, channels)."""
    root = Path(path)
    manifest_payload = read_json(root / MANIFEST_FILE)
    _check_version(manifest_payload, root / MANIFEST_FILE)
    images = []
    seen_ids = set()
    for entry in manifest_payload["images"]:
        img = ImageEntry(
            id=int(entry["id"]), width=int(entry["width"]), height=int(entry["height"]),
            view=str(entry["view"]), channels=dict(entry["channels"]),
        )
        if img.id in seen_ids:
            raise ValidationError(f"duplicate image id {img.id}", [(img.id, "duplicate image id")])
        seen_ids.add(img.id)
        for rel in img.channels.values():
            if not (root / rel).is_file():
                raise DataFormatError(f"missing channel file {root / rel}")
        images.append(img)
    manifest = DatasetManifest(
        images=images,
        generator=dict(manifest_payload.get("generator", {})),
        annotations=manifest_payload["annotations"],
    )

    ann_payload = read_json(root / manifest.annotations)
    _check_version(ann_payload, root / manifest.annotations)
    image_ids = {img.id for img in images}
    records = []
    rejected: list[tuple[int, str]] = []
    record_ids = set()
    for raw in ann_payload["records"]:
        rid = int(raw["id"])
        if rid in record_ids:
            rejected.append((rid, "duplicate record id"))
            continue
        record_ids.add(rid)
        try:
            rec = AnnotationRecord(
                id=rid, image_id=int(raw["image_id"]),
                osm=_poly_from_json(raw["osm"]),
                footprint=_poly_from_json(raw["footprint"]),
                roof=_poly_from_json(raw["roof"]),
                f_vec=_vec_from_json(raw["f_vec"]),
                o_vec=_vec_from_json(raw["o_vec"]),
                r_vec=_vec_from_json(raw["r_vec"]),
            )
        except ValueError as exc:
            rejected.append((rid, str(exc)))
            continue
        if rec.image_id not in image_ids:
            rejected.append((rid, f"unknown image_id {rec.image_id}"))
            continue
        err = rec.closure_error()
        if err > CLOSURE_TOL:
            rejected.append((rid, f"offset closure violated by {err:.2e} px"))
            continue
        records.append(rec)
    if rejected:
        if not lenient:
            listing = "; ".join(f"record {rid}: {why}" for rid, why in rejected)
            raise ValidationError(f"{len(rejected)} records rejected: {listing}", rejected)
        logger.warning("dropped %d invalid records", len(rejected))

    channels = {}
    for img in images:
        channels[img.id] = {name: load_pgm(root / rel) for name, rel in img.channels.items()}
    return manifest, records, channels


# ---------------------------------------------------------------------------
# Predictions
# ---------------------------------------------------------------------------

def write_predictions(preds: list[PredictionRecord], path, config: dict | None = None,
                      trajectory: str | None = None) -> None:
    write_json({
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "trajectory": trajectory,
        "records": [{
            "id": p.id,
            "footprint": _poly_json(p.footprint),
            "roof": _poly_json(p.roof),
            "o_hat": _vec_json(p.o_hat),
            "flags": list(p.flags),
        } for p in preds],
    }, path)


def load_predictions(path, records: list[AnnotationRecord]) -> list[PredictionRecord]:
    """Load predictions and verify they biject onto the dataset record ids.

    Returns predictions in dataset record order.
    """
    payload = read_json(path)
    _check_version(payload, path)
    rejected: list[tuple[int, str]] = []
    by_id = {}
    for raw in payload["records"]:
        rid = int(raw["id"])
        if rid in by_id:
            rejected.append((rid, "duplicate prediction id"))
            continue
        try:
            by_id[rid] = PredictionRecord(
                id=rid,
                footprint=_poly_from_json(raw["footprint"]),
                roof=_poly_from_json(raw["roof"]),
                o_hat=_vec_from_json(raw["o_hat"]),
                flags=tuple(str(f) for f in raw.get("flags", [])),
            )
        except ValueError as exc:
            rejected.append((rid, str(exc)))
    wanted = {rec.id for rec in records}
    missing = sorted(wanted - set(by_id))
    extra = sorted(set(by_id) - wanted)
    for rid in missing:
        rejected.append((rid, "prediction missing"))
    for rid in extra:
        rejected.append((rid, "prediction for unknown record id"))
    if rejected:
        listing = "; ".join(f"id {rid}: {why}" for rid, why in rejected)
        raise ValidationError(f"prediction file invalid: {listing}", rejected)
    return [by_id[rec.id] for rec in records]


# ---------------------------------------------------------------------------
# Trajectory dumps and analysis artifacts
# ---------------------------------------------------------------------------

def write_trajectories(runs: dict, path) -> None:
    """JSON-lines trajectory dump, one record per (run, step, instance).

    ``runs`` maps run id -> (Trajectory, instance_ids). Step 0 rows carry the
    starting centroid with zero weight and offset.
    """
    lines = []
    for run_id in sorted(runs):
        traj, ids = runs[run_id]
        for t in range(traj.steps + 1):
            for j, rid in enumerate(ids):
                weight = float(traj.weights[t - 1]) if t >= 1 else 0.0
                off = traj.raw_offsets[t - 1, j] if t >= 1 else (0.0, 0.0)
                lines.append(canonical_dumps_compact({
                    "run": run_id,
                    "instance": int(rid),
                    "t": t,
                    "weight": weight,
                    "raw_offset": [float(off[0]), float(off[1])],
                    "centroid": [float(traj.centroids[t, j, 0]), float(traj.centroids[t, j, 1])],
                }) + "\n")
    Path(path).write_bytes("".join(lines).encode("ascii"))


@dataclass(frozen=True, eq=False)
class TrajectorySeries:
    """Trajectory arrays reloaded from a JSONL dump (one per run id)."""

    instance_ids: list[int]
    weights: np.ndarray      # (T,)
    raw_offsets: np.ndarray  # (T, m, 2)
    centroids: np.ndarray    # (T+1, m, 2)


def load_trajectories(path) -> dict[str, TrajectorySeries]:
    rows: dict[str, dict] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            run = rows.setdefault(rec["run"], {})
            run.setdefault(rec["t"], []).append(rec)
    out = {}
    for run_id, by_step in rows.items():
        steps = sorted(by_step)
        if steps != list(range(len(steps))):
            raise DataFormatError(f"{path}: run {run_id!r} has gaps in its step sequence")
        ids = [r["instance"] for r in sorted(by_step[0], key=lambda r: r["instance"])]
        t_max = steps[-1]
        m = len(ids)
        weights = np.zeros(t_max)
        raw = np.zeros((t_max, m, 2))
        cents = np.zeros((t_max + 1, m, 2))
        index = {rid: j for j, rid in enumerate(ids)}
        for t in steps:
            recs = by_step[t]
            if len(recs) != m:
                raise DataFormatError(f"{path}: run {run_id!r} step {t} has {len(recs)} rows, expected {m}")
            for rec in recs:
                j = index[rec["instance"]]
                cents[t, j] = rec["centroid"]
                if t >= 1:
                    weights[t - 1] = rec["weight"]
                    raw[t - 1, j] = rec["raw_offset"]
        out[run_id] = TrajectorySeries(ids, weights, raw, cents)
    return out


def write_convergence_csv(path, mean_epe, window_means, window_start: int) -> None:
    """CSV of per-step mean error and running window energy (blank before start)."""
    lines = ["t,mean_epe,windowed_energy\n"]
    epe = list(mean_epe)
    wm = list(window_means)
    for t in range(len(epe)):
        if t >= window_start and t - window_start < len(wm):
            w = format_float(float(wm[t - window_start]))
        else:
            w = ""
        lines.append(f"{t},{format_float(float(epe[t]))},{w}\n")
    Path(path).write_bytes("".join(lines).encode("ascii"))


def write_grid_csv(path, rows: list[tuple[float, int, float]]) -> None:
    """CSV of (delta, steps, energy); energy printed with four decimals."""
    lines = ["delta,steps,energy\n"]
    for delta, steps, e in rows:
        lines.append(f"{delta:g},{steps},{e:.4f}\n")
    Path(path).write_bytes("".join(lines).encode("ascii"))


def write_scatter_svg(path, points: list[tuple[float, float]], xlabel: str, ylabel: str,
                      title: str) -> None:
    """Minimal self-contained scatter plot; deterministic output bytes."""
    width, height, pad = 640, 480, 60
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (x1 - x0) or 1.0
    sy = (y1 - y0) or 1.0

    def px(x):
        return pad + (x - x0) / sx * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / sy * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 16}" text-anchor="middle" font-size="12">{xlabel}</text>',
        (f'<text x="16" y="{height // 2}" text-anchor="middle" font-size="12" '
         f'transform="rotate(-90 16 {height // 2})">{ylabel}</text>'),
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.3f}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-size="10">{x1:.3f}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{y0:.3f}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{y1:.3f}</text>',
    ]
    for x, y in points:
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="steelblue" fill-opacity="0.7"/>')
    parts.append("</svg>\n")
    Path(path).write_bytes("\n".join(parts).encode("ascii"))
