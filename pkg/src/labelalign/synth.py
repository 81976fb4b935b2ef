"""Synthetic benchmark scenes: buildings with consistent label/footprint/roof geometry.

Each scene holds non-overlapping rectilinear footprints (axis-aligned
rectangles and L-shapes) on an integer lattice. Per building, a height is
drawn and turned into a roof offset along the scene's shared view azimuth
(magnitude = height, direction = view), and the "historical" label is the
footprint rigidly displaced by a Gaussian draw. The offset triple is exact
by construction: roof_correction = label_correction + roof_offset.

Evidence channels are rendered as blurred binary union masks of the
footprints and roofs, standing in for imagery so the correlation matcher
has something to lock onto without any appearance modeling.

All randomness is keyed from the config seed; identical configs produce
identical scenes and identical dataset bytes. Offsets are quantized to six
decimals at creation time so in-memory values survive serialization
unchanged.
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import SCENE_STREAM, derive_seed, keyed_rng
from .codec import OffsetVec, compose
from .geometry import Polygon, centroid, rasterize, translate
from .predictor import FOOTPRINT_CHANNEL, ROOF_CHANNEL, HiddenTruth, PredictorContext

logger = logging.getLogger(__name__)

NEAR_NADIR = "near_nadir"
OFF_NADIR = "off_nadir"


def quantize6(x: float) -> float:
    """Snap to six decimals, the file-format resolution; normalizes -0.0."""
    v = float(f"{x:.6f}")
    return 0.0 if v == 0.0 else v


@dataclass(frozen=True)
class SceneConfig:
    width: int = 512
    height: int = 512
    n_buildings: int = 8
    size_range: tuple[int, int] = (16, 40)
    height_range: tuple[float, float] = (20.0, 60.0)
    view_azimuth: float | None = None
    osm_nu: float = 20.0
    blur_radius: int = 2
    margin: int = 96
    min_gap: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        if self.n_buildings < 1:
            raise ValueError("need at least one building")
        lo, hi = self.size_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad size_range {self.size_range}")
        hlo, hhi = self.height_range
        if not (0 <= hlo <= hhi):
            raise ValueError(f"bad height_range {self.height_range}")
        if self.osm_nu < 0:
            raise ValueError(f"osm_nu must be non-negative, got {self.osm_nu}")
        if self.blur_radius < 0:
            raise ValueError(f"blur_radius must be non-negative, got {self.blur_radius}")


@dataclass(frozen=True, eq=False)
class SceneInstance:
    """One building: label, footprint and roof polygons plus the offset triple."""

    osm: Polygon
    footprint: Polygon
    roof: Polygon
    f_vec: OffsetVec
    o_vec: OffsetVec
    r_vec: OffsetVec


@dataclass(frozen=True, eq=False)
class SceneChannels:
    """Rendered evidence layers for one scene."""

    width: int
    height: int
    footprint_evidence: np.ndarray
    roof_evidence: np.ndarray

    def as_mapping(self) -> dict[str, np.ndarray]:
        return {FOOTPRINT_CHANNEL: self.footprint_evidence, ROOF_CHANNEL: self.roof_evidence}

    def context(self, instances: list[SceneInstance] | None = None,
                with_truth: bool = False) -> PredictorContext:
        truth = None
        if with_truth:
            truth = HiddenTruth(
                np.array([centroid(inst.footprint).as_array() for inst in instances]),
                np.array([centroid(inst.roof).as_array() for inst in instances]),
            )
        return PredictorContext(self.width, self.height, self.as_mapping(), truth)


def _footprint_shape(rng: np.random.Generator, x0: int, y0: int, w: int, h: int) -> Polygon:
    """Axis-aligned rectangle or L-shape with integer vertices."""
    if rng.random() < 0.5:
        verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    else:
        nw = max(2, w // 2)
        nh = max(2, h // 2)
        corner = int(rng.integers(4))
        # rectangle minus one corner notch, counter-clockwise in image coords
        if corner == 0:    # notch at (x0+w, y0+h)
            verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h - nh),
                     (x0 + w - nw, y0 + h - nh), (x0 + w - nw, y0 + h), (x0, y0 + h)]
        elif corner == 1:  # notch at (x0, y0+h)
            verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0 + nw, y0 + h),
                     (x0 + nw, y0 + h - nh), (x0, y0 + h - nh)]
        elif corner == 2:  # notch at (x0+w, y0)
            verts = [(x0, y0), (x0 + w - nw, y0), (x0 + w - nw, y0 + nh),
                     (x0 + w, y0 + nh), (x0 + w, y0 + h), (x0, y0 + h)]
        else:              # notch at (x0, y0)
            verts = [(x0 + nw, y0), (x0 + w, y0), (x0 + w, y0 + h),
                     (x0, y0 + h), (x0, y0 + nh), (x0 + nw, y0 + nh)]
    return Polygon(np.array(verts, dtype=np.float64))


def sample_instances(cfg: SceneConfig) -> list[SceneInstance]:
    """Sample building geometry for one scene (no rendering).

    Footprints are placed in distinct cells of a jittered grid, each inset by
    half the minimum gap, which guarantees pairwise disjointness and an edge
    separation of at least ``min_gap``. Keeping that separation above twice
    the correlation search radius prevents a displaced label from ever
    reaching (and locking onto) a neighboring building inside its window.
    Cells too small for the requested sizes are skipped with a warning.
    """
    rng = keyed_rng(cfg.seed, SCENE_STREAM)
    azimuth = cfg.view_azimuth
    if azimuth is None:
        azimuth = float(rng.uniform(0.0, 2.0 * math.pi))
    lo, hi = cfg.size_range
    span_x = cfg.width - 2 * cfg.margin
    span_y = cfg.height - 2 * cfg.margin
    if span_x <= 0 or span_y <= 0:
        raise ValueError("margin leaves no usable area")
    k = math.isqrt(cfg.n_buildings)
    if k * k < cfg.n_buildings:
        k += 1
    cell_w = span_x // k
    cell_h = span_y // k
    inset = (cfg.min_gap + 1) // 2
    cells = rng.permutation(k * k)[:cfg.n_buildings]

    placed: list[tuple[int, int, int, int]] = []
    for cell in cells:
        cx = int(cell) % k
        cy = int(cell) // k
        max_w = min(hi, cell_w - 2 * inset)
        max_h = min(hi, cell_h - 2 * inset)
        if max_w < lo or max_h < lo:
            continue
        w = int(rng.integers(lo, max_w + 1))
        h = int(rng.integers(lo, max_h + 1))
        x_lo = cfg.margin + cx * cell_w + inset
        y_lo = cfg.margin + cy * cell_h + inset
        x0 = int(rng.integers(x_lo, x_lo + (cell_w - 2 * inset) - w + 1))
        y0 = int(rng.integers(y_lo, y_lo + (cell_h - 2 * inset) - h + 1))
        placed.append((x0, y0, w, h))
    if len(placed) < cfg.n_buildings:
        logger.warning("placed %d of %d buildings (seed %d)",
                       len(placed), cfg.n_buildings, cfg.seed)

    instances = []
    for x0, y0, w, h in placed:
        footprint = _footprint_shape(rng, x0, y0, w, h)
        height = float(rng.uniform(*cfg.height_range))
        o_vec = OffsetVec(quantize6(height * math.cos(azimuth)),
                          quantize6(height * math.sin(azimuth)))
        draw = rng.normal(0.0, cfg.osm_nu, 2)
        f_vec = OffsetVec(quantize6(draw[0]), quantize6(draw[1]))
        roof = translate(footprint, o_vec)
        osm = translate(footprint, OffsetVec(-f_vec.dx, -f_vec.dy))
        instances.append(SceneInstance(
            osm=osm, footprint=footprint, roof=roof,
            f_vec=f_vec, o_vec=o_vec, r_vec=compose(f_vec, o_vec),
        ))
    return instances


def _box_blur(mask: np.ndarray, radius: int) -> np.ndarray:
    """Normalized (2r+1)^2 box filter with zero padding, exact integer sums."""
    if radius == 0:
        return mask.astype(np.float64)
    side = 2 * radius + 1
    padded = np.pad(mask.astype(np.int64), radius)
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = mask.shape
    sums = (ii[side:side + h, side:side + w] - ii[:h, side:side + w]
            - ii[side:side + h, :w] + ii[:h, :w])
    return np.clip(sums / float(side * side), 0.0, 1.0)


def render_channels(instances: list[SceneInstance], cfg: SceneConfig) -> SceneChannels:
    """Blurred binary union masks of footprints and roofs."""
    fp = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    rf = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    for inst in instances:
        fp |= rasterize(inst.footprint, cfg.width, cfg.height).pixels
        rf |= rasterize(inst.roof, cfg.width, cfg.height).pixels
    return SceneChannels(
        cfg.width, cfg.height,
        _box_blur(fp, cfg.blur_radius),
        _box_blur(rf, cfg.blur_radius),
    )


def generate_scene(cfg: SceneConfig) -> tuple[SceneChannels, list[SceneInstance]]:
    instances = sample_instances(cfg)
    return render_channels(instances, cfg), instances


def image_config(cfg: SceneConfig, image_index: int, near_nadir: bool = False) -> SceneConfig:
    """Per-image config with a derived seed; near-nadir images get zero height."""
    derived = replace(cfg, seed=derive_seed(cfg.seed, image_index))
    if near_nadir:
        derived = replace(derived, height_range=(0.0, 0.0))
    return derived


def build_dataset(cfg: SceneConfig, n_images: int, out_dir, near_nadir_images: int = 0):
    """Generate a dataset directory; returns the written manifest.

    The first ``near_nadir_images`` images are rendered with zero roof offset
    and tagged accordingly; the rest use the configured height range.
    """
    from . import dataio  # deferred: dataio depends on geometry/codec only

    if n_images < 1:
        raise ValueError(f"need at least one image, got {n_images}")
    if not 0 <= near_nadir_images <= n_images:
        raise ValueError("near_nadir_images out of range")
    images = []
    records = []
    channels = {}
    next_id = 0
    for idx in range(n_images):
        near = idx < near_nadir_images
        icfg = image_config(cfg, idx, near_nadir=near)
        scene_channels, instances = generate_scene(icfg)
        images.append(dataio.ImageEntry(
            id=idx, width=cfg.width, height=cfg.height,
            view=NEAR_NADIR if near else OFF_NADIR,
            channels={
                FOOTPRINT_CHANNEL: f"channels/img_{idx:03d}_{FOOTPRINT_CHANNEL}.pgm",
                ROOF_CHANNEL: f"channels/img_{idx:03d}_{ROOF_CHANNEL}.pgm",
            },
        ))
        channels[idx] = scene_channels.as_mapping()
        for inst in instances:
            records.append(dataio.AnnotationRecord(
                id=next_id, image_id=idx,
                osm=inst.osm, footprint=inst.footprint, roof=inst.roof,
                f_vec=inst.f_vec, o_vec=inst.o_vec, r_vec=inst.r_vec,
            ))
            next_id += 1
    manifest = dataio.DatasetManifest(
        images=images,
        generator={
            "width": cfg.width, "height": cfg.height,
            "n_buildings": cfg.n_buildings,
            "size_range": list(cfg.size_range),
            "height_range": [float(v) for v in cfg.height_range],
            "view_azimuth": cfg.view_azimuth,
            "osm_nu": float(cfg.osm_nu),
            "blur_radius": cfg.blur_radius,
            "margin": cfg.margin,
            "min_gap": cfg.min_gap,
            "master_seed": cfg.seed,
            "images": n_images,
            "near_nadir_images": near_nadir_images,
        },
    )
    dataio.write_dataset(manifest, records, channels, out_dir)
    return manifest
