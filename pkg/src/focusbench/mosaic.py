"""Mosaic planning and composition.

A mosaic is a 2x2 grid of four dataset images: two of the target class and
two of other classes. Quadrant keys map to pixel regions

    TL rows [0, H/2) cols [0, W/2)      TR rows [0, H/2) cols [W/2, W)
    BL rows [H/2, H) cols [0, W/2)      BR rows [H/2, H) cols [W/2, W)

and the six possible placements of the target pair are named layouts. Each
source image is scaled so its shorter side matches the quadrant side
(bilinear), center-cropped to the quadrant, and placed without overlap or
gap; pixel values are otherwise untouched.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .attribution import sanitize_id
from .dataset import DatasetIndex, eligible_pool
from .errors import DataError

log = logging.getLogger(__name__)

QUADRANTS = ("TL", "TR", "BL", "BR")

LAYOUTS: dict[str, tuple[str, str]] = {
    "top-row": ("TL", "TR"),
    "bottom-row": ("BL", "BR"),
    "left-col": ("TL", "BL"),
    "right-col": ("TR", "BR"),
    "main-diag": ("TL", "BR"),
    "anti-diag": ("TR", "BL"),
}
LAYOUT_NAMES = tuple(LAYOUTS)
MODES = ("standard", "two-class")

DEFAULT_WIDTH = 448
DEFAULT_HEIGHT = 448


def layout_of(target_positions) -> str:
    pair = tuple(sorted(target_positions, key=QUADRANTS.index))
    for name, positions in LAYOUTS.items():
        if positions == pair:
            return name
    raise DataError(f"no layout has target positions {target_positions}")


@dataclass(frozen=True)
class QuadrantSource:
    image_id: str
    class_label: str


@dataclass(frozen=True)
class MosaicSpec:
    mosaic_id: str
    target_class: str
    quadrants: dict[str, QuadrantSource]  # keyed TL/TR/BL/BR
    layout: str
    width: int
    height: int
    mode: str  # "standard" | "two-class"

    @property
    def target_positions(self) -> tuple[str, str]:
        return LAYOUTS[self.layout]

    @property
    def outer_positions(self) -> tuple[str, str]:
        return tuple(q for q in QUADRANTS if q not in LAYOUTS[self.layout])

    @property
    def outer_classes(self) -> tuple[str, str]:
        return tuple(self.quadrants[q].class_label for q in self.outer_positions)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise DataError(f"bad mosaic mode: {self.mode!r}")
        if self.layout not in LAYOUTS:
            raise DataError(f"bad layout: {self.layout!r}")
        if self.width % 2 or self.height % 2 or self.width <= 0 or self.height <= 0:
            raise DataError(f"mosaic dims must be positive and even, got {self.width}x{self.height}")
        if set(self.quadrants) != set(QUADRANTS):
            raise DataError(f"mosaic {self.mosaic_id}: quadrant keys must be TL/TR/BL/BR")
        target_quads = [q for q in QUADRANTS if self.quadrants[q].class_label == self.target_class]
        if tuple(target_quads) != tuple(sorted(self.target_positions, key=QUADRANTS.index)):
            raise DataError(
                f"mosaic {self.mosaic_id}: target class must occupy exactly the "
                f"layout positions {self.target_positions}, found {target_quads}"
            )
        t1, t2 = (self.quadrants[q].image_id for q in self.target_positions)
        if t1 == t2:
            raise DataError(f"mosaic {self.mosaic_id}: target images must be distinct")
        ids = [s.image_id for s in self.quadrants.values()]
        if len(set(ids)) != 4:
            raise DataError(f"mosaic {self.mosaic_id}: the four source images must be distinct")
        o1, o2 = self.outer_classes
        if self.mode == "two-class" and o1 != o2:
            raise DataError(f"mosaic {self.mosaic_id}: two-class mode needs equal outer classes")


def _mosaic_rng(seed: int, class_index: int, k: int) -> np.random.Generator:
    # One substream per (target class, ordinal): growing per_class or adding
    # classes never perturbs previously planned mosaics.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(class_index, k))
    return np.random.Generator(np.random.PCG64(ss))


def plan_mosaics(
    index: DatasetIndex,
    per_class: int,
    mode: str = "standard",
    layout_policy: str = "random",
    seed: int = 0,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
) -> list[MosaicSpec]:
    """Plan per_class mosaics for every class; deterministic in (index, seed).

    layout_policy is "random" (uniform over the six layouts, drawn per mosaic)
    or one fixed layout name.
    """
    if mode not in MODES:
        raise DataError(f"bad mosaic mode: {mode!r}")
    if layout_policy != "random" and layout_policy not in LAYOUTS:
        raise DataError(f"bad layout policy: {layout_policy!r}")
    if per_class <= 0:
        raise DataError("per_class must be positive")
    if width % 2 or height % 2 or width <= 0 or height <= 0:
        raise DataError(f"mosaic dims must be positive and even, got {width}x{height}")
    if len(index.classes) < 2:
        raise DataError("need at least 2 classes to build mosaics")

    pools = {c: eligible_pool(index, c) for c in index.classes}
    short = [c for c, pool in pools.items() if len(pool) < 2]
    if short:
        raise DataError(
            "classes with fewer than 2 eligible eval images: " + ", ".join(sorted(short))
        )

    pad = max(4, len(str(per_class - 1)))
    specs: list[MosaicSpec] = []
    for class_index, target in enumerate(index.classes):
        target_pool = pools[target]
        others = [c for c in index.classes if c != target]
        for k in range(per_class):
            rng = _mosaic_rng(seed, class_index, k)
            i1, i2 = rng.choice(len(target_pool), size=2, replace=False)
            target_ids = (target_pool[i1].id, target_pool[i2].id)

            if mode == "two-class":
                outer_class = others[rng.integers(len(others))]
                pool = pools[outer_class]
                j1, j2 = rng.choice(len(pool), size=2, replace=False)
                outer = [
                    QuadrantSource(pool[j1].id, outer_class),
                    QuadrantSource(pool[j2].id, outer_class),
                ]
            else:
                c3 = others[rng.integers(len(others))]
                pool3 = pools[c3]
                j3 = int(rng.integers(len(pool3)))
                c4 = others[rng.integers(len(others))]
                pool4 = pools[c4]
                if c4 == c3:
                    # draw without replacement within the mosaic
                    j4 = int(rng.integers(len(pool4) - 1))
                    if j4 >= j3:
                        j4 += 1
                else:
                    j4 = int(rng.integers(len(pool4)))
                outer = [QuadrantSource(pool3[j3].id, c3), QuadrantSource(pool4[j4].id, c4)]

            if layout_policy == "random":
                layout = LAYOUT_NAMES[rng.integers(len(LAYOUT_NAMES))]
            else:
                layout = layout_policy

            # placement of each image within its pair is random too
            if rng.integers(2):
                target_ids = (target_ids[1], target_ids[0])
            if rng.integers(2):
                outer = [outer[1], outer[0]]

            t_pos = LAYOUTS[layout]
            o_pos = tuple(q for q in QUADRANTS if q not in t_pos)
            quadrants = {
                t_pos[0]: QuadrantSource(target_ids[0], target),
                t_pos[1]: QuadrantSource(target_ids[1], target),
                o_pos[0]: outer[0],
                o_pos[1]: outer[1],
            }
            quadrants = {q: quadrants[q] for q in QUADRANTS}
            spec = MosaicSpec(
                mosaic_id=f"{target}_{k:0{pad}d}",
                target_class=target,
                quadrants=quadrants,
                layout=layout,
                width=width,
                height=height,
                mode=mode,
            )
            spec.validate()
            specs.append(spec)
    return specs


def bilinear_resize(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Classic bilinear resampling of an (H, W, C) uint8 array.

    Output pixel centers map to source coordinates via
    (i + 0.5) * in/out - 0.5, clamped at the edges.
    """
    h, w = src.shape[:2]
    if (w, h) == (out_w, out_h):
        return src.copy()
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)[None, :, None]
    fy = np.clip(sy - y0, 0.0, 1.0)[:, None, None]
    p = src.astype(np.float64)
    top = p[y0[:, None], x0[None, :]] * (1 - fx) + p[y0[:, None], x1[None, :]] * fx
    bottom = p[y1[:, None], x0[None, :]] * (1 - fx) + p[y1[:, None], x1[None, :]] * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resample_to_quadrant(src: np.ndarray, quad_w: int, quad_h: int) -> np.ndarray:
    """Shorter-side resize to the quadrant side, then center crop."""
    h, w = src.shape[:2]
    scale = max(quad_w / w, quad_h / h)
    new_w = max(quad_w, int(round(w * scale)))
    new_h = max(quad_h, int(round(h * scale)))
    resized = bilinear_resize(src, new_w, new_h)
    left = (new_w - quad_w) // 2
    top = (new_h - quad_h) // 2
    return resized[top : top + quad_h, left : left + quad_w]


def _load_rgb(index: DatasetIndex, image_id: str) -> np.ndarray:
    record = index.record_by_id(image_id)
    path = index.resolve(record)
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise DataError(f"cannot decode image {image_id!r} at {path}: {exc}") from exc


_QUADRANT_SLICES = {
    "TL": (0, 0),
    "TR": (0, 1),
    "BL": (1, 0),
    "BR": (1, 1),
}


def quadrant_region(quadrant: str, width: int, height: int) -> tuple[slice, slice]:
    """(row slice, col slice) of one quadrant in a width x height mosaic."""
    row, col = _QUADRANT_SLICES[quadrant]
    h2, w2 = height // 2, width // 2
    return slice(row * h2, (row + 1) * h2), slice(col * w2, (col + 1) * w2)


def compose_mosaic(spec: MosaicSpec, index: DatasetIndex) -> np.ndarray:
    """Render one mosaic to an (H, W, 3) uint8 array."""
    spec.validate()
    quad_w, quad_h = spec.width // 2, spec.height // 2
    canvas = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    for quadrant in QUADRANTS:
        source = spec.quadrants[quadrant]
        tile = resample_to_quadrant(_load_rgb(index, source.image_id), quad_w, quad_h)
        rows, cols = quadrant_region(quadrant, spec.width, spec.height)
        canvas[rows, cols] = tile
    return canvas


@dataclass(frozen=True)
class ManifestEntry:
    spec: MosaicSpec
    file: str  # path relative to the manifest's directory


@dataclass
class MosaicManifest:
    version: str
    seed: int
    dataset_fingerprint: str
    width: int
    height: int
    mosaics: list[ManifestEntry]
    path: Path | None = None  # where this manifest was loaded from / saved to

    def specs_by_id(self) -> dict[str, MosaicSpec]:
        return {e.spec.mosaic_id: e.spec for e in self.mosaics}

    def mosaic_path(self, entry: ManifestEntry) -> Path:
        base = self.path.parent if self.path is not None else Path(".")
        return base / entry.file

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "seed": self.seed,
            "dataset_fingerprint": self.dataset_fingerprint,
            "width": self.width,
            "height": self.height,
            "mosaics": [
                {
                    "id": e.spec.mosaic_id,
                    "file": e.file,
                    "target_class": e.spec.target_class,
                    "mode": e.spec.mode,
                    "quadrants": {
                        q: {
                            "image_id": e.spec.quadrants[q].image_id,
                            "class": e.spec.quadrants[q].class_label,
                        }
                        for q in QUADRANTS
                    },
                }
                for e in self.mosaics
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        self.path = path

    @classmethod
    def load(cls, path: Path | str) -> "MosaicManifest":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"manifest not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            width, height = int(doc["width"]), int(doc["height"])
            entries = []
            for m in doc["mosaics"]:
                quadrants = {
                    q: QuadrantSource(m["quadrants"][q]["image_id"], m["quadrants"][q]["class"])
                    for q in QUADRANTS
                }
                target_positions = [
                    q for q in QUADRANTS if quadrants[q].class_label == m["target_class"]
                ]
                spec = MosaicSpec(
                    mosaic_id=m["id"],
                    target_class=m["target_class"],
                    quadrants=quadrants,
                    layout=layout_of(target_positions),
                    width=width,
                    height=height,
                    mode=m["mode"],
                )
                spec.validate()
                entries.append(ManifestEntry(spec=spec, file=m["file"]))
            return cls(
                version=str(doc["version"]),
                seed=int(doc["seed"]),
                dataset_fingerprint=doc["dataset_fingerprint"],
                width=width,
                height=height,
                mosaics=entries,
                path=path,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest {path}: {exc}") from exc


def emit_mosaic_set(
    specs: list[MosaicSpec],
    index: DatasetIndex,
    out_dir: Path | str,
    seed: int = 0,
    jobs: int | None = None,
) -> MosaicManifest:
    """Compose every spec to ``<out_dir>/<mosaic_id>.png`` plus manifest.json.

    The manifest is written last; a directory without one is incomplete. On
    failure an ``.incomplete`` marker is left behind.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not specs:
        raise DataError("no mosaic specs to emit")
    widths = {(s.width, s.height) for s in specs}
    if len(widths) != 1:
        raise DataError(f"mixed mosaic geometries in one set: {sorted(widths)}")
    width, height = specs[0].width, specs[0].height

    ordered = sorted(specs, key=lambda s: s.mosaic_id)
    if len({s.mosaic_id for s in ordered}) != len(ordered):
        raise DataError("duplicate mosaic ids in spec list")

    def emit_one(spec: MosaicSpec) -> ManifestEntry:
        pixels = compose_mosaic(spec, index)
        filename = sanitize_id(spec.mosaic_id) + ".png"
        Image.fromarray(pixels, mode="RGB").save(out_dir / filename, format="PNG")
        return ManifestEntry(spec=spec, file=filename)

    marker = out_dir / ".incomplete"
    try:
        if jobs is not None and jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                entries = list(pool.map(emit_one, ordered))
        else:
            entries = [emit_one(spec) for spec in ordered]
        manifest = MosaicManifest(
            version="1",
            seed=seed,
            dataset_fingerprint=index.fingerprint(),
            width=width,
            height=height,
            mosaics=entries,
        )
        manifest.save(out_dir / "manifest.json")
    except Exception:
        marker.touch()
        raise
    if marker.exists():
        marker.unlink()
    log.info("emitted %d mosaics to %s", len(ordered), out_dir)
    return manifest
