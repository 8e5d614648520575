"""Synthetic attribution generators and distribution comparisons.

These let the Focus machinery be validated with no model at all: a uniform
map must score exactly 0.5 on every mosaic, a target-perfect map 1.0, an
anti-target map 0.0, and iid random relevance concentrates tightly around
0.5 when averaged over the ~2e5 pixels of a standard mosaic.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .attribution import AttributionMap, map_filename, write_map
from .errors import DataError
from .focus import FocusDistribution, FocusResult, aggregate
from .mosaic import LAYOUT_NAMES, MosaicManifest, MosaicSpec, quadrant_region

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = (
    "uniform",
    "iid-uniform-random",
    "target-perfect",
    "anti-target",
    "gaussian-blob",
)


@dataclass(frozen=True)
class SyntheticExplainer:
    kind: str
    seed: int = 0
    blob_center: tuple[float, float] = (0.5, 0.5)  # relative (x, y)
    blob_sigma: float = 0.25  # relative to min(W, H)

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise DataError(f"unknown synthetic explainer kind: {self.kind!r}")


def _substream(seed: int, mosaic_id: str) -> np.random.Generator:
    # sha256-derived entropy per mosaic id: byte-identical output no matter
    # how generation is parallelized or which subset is regenerated
    digest = hashlib.sha256(mosaic_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8, 16, 24)]
    ss = np.random.SeedSequence(entropy=[seed & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.Generator(np.random.PCG64(ss))


def synthetic_map(spec: MosaicSpec, explainer: SyntheticExplainer) -> AttributionMap:
    h, w = spec.height, spec.width
    if explainer.kind == "uniform":
        values = np.ones((h, w), dtype=np.float32)
    elif explainer.kind == "iid-uniform-random":
        rng = _substream(explainer.seed, spec.mosaic_id)
        values = rng.random((h, w), dtype=np.float32)
    elif explainer.kind in ("target-perfect", "anti-target"):
        on_target = explainer.kind == "target-perfect"
        values = np.full((h, w), 0.0 if on_target else 1.0, dtype=np.float32)
        for quadrant in spec.target_positions:
            rows, cols = quadrant_region(quadrant, w, h)
            values[rows, cols] = 1.0 if on_target else 0.0
    elif explainer.kind == "gaussian-blob":
        cx = explainer.blob_center[0] * w
        cy = explainer.blob_center[1] * h
        sigma = explainer.blob_sigma * min(w, h)
        if sigma <= 0:
            raise DataError("gaussian-blob sigma must be positive")
        ys, xs = np.mgrid[0:h, 0:w]
        values = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma)).astype(
            np.float32
        )
    else:  # unreachable, kinds checked in the dataclass
        raise DataError(f"unknown synthetic explainer kind: {explainer.kind!r}")
    return AttributionMap(spec.mosaic_id, values)


def generate_synthetic(
    manifest: MosaicManifest,
    explainer: SyntheticExplainer,
    out_dir: Path | str,
    jobs: int | None = None,
) -> None:
    """Write one ``.foc1`` per manifest mosaic; deterministic given the seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def emit(entry) -> None:
        amap = synthetic_map(entry.spec, explainer)
        write_map(amap, out_dir / map_filename(entry.spec.mosaic_id))

    if jobs is not None and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(emit, manifest.mosaics))
    else:
        for entry in manifest.mosaics:
            emit(entry)
    log.info("wrote %d synthetic %s maps to %s", len(manifest.mosaics), explainer.kind, out_dir)


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    distribution_a: FocusDistribution
    distribution_b: FocusDistribution
    mean_difference: float  # a - b
    ks_statistic: float

    def to_dict(self) -> dict:
        return {
            "label_a": self.label_a,
            "label_b": self.label_b,
            "distribution_a": self.distribution_a.to_dict(),
            "distribution_b": self.distribution_b.to_dict(),
            "mean_difference": self.mean_difference,
            "ks_statistic": self.ks_statistic,
        }


def compare_runs(
    results_a: list[FocusResult],
    results_b: list[FocusResult],
    target_classes: dict[str, str],
    label_a: str = "a",
    label_b: str = "b",
    fingerprint_a: str | None = None,
    fingerprint_b: str | None = None,
) -> ComparisonReport:
    """Compare two complete runs over the same mosaic set."""
    if fingerprint_a is not None and fingerprint_b is not None and fingerprint_a != fingerprint_b:
        raise DataError("incomparable runs: different manifests")
    ids_a = {r.mosaic_id for r in results_a}
    ids_b = {r.mosaic_id for r in results_b}
    if ids_a != ids_b:
        raise DataError(
            f"incomparable runs: mosaic sets differ "
            f"({len(ids_a - ids_b)} only in a, {len(ids_b - ids_a)} only in b)"
        )
    dist_a = aggregate(results_a, target_classes, label=label_a, manifest_fingerprint=fingerprint_a)
    dist_b = aggregate(results_b, target_classes, label=label_b, manifest_fingerprint=fingerprint_b)
    defined_a = np.array([r.focus for r in results_a if r.focus is not None])
    defined_b = np.array([r.focus for r in results_b if r.focus is not None])
    if np.array_equal(defined_a, defined_b):
        ks = 0.0  # ks_2samp is exact here but avoid its degenerate-warning path
    else:
        ks = float(stats.ks_2samp(defined_a, defined_b).statistic)
    return ComparisonReport(
        label_a=label_a,
        label_b=label_b,
        distribution_a=dist_a,
        distribution_b=dist_b,
        mean_difference=dist_a.mean - dist_b.mean,
        ks_statistic=ks,
    )


LAYOUT_STUDY_LABELS = LAYOUT_NAMES + ("random",)


@dataclass
class LayoutStudyRow:
    layout: str
    n: int
    mean: float
    std: float
    q1: float
    median: float
    q3: float


@dataclass
class LayoutStudy:
    rows: list[LayoutStudyRow]
    values: dict[str, list[float]]  # defined focus values per layout, boxplot-ready

    def to_csv(self) -> str:
        lines = ["layout,n,mean,std,q1,median,q3"]
        for r in self.rows:
            lines.append(
                f"{r.layout},{r.n},{r.mean!r},{r.std!r},{r.q1!r},{r.median!r},{r.q3!r}"
            )
        return "\n".join(lines) + "\n"


def layout_experiment(
    runs: dict[str, tuple[FocusDistribution, list[float]]],
) -> LayoutStudy:
    """Tabulate per-layout focus distributions.

    runs maps each of the seven configuration labels (the six fixed layouts
    plus "random") to (distribution, defined focus values).
    """
    missing = [label for label in LAYOUT_STUDY_LABELS if label not in runs]
    if missing:
        raise DataError(f"missing layout runs: {', '.join(missing)}")
    rows = []
    values: dict[str, list[float]] = {}
    for label in LAYOUT_STUDY_LABELS:
        dist, vals = runs[label]
        rows.append(
            LayoutStudyRow(
                layout=label,
                n=dist.n_defined,
                mean=dist.mean,
                std=dist.std,
                q1=dist.q1,
                median=dist.median,
                q3=dist.q3,
            )
        )
        values[label] = list(vals)
    return LayoutStudy(rows=rows, values=values)
