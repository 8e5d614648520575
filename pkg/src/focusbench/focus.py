"""Focus score per mosaic and distribution aggregation.

Focus is the fraction of positive relevance that falls on the two
target-class quadrants: negatives are clamped to zero, relevance is summed
per quadrant, and the target share is taken over the total. A mosaic whose
clamped relevance sums to zero has no defined Focus and is excluded from
statistics (counted separately).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .attribution import AttributionMap
from .errors import DataError
from .mosaic import QUADRANTS, MosaicSpec, quadrant_region

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 50
KDE_POINTS = 256


@dataclass(frozen=True)
class FocusResult:
    mosaic_id: str
    quadrant_relevance: dict[str, float]  # clamped sums, keyed TL/TR/BL/BR
    focus: float | None  # None when total clamped relevance is zero
    target_positions: tuple[str, str] | None  # None for results loaded from CSV

    @property
    def undefined(self) -> bool:
        return self.focus is None


def clamp_positive(amap: AttributionMap) -> AttributionMap:
    """Zero out negative relevance; idempotent."""
    return AttributionMap(amap.mosaic_id, np.maximum(amap.values, 0.0))


def compute_focus(amap: AttributionMap, spec: MosaicSpec) -> FocusResult:
    if (amap.width, amap.height) != (spec.width, spec.height):
        raise DataError(
            f"map {amap.mosaic_id}: dimensions {amap.width}x{amap.height} do not "
            f"match mosaic {spec.width}x{spec.height}"
        )
    if not np.isfinite(amap.values).all():
        raise DataError(f"map {amap.mosaic_id}: non-finite relevance")
    clamped = np.maximum(amap.values, 0.0)
    # 448x448 means ~2e5 additions per map; accumulate in float64
    sums = {}
    for quadrant in QUADRANTS:
        rows, cols = quadrant_region(quadrant, spec.width, spec.height)
        sums[quadrant] = float(clamped[rows, cols].sum(dtype=np.float64))
    total = math.fsum(sums.values())
    if total == 0.0:
        focus = None
    else:
        focus = math.fsum(sums[q] for q in spec.target_positions) / total
    return FocusResult(
        mosaic_id=spec.mosaic_id,
        quadrant_relevance=sums,
        focus=focus,
        target_positions=spec.target_positions,
    )


@dataclass
class ClassStats:
    n: int
    mean: float
    std: float


@dataclass
class FocusDistribution:
    label: str
    n_defined: int
    n_undefined: int
    mean: float
    std: float  # population
    min: float
    q1: float
    median: float
    q3: float
    max: float
    histogram: list[int]  # HISTOGRAM_BINS uniform bins over [0, 1]
    per_class: dict[str, ClassStats]
    class_balanced_mean: float
    manifest_fingerprint: str | None = None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_defined": self.n_defined,
            "n_undefined": self.n_undefined,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "histogram_bins": HISTOGRAM_BINS,
            "histogram": self.histogram,
            "per_class": {
                c: {"n": s.n, "mean": s.mean, "std": s.std}
                for c, s in sorted(self.per_class.items())
            },
            "class_balanced_mean": self.class_balanced_mean,
            "manifest_fingerprint": self.manifest_fingerprint,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FocusDistribution":
        per_class = {
            c: ClassStats(int(s["n"]), float(s["mean"]), float(s["std"]))
            for c, s in doc["per_class"].items()
        }
        return cls(
            label=doc["label"],
            n_defined=int(doc["n_defined"]),
            n_undefined=int(doc["n_undefined"]),
            mean=float(doc["mean"]),
            std=float(doc["std"]),
            min=float(doc["min"]),
            q1=float(doc["q1"]),
            median=float(doc["median"]),
            q3=float(doc["q3"]),
            max=float(doc["max"]),
            histogram=[int(x) for x in doc["histogram"]],
            per_class=per_class,
            class_balanced_mean=float(doc["class_balanced_mean"]),
            manifest_fingerprint=doc.get("manifest_fingerprint"),
        )


def aggregate(
    results: Iterable[FocusResult],
    target_classes: Mapping[str, str],
    label: str = "run",
    manifest_fingerprint: str | None = None,
) -> FocusDistribution:
    """Summarize defined focus values; per-class keyed by target class.

    target_classes maps mosaic_id to its target class. Results are sorted by
    mosaic_id before reduction so aggregation is order independent.
    """
    ordered = sorted(results, key=lambda r: r.mosaic_id)
    unknown = [r.mosaic_id for r in ordered if r.mosaic_id not in target_classes]
    if unknown:
        raise DataError(f"results reference unknown mosaics: {unknown[:5]}")
    defined = [r for r in ordered if r.focus is not None]
    n_undefined = len(ordered) - len(defined)
    if not defined:
        raise DataError("empty distribution: no defined focus values")

    values = np.array([r.focus for r in defined], dtype=np.float64)
    hist, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])

    per_class: dict[str, ClassStats] = {}
    by_class: dict[str, list[float]] = {}
    for r in defined:
        by_class.setdefault(target_classes[r.mosaic_id], []).append(r.focus)
    for c, vals in sorted(by_class.items()):
        arr = np.array(vals, dtype=np.float64)
        per_class[c] = ClassStats(n=len(vals), mean=float(arr.mean()), std=float(arr.std()))

    return FocusDistribution(
        label=label,
        n_defined=len(defined),
        n_undefined=n_undefined,
        mean=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        max=float(values.max()),
        histogram=hist.tolist(),
        per_class=per_class,
        class_balanced_mean=float(np.mean([s.mean for s in per_class.values()])),
        manifest_fingerprint=manifest_fingerprint,
    )


@dataclass
class KdeCurve:
    xs: np.ndarray  # KDE_POINTS points, evenly spaced over [0, 1]
    density: np.ndarray
    bandwidth: float


def kde_curve(values: Iterable[float]) -> KdeCurve:
    """Gaussian KDE over [0, 1] at Silverman's bandwidth.

    Bandwidth is 0.9 * min(sigma, IQR/1.34) * n^(-1/5) with population sigma.
    Mass is reflected at both boundaries so the curve integrates to ~1 on the
    unit interval. Degenerate samples (zero sigma or zero IQR) are rejected;
    fall back to the histogram for those.
    """
    pts = np.asarray(list(values), dtype=np.float64)
    n = pts.size
    if n < 2:
        raise DataError("kde needs at least 2 values")
    sigma = float(pts.std())
    q1, q3 = np.quantile(pts, [0.25, 0.75])
    bandwidth = 0.9 * min(sigma, (q3 - q1) / 1.34) * n ** (-0.2)
    if bandwidth <= 0.0:
        raise DataError("degenerate sample (no spread); use the histogram instead")
    xs = np.linspace(0.0, 1.0, KDE_POINTS)
    # reflect at 0 and 1 to keep boundary mass inside the interval
    support = np.concatenate([pts, -pts, 2.0 - pts])
    z = (xs[:, None] - support[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).sum(axis=1) / (n * bandwidth * math.sqrt(2.0 * math.pi))
    return KdeCurve(xs=xs, density=density, bandwidth=bandwidth)


RESULTS_HEADER = ["mosaic_id", "target_class", "focus", "undefined", "r_TL", "r_TR", "r_BL", "r_BR"]


def write_results_csv(
    results: Iterable[FocusResult], target_classes: Mapping[str, str], path: Path | str
) -> None:
    ordered = sorted(results, key=lambda r: r.mosaic_id)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in ordered:
            writer.writerow(
                [
                    r.mosaic_id,
                    target_classes[r.mosaic_id],
                    "" if r.focus is None else repr(r.focus),
                    "true" if r.focus is None else "false",
                ]
                + [repr(r.quadrant_relevance[q]) for q in QUADRANTS]
            )


def read_results_csv(path: Path | str) -> tuple[list[FocusResult], dict[str, str]]:
    """Load a focus_results.csv; returns (results, mosaic_id -> target_class)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"results file not found: {path}")
    results: list[FocusResult] = []
    target_classes: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise DataError(f"unexpected results header in {path}: {reader.fieldnames}")
        for row in reader:
            sums = {q: float(row[f"r_{q}"]) for q in QUADRANTS}
            focus = None if row["undefined"] == "true" else float(row["focus"])
            mosaic_id = row["mosaic_id"]
            target_classes[mosaic_id] = row["target_class"]
            results.append(
                FocusResult(
                    mosaic_id=mosaic_id,
                    quadrant_relevance=sums,
                    focus=focus,
                    target_positions=None,
                )
            )
    return results, target_classes


def write_distribution_json(dist: FocusDistribution, path: Path | str) -> None:
    Path(path).write_text(json.dumps(dist.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_distribution_json(path: Path | str) -> FocusDistribution:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"distribution file not found: {path}")
    try:
        return FocusDistribution.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed distribution file {path}: {exc}") from exc
