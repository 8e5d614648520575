"""Labeled image dataset indexing and eligibility pools for mosaic sampling.

A dataset is a directory with one subdirectory per class containing PNG/JPEG
files, optionally separated into ``train/`` and ``eval/`` top-level
directories, or a CSV manifest with header ``path,label,split``. Only
eval-split records are eligible as mosaic sources.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from PIL import Image

from .errors import DataError

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "eval")


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str  # relative to the index root
    class_label: str
    split: str  # "train" | "eval"


@dataclass(frozen=True)
class DatasetIndex:
    root: str
    classes: tuple[str, ...]
    records: tuple[ImageRecord, ...]
    skipped: int = 0

    def resolve(self, record: ImageRecord) -> Path:
        return Path(self.root) / record.path

    def record_by_id(self, record_id: str) -> ImageRecord:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise DataError(f"unknown image id: {record_id!r}") from None

    @cached_property
    def _by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}

    def fingerprint(self) -> str:
        """sha256 over the portable core (everything except the local root path)."""
        core = {
            "classes": list(self.classes),
            "skipped": self.skipped,
            "records": [_record_dict(r) for r in self.records],
        }
        blob = json.dumps(core, separators=(",", ":"), sort_keys=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        doc = {
            "root": self.root,
            "classes": list(self.classes),
            "skipped": self.skipped,
            "records": [_record_dict(r) for r in self.records],
        }
        return json.dumps(doc, indent=2) + "\n"

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "DatasetIndex":
        try:
            doc = json.loads(text)
            records = tuple(
                ImageRecord(r["id"], r["path"], r["class_label"], r["split"])
                for r in doc["records"]
            )
            return cls(
                root=doc["root"],
                classes=tuple(doc["classes"]),
                records=records,
                skipped=int(doc.get("skipped", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed index file: {exc}") from exc

    @classmethod
    def load(cls, path: Path | str) -> "DatasetIndex":
        p = Path(path)
        if not p.is_file():
            raise DataError(f"index file not found: {p}")
        return cls.from_json(p.read_text(encoding="utf-8"))


def _record_dict(r: ImageRecord) -> dict:
    return {"id": r.id, "path": r.path, "class_label": r.class_label, "split": r.split}


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as img:
            img.verify()
        return True
    except Exception as exc:
        log.warning("skipping undecodable image %s: %s", path, exc)
        return False


def _scan_class_dir(class_dir: Path, class_label: str, split: str, root: Path):
    """Yield (record, skipped_flag) for each image file in one class directory."""
    files = sorted(p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    records, skipped = [], 0
    for p in files:
        if not _decodable(p):
            skipped += 1
            continue
        rec_id = f"{class_label}/{p.name}"
        records.append(ImageRecord(rec_id, str(p.relative_to(root)), class_label, split))
    if not records:
        raise DataError(f"class has no images: {class_label!r} ({class_dir})")
    return records, skipped


def parse_split_rule(rule: str) -> str:
    rule = rule.strip()
    if rule in ("eval", "subdirs"):
        return rule
    if rule.startswith("first-n-train:"):
        n = rule.split(":", 1)[1]
        if not n.isdigit():
            raise DataError(f"bad split rule, expected first-n-train:<N>: {rule!r}")
        return rule
    raise DataError(f"unknown split rule: {rule!r}")


def build_index(root: Path | str, split_rule: str = "eval") -> DatasetIndex:
    """Index a directory-per-class dataset.

    split_rule: "eval" (everything eval), "subdirs" (root/train/<class>/... and
    root/eval/<class>/...), or "first-n-train:N" (first N files per class,
    sorted by name, become the train split).
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not readable: {root}")
    parse_split_rule(split_rule)

    records: list[ImageRecord] = []
    skipped = 0

    if split_rule == "subdirs":
        for split in SPLITS:
            split_dir = root / split
            if not split_dir.is_dir():
                continue
            for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
                recs, n_skip = _scan_class_dir(class_dir, class_dir.name, split, root)
                records.extend(recs)
                skipped += n_skip
        if not records:
            raise DataError(f"no train/ or eval/ class directories under {root}")
    else:
        class_dirs = sorted(
            p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")
        )
        if not class_dirs:
            raise DataError(f"no class directories under {root}")
        n_train = 0
        if split_rule.startswith("first-n-train:"):
            n_train = int(split_rule.split(":", 1)[1])
        for class_dir in class_dirs:
            recs, n_skip = _scan_class_dir(class_dir, class_dir.name, "eval", root)
            skipped += n_skip
            for i, rec in enumerate(recs):
                split = "train" if i < n_train else "eval"
                records.append(ImageRecord(rec.id, rec.path, rec.class_label, split))

    return _finalize(str(root), records, skipped)


def build_index_from_csv(manifest_csv: Path | str) -> DatasetIndex:
    """Index from a CSV manifest (header ``path,label,split``).

    Relative paths are resolved against the CSV file's directory.
    """
    manifest_csv = Path(manifest_csv)
    if not manifest_csv.is_file():
        raise DataError(f"manifest not readable: {manifest_csv}")
    root = manifest_csv.parent
    records: list[ImageRecord] = []
    skipped = 0
    with manifest_csv.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"path", "label", "split"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"manifest must have header path,label,split: {manifest_csv}")
        for row in reader:
            split = row["split"].strip()
            if split not in SPLITS:
                raise DataError(f"bad split value {split!r} in {manifest_csv}")
            label = row["label"].strip()
            if not label:
                raise DataError(f"empty class label in {manifest_csv}")
            rel = Path(row["path"].strip())
            path = rel if rel.is_absolute() else root / rel
            if not _decodable(path):
                skipped += 1
                continue
            rec_id = f"{label}/{path.name}"
            try:
                stored = str(path.relative_to(root))
            except ValueError:
                stored = str(path)
            records.append(ImageRecord(rec_id, stored, label, split))
    if not records:
        raise DataError(f"manifest lists no decodable images: {manifest_csv}")
    return _finalize(str(root), records, skipped)


def _finalize(root: str, records: list[ImageRecord], skipped: int) -> DatasetIndex:
    records.sort(key=lambda r: (r.id, r.split))
    seen: dict[str, ImageRecord] = {}
    for rec in records:
        if rec.id in seen:
            raise DataError(
                f"duplicate record id {rec.id!r} ({seen[rec.id].path} vs {rec.path}); "
                "rename one of the files"
            )
        seen[rec.id] = rec
    classes = tuple(sorted({r.class_label for r in records}))
    index = DatasetIndex(root=root, classes=classes, records=tuple(records), skipped=skipped)
    log.info(
        "indexed %d images (%d classes, %d skipped) under %s",
        len(records), len(classes), skipped, root,
    )
    return index


def eligible_pool(index: DatasetIndex, class_label: str) -> list[ImageRecord]:
    """Records of ``class_label`` usable as mosaic sources (eval split only)."""
    if class_label not in index.classes:
        raise DataError(f"unknown class: {class_label!r}")
    pool = [r for r in index.records if r.class_label == class_label and r.split == "eval"]
    if not pool:
        raise DataError(f"no eval samples for class: {class_label!r}")
    return pool
