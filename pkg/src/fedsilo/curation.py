"""Corpus ingestion, duplicate grouping and representative selection.

The pipeline is: scan directory trees (and/or convert COCO detection
manifests) into hashed :class:`ImageRecord` lists, connect near-duplicate
records into groups, drop groups whose members disagree on the label, keep
the highest-resolution member of every other group, and emit a manifest CSV
plus a :class:`CurationReport`.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .hashing import Hash256, ahash256, is_duplicate_pair, phash256, to_luminance

log = logging.getLogger(__name__)

DEFAULT_LABELS = ("Healthy", "Coccidiosis", "NCD", "Salmonella")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

MANIFEST_HEADER = ["id", "source", "path", "label", "width", "height", "ahash", "phash"]

# Banding width for the candidate-pair prefilter. Two 256-bit hashes within
# Hamming distance 15 must agree exactly on at least one aligned 16-bit word
# (pigeonhole over 16 words), so the prefilter is recall-preserving for any
# threshold <= 15.
_BAND_BITS = 16
_BAND_COUNT = 256 // _BAND_BITS
_PREFILTER_MAX_THRESHOLD = _BAND_COUNT - 1


@dataclass(frozen=True)
class ImageRecord:
    """One labeled image with provenance, dimensions and both hashes."""

    id: str
    source: str
    path: str
    label: str
    width: int
    height: int
    ahash: Hash256
    phash: Hash256

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"record {self.id}: width and height must be >= 1")

    @property
    def pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class DuplicateGroup:
    """A connected component of the near-duplicate graph (size >= 2)."""

    members: frozenset[str]
    representative: str
    label_conflict: bool

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("duplicate groups must have at least two members")
        if self.representative not in self.members:
            raise ValueError("representative must be a group member")


@dataclass(frozen=True)
class CurationReport:
    total_raw: int
    duplicates_removed: int
    reduction_pct: float
    conflict_groups: int
    per_source_duplicate_pct: dict[str, float]
    unique_remaining: int

    def as_dict(self) -> dict:
        return {
            "total_raw": self.total_raw,
            "duplicates_removed": self.duplicates_removed,
            "reduction_pct": self.reduction_pct,
            "conflict_groups": self.conflict_groups,
            "per_source_duplicate_pct": dict(sorted(self.per_source_duplicate_pct.items())),
            "unique_remaining": self.unique_remaining,
        }


def render_report(report: CurationReport) -> str:
    lines = [
        f"raw images scanned:    {report.total_raw}",
        f"duplicates removed:    {report.duplicates_removed} ({report.reduction_pct:.2f}%)",
        f"cross-label groups:    {report.conflict_groups}",
        f"unique images kept:    {report.unique_remaining}",
    ]
    for source, pct in sorted(report.per_source_duplicate_pct.items()):
        lines.append(f"  removed from {source}: {pct:.2f}%")
    return "\n".join(lines)


def _hash_image_file(path: Path) -> tuple[int, int, Hash256, Hash256]:
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    lum = to_luminance(rgb)
    return rgb.shape[1], rgb.shape[0], ahash256(lum), phash256(lum)


def scan_corpus(
    roots: Sequence[tuple[str | Path, str]],
    label_rule: Mapping[str, str] | Callable[[str], str | None],
    workers: int = 1,
) -> list[ImageRecord]:
    """Walk directory trees of PNG/JPEG files and hash every decodable image.

    ``roots`` is a list of (directory, source tag) pairs. The label of a file
    is derived from its parent directory name through ``label_rule``; files
    whose directory has no mapping are skipped with a warning, as are files
    that fail to decode. Output is sorted by record id and is independent of
    ``workers``.
    """
    if callable(label_rule):
        lookup = label_rule
    else:
        lookup = label_rule.get

    todo: list[tuple[Path, str, str, str]] = []
    for root, source in roots:
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"corpus root does not exist: {root}")
        for path in sorted(root.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            label = lookup(path.parent.name)
            if label is None:
                log.warning("skipping %s: directory %r has no label mapping", path, path.parent.name)
                continue
            record_id = f"{source}:{path.relative_to(root).as_posix()}"
            todo.append((path, source, label, record_id))

    def build(item: tuple[Path, str, str, str]) -> ImageRecord | None:
        path, source, label, record_id = item
        try:
            width, height, ah, ph = _hash_image_file(path)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            log.warning("skipping undecodable image %s: %s", path, exc)
            return None
        return ImageRecord(record_id, source, str(path), label, width, height, ah, ph)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build, todo))
    else:
        results = [build(item) for item in todo]

    records = sorted((r for r in results if r is not None), key=lambda r: r.id)
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise ValueError(f"duplicate record id {record.id!r}; use distinct source tags per root")
        seen.add(record.id)
    return records


def coco_to_classification(
    manifest_path: str | Path,
    images_root: str | Path,
    source: str = "coco",
) -> list[ImageRecord]:
    """Convert a COCO-format detection manifest into classification records,
    one cropped record per bounding box.

    Images whose boxes span two or more distinct categories are discarded
    entirely; boxes that clamp to less than one pixel are skipped; missing or
    undecodable image files are skipped with a warning.
    """
    manifest_path = Path(manifest_path)
    images_root = Path(images_root)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{manifest_path}: malformed COCO JSON: {exc}") from exc

    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise ValueError(f"{manifest_path}: missing or invalid {key!r} section")

    try:
        categories = {c["id"]: str(c["name"]) for c in doc["categories"]}
        images = {im["id"]: im for im in doc["images"]}
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{manifest_path}: malformed categories/images entry: {exc}") from exc

    boxes_by_image: dict[object, list[dict]] = {}
    for i, ann in enumerate(doc["annotations"]):
        try:
            image_id = ann["image_id"]
            if ann["category_id"] not in categories:
                raise KeyError(f"unknown category_id {ann['category_id']}")
            x, y, w, h = (float(v) for v in ann["bbox"])
            ann_id = ann["id"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{manifest_path}: annotation #{i}: {exc}") from exc
        if image_id not in images:
            raise ValueError(f"{manifest_path}: annotation #{i}: unknown image_id {image_id}")
        boxes_by_image.setdefault(image_id, []).append(
            {"ann_id": ann_id, "label": categories[ann["category_id"]], "bbox": (x, y, w, h)}
        )

    records: list[ImageRecord] = []
    for image_id in sorted(boxes_by_image, key=str):
        boxes = boxes_by_image[image_id]
        labels = {b["label"] for b in boxes}
        if len(labels) >= 2:
            # Multi-class source images are dropped wholesale to keep
            # single-label classification unambiguous.
            continue
        info = images[image_id]
        path = images_root / str(info["file_name"])
        if not path.is_file():
            log.warning("skipping %s: image file not found", path)
            continue
        try:
            with Image.open(path) as img:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping undecodable image %s: %s", path, exc)
            continue
        img_h, img_w = rgb.shape[:2]
        for box in sorted(boxes, key=lambda b: str(b["ann_id"])):
            x, y, w, h = box["bbox"]
            x0 = max(0, int(np.floor(x)))
            y0 = max(0, int(np.floor(y)))
            x1 = min(img_w, int(np.ceil(x + w)))
            y1 = min(img_h, int(np.ceil(y + h)))
            if x1 - x0 < 1 or y1 - y0 < 1:
                continue
            crop = rgb[y0:y1, x0:x1]
            lum = to_luminance(crop)
            records.append(
                ImageRecord(
                    id=f"{source}:{info['file_name']}#{box['ann_id']}",
                    source=source,
                    path=str(path),
                    label=box["label"],
                    width=x1 - x0,
                    height=y1 - y0,
                    ahash=ahash256(lum),
                    phash=phash256(lum),
                )
            )
    return sorted(records, key=lambda r: r.id)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _candidate_pairs(records: Sequence[ImageRecord], threshold: int) -> Iterable[tuple[int, int]]:
    if threshold > _PREFILTER_MAX_THRESHOLD:
        n = len(records)
        return ((i, j) for i in range(n) for j in range(i + 1, n))
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, record in enumerate(records):
        value = record.ahash.value
        for band in range(_BAND_COUNT):
            word = (value >> (_BAND_BITS * band)) & 0xFFFF
            buckets.setdefault((band, word), []).append(i)
    pairs: set[tuple[int, int]] = set()
    for members in buckets.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                pairs.add((members[a], members[b]))
    return sorted(pairs)


def _pick_representative(members: Sequence[ImageRecord]) -> str:
    return min(members, key=lambda r: (-r.pixels, r.path)).id


def group_duplicates(
    records: Sequence[ImageRecord],
    threshold: int = 5,
    prefilter: bool = True,
) -> list[DuplicateGroup]:
    """Connected components of the dual-hash near-duplicate graph.

    Components of size 1 are omitted; output is ordered by smallest member id.
    The banding prefilter only skips pairs that provably exceed the threshold,
    so results match the exhaustive O(n^2) comparison exactly.
    """
    ordered = sorted(records, key=lambda r: r.id)
    uf = _UnionFind(len(ordered))
    if prefilter:
        pair_iter = _candidate_pairs(ordered, threshold)
    else:
        n = len(ordered)
        pair_iter = ((i, j) for i in range(n) for j in range(i + 1, n))
    for i, j in pair_iter:
        if is_duplicate_pair(ordered[i], ordered[j], threshold):
            uf.union(i, j)

    components: dict[int, list[ImageRecord]] = {}
    for i, record in enumerate(ordered):
        components.setdefault(uf.find(i), []).append(record)

    groups = []
    for root in sorted(components):
        members = components[root]
        if len(members) < 2:
            continue
        groups.append(
            DuplicateGroup(
                members=frozenset(r.id for r in members),
                representative=_pick_representative(members),
                label_conflict=len({r.label for r in members}) >= 2,
            )
        )
    return groups


def detect_label_conflicts(groups: Sequence[DuplicateGroup]) -> list[DuplicateGroup]:
    """Groups whose members carry two or more distinct labels; these are
    excluded entirely from the curated output."""
    return [g for g in groups if g.label_conflict]


def select_representatives(
    groups: Sequence[DuplicateGroup],
    records: Sequence[ImageRecord],
) -> tuple[list[ImageRecord], CurationReport]:
    """Keep the representative of every clean group and all singletons; drop
    conflict groups wholesale. Returns the curated records and the report."""
    drop: set[str] = set()
    conflict_count = 0
    for group in groups:
        if group.label_conflict:
            conflict_count += 1
            drop.update(group.members)
        else:
            drop.update(group.members - {group.representative})

    curated = sorted((r for r in records if r.id not in drop), key=lambda r: r.id)

    total = len(records)
    removed = total - len(curated)
    per_source_total: dict[str, int] = {}
    per_source_removed: dict[str, int] = {}
    for record in records:
        per_source_total[record.source] = per_source_total.get(record.source, 0) + 1
        if record.id in drop:
            per_source_removed[record.source] = per_source_removed.get(record.source, 0) + 1
    per_source_pct = {
        source: 100.0 * per_source_removed.get(source, 0) / count
        for source, count in per_source_total.items()
    }
    report = CurationReport(
        total_raw=total,
        duplicates_removed=removed,
        reduction_pct=100.0 * removed / total if total else 0.0,
        conflict_groups=conflict_count,
        per_source_duplicate_pct=per_source_pct,
        unique_remaining=len(curated),
    )
    return curated, report


def write_manifest(records: Sequence[ImageRecord], path: str | Path) -> None:
    """Write records as CSV sorted by id; round-trips losslessly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in sorted(records, key=lambda rec: rec.id):
            writer.writerow(
                [r.id, r.source, r.path, r.label, r.width, r.height, r.ahash.to_hex(), r.phash.to_hex()]
            )


def read_manifest(path: str | Path) -> list[ImageRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(MANIFEST_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}")
            rid, source, fpath, label, width, height, ah, ph = row
            try:
                record = ImageRecord(
                    id=rid,
                    source=source,
                    path=fpath,
                    label=label,
                    width=int(width),
                    height=int(height),
                    ahash=Hash256.from_hex(ah),
                    phash=Hash256.from_hex(ph),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            records.append(record)
    return records
