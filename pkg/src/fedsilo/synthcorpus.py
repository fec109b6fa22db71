"""Constructed image corpora with known ground truth, used to validate the
dedup pipeline end to end.

Images are smooth random patterns: a coarse binary grid upsampled bilinearly.
Smoothness matters because both hashes must survive a factor-2 bilinear
downsample of each planted duplicate, while independent patterns must stay
far apart in Hamming distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .curation import DEFAULT_LABELS
from .datagen import rng_stream
from .hashing import resize_bilinear


def smooth_gray_image(rng: np.random.Generator, size: int = 256, base_cells: int = 16) -> np.ndarray:
    """A random smooth pattern: binary 30/225 cells blown up bilinearly."""
    base = np.where(rng.random((base_cells, base_cells)) < 0.5, 30.0, 225.0)
    return np.round(resize_bilinear(base, size, size)).astype(np.uint8)


def downsample_half(image: np.ndarray) -> np.ndarray:
    """Factor-2 bilinear downsample, quantized back to uint8."""
    rows, cols = image.shape
    small = resize_bilinear(image.astype(np.float64), rows // 2, cols // 2)
    return np.round(small).astype(np.uint8)


@dataclass(frozen=True)
class PlantedCorpus:
    root: Path
    originals: list[str]        # record-id relative paths ("label/name.png")
    duplicate_pairs: list[tuple[str, str]]  # (original, planted copy)
    conflict_pairs: list[tuple[str, str]]   # subset of duplicate_pairs with mismatched labels

    @property
    def total_images(self) -> int:
        return len(self.originals) + len(self.duplicate_pairs)


def build_planted_corpus(
    root: str | Path,
    num_originals: int = 200,
    num_duplicates: int = 100,
    num_conflicts: int = 4,
    labels: tuple[str, ...] = DEFAULT_LABELS,
    seed: int = 0,
    size: int = 256,
) -> PlantedCorpus:
    """Write ``num_originals`` independent patterns plus ``num_duplicates``
    factor-2 downsampled copies of the first originals. The first
    ``num_conflicts`` copies land under a different label directory, planting
    cross-label conflict groups."""
    if not 0 <= num_conflicts <= num_duplicates <= num_originals:
        raise ValueError("need num_conflicts <= num_duplicates <= num_originals")
    root = Path(root)
    for label in labels:
        (root / label).mkdir(parents=True, exist_ok=True)

    originals = []
    duplicate_pairs = []
    conflict_pairs = []
    for i in range(num_originals):
        label = labels[i % len(labels)]
        image = smooth_gray_image(rng_stream(seed, "planted-corpus", client=i), size=size)
        rel = f"{label}/orig_{i:04d}.png"
        Image.fromarray(image, mode="L").save(root / rel)
        originals.append(rel)

        if i < num_duplicates:
            if i < num_conflicts:
                copy_label = labels[(i + 1) % len(labels)]
            else:
                copy_label = label
            copy_rel = f"{copy_label}/copy_{i:04d}.png"
            Image.fromarray(downsample_half(image), mode="L").save(root / copy_rel)
            duplicate_pairs.append((rel, copy_rel))
            if copy_label != label:
                conflict_pairs.append((rel, copy_rel))

    return PlantedCorpus(
        root=root,
        originals=originals,
        duplicate_pairs=duplicate_pairs,
        conflict_pairs=conflict_pairs,
    )
