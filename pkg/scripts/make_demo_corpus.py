#!/usr/bin/env python3
"""Build a planted-duplicate image corpus for exercising the dedup pipeline.

Writes smooth random patterns plus factor-2 downsampled copies (a few under a
wrong label to plant cross-label conflicts), then prints the ground truth and
the matching `fedsilo dedup` invocation.
"""

from __future__ import annotations

import argparse

from fedsilo.synthcorpus import build_planted_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="corpus root directory to create")
    parser.add_argument("--originals", type=int, default=200)
    parser.add_argument("--duplicates", type=int, default=100)
    parser.add_argument("--conflicts", type=int, default=4)
    parser.add_argument("--size", type=int, default=256, help="original image side length")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = build_planted_corpus(
        args.out,
        num_originals=args.originals,
        num_duplicates=args.duplicates,
        num_conflicts=args.conflicts,
        seed=args.seed,
        size=args.size,
    )
    print(f"wrote {corpus.total_images} images under {corpus.root}")
    print(f"  originals:        {len(corpus.originals)}")
    print(f"  planted copies:   {len(corpus.duplicate_pairs)}")
    print(f"  conflict groups:  {len(corpus.conflict_pairs)}")
    print()
    print("run the pipeline with:")
    print(f"  fedsilo dedup --root {corpus.root}=planted --threshold 5 --out <outdir>")


if __name__ == "__main__":
    main()
