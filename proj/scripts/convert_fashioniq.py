#!/usr/bin/env python3
"""Convert one FashionIQ category/split to cotmr queries.jsonl + gallery.jsonl.

Expects the public layout:
  <root>/captions/cap.<category>.<split>.json      [{"candidate", "target", "captions": [a, b]}, ...]
  <root>/image_splits/split.<category>.<split>.json [image names]
  <root>/images/<name>.png

The two relative captions are joined with " and " into one modification text.
"""

import argparse
import json
from pathlib import Path

from canonical import write_gallery, write_queries


def join_captions(captions):
    parts = [c.strip().rstrip(".") for c in captions if c and c.strip()]
    return " and ".join(parts)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path)
    ap.add_argument("--category", required=True, choices=["dress", "shirt", "toptee"])
    ap.add_argument("--split", default="val")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--image-ext", default=".png")
    args = ap.parse_args()

    caps = json.loads((args.root / "captions" / f"cap.{args.category}.{args.split}.json").read_text())
    names = json.loads((args.root / "image_splits" / f"split.{args.category}.{args.split}.json").read_text())

    queries = []
    for i, c in enumerate(caps):
        queries.append(
            {
                "query_id": f"{args.category}_{args.split}_{i:05d}",
                "reference_image": c["candidate"],
                "modification_text": join_captions(c["captions"]),
                "targets": [c["target"]],
            }
        )
    images = args.root / "images"
    gallery = [(n, str(images / f"{n}{args.image_ext}")) for n in names]

    nq = write_queries(args.out / "queries.jsonl", queries)
    ng = write_gallery(args.out / "gallery.jsonl", gallery)
    print(f"{nq} queries, {ng} gallery images -> {args.out}")


if __name__ == "__main__":
    main()
