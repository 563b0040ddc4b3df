#!/usr/bin/env python3
"""Convert a CIRCO split to cotmr queries.jsonl + gallery.jsonl.

Expects:
  <annotations>/<split>.json  [{"id", "reference_img_id", "relative_caption", "gt_img_ids"}, ...]
  <images>/                   the COCO unlabeled2017 images, named <12-digit id>.jpg

All ground-truth ids become targets. Every image in the directory becomes a gallery entry.
"""

import argparse
import json
from pathlib import Path

from canonical import write_gallery, write_queries


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("annotations", type=Path)
    ap.add_argument("images", type=Path)
    ap.add_argument("--split", default="val")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()

    anns = json.loads((args.annotations / f"{args.split}.json").read_text())
    queries = []
    for a in anns:
        queries.append(
            {
                "query_id": a["id"],
                "reference_image": a["reference_img_id"],
                "modification_text": a["relative_caption"],
                "targets": a["gt_img_ids"],
            }
        )
    gallery = [(str(int(p.stem)), str(p)) for p in sorted(args.images.glob("*.jpg"))]

    nq = write_queries(args.out / "queries.jsonl", queries)
    ng = write_gallery(args.out / "gallery.jsonl", gallery)
    print(f"{nq} queries, {ng} gallery images -> {args.out}")


if __name__ == "__main__":
    main()
