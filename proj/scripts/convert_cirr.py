#!/usr/bin/env python3
"""Convert a CIRR split to cotmr queries.jsonl + gallery.jsonl.

Expects the public layout:
  <root>/captions/cap.rc2.<split>.json       [{"pairid", "reference", "target_hard", "caption", "img_set": {"members"}}, ...]
  <root>/image_splits/split.rc2.<split>.json {name: relative path}

The img_set members are copied as the 6-image subset unchanged.
The test split has no public targets and cannot be converted.
"""

import argparse
import json
from pathlib import Path

from canonical import write_gallery, write_queries


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path)
    ap.add_argument("--split", default="val")
    ap.add_argument("--image-root", type=Path, help="directory the split paths are relative to (default: root)")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()

    caps = json.loads((args.root / "captions" / f"cap.rc2.{args.split}.json").read_text())
    paths = json.loads((args.root / "image_splits" / f"split.rc2.{args.split}.json").read_text())
    image_root = args.image_root or args.root

    queries = []
    for c in caps:
        if "target_hard" not in c:
            raise SystemExit(f"pair {c.get('pairid')} has no target; only splits with targets can be converted")
        queries.append(
            {
                "query_id": c["pairid"],
                "reference_image": c["reference"],
                "modification_text": c["caption"],
                "targets": [c["target_hard"]],
                "subset": c["img_set"]["members"],
            }
        )
    gallery = [(name, str(image_root / rel)) for name, rel in paths.items()]

    nq = write_queries(args.out / "queries.jsonl", queries)
    ng = write_gallery(args.out / "gallery.jsonl", gallery)
    print(f"{nq} queries, {ng} gallery images -> {args.out}")


if __name__ == "__main__":
    main()
