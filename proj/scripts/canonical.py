"""Writers for the canonical queries and gallery files read by cotmr."""

import json
from pathlib import Path

QUERIES_FORMAT = "cotmr-queries-v1"
GALLERY_FORMAT = "cotmr-gallery-v1"


def _write_jsonl(path, header, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def write_queries(path, queries):
    """queries: iterable of dicts with query_id, reference_image, modification_text, targets and optional subset."""
    rows = []
    for q in queries:
        row = {
            "query_id": str(q["query_id"]),
            "reference_image": str(q["reference_image"]),
            "modification_text": q["modification_text"],
            "targets": [str(t) for t in q["targets"]],
        }
        if q.get("subset") is not None:
            row["subset"] = [str(s) for s in q["subset"]]
        rows.append(row)
    _write_jsonl(path, {"format": QUERIES_FORMAT}, rows)
    return len(rows)


def write_gallery(path, entries):
    """entries: iterable of (image_id, locator)."""
    rows = [{"image_id": str(i), "locator": str(loc)} for i, loc in entries]
    _write_jsonl(path, {"format": GALLERY_FORMAT}, rows)
    return len(rows)
