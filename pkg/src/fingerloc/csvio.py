"""Tidy long-format and fixed-width CSV files.

Tidy files hold one reading per line: ``x,y,ap_id,meas_idx,rssi_dbm``.  An AP
seen at a location without any reading is written with empty ``meas_idx`` and
``rssi_dbm`` so that it survives a round trip.  Consecutive lines with the same
location form one row; a repeated ``(ap_id, meas_idx)`` starts a new row.

Fixed-width files hold one fingerprint per line: ``x,y,class,f_1..f_D``.  An
optional first line ``# {json}`` carries AP ids, width, grid and normalization.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .fingerprints import FingerprintDb, Normalization, RawMeasurementRow

TIDY_HEADER = ["x", "y", "ap_id", "meas_idx", "rssi_dbm"]


class CsvFormatError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


def write_tidy_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TIDY_HEADER)
        for row in rows:
            x, y = row.location
            for ap, values in row.rssi.items():
                if not values:
                    w.writerow([repr(float(x)), repr(float(y)), ap, "", ""])
                for i, v in enumerate(values):
                    w.writerow([repr(float(x)), repr(float(y)), ap, i, repr(float(v))])


def _float(path, line, text, what):
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(path, line, f"bad {what} value {text!r}") from None


def read_tidy_csv(path) -> list[RawMeasurementRow]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(path, 1, "empty file")
        if [h.strip() for h in header] != TIDY_HEADER:
            raise CsvFormatError(path, 1, f"expected header {','.join(TIDY_HEADER)}")
        rows: list[RawMeasurementRow] = []
        loc = None
        current: dict[str, list[float]] = {}
        seen: set = set()
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 5:
                raise CsvFormatError(path, lineno, f"expected 5 fields, got {len(rec)}")
            x, y = _float(path, lineno, rec[0], "x"), _float(path, lineno, rec[1], "y")
            ap, idx, val = rec[2], rec[3].strip(), rec[4].strip()
            if not ap:
                raise CsvFormatError(path, lineno, "missing ap_id")
            key = (ap, idx)
            if loc != (x, y) or key in seen:
                if current:
                    rows.append(RawMeasurementRow(loc, current))
                loc, current, seen = (x, y), {}, set()
            seen.add(key)
            values = current.setdefault(ap, [])
            if idx == "" and val == "":
                continue
            if idx == "" or val == "":
                raise CsvFormatError(path, lineno, "meas_idx and rssi_dbm must both be present or both empty")
            try:
                int(idx)
            except ValueError:
                raise CsvFormatError(path, lineno, f"bad meas_idx {idx!r}") from None
            v = _float(path, lineno, val, "rssi_dbm")
            if not np.isfinite(v):
                raise CsvFormatError(path, lineno, "RSSI must be finite")
            values.append(v)
        if current:
            rows.append(RawMeasurementRow(loc, current))
    return rows


def write_db_csv(db: FingerprintDb, path) -> None:
    meta = {"ap_ids": list(db.ap_ids), "width": db.width,
            "grid": None if db.grid is None else db.grid.tolist(),
            "normalization": None if db.normalization is None else db.normalization.to_dict()}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "class"] + [f"f_{i + 1}" for i in range(db.dim)])
        for i in range(len(db)):
            label = "" if db.labels is None else int(db.labels[i])
            w.writerow([repr(float(db.locations[i, 0])), repr(float(db.locations[i, 1])), label]
                       + [repr(float(v)) for v in db.features[i]])


def read_db_csv(path) -> FingerprintDb:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError(path, 1, "empty file")
    meta, start = {}, 0
    if lines[0].startswith("#"):
        try:
            meta = json.loads(lines[0][1:])
        except json.JSONDecodeError as exc:
            raise CsvFormatError(path, 1, f"bad metadata line: {exc}") from None
        start = 1
    if start >= len(lines):
        raise CsvFormatError(path, start + 1, "missing header")
    header = next(csv.reader([lines[start]]))
    if header[:3] != ["x", "y", "class"] or any(h != f"f_{i + 1}" for i, h in enumerate(header[3:])):
        raise CsvFormatError(path, start + 1, "expected header x,y,class,f_1..f_D")
    dim = len(header) - 3
    locs, feats, labels = [], [], []
    for lineno, rec in enumerate(csv.reader(lines[start + 1:]), start=start + 2):
        if not rec:
            continue
        if len(rec) != dim + 3:
            raise CsvFormatError(path, lineno, f"expected {dim + 3} fields, got {len(rec)}")
        locs.append((_float(path, lineno, rec[0], "x"), _float(path, lineno, rec[1], "y")))
        labels.append(None if rec[2] == "" else int(_float(path, lineno, rec[2], "class")))
        feats.append([_float(path, lineno, v, "feature") for v in rec[3:]])
    ap_ids = meta.get("ap_ids") or [f"f_{i + 1}" for i in range(dim)]
    width = meta.get("width", 1)
    if any(lab is None for lab in labels) and not all(lab is None for lab in labels):
        raise CsvFormatError(path, start + 2, "class column must be filled on every row or none")
    norm = meta.get("normalization")
    return FingerprintDb(
        tuple(ap_ids), width,
        np.array(locs, dtype=float).reshape(-1, 2),
        np.array(feats, dtype=float).reshape(len(locs), dim),
        labels=None if not labels or labels[0] is None else np.array(labels),
        grid=None if meta.get("grid") is None else np.array(meta["grid"], dtype=float),
        normalization=None if norm is None else Normalization.from_dict(norm),
    )
