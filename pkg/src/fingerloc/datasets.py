"""Loaders for the UJIIndoorLoc and TKN measurement sets."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .fingerprints import DatasetMeta, FingerprintDb, Normalization, RawMeasurementRow

UJI_UNDETECTED = 100.0
UJI_UNDETECTED_DBM = -110.0
UJI_N_WAPS = 520
UJI_META_COLUMNS = ["LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID", "SPACEID",
                    "RELATIVEPOSITION", "USERID", "PHONEID", "TIMESTAMP"]

TKN_HEADER = ["point_id", "split", "x", "y", "ap_id", "rssi_dbm"]


class DatasetMissingError(FileNotFoundError):
    pass


class SchemaError(ValueError):
    pass


def _require(path, hint):
    path = Path(path)
    if not path.is_file():
        raise DatasetMissingError(f"{path} not found. {hint}")
    return path


def load_ujiindoorloc(path, building: int = 0, floor: int = 0,
                      reference: DatasetMeta | None = None,
                      normalization: Normalization | None = None) -> tuple[FingerprintDb, DatasetMeta]:
    """Read one floor of a UJIIndoorLoc CSV as a standardized width-1 database.

    Undetected readings (100) become -110 dBm and coordinates are shifted by
    the smallest longitude/latitude.  AP columns never detected on the floor
    are dropped.  Pass the ``reference`` meta and ``normalization`` of a
    training file to process its validation file (or another floor) with the
    same offset, AP columns and scaling.
    """
    path = _require(path, "Download UJIIndoorLoc (TrainingData.csv / ValidationData.csv) "
                          "from the UCI Machine Learning Repository.")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip().strip('"') for h in next(reader, [])]
        waps = [h for h in header if h.startswith("WAP")]
        missing = [c for c in UJI_META_COLUMNS[:4] if c not in header]
        if len(waps) != UJI_N_WAPS or missing:
            raise SchemaError(f"{path}: not a UJIIndoorLoc layout "
                              f"({len(waps)} WAP columns, missing {missing})")
        col = {h: i for i, h in enumerate(header)}
        wap_idx = np.array([col[w] for w in waps])
        rssi, coords = [], []
        for rec in reader:
            if not rec:
                continue
            if int(float(rec[col["BUILDINGID"]])) != building or int(float(rec[col["FLOOR"]])) != floor:
                continue
            vals = np.array(rec, dtype=object)[wap_idx].astype(float)
            rssi.append(vals)
            coords.append((float(rec[col["LONGITUDE"]]), float(rec[col["LATITUDE"]])))
    if not rssi:
        raise SchemaError(f"{path}: no rows for building {building} floor {floor}")
    rssi = np.array(rssi)
    coords = np.array(coords)
    detected = rssi != UJI_UNDETECTED
    rssi[~detected] = UJI_UNDETECTED_DBM

    if reference is None:
        keep = detected.any(axis=0)
        kept = tuple(w for w, k in zip(waps, keep) if k)
        pruned = tuple(w for w, k in zip(waps, keep) if not k)
        offset = tuple(coords.min(axis=0))
    else:
        kept, pruned, offset = reference.kept_ap_ids, reference.pruned_ap_ids, reference.offset
        pos = {w: i for i, w in enumerate(waps)}
        keep = np.array([pos[w] for w in kept])
    feats = rssi[:, keep]
    locs = coords - np.asarray(offset)
    bounds = tuple(locs.max(axis=0) - locs.min(axis=0))
    meta = DatasetMeta("uji", bounds, offset, pruned, kept)

    if normalization is None:
        normalization = Normalization.fit(feats, "zscore")
    db = FingerprintDb(kept, 1, locs, normalization.apply(feats), normalization=normalization)
    return db, meta


def load_tkn(path, split: str = "train") -> tuple[list[RawMeasurementRow], DatasetMeta]:
    """Read the ``split`` rows of a TKN export in long format.

    Expected columns: ``point_id,split,x,y,ap_id,rssi_dbm`` with one reading per
    line.  Every returned row carries the full AP universe of the file; APs not
    heard at a point have an empty reading list.
    """
    path = _require(path, "The TKN office dataset is distributed on request by its authors; "
                          "export it to the documented long format (see README).")
    points: dict[str, tuple[str, tuple[float, float], dict[str, list[float]]]] = {}
    universe: dict[str, None] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TKN_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(TKN_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(TKN_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(TKN_HEADER)} fields")
            pid, sp, x, y, ap, val = rec
            universe.setdefault(ap, None)
            entry = points.setdefault(pid, (sp, (float(x), float(y)), {}))
            if entry[0] != sp or entry[1] != (float(x), float(y)):
                raise SchemaError(f"{path}:{lineno}: point {pid} changes split or location")
            readings = entry[2].setdefault(ap, [])
            if val.strip():
                readings.append(float(val))
    aps = list(universe)
    rows = [RawMeasurementRow(loc, {ap: list(m.get(ap, [])) for ap in aps})
            for sp, loc, m in points.values() if sp == split]
    if not rows:
        raise SchemaError(f"{path}: no points in split {split!r}")
    locs = np.array([r.location for r in rows])
    bounds = tuple(locs.max(axis=0) - locs.min(axis=0))
    return rows, DatasetMeta("tkn", bounds, (0.0, 0.0), (), tuple(aps))
