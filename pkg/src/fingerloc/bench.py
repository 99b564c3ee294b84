"""Experiment runner: datasets -> fingerprints -> engines -> error statistics and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .datasets import DatasetMissingError, load_tkn, load_ujiindoorloc
from .engines import (ENGINES, EngineConfig, FeatureSet, Pipeline, fine_tune_localizer, fit_localizer,
                      location_errors, sub_rng)
from .fingerprints import ap_universe, corpus_floor_dbm
from .propagation import PathLossParams, Room, make_square_grid, simulate_database, simulate_test_set

STUDIES = ("engines", "transfer")
TRANSFER_CASES = ("without-transfer", "before-fine-tuning", "after-fine-tuning")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment, loaded from a YAML mapping with the same keys.

    ``study: engines`` evaluates every engine in ``engines``; the ``nn`` engine
    is repeated once per entry of ``augment``.  ``study: transfer`` pretrains a
    network in a source environment and fine-tunes it with ``transfer_fraction``
    of the target training points.
    """

    name: str = "experiment"
    study: str = "engines"
    source: str = "simulated"  # simulated, uji or tkn
    path: str | None = None  # uji training file or tkn export
    test_path: str | None = None  # uji validation file
    building: int = 0
    floor: int = 0
    target_floor: int = 1
    room_width: float = 20.0
    room_height: float = 10.0
    grid_spacing: float = 1.0
    measurements: int = 5
    n_test: int = 1000
    path_loss: dict = field(default_factory=dict)
    target_path_loss: dict = field(default_factory=lambda: {"k_walls": 12})
    transfer_fraction: float = 0.3
    width: int | None = None
    train_resamples: int = 1  # resampled rows per training location
    engines: tuple[str, ...] = ("ed_knn", "svm", "nn")
    augment: tuple[int, ...] = (0,)
    engine: EngineConfig = field(default_factory=EngineConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    expect_mean: dict = field(default_factory=dict)
    expect_variance_below: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "engines", tuple(self.engines))
        object.__setattr__(self, "augment", tuple(int(a) for a in self.augment))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "expect_variance_below", tuple(tuple(p) for p in self.expect_variance_below))
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {', '.join(STUDIES)}")
        if self.source not in ("simulated", "uji", "tkn"):
            raise ValueError(f"unknown source {self.source!r}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.engines or any(e not in ENGINES for e in self.engines):
            raise ValueError(f"engines must be drawn from {', '.join(ENGINES)}")
        if self.train_resamples < 1:
            raise ValueError("train_resamples must be at least 1")
        if not self.augment or min(self.augment) < 0:
            raise ValueError("augment levels must be nonnegative")
        if self.source != "simulated" and not self.path:
            raise ValueError(f"source {self.source!r} needs a path")
        if self.source == "uji" and not self.test_path:
            raise ValueError("source 'uji' needs test_path (the validation file)")
        if self.study == "transfer" and self.source == "tkn":
            raise ValueError("transfer needs the simulated or uji source")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        if "engine" in d:
            d["engine"] = EngineConfig.from_dict(d["engine"] or {})
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            spec = cls.from_dict(yaml.safe_load(fh))
        base = Path(path).parent
        # relative dataset paths are taken relative to the experiment file
        resolved = {k: str((base / v) if not Path(v).is_absolute() else Path(v))
                    for k, v in (("path", spec.path), ("test_path", spec.test_path)) if v}
        return replace(spec, **resolved)

    def check_files(self) -> None:
        for p in (self.path, self.test_path):
            if p and not Path(p).is_file():
                hint = ("download TrainingData.csv and ValidationData.csv from the UCI repository"
                        if self.source == "uji" else "export the TKN measurements to the long CSV layout")
                raise DatasetMissingError(f"{p} not found: {hint}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["engines"], d["augment"], d["seeds"] = list(self.engines), list(self.augment), list(self.seeds)
        d["expect_variance_below"] = [list(p) for p in self.expect_variance_below]
        d["engine"] = self.engine.to_dict()
        return json.loads(json.dumps(d))

    def cases(self) -> list[tuple[str, str, int]]:
        """``(case name, engine, augmentation)`` in report order."""
        if self.study == "transfer":
            return [(c, "nn", self.engine.augment) for c in TRANSFER_CASES]
        out = []
        for e in self.engines:
            if e == "nn" and self.augment != (0,):
                out += [(f"nn x{a}", e, a) for a in self.augment]
            else:
                out.append((e, e, self.engine.augment if e == "nn" else 0))
        return out


def error_stats(errors) -> dict[str, float]:
    """Mean, sample variance (n - 1 divisor, 0 for a single value), min and max."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("no errors to summarize")
    var = float(np.var(e, ddof=1)) if e.size > 1 else 0.0
    return {"mean": float(np.mean(e)), "variance": var, "min": float(e.min()), "max": float(e.max())}


@dataclass
class ExperimentReport:
    name: str
    config: dict
    errors: dict[str, dict[int, np.ndarray]]  # case -> seed -> errors in meters
    wall_clock_s: float = 0.0
    notes: dict = field(default_factory=dict)

    def pooled(self, case: str) -> np.ndarray:
        return np.concatenate([self.errors[case][s] for s in sorted(self.errors[case])])

    def stats(self, case: str) -> dict[str, float]:
        return error_stats(self.pooled(case))

    def seed_means(self, case: str) -> dict[int, float]:
        return {s: float(np.mean(e)) for s, e in sorted(self.errors[case].items())}


# ---------------------------------------------------------------------------
# datasets


def _sim_room(spec: ExperimentSpec) -> Room:
    return Room.with_corner_aps(spec.room_width, spec.room_height)


def _simulated(spec: ExperimentSpec, seed: int, params: PathLossParams, tag: str):
    room = _sim_room(spec)
    grid = make_square_grid(room, spec.grid_spacing)
    rng = sub_rng(seed, "data", tag)
    train_rows = simulate_database(room, grid, spec.measurements, params, rng)
    test_rows = simulate_test_set(room, spec.n_test, spec.measurements, params, rng)
    return train_rows, test_rows


def _rows_features(spec: ExperimentSpec, seed: int, train_rows, test_rows, pipeline=None):
    if pipeline is None:
        width = spec.width or spec.measurements
        pipeline = Pipeline(tuple(ap_universe(train_rows)), width, corpus_floor_dbm(train_rows))
    rng = sub_rng(seed, "fingerprints")
    return (pipeline.features(train_rows, rng, spec.train_resamples), pipeline.features(test_rows, rng),
            pipeline)


def _uji_sets(spec: ExperimentSpec, floor: int, reference=None, normalization=None):
    train_db, meta = load_ujiindoorloc(spec.path, spec.building, floor, reference, normalization)
    test_db, _ = load_ujiindoorloc(spec.test_path, spec.building, floor, meta, train_db.normalization)
    return FeatureSet(train_db, train_db), FeatureSet(test_db, test_db), meta, train_db.normalization


def _tkn_width(rows) -> int:
    counts = [len(v) for r in rows for v in r.rssi.values() if v]
    return int(round(float(np.median(counts)))) if counts else 1


def load_feature_sets(spec: ExperimentSpec, seed: int) -> tuple[FeatureSet, FeatureSet]:
    if spec.source == "simulated":
        params = PathLossParams(**spec.path_loss)
        tr, te = _simulated(spec, seed, params, "source")
        return _rows_features(spec, seed, tr, te)[:2]
    if spec.source == "tkn":
        tr, _ = load_tkn(spec.path, "train")
        te, _ = load_tkn(spec.path, "test")
        width = spec.width or _tkn_width(tr)
        pipeline = Pipeline(tuple(ap_universe(tr)), width, corpus_floor_dbm(tr))
        return _rows_features(spec, seed, tr, te, pipeline)[:2]
    return _uji_sets(spec, spec.floor)[:2]


# ---------------------------------------------------------------------------
# studies


def _engine_study(spec: ExperimentSpec, seed: int, errors: dict, notes: dict) -> None:
    train_fs, test_fs = load_feature_sets(spec, seed)
    for case, engine, aug in spec.cases():
        cfg = replace(spec.engine, augment=aug)
        loc = fit_localizer(engine, train_fs, cfg, sub_rng(seed, "engine", case))
        errors[case][seed] = location_errors(loc, test_fs)
        if "best_epoch" in loc.info:
            notes.setdefault(case, {})[seed] = {"best_epoch": loc.info["best_epoch"],
                                                "stop_reason": loc.info["stop_reason"]}


def _subset_points(fs: FeatureSet, fraction: float, rng) -> FeatureSet:
    """Keep ``floor(fraction * n)`` surveyed locations together with all their resampled rows."""
    n = len(fs.averaged)
    copies = len(fs.fixed) // n
    keep = max(2, int(math.floor(fraction * n)))
    idx = np.sort(rng.permutation(n)[:keep])
    # resampled copies of one location sit next to each other
    fixed_idx = (idx[:, None] * copies + np.arange(copies)).ravel()
    return FeatureSet(fs.fixed.subset(fixed_idx), fs.averaged.subset(idx))


def _transfer_sets(spec: ExperimentSpec, seed: int):
    if spec.source == "simulated":
        src_params = PathLossParams(**spec.path_loss)
        tgt_params = PathLossParams(**{**spec.path_loss, **spec.target_path_loss})
        s_tr, s_te = _simulated(spec, seed, src_params, "source")
        t_tr, t_te = _simulated(spec, seed, tgt_params, "target")
        src_train, _, pipeline = _rows_features(spec, seed, s_tr, s_te)
        # target rows reuse the source AP order and fill value
        tgt_train, tgt_test, _ = _rows_features(spec, seed, t_tr, t_te, pipeline)
        return src_train, tgt_train, tgt_test
    src_train, _, meta, norm = _uji_sets(spec, spec.floor)
    tgt_train, tgt_test, _, _ = _uji_sets(spec, spec.target_floor, meta, norm)
    return src_train, tgt_train, tgt_test


def _transfer_study(spec: ExperimentSpec, seed: int, errors: dict, notes: dict) -> None:
    src_train, tgt_train, tgt_test = _transfer_sets(spec, seed)
    small = _subset_points(tgt_train, spec.transfer_fraction, sub_rng(seed, "transfer-subset"))
    cfg = spec.engine
    scratch = fit_localizer("nn", small, cfg, sub_rng(seed, "engine", "without-transfer"))
    pre = fit_localizer("nn", src_train, cfg, sub_rng(seed, "engine", "pretrain"))
    tuned = fine_tune_localizer(pre, small, cfg, sub_rng(seed, "engine", "fine-tune"))
    for case, loc in zip(TRANSFER_CASES, (scratch, pre, tuned)):
        errors[case][seed] = location_errors(loc, tgt_test)
        notes.setdefault(case, {})[seed] = {"best_epoch": loc.info["best_epoch"],
                                            "stop_reason": loc.info["stop_reason"]}


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run every case for every seed.  Results depend only on the experiment settings and seeds."""
    spec.check_files()
    t0 = time.perf_counter()
    errors = {case: {} for case, _, _ in spec.cases()}
    notes: dict = {}
    study = _engine_study if spec.study == "engines" else _transfer_study
    for seed in spec.seeds:
        study(spec, seed, errors, notes)
    return ExperimentReport(spec.name, spec.to_dict(), errors, time.perf_counter() - t0, notes)


# ---------------------------------------------------------------------------
# acceptance bands


def check_report(report: ExperimentReport, spec: ExperimentSpec) -> list[tuple[str, bool, str]]:
    """Evaluate the experiment's expected bands; one ``(name, ok, detail)`` per check."""
    out = []
    for case, (lo, hi) in spec.expect_mean.items():
        m = report.stats(case)["mean"]
        out.append((f"mean[{case}]", lo <= m <= hi, f"{m:.3f} m, band [{lo}, {hi}]"))
    for a, b in spec.expect_variance_below:
        va, vb = report.stats(a)["variance"], report.stats(b)["variance"]
        out.append((f"variance[{a}] < variance[{b}]", va < vb, f"{va:.3f} vs {vb:.3f}"))
    return out


# ---------------------------------------------------------------------------
# report output

STAT_ROWS = (("mean", "Mean error [m]"), ("variance", "Error variance"),
             ("min", "Minimum error [m]"), ("max", "Maximum error [m]"))


def format_table(report: ExperimentReport) -> str:
    cases = list(report.errors)
    if not cases or any(not report.errors[c] for c in cases):
        raise ValueError("report holds no errors")
    stats = {c: report.stats(c) for c in cases}
    label_w = max(len(label) for _, label in STAT_ROWS)
    col_w = max(10, *(len(c) for c in cases))
    lines = [f"{report.name}  (seeds: {', '.join(str(s) for s in sorted(report.errors[cases[0]]))})",
             " " * label_w + "".join(f"  {c:>{col_w}}" for c in cases)]
    for key, label in STAT_ROWS:
        lines.append(f"{label:<{label_w}}" + "".join(f"  {stats[c][key]:>{col_w}.2f}" for c in cases))
    lines.append(f"{'Test points':<{label_w}}" + "".join(f"  {len(report.pooled(c)):>{col_w}d}" for c in cases))
    return "\n".join(lines) + "\n"


def errors_csv(report: ExperimentReport) -> str:
    if not report.errors or any(not v for v in report.errors.values()):
        raise ValueError("report holds no errors")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "seed", "index", "error_m"])
    for case, by_seed in report.errors.items():
        for seed in sorted(by_seed):
            for i, e in enumerate(by_seed[seed]):
                w.writerow([case, seed, i, repr(float(e))])
    return buf.getvalue()


def read_errors_csv(path) -> dict[str, dict[int, np.ndarray]]:
    out: dict[str, dict[int, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["case", "seed", "index", "error_m"]:
            raise ValueError(f"{path}: not an error-list CSV")
        for rec in reader:
            out.setdefault(rec["case"], {}).setdefault(int(rec["seed"]), []).append(float(rec["error_m"]))
    return {c: {s: np.array(v) for s, v in d.items()} for c, d in out.items()}


PLOT_COLUMNS = ["case", "seed", "n", "min", "q25", "median", "q75", "max", "mean"]


def plot_data_csv(report: ExperimentReport) -> str:
    """Per-seed and pooled quantiles, enough to draw box plots elsewhere."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for case, by_seed in report.errors.items():
        groups = [(str(s), by_seed[s]) for s in sorted(by_seed)] + [("pooled", report.pooled(case))]
        for label, e in groups:
            q = np.quantile(e, [0.0, 0.25, 0.5, 0.75, 1.0])
            w.writerow([case, label, len(e), *(f"{v:.6f}" for v in q), f"{np.mean(e):.6f}"])
    return buf.getvalue()


def summary_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "n", "mean", "variance", "min", "max"])
    for case in report.errors:
        s = report.stats(case)
        w.writerow([case, len(report.pooled(case)), *(repr(s[k]) for k, _ in STAT_ROWS)])
    return buf.getvalue()


def emit_report(report: ExperimentReport, out_dir, formats=("text-table", "csv", "plot-data")) -> list[Path]:
    """Write the requested formats into ``out_dir``.  Wall-clock time is left out so reruns match byte for byte."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writers = {
        "text-table": ("report.txt", format_table),
        "csv": ("errors.csv", errors_csv),
        "plot-data": ("plot_data.csv", plot_data_csv),
        "summary": ("summary.csv", summary_csv),
    }
    written = []
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}")
        name, fn = writers[fmt]
        path = out_dir / name
        path.write_text(fn(report), encoding="utf-8")
        written.append(path)
    cfg_path = out_dir / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(report.config, sort_keys=True), encoding="utf-8")
    written.append(cfg_path)
    return written
