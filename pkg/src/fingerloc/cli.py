"""Command line entry point: ``fingerloc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .bench import ExperimentReport, ExperimentSpec, check_report, emit_report, format_table, run_experiment
from .csvio import read_db_csv, read_tidy_csv, write_db_csv, write_tidy_csv
from .datasets import DatasetMissingError, SchemaError, load_tkn, load_ujiindoorloc
from .engines import (ENGINES, EngineConfig, FeatureSet, Localizer, Pipeline, fine_tune_localizer,
                      fit_localizer, location_errors, sub_rng)
from .fingerprints import augment_permute, ap_universe, average_slots, corpus_floor_dbm
from .propagation import PathLossParams, Room, make_square_grid, simulate_database, simulate_test_set

MODEL_FORMAT = "fingerloc-localizer"
MODEL_VERSION = 1


def _is_db_csv(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first.startswith("#") or first.startswith("x,y,class")


def _load_features(path, pipeline: Pipeline | None, seed: int) -> tuple[FeatureSet, Pipeline | None]:
    """Read a tidy or fixed-width CSV into features, fitting a pipeline when none is given."""
    if _is_db_csv(path):
        db = read_db_csv(path)
        return FeatureSet(db, average_slots(db)), pipeline
    rows = read_tidy_csv(path)
    if pipeline is None:
        counts = [len(v) for r in rows for v in r.rssi.values() if v]
        width = int(round(float(np.median(counts)))) if counts else 1
        pipeline = Pipeline(tuple(ap_universe(rows)), width, corpus_floor_dbm(rows))
    return pipeline.features(rows, sub_rng(seed, "fingerprints", str(path))), pipeline


def _engine_config(path) -> EngineConfig:
    if path is None:
        return EngineConfig()
    with open(path, encoding="utf-8") as fh:
        return EngineConfig.from_dict(yaml.safe_load(fh) or {})


def save_model(loc: Localizer, pipeline: Pipeline | None, path) -> None:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION,
           "pipeline": None if pipeline is None else pipeline.to_dict(), "localizer": loc.to_dict()}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> tuple[Localizer, Pipeline | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} v{MODEL_VERSION} file")
    pipeline = None if doc["pipeline"] is None else Pipeline.from_dict(doc["pipeline"])
    return Localizer.from_dict(doc["localizer"]), pipeline


def cmd_simulate(a) -> int:
    rng = np.random.default_rng(a.seed)
    params = PathLossParams(k_walls=a.k_walls, lambda_exp=a.lambda_exp)
    room = Room.with_corner_aps(a.width, a.height)
    grid = make_square_grid(room, a.spacing)
    write_tidy_csv(simulate_database(room, grid, a.measurements, params, rng), a.out)
    if a.test_out:
        write_tidy_csv(simulate_test_set(room, a.n_test, a.measurements, params, rng), a.test_out)
    return 0


def cmd_ingest(a) -> int:
    if a.source == "tkn":
        rows, _ = load_tkn(a.path, a.split)
        write_tidy_csv(rows, a.out)
    else:
        ref = norm = None
        if a.reference:
            ref_db, ref = load_ujiindoorloc(a.reference, a.building, a.floor)
            norm = ref_db.normalization
        db, meta = load_ujiindoorloc(a.path, a.building, a.floor, ref, norm)
        write_db_csv(db, a.out)
        print(f"{len(db)} rows, {len(meta.kept_ap_ids)} APs kept, {len(meta.pruned_ap_ids)} pruned")
    return 0


def cmd_train(a) -> int:
    fs, pipeline = _load_features(a.data, None, a.seed)
    loc = fit_localizer(a.engine, fs, _engine_config(a.config), sub_rng(a.seed, "engine", a.engine))
    save_model(loc, pipeline, a.out)
    if a.history and "history" in loc.info:
        loc.info["history"].write_csv(a.history)
    return 0


def _single_report(name, errors, config) -> ExperimentReport:
    return ExperimentReport(name, config, {name: {0: errors}})


def cmd_evaluate(a) -> int:
    loc, pipeline = load_model(a.model)
    fs, _ = _load_features(a.test, pipeline, a.seed)
    report = _single_report(loc.engine, location_errors(loc, fs), {"model": str(a.model), "test": str(a.test)})
    sys.stdout.write(format_table(report))
    if a.out:
        emit_report(report, a.out)
    return 0


def cmd_augment(a) -> int:
    # tidy input is first resampled to fixed-width rows
    db = _load_features(a.db, None, a.seed)[0].fixed
    write_db_csv(augment_permute(db, a.times, np.random.default_rng(a.seed)), a.out)
    return 0


def cmd_transfer(a) -> int:
    pre, pipeline = load_model(a.model)
    fs, _ = _load_features(a.data, pipeline, a.seed)
    loc = fine_tune_localizer(pre, fs, _engine_config(a.config) if a.config else pre.config,
                              sub_rng(a.seed, "engine", "fine-tune"))
    save_model(loc, pipeline, a.out)
    return 0


def cmd_bench(a) -> int:
    spec = ExperimentSpec.load(a.spec)
    if a.seed is not None:
        spec = replace(spec, seeds=(a.seed,))
    report = run_experiment(spec)
    sys.stdout.write(format_table(report))
    print(f"wall clock {report.wall_clock_s:.1f} s", file=sys.stderr)
    if a.out:
        emit_report(report, a.out, ("text-table", "csv", "plot-data", "summary"))
    if a.check:
        results = check_report(report, spec)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not all(ok for _, ok, _ in results):
            return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fingerloc", description="RSSI fingerprinting localization toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="emit a simulated tidy corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--test-out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=float, default=20.0)
    s.add_argument("--height", type=float, default=10.0)
    s.add_argument("--spacing", type=float, default=1.0)
    s.add_argument("--measurements", type=int, default=5)
    s.add_argument("--n-test", type=int, default=1000)
    s.add_argument("--k-walls", type=int, default=10)
    s.add_argument("--lambda-exp", type=float, default=0.5)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ingest", help="convert UJIIndoorLoc or TKN files to canonical CSV")
    s.add_argument("source", choices=["uji", "tkn"])
    s.add_argument("--path", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", default="train", help="tkn split to extract")
    s.add_argument("--building", type=int, default=0)
    s.add_argument("--floor", type=int, default=0)
    s.add_argument("--reference", help="uji training file whose APs, offset and scaling to reuse")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train an engine and write a model file")
    s.add_argument("--engine", required=True, choices=ENGINES)
    s.add_argument("--data", required=True, help="tidy or fixed-width training CSV")
    s.add_argument("--config", help="YAML engine settings")
    s.add_argument("--out", required=True)
    s.add_argument("--history", help="write the per-epoch training curve here")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="localize a test CSV and report errors")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--out", help="report directory")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("augment", help="append permuted copies to a fixed-width database")
    s.add_argument("--db", required=True, help="fixed-width or tidy CSV")
    s.add_argument("--times", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("transfer", help="fine-tune a pretrained nn model on new data")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="YAML engine settings (defaults to the model's)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("bench", help="run an experiment spec")
    s.add_argument("spec")
    s.add_argument("--out", help="report directory")
    s.add_argument("--seed", type=int, help="run this single seed instead of the experiment's list")
    s.add_argument("--check", action="store_true", help="exit 1 unless the experiment's expected bands hold")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetMissingError, SchemaError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
