import filecmp

import numpy as np
import pytest
import yaml

from fingerloc.bench import (ExperimentReport, ExperimentSpec, check_report, emit_report, error_stats,
                             errors_csv, format_table, plot_data_csv, read_errors_csv, run_experiment)
from fingerloc.cli import main
from fingerloc.datasets import DatasetMissingError

SMALL_ENGINE = {"nn_hidden": 16, "nn_depth": 2, "train": {"max_epochs": 5, "patience": 3}}


def small_spec(**kw):
    base = dict(name="small", room_width=4, room_height=3, n_test=25, measurements=3, seeds=[0, 1],
                engines=["ed_knn", "svm", "nn"], engine=SMALL_ENGINE)
    base.update(kw)
    return ExperimentSpec.from_dict(base)


def test_error_stats_examples():
    assert error_stats([3, 4, 5]) == {"mean": 4.0, "variance": 1.0, "min": 3.0, "max": 5.0}
    assert error_stats([2.0])["variance"] == 0.0
    e = np.random.default_rng(0).exponential(size=1000)
    s = error_stats(e)
    assert s["mean"] == pytest.approx(np.mean(e), abs=1e-10)
    assert s["variance"] == pytest.approx(np.var(e, ddof=1), abs=1e-10)
    with pytest.raises(ValueError):
        error_stats([])


def fake_report():
    rng = np.random.default_rng(1)
    errors = {"a": {0: rng.uniform(size=5), 1: rng.uniform(size=7)}, "b": {0: rng.uniform(size=5), 1: rng.uniform(size=7)}}
    return ExperimentReport("fake", {"seeds": [0, 1]}, errors)


def test_pooled_mean_is_weighted_seed_mean():
    r = fake_report()
    means = r.seed_means("a")
    weighted = (5 * means[0] + 7 * means[1]) / 12
    assert r.stats("a")["mean"] == pytest.approx(weighted, abs=1e-12)


def test_table_rows_and_csv_round_trip(tmp_path):
    r = fake_report()
    table = format_table(r)
    for label in ("Mean error [m]", "Error variance", "Minimum error [m]", "Maximum error [m]"):
        assert label in table
    written = emit_report(r, tmp_path)
    assert {p.name for p in written} == {"report.txt", "errors.csv", "plot_data.csv", "config.yaml"}
    back = read_errors_csv(tmp_path / "errors.csv")
    for case in r.errors:
        for seed, e in r.errors[case].items():
            np.testing.assert_array_equal(back[case][seed], e)
    lines = plot_data_csv(r).splitlines()
    assert lines[0].startswith("case,seed,n") and len(lines) == 1 + 2 * 3
    with pytest.raises(ValueError):
        emit_report(r, tmp_path, ("png",))


def test_empty_report_rejected():
    r = ExperimentReport("empty", {}, {"a": {}})
    with pytest.raises(ValueError):
        format_table(r)
    with pytest.raises(ValueError):
        errors_csv(r)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"study": "other"})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"colour": "red"})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"engines": ["rf"]})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"source": "uji", "path": "x.csv"})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"engine": {"knn_k": 3, "bogus": 1}})
    spec = small_spec(augment=[0, 2])
    assert [c for c, _, _ in spec.cases()] == ["ed_knn", "svm", "nn x0", "nn x2"]


def test_missing_dataset_message(tmp_path):
    spec = ExperimentSpec.from_dict({"source": "uji", "path": str(tmp_path / "TrainingData.csv"),
                                     "test_path": str(tmp_path / "ValidationData.csv")})
    with pytest.raises(DatasetMissingError, match="UCI"):
        run_experiment(spec)


def test_small_engine_run_and_checks():
    spec = small_spec(expect_mean={"ed_knn": [0.0, 100.0]}, expect_variance_below=[["nn", "ed_knn"]])
    r = run_experiment(spec)
    assert set(r.errors) == {"ed_knn", "svm", "nn"}
    assert all(len(r.errors[c][s]) == 25 for c in r.errors for s in (0, 1))
    assert all(np.all(r.pooled(c) >= 0) for c in r.errors)
    checks = check_report(r, spec)
    assert checks[0][0] == "mean[ed_knn]" and checks[0][1]
    assert len(checks) == 2


def test_transfer_run_has_three_cases():
    spec = small_spec(study="transfer", seeds=[0])
    r = run_experiment(spec)
    assert list(r.errors) == ["without-transfer", "before-fine-tuning", "after-fine-tuning"]


def test_tkn_bench_on_fixture(tkn_path):
    spec = ExperimentSpec.from_dict({"source": "tkn", "path": str(tkn_path), "seeds": [0],
                                     "engines": ["ed_knn", "svm"], "train_resamples": 3, "engine": SMALL_ENGINE})
    r = run_experiment(spec)
    assert len(r.errors["ed_knn"][0]) == 2


def write_spec(tmp_path, **kw):
    path = tmp_path / "spec.yaml"
    path.write_text(yaml.safe_dump(small_spec(**kw).to_dict()))
    return path


def test_bench_is_byte_identical(tmp_path):
    path = write_spec(tmp_path)
    assert main(["bench", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["bench", str(path), "--out", str(tmp_path / "b")]) == 0
    names = ["report.txt", "errors.csv", "plot_data.csv", "summary.csv", "config.yaml"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names and not mismatch and not errors


def test_bench_check_exit_codes(tmp_path, capsys):
    good = write_spec(tmp_path, expect_mean={"ed_knn": [0.0, 100.0]})
    assert main(["bench", str(good), "--seed", "3", "--check"]) == 0
    assert "PASS mean[ed_knn]" in capsys.readouterr().out
    bad_dir = tmp_path / "bad"
    bad_dir.mkdir()
    bad = write_spec(bad_dir, expect_mean={"ed_knn": [100.0, 200.0]})
    assert main(["bench", str(bad), "--seed", "3", "--check"]) == 1
    assert main(["bench", str(tmp_path / "nope.yaml")]) == 2


def test_cli_train_evaluate_transfer(tmp_path):
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    assert main(["simulate", "--out", str(train), "--test-out", str(test), "--width", "4", "--height", "3",
                 "--n-test", "15", "--measurements", "3"]) == 0
    cfg = tmp_path / "nn.yaml"
    cfg.write_text(yaml.safe_dump(SMALL_ENGINE))
    for engine in ("ed_knn", "svm", "nn"):
        model = tmp_path / f"{engine}.json"
        assert main(["train", "--engine", engine, "--data", str(train), "--config", str(cfg),
                     "--out", str(model), "--history", str(tmp_path / "h.csv")]) == 0
        out = tmp_path / f"eval_{engine}"
        assert main(["evaluate", "--model", str(model), "--test", str(test), "--out", str(out)]) == 0
        assert len(read_errors_csv(out / "errors.csv")[engine][0]) == 15
    tuned = tmp_path / "tuned.json"
    assert main(["transfer", "--model", str(tmp_path / "nn.json"), "--data", str(train), "--out", str(tuned)]) == 0
    assert tuned.is_file()
    assert main(["evaluate", "--model", str(tmp_path / "missing.json"), "--test", str(test)]) == 2


def test_cli_ingest_tkn_and_augment(tmp_path, tkn_path):
    db = tmp_path / "db.csv"
    assert main(["ingest", "tkn", "--path", str(tkn_path), "--out", str(db)]) == 0
    aug = tmp_path / "aug.csv"
    assert main(["augment", "--db", str(db), "--times", "2", "--out", str(aug)]) == 0
    n = lambda p: sum(1 for line in p.read_text().splitlines() if line and not line.startswith("#"))
    # four training points, each kept once and permuted twice
    assert n(aug) - 1 == 3 * 4
