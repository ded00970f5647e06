"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The heavyweight
experiment criteria are marked ``slow``.
"""

import csv
import inspect
import itertools
import json
import socket
import subprocess
import sys
import time

import numpy as np
import pytest
from click.testing import CliRunner

import modn
import modn.model
import modn.training
from modn.cli import main as cli_main
from modn.data import encode_answer
from modn.demo import make_demo_table
from modn.experiments import evaluate, overall_macro_f1, split_train_val
from modn.metrics import macro_f1_arrays


def check(name: str, ok: bool, detail: str = ""):
    suffix = f"  [{detail}]" if detail else ""
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{name} failed {suffix}"


# ---------------------------------------------------------------------------
# 1. gradient correctness
# ---------------------------------------------------------------------------


def test_gradient_correctness():
    specs = [
        (modn.MlpSpec((4, 8, 3), "tanh", "sigmoid"), "bce"),
        (modn.MlpSpec((3, 4, 2), "tanh", "identity"), "sse"),
        (modn.MlpSpec((5, 16, 4), "relu", "sigmoid"), "bce"),
    ]
    start = time.perf_counter()
    worst = max(modn.grad_check(spec, loss, seed)
                for spec, loss in specs for seed in range(10))
    elapsed = time.perf_counter() - start
    check("gradient correctness (10 seeds x 3 specs)",
          worst < 1e-4 and elapsed < 10.0,
          f"max rel err {worst:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. fold equivalence
# ---------------------------------------------------------------------------


def _trained_synthetic(spec, state_dim=8, epochs=6, seed=0):
    table = modn.generate_synthetic(spec)
    train_tab, val_tab = split_train_val(table, 0.15, seed)
    config = modn.TrainConfig(epochs=epochs, batch_size=16, state_dim=state_dim,
                              optimizer=modn.OptimizerConfig(lr=5e-3), shuffle_seed=seed)
    model = modn.init_model(table.schema, table.targets, state_dim, seed)
    model, _ = modn.train(model, train_tab, val_tab, config)
    return model, table


def test_fold_equivalence():
    model, table = _trained_synthetic(modn.SyntheticSpec(
        n_records=140, n_continuous=4, n_binary=3, n_categorical=2,
        n_targets=3, missing_rate=0.25, seed=31))
    exact = 0
    for record in table.records[:100]:
        trajectory = modn.run_consultation(model, record)
        state = model.initial_state()
        rows = [modn.decode_all(model, state)]
        for answer in record.answers:
            feature = model.feature(answer.feature_id)
            state = modn.encode_step(model, state,
                                     (answer.feature_id, encode_answer(feature, answer.value, model.stats)))
            rows.append(modn.decode_all(model, state))
        folded = np.array([[r[t] for t in model.targets] for r in rows])
        if np.array_equal(folded, trajectory.matrix()):
            exact += 1
    check("fold equivalence (100 records, exact float equality)", exact == 100,
          f"{exact}/100 exact")


# ---------------------------------------------------------------------------
# 3. missingness by design
# ---------------------------------------------------------------------------


def test_missingness_by_design(monkeypatch):
    spec = modn.SyntheticSpec(n_records=60, n_continuous=6, n_binary=3, n_categorical=1,
                              n_targets=3, missing_rate=0.0, seed=17)
    model, table = _trained_synthetic(spec, epochs=4)
    full = table.records[0]
    n_features = len(table.schema)
    assert n_features == 10

    encoded_features: list[str] = []
    real_encode_step = modn.model.encode_step

    def counting_encode_step(model_, state, answer, *args, **kwargs):
        encoded_features.append(answer[0])
        return real_encode_step(model_, state, answer, *args, **kwargs)

    monkeypatch.setattr(modn.model, "encode_step", counting_encode_step)

    ok = True
    for k in range(n_features + 1):
        subset = {a.feature_id for a in full.answers[:k]}
        record = full.restricted(subset)
        encoded_features.clear()
        trajectory = modn.run_consultation(model, record)
        matrix = trajectory.matrix()
        ok &= matrix.shape == (k + 1, 3)
        ok &= bool(np.all(matrix > 0) and np.all(matrix < 1))
        ok &= encoded_features == record.feature_ids()  # nothing extra was encoded

    # no imputation path exists in the model/training code
    for module in (modn.model, modn.training):
        ok &= "imput" not in inspect.getsource(module).lower()
    check("missingness by design (k = 0..10, no imputation path)", ok)


# ---------------------------------------------------------------------------
# 4. validity preservation
# ---------------------------------------------------------------------------


def test_validity_preservation():
    table = modn.generate_synthetic(modn.SyntheticSpec(
        n_records=1000, n_continuous=6, n_binary=3, n_categorical=1,
        n_targets=3, missing_rate=0.1, seed=23))
    split = modn.simulate_iio_split(table, 0.6, (500, 200, 200), seed=1)
    config = modn.TrainConfig(epochs=12, batch_size=32, state_dim=8,
                              optimizer=modn.OptimizerConfig(lr=5e-3), patience=6)
    a_train, a_val = split_train_val(split.source_a, 0.1, 0)
    source = modn.init_model(split.source_a.schema, split.source_a.targets, 8, seed=0)
    source, _ = modn.train(source, a_train, a_val, config)

    new_features = [f for f in table.schema if f.feature_id in split.deleted_features]
    b_train, b_val = split_train_val(split.target_b, 0.1, 1)
    updated = modn.modular_update(source, b_train, b_val, new_features, config)

    shared = set(split.source_a.feature_ids())
    frozen_ok = updated.params.values_equal(source.params, source.params.names())

    exact = 0
    assert len(split.test.records) == 200
    for record in split.test.records:
        restricted = record.restricted(shared)
        a = modn.run_consultation(source, restricted).matrix()
        b = modn.run_consultation(updated, restricted).matrix()
        if np.array_equal(a, b):
            exact += 1
    check("validity preservation (200 shared-only records exact, params frozen)",
          frozen_ok and exact == 200, f"{exact}/200 exact, frozen={frozen_ok}")


# ---------------------------------------------------------------------------
# 5. ordinal reproduction of the porting comparison
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_iio_ordinal_reproduction(tmp_path):
    start = time.perf_counter()
    config = modn.ExperimentConfig(
        overlaps=[0.6, 0.8, 1.0],
        sizes=(800, 200, 500),
        scenarios=["static", "local", "global", "fine_tune", "modular_update"],
        seeds=[0, 1, 2, 3, 4],
        train=modn.TrainConfig(epochs=60, batch_size=32, state_dim=16,
                               optimizer=modn.OptimizerConfig(lr=5e-3), patience=12),
        synthetic=modn.SyntheticSpec(n_records=2000, n_continuous=6, n_binary=3,
                                     n_categorical=1, n_targets=3,
                                     label_mode="threshold", missing_rate=0.1, seed=7),
        output_dir=str(tmp_path / "iio"),
    )
    table = modn.run_iio_experiment(config)
    elapsed = time.perf_counter() - start

    tol = 0.02
    ok = elapsed < 600.0
    details = [f"{elapsed:.0f}s"]
    for overlap in config.overlaps:
        mean = {s: table.cell(s, overlap).mean for s in config.scenarios}
        ok &= all(v is not None for v in mean.values())
        ok &= mean["global"] + tol >= mean["fine_tune"] >= mean["static"] - tol
        ok &= mean["global"] + tol >= mean["modular_update"] >= mean["static"] - tol
        ok &= abs(mean["global"] - mean["fine_tune"]) <= 0.05
        details.append(f"o={overlap}: " + ",".join(f"{s}={mean[s]:.3f}" for s in config.scenarios))
    check("ordinal porting comparison (global >= ported >= static)", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 6. learning sanity
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_learning_sanity():
    table = modn.generate_synthetic(modn.SyntheticSpec(
        n_records=800, n_continuous=4, n_binary=2, n_categorical=0,
        n_targets=2, label_mode="threshold", noise=0.0, missing_rate=0.0, seed=11))
    train_tab, val_tab = split_train_val(table.subset(table.records[:600]), 0.15, 0)
    test_tab = table.subset(table.records[600:])
    scores = []
    for seed in range(5):
        config = modn.TrainConfig(epochs=200, batch_size=32, state_dim=16,
                                  optimizer=modn.OptimizerConfig(lr=5e-3),
                                  patience=30, shuffle_seed=seed)
        model = modn.init_model(table.schema, table.targets, config.state_dim, seed)
        model, report = modn.train(model, train_tab, val_tab, config)
        assert report.epochs_run <= 200
        scores.append(overall_macro_f1(evaluate(model, test_tab)))
    check("learning sanity (separable data, F1 >= 0.95, 5/5 seeds)",
          all(s >= 0.95 for s in scores),
          "scores " + ",".join(f"{s:.3f}" for s in scores))


# ---------------------------------------------------------------------------
# 7. metric oracles
# ---------------------------------------------------------------------------


def test_metric_oracles():
    ok = True
    for decisions in itertools.product([0, 1], repeat=4):
        for labels in itertools.product([0, 1], repeat=4):
            def brute(positive):
                tp = sum(d == positive and y == positive for d, y in zip(decisions, labels))
                fp = sum(d == positive and y != positive for d, y in zip(decisions, labels))
                fn = sum(d != positive and y == positive for d, y in zip(decisions, labels))
                return 1.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
            ok &= macro_f1_arrays(list(decisions), list(labels)) == (brute(1) + brute(0)) / 2

    res = modn.paired_t_test([0.80, 0.82, 0.79, 0.85, 0.90],
                             [0.75, 0.80, 0.80, 0.80, 0.85])
    ok &= abs(res.t - 2.6666666666666634) < 1e-9
    ok &= abs(res.p - 0.056000000000000175) < 1e-9

    mean, lo, hi = modn.mean_ci([0.8, 0.9])
    ok &= abs(mean - 0.85) < 1e-12
    ok &= abs(lo - 0.2146897631783955) < 1e-9
    ok &= abs(hi - 1.4853102368216047) < 1e-9
    check("metric oracles (256-case enumeration, frozen stats references)", ok)


# ---------------------------------------------------------------------------
# 8. evaluation protocol end-to-end
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_evaluation_protocol_end_to_end():
    table = modn.generate_synthetic(modn.SyntheticSpec(
        n_records=400, n_continuous=4, n_binary=2, n_categorical=0,
        n_targets=2, label_mode="threshold", missing_rate=0.1, seed=29))
    fitters = {
        "modn": modn.modn_fitter(modn.TrainConfig(
            epochs=40, batch_size=32, state_dim=12,
            optimizer=modn.OptimizerConfig(lr=5e-3), patience=10)),
        "logreg": modn.logreg_fitter(epochs=200),
        "mlp": modn.mlp_fitter(epochs=200),
    }
    comparison = modn.compare_models_5x2cv(table, fitters, seed0=0)
    shaped = (comparison.rows == ["target0", "target1", "overall"]
              and comparison.models == ["modn", "logreg", "mlp"]
              and all(len(comparison.fold_scores[m][r]) == 10
                      for m in comparison.models for r in comparison.rows)
              and len(comparison.significance) == 9  # 3 pairs x 3 rows
              and all({"t", "p", "significant"} <= set(e) for e in comparison.significance))

    xor = modn.generate_xor(n_records=600, n_noise_flags=2, seed=0)
    xor_train = xor.subset(xor.records[:420])
    xor_test = xor.subset(xor.records[420:])
    lg = overall_macro_f1(modn.baseline_logreg(xor_train, xor_test, seed=0))
    ml = overall_macro_f1(modn.baseline_mlp(xor_train, xor_test, seed=0))
    tr, va = split_train_val(xor_train, 0.15, 0)
    config = modn.TrainConfig(epochs=150, batch_size=16, state_dim=8,
                              optimizer=modn.OptimizerConfig(lr=5e-3), patience=30)
    model = modn.init_model(xor.schema, xor.targets, config.state_dim, seed=0)
    model, _ = modn.train(model, tr, va, config)
    mo = overall_macro_f1(evaluate(model, xor_test))
    margins = mo >= lg + 0.2 and ml >= lg + 0.2
    check("evaluation protocol (5x2 CV table + XOR margins)", shaped and margins,
          f"xor: logreg={lg:.3f} mlp={ml:.3f} modn={mo:.3f}")


# ---------------------------------------------------------------------------
# 9. real-data-shaped ingestion and training
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_real_export_ingestion_and_training(tmp_path):
    from modn.data import load_dataset, write_dataset_csv

    table = make_demo_table()
    data_path = tmp_path / "consultations.csv"
    schema_path = tmp_path / "consultations.schema.json"
    write_dataset_csv(table, data_path, schema_path)
    loaded = load_dataset(data_path, schema_path)

    # independent cell count straight off the CSV
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        feature_cols = [i for i, c in enumerate(header)
                        if c not in ("record_id", *loaded.targets)]
        non_blank = sum(sum(1 for i in feature_cols if row[i] != "") for row in reader)

    total_answers = sum(len(r.answers) for r in loaded.records)
    ingest_ok = len(loaded.records) == 3192 and total_answers == non_blank

    config_path = tmp_path / "train.json"
    config_path.write_text(json.dumps({
        "epochs": 10, "batch_size": 64, "state_dim": 16,
        "optimizer": {"lr": 0.005}, "patience": 5,
    }))
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "train", "--data", str(data_path), "--schema", str(schema_path),
        "--config", str(config_path), "--seed", "0",
        "--out", str(tmp_path / "demo_model.modn.json"),
        "--report", str(tmp_path / "report.json"),
    ])
    trained_ok = result.exit_code == 0 and (tmp_path / "demo_model.modn.json").exists()
    report = json.loads((tmp_path / "report.json").read_text()) if trained_ok else {}
    table_ok = trained_ok and set(loaded.targets) <= set(report.get("test_macro_f1", {}))
    check("real-export-shaped ingestion (3192 records, zero imputed) + training",
          ingest_ok and table_ok,
          f"records={len(loaded.records)}, answers==cells: {total_answers == non_blank}")


# ---------------------------------------------------------------------------
# 10. cross-interface equality (live service vs CLI vs library)
# ---------------------------------------------------------------------------


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.mark.slow
def test_cross_interface_equality(tmp_path):
    import httpx

    model, table = _trained_synthetic(modn.SyntheticSpec(
        n_records=120, n_continuous=3, n_binary=2, n_categorical=1,
        n_targets=2, missing_rate=0.0, seed=37))
    model_path = tmp_path / "m.modn.json"
    modn.save_model(model, model_path)
    from modn.data import write_dataset_csv
    data_path, schema_path = tmp_path / "d.csv", tmp_path / "d.schema.json"
    write_dataset_csv(table, data_path, schema_path)
    record = table.records[5]

    # library
    library = modn.run_consultation(model, record)

    # CLI
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "trajectory", "--model", str(model_path), "--data", str(data_path),
        "--schema", str(schema_path), "--record-id", record.record_id,
        "--out-dir", str(tmp_path / "traj"),
    ])
    assert result.exit_code == 0, result.output
    cli_doc = json.loads((tmp_path / "traj" / f"{record.record_id}.json").read_text())
    cli_matrix = modn.Trajectory.from_json_dict(cli_doc).matrix()

    # live HTTP service
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "modn.cli", "serve", "--host", "127.0.0.1",
         "--port", str(port), "--state-dir", str(tmp_path / "state"),
         "--model", str(model_path)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
    )
    try:
        base = f"http://127.0.0.1:{port}"
        for _ in range(100):
            try:
                registered = httpx.get(f"{base}/models", timeout=1.0).json()["models"]
                if registered:
                    break
            except Exception:
                time.sleep(0.1)
        else:
            raise RuntimeError("service did not come up")
        model_id = registered[0]["model_id"]
        session = httpx.post(f"{base}/sessions", json={"model_id": model_id}).json()
        for answer in record.answers:
            r = httpx.post(f"{base}/sessions/{session['session_id']}/answers",
                           json={"feature_id": answer.feature_id, "value": answer.value})
            assert r.status_code == 200, r.text
        service_doc = httpx.get(f"{base}/sessions/{session['session_id']}/trajectory").json()
    finally:
        proc.terminate()
        proc.wait(timeout=10)

    service_matrix = modn.Trajectory.from_json_dict(service_doc).matrix()
    lib_matrix = library.matrix()
    ok = (np.array_equal(lib_matrix, cli_matrix)
          and np.array_equal(lib_matrix, service_matrix)
          and [s["feature_id"] for s in service_doc["steps"][1:]] == record.feature_ids())
    check("cross-interface equality (service == CLI == library, exact)", ok,
          f"steps={len(record.answers)}")
