"""Experiment harness: imputation-based baselines (logistic regression and a
monolithic MLP trained on the shared autodiff core), the IIO porting
experiment over feature-overlap levels, a 5x2 CV model comparison, and
lossless results export.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import MlpSpec, OptimizerConfig, ParamStore, Tape, Tensor, backward, bce_with_logits, init_mlp_params, mlp_forward
from .data import DatasetTable, SyntheticSpec, generate_synthetic, load_dataset, simulate_iio_split
from .metrics import (
    PredictionSet,
    cv_5x2_predictions,
    macro_f1,
    mean_ci,
    overall_f1,
    paired_t_test,
)
from .model import init_model, predict_records, save_model
from .training import TrainConfig, fine_tune, modular_update, train

SCENARIOS = ("static", "local", "global", "fine_tune", "modular_update")


def labels_matrix(table: DatasetTable) -> np.ndarray:
    return np.array([[r.labels[t] for t in table.targets] for r in table.records], dtype=np.int64)


def split_train_val(table: DatasetTable, val_fraction: float, seed: int):
    """Seeded disjoint train/validation split by record."""
    n = len(table.records)
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(val_fraction * n))) if n > 1 else 0
    val = [table.records[i] for i in order[:n_val]]
    tr = [table.records[i] for i in order[n_val:]]
    return table.subset(tr), table.subset(val)


def evaluate(model, test: DatasetTable, threshold: float = 0.5) -> PredictionSet:
    probs = predict_records(model, test.records)
    return PredictionSet(probs, labels_matrix(test), list(test.targets), threshold)


def overall_macro_f1(predictions: PredictionSet) -> float:
    return overall_f1([macro_f1(predictions, t) for t in predictions.targets])


# ---------------------------------------------------------------------------
# imputation-based baselines
# ---------------------------------------------------------------------------


@dataclass
class ImputationStats:
    continuous: dict[str, tuple[float, float]]  # fid -> (mean, std)
    modes: dict[str, object]  # fid -> mode value (binary/categorical)


def fit_imputation(train: DatasetTable) -> ImputationStats:
    values: dict[str, list] = {f.feature_id: [] for f in train.schema}
    for rec in train.records:
        for a in rec.answers:
            values[a.feature_id].append(a.value)
    continuous, modes = {}, {}
    for f in train.schema:
        vals = values[f.feature_id]
        if f.kind == "continuous":
            arr = np.asarray(vals, dtype=np.float64) if vals else np.zeros(1)
            continuous[f.feature_id] = (float(arr.mean()), float(arr.std()))
        else:
            if vals:
                uniq, counts = np.unique(np.asarray(vals, dtype=object), return_counts=True)
                modes[f.feature_id] = uniq[int(np.argmax(counts))]
            else:
                modes[f.feature_id] = 0 if f.kind == "binary" else f.levels[0]
    return ImputationStats(continuous, modes)


def design_matrix(table: DatasetTable, stats: ImputationStats) -> np.ndarray:
    """Fixed-width mean/mode-imputed matrix (z-scored continuous, one-hot categorical)."""
    width = sum(f.encoded_width for f in table.schema)
    x = np.zeros((len(table.records), width))
    for r, rec in enumerate(table.records):
        answered = {a.feature_id: a.value for a in rec.answers}
        col = 0
        for f in table.schema:
            if f.kind == "continuous":
                mean, std = stats.continuous[f.feature_id]
                if f.feature_id in answered and std > 0:
                    x[r, col] = (float(answered[f.feature_id]) - mean) / std
                col += 1
            elif f.kind == "binary":
                value = answered.get(f.feature_id, stats.modes[f.feature_id])
                x[r, col] = float(value)
                col += 1
            else:
                value = answered.get(f.feature_id, stats.modes[f.feature_id])
                x[r, col + f.levels.index(value)] = 1.0
                col += len(f.levels)
    return x


def _fit_logit_net(spec: MlpSpec, x: np.ndarray, y: np.ndarray, lr: float, epochs: int,
                   seed: int) -> ParamStore:
    store = ParamStore(rng_seed=seed)
    init_mlp_params(store, "", spec, np.random.default_rng(seed))
    opt = OptimizerConfig(method="adam", lr=lr).build()
    target = y.reshape(-1, 1).astype(np.float64)
    for _ in range(epochs):
        tape = Tape()
        z = mlp_forward(spec, store, Tensor(x), tape, logits=True)
        loss = bce_with_logits(tape, z, target)
        backward(tape, loss, store)
        opt.step(store)
    return store


def _net_val_loss(spec: MlpSpec, store: ParamStore, x: np.ndarray, y: np.ndarray) -> float:
    z = mlp_forward(spec, store, Tensor(x), None, logits=True).data
    yy = y.reshape(-1, 1).astype(np.float64)
    return float((np.maximum(z, 0) - z * yy + np.log1p(np.exp(-np.abs(z)))).sum() / len(y))


def _predict_net(spec: MlpSpec, store: ParamStore, x: np.ndarray) -> np.ndarray:
    return mlp_forward(spec, store, Tensor(x), None).data[:, 0]


def _baseline(train_table: DatasetTable, test_table: DatasetTable, specs_and_lrs, seed: int,
              epochs: int, threshold: float) -> PredictionSet:
    stats = fit_imputation(train_table)
    x_train = design_matrix(train_table, stats)
    x_test = design_matrix(test_table, stats)
    y_train = labels_matrix(train_table)
    n = len(train_table.records)
    order = np.random.default_rng(seed).permutation(n)
    cut = max(1, int(0.8 * n))
    fit_idx, val_idx = order[:cut], order[cut:]

    probs = np.zeros((len(test_table.records), len(test_table.targets)))
    for d, target in enumerate(train_table.targets):
        y = y_train[:, d]
        if y.min() == y.max():
            warnings.warn(f"target {target!r} has a single class in training; using its base rate")
            probs[:, d] = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
            continue
        best = None
        for spec, lr in specs_and_lrs:
            store = _fit_logit_net(spec, x_train[fit_idx], y[fit_idx], lr, epochs, seed)
            val = _net_val_loss(spec, store, x_train[val_idx], y[val_idx]) if len(val_idx) else 0.0
            if best is None or val < best[0]:
                best = (val, spec, lr)
        _, spec, lr = best
        store = _fit_logit_net(spec, x_train, y, lr, epochs, seed)
        probs[:, d] = _predict_net(spec, store, x_test)
    return PredictionSet(probs, labels_matrix(test_table), list(test_table.targets), threshold)


def baseline_logreg(train_table: DatasetTable, test_table: DatasetTable,
                    imputation: str = "mean_mode", seed: int = 0, epochs: int = 300,
                    lr_grid=(1e-2, 1e-3), threshold: float = 0.5) -> PredictionSet:
    """Per-target logistic regression on mean/mode-imputed vectors."""
    if imputation != "mean_mode":
        raise ValueError(f"unknown imputation {imputation!r}")
    width = sum(f.encoded_width for f in train_table.schema)
    spec = MlpSpec((width, 1), output_activation="sigmoid")
    return _baseline(train_table, test_table, [(spec, lr) for lr in lr_grid], seed, epochs, threshold)


def baseline_mlp(train_table: DatasetTable, test_table: DatasetTable,
                 imputation: str = "mean_mode", seed: int = 0, epochs: int = 300,
                 lr_grid=(1e-2, 1e-3), widths=(16, 64), threshold: float = 0.5) -> PredictionSet:
    """Per-target monolithic MLP on mean/mode-imputed vectors, small grid search."""
    if imputation != "mean_mode":
        raise ValueError(f"unknown imputation {imputation!r}")
    width = sum(f.encoded_width for f in train_table.schema)
    candidates = [
        (MlpSpec((width, h, 1), output_activation="sigmoid"), lr)
        for h in widths for lr in lr_grid
    ]
    return _baseline(train_table, test_table, candidates, seed, epochs, threshold)


# ---------------------------------------------------------------------------
# fitters for cross-validation comparisons
# ---------------------------------------------------------------------------


def modn_fitter(config: TrainConfig, val_fraction: float = 0.1):
    def fit_predict(train_table, test_table, seed):
        cfg = replace(config, shuffle_seed=seed)
        tr, va = split_train_val(train_table, val_fraction, seed)
        model = init_model(train_table.schema, train_table.targets, cfg.state_dim, seed)
        model, _ = train(model, tr, va, cfg)
        return evaluate(model, test_table)
    return fit_predict


def logreg_fitter(epochs: int = 300):
    def fit_predict(train_table, test_table, seed):
        return baseline_logreg(train_table, test_table, seed=seed, epochs=epochs)
    return fit_predict


def mlp_fitter(epochs: int = 300):
    def fit_predict(train_table, test_table, seed):
        return baseline_mlp(train_table, test_table, seed=seed, epochs=epochs)
    return fit_predict


@dataclass
class ComparisonTable:
    """5x2 CV comparison: per-target and overall rows for several models."""

    rows: list[str]  # target ids plus "overall"
    models: list[str]
    means: dict[str, dict[str, float]]  # model -> row -> mean score
    fold_scores: dict[str, dict[str, list[float]]]  # model -> row -> 10 scores
    significance: list[dict]  # {row, model_a, model_b, t, p, significant}

    def to_dict(self) -> dict:
        return {
            "rows": self.rows, "models": self.models, "means": self.means,
            "fold_scores": self.fold_scores, "significance": self.significance,
        }


def compare_models_5x2cv(dataset: DatasetTable, fitters: dict[str, object],
                         n_repeats: int = 5, seed0: int = 0, alpha: float = 0.05) -> ComparisonTable:
    """Evaluation protocol: same folds for every model, per-target macro F1
    plus the overall average, paired t-tests between all model pairs."""
    rows = list(dataset.targets) + ["overall"]
    fold_scores: dict[str, dict[str, list[float]]] = {}
    for name, fit_predict in fitters.items():
        folds = cv_5x2_predictions(dataset, fit_predict, n_repeats, seed0)
        per_row: dict[str, list[float]] = {r: [] for r in rows}
        for ps in folds:
            per_target = {t: macro_f1(ps, t) for t in dataset.targets}
            for t in dataset.targets:
                per_row[t].append(per_target[t])
            per_row["overall"].append(overall_f1(per_target.values()))
        fold_scores[name] = per_row
    means = {
        name: {r: float(np.mean(scores[r])) for r in rows}
        for name, scores in fold_scores.items()
    }
    names = list(fitters)
    significance = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for r in rows:
                res = paired_t_test(fold_scores[a][r], fold_scores[b][r])
                significance.append({
                    "row": r, "model_a": a, "model_b": b,
                    "t": res.t, "p": res.p, "significant": bool(res.p < alpha),
                })
    return ComparisonTable(rows, names, means, fold_scores, significance)


# ---------------------------------------------------------------------------
# the IIO experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    overlaps: list[float] = field(default_factory=lambda: [0.6, 0.8, 1.0])
    sizes: tuple[int, int, int] = (800, 200, 500)
    scenarios: list[str] = field(default_factory=lambda: list(SCENARIOS))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_csv: str | None = None
    dataset_schema: str | None = None
    synthetic: SyntheticSpec | None = None
    val_fraction: float = 0.1
    threshold: float = 0.5
    output_dir: str | None = None

    def __post_init__(self):
        if not self.scenarios or not self.seeds:
            raise ValueError("scenario and seed lists must be non-empty")
        unknown = [s for s in self.scenarios if s not in SCENARIOS]
        if unknown:
            raise ValueError(f"unknown scenarios {unknown}; expected subset of {SCENARIOS}")
        self.sizes = tuple(int(s) for s in self.sizes)
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticSpec.from_dict(self.synthetic)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(**doc)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def load_table(self) -> DatasetTable:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic)
        if not self.dataset_csv or not self.dataset_schema:
            raise ValueError("config needs either a synthetic spec or dataset_csv + dataset_schema")
        return load_dataset(self.dataset_csv, self.dataset_schema)


@dataclass
class CellResult:
    scenario: str
    overlap: float
    seed_scores: list  # float per seed, None where the scenario failed
    errors: dict[int, str] = field(default_factory=dict)
    mean: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None


@dataclass
class SignificanceEntry:
    overlap: float
    scenario_a: str
    scenario_b: str
    t: float
    p: float
    degenerate: bool


@dataclass
class ResultsTable:
    scenarios: list[str]
    overlaps: list[float]
    seeds: list[int]
    cells: list[CellResult]
    significance: list[SignificanceEntry]
    threshold: float = 0.5

    def cell(self, scenario: str, overlap: float) -> CellResult:
        for c in self.cells:
            if c.scenario == scenario and c.overlap == overlap:
                return c
        raise KeyError((scenario, overlap))

    def to_dict(self) -> dict:
        return {
            "scenarios": self.scenarios,
            "overlaps": self.overlaps,
            "seeds": self.seeds,
            "threshold": self.threshold,
            "cells": [
                {
                    "scenario": c.scenario, "overlap": c.overlap,
                    "seed_scores": c.seed_scores, "errors": {str(k): v for k, v in c.errors.items()},
                    "mean": c.mean, "ci_lo": c.ci_lo, "ci_hi": c.ci_hi,
                }
                for c in self.cells
            ],
            "significance": [
                {
                    "overlap": s.overlap, "scenario_a": s.scenario_a, "scenario_b": s.scenario_b,
                    "t": s.t, "p": s.p, "degenerate": s.degenerate,
                }
                for s in self.significance
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultsTable":
        cells = [
            CellResult(
                c["scenario"], float(c["overlap"]), list(c["seed_scores"]),
                {int(k): v for k, v in c["errors"].items()},
                c["mean"], c["ci_lo"], c["ci_hi"],
            )
            for c in doc["cells"]
        ]
        significance = [
            SignificanceEntry(float(s["overlap"]), s["scenario_a"], s["scenario_b"],
                              float(s["t"]), float(s["p"]), bool(s["degenerate"]))
            for s in doc["significance"]
        ]
        return cls(list(doc["scenarios"]), [float(o) for o in doc["overlaps"]],
                   [int(s) for s in doc["seeds"]], cells, significance,
                   float(doc.get("threshold", 0.5)))


def _run_cell(full: DatasetTable, overlap: float, seed: int, config: ExperimentConfig,
              model_sink=None) -> dict[str, float | Exception]:
    """Train/evaluate every requested scenario on one seeded split."""
    split = simulate_iio_split(full, overlap, config.sizes, seed)
    shared_features = set(split.source_a.feature_ids())
    new_features = [f for f in full.schema if f.feature_id not in shared_features]
    cfg = replace(config.train, shuffle_seed=seed)
    results: dict[str, float | Exception] = {}

    needs_source = {"static", "fine_tune", "modular_update"} & set(config.scenarios)
    source_model = None
    if needs_source:
        a_train, a_val = split_train_val(split.source_a, config.val_fraction, seed)
        source_model = init_model(split.source_a.schema, split.source_a.targets,
                                  cfg.state_dim, seed)
        source_model, _ = train(source_model, a_train, a_val, cfg)

    b_train, b_val = split_train_val(split.target_b, config.val_fraction, seed + 1)

    def run(scenario):
        if scenario == "static":
            # the static model only ever sees features shared with A
            restricted = split.test.subset([r.restricted(shared_features) for r in split.test.records])
            for rec in restricted.records:
                assert all(a.feature_id in shared_features for a in rec.answers)
            assert set(source_model.feature_ids()) == shared_features
            return source_model, restricted
        if scenario == "local":
            model = init_model(split.target_b.schema, split.target_b.targets, cfg.state_dim, seed)
            model, _ = train(model, b_train, b_val, cfg)
            return model, split.test
        if scenario == "global":
            union = DatasetTable(list(full.schema), list(full.targets),
                                 split.source_a.records + split.target_b.records)
            g_train, g_val = split_train_val(union, config.val_fraction, seed + 2)
            model = init_model(full.schema, full.targets, cfg.state_dim, seed)
            model, _ = train(model, g_train, g_val, cfg)
            return model, split.test
        if scenario == "fine_tune":
            return fine_tune(source_model, b_train, b_val, new_features, cfg), split.test
        if scenario == "modular_update":
            return modular_update(source_model, b_train, b_val, new_features, cfg), split.test
        raise ValueError(f"unknown scenario {scenario!r}")

    for scenario in config.scenarios:
        try:
            model, test_table = run(scenario)
            preds = evaluate(model, test_table, config.threshold)
            results[scenario] = overall_macro_f1(preds)
            if model_sink is not None:
                model_sink(scenario, overlap, seed, model)
        except Exception as exc:  # cell failures must not abort the sweep
            results[scenario] = exc
    return results


def run_iio_experiment(config: ExperimentConfig) -> ResultsTable:
    """The porting experiment: for each (overlap, seed) build a split, train
    every scenario, score on the common full-feature test set, aggregate."""
    full = config.load_table()
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir:
        (out_dir / "models").mkdir(parents=True, exist_ok=True)

    def model_sink(scenario, overlap, seed, model):
        if out_dir:
            save_model(model, out_dir / "models" / f"{scenario}_overlap{overlap}_seed{seed}.modn.json")

    cells = {(s, o): CellResult(s, o, []) for o in config.overlaps for s in config.scenarios}
    for overlap in config.overlaps:
        for seed in config.seeds:
            outcome = _run_cell(full, overlap, seed, config, model_sink)
            for scenario in config.scenarios:
                cell = cells[(scenario, overlap)]
                res = outcome[scenario]
                if isinstance(res, Exception):
                    cell.seed_scores.append(None)
                    cell.errors[seed] = f"{type(res).__name__}: {res}"
                else:
                    cell.seed_scores.append(float(res))

    for cell in cells.values():
        valid = [s for s in cell.seed_scores if s is not None]
        if len(valid) >= 2:
            cell.mean, cell.ci_lo, cell.ci_hi = mean_ci(valid)
        elif len(valid) == 1:
            cell.mean = valid[0]

    significance = []
    for overlap in config.overlaps:
        for i, a in enumerate(config.scenarios):
            for b in config.scenarios[i + 1:]:
                sa = cells[(a, overlap)].seed_scores
                sb = cells[(b, overlap)].seed_scores
                paired = [(x, y) for x, y in zip(sa, sb) if x is not None and y is not None]
                if len(paired) >= 2:
                    res = paired_t_test([p[0] for p in paired], [p[1] for p in paired])
                    significance.append(SignificanceEntry(overlap, a, b, res.t, res.p, res.degenerate))

    table = ResultsTable(list(config.scenarios), list(config.overlaps), list(config.seeds),
                         [cells[(s, o)] for o in config.overlaps for s in config.scenarios],
                         significance, config.threshold)
    if out_dir:
        export_results(table, out_dir / "results.json", "json")
        export_results(table, out_dir / "results.csv", "csv")
    return table


# ---------------------------------------------------------------------------
# results round-trip
# ---------------------------------------------------------------------------

CSV_HEADER = [
    "row_type", "scenario", "overlap", "n_seeds", "mean_macro_f1", "ci_low", "ci_high",
    "seed_scores", "errors", "scenario_b", "t_stat", "p_value", "degenerate",
]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def export_results(table: ResultsTable, path, fmt: str = "json") -> None:
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(table.to_dict(), fh, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        meta = {"scenarios": table.scenarios, "overlaps": table.overlaps,
                "threshold": table.threshold}
        writer.writerow(["meta", "", "", "", "", "", "",
                         json.dumps(table.seeds), json.dumps(meta), "", "", "", ""])
        for c in table.cells:
            writer.writerow([
                "score", c.scenario, repr(c.overlap), str(len(c.seed_scores)),
                _fmt(c.mean), _fmt(c.ci_lo), _fmt(c.ci_hi),
                ";".join("NA" if s is None else repr(s) for s in c.seed_scores),
                json.dumps({str(k): v for k, v in c.errors.items()}),
                "", "", "", "",
            ])
        for s in table.significance:
            writer.writerow([
                "significance", s.scenario_a, repr(s.overlap), "", "", "", "", "", "",
                s.scenario_b, repr(s.t), repr(s.p), str(int(s.degenerate)),
            ])


def import_results(path, fmt: str = "json") -> ResultsTable:
    if fmt == "json":
        with open(path, "r", encoding="utf-8") as fh:
            return ResultsTable.from_dict(json.load(fh))
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError("unexpected results CSV header")
        cells, significance = [], []
        seeds, meta = [], {}
        for row in reader:
            kind = row[0]
            if kind == "meta":
                seeds = json.loads(row[7])
                meta = json.loads(row[8])
            elif kind == "score":
                scores = [None if s == "NA" else float(s) for s in row[7].split(";")] if row[7] else []
                cells.append(CellResult(
                    row[1], float(row[2]), scores,
                    {int(k): v for k, v in json.loads(row[8]).items()},
                    float(row[4]) if row[4] else None,
                    float(row[5]) if row[5] else None,
                    float(row[6]) if row[6] else None,
                ))
            elif kind == "significance":
                significance.append(SignificanceEntry(
                    float(row[2]), row[1], row[9], float(row[10]), float(row[11]), bool(int(row[12]))
                ))
    return ResultsTable(meta["scenarios"], [float(o) for o in meta["overlaps"]],
                        [int(s) for s in seeds], cells, significance,
                        float(meta.get("threshold", 0.5)))
