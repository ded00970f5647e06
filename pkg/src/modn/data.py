"""Feature schemas, dataset ingestion, answer encoding, and split simulation.

Datasets are CSV files (header row, one consultation per row) paired with a
JSON schema descriptor declaring feature kinds, categorical levels,
simultaneity groups, target columns, and the missing-value sentinel.  Empty
or sentinel cells become absent answers -- nothing is ever imputed here.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """Malformed schema descriptor or schema-level conflict."""


class DataValidationError(ValueError):
    """A cell failed validation; carries row/column coordinates."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None or column is not None:
            where = f" (row {row}, column {column!r})"
        super().__init__(message + where)


KINDS = ("continuous", "binary", "categorical")


@dataclass(frozen=True)
class FeatureSchema:
    feature_id: str
    kind: str
    question_text: str = ""
    levels: tuple[str, ...] = ()
    simultaneity_group: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown kind {self.kind!r} for feature {self.feature_id!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise SchemaError(f"categorical feature {self.feature_id!r} declares no levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"duplicate levels for feature {self.feature_id!r}")
        elif self.levels:
            raise SchemaError(f"levels only make sense for categorical features ({self.feature_id!r})")

    @property
    def encoded_width(self) -> int:
        return len(self.levels) if self.kind == "categorical" else 1


@dataclass(frozen=True)
class Answer:
    feature_id: str
    value: object  # float | int | str depending on kind
    simultaneity_group: int = 0


@dataclass
class ConsultationRecord:
    record_id: str
    answers: list[Answer]
    labels: dict[str, int]

    def __post_init__(self):
        seen = set()
        for a in self.answers:
            if a.feature_id in seen:
                raise SchemaError(f"record {self.record_id!r} answers {a.feature_id!r} twice")
            seen.add(a.feature_id)

    def feature_ids(self) -> list[str]:
        return [a.feature_id for a in self.answers]

    def restricted(self, keep: set[str]) -> "ConsultationRecord":
        """Copy with answers limited to the given feature ids."""
        return ConsultationRecord(
            self.record_id,
            [a for a in self.answers if a.feature_id in keep],
            dict(self.labels),
        )


@dataclass
class DatasetTable:
    schema: list[FeatureSchema]
    targets: list[str]
    records: list[ConsultationRecord]
    provenance: dict = field(default_factory=dict)

    def feature_ids(self) -> list[str]:
        return [f.feature_id for f in self.schema]

    def schema_by_id(self) -> dict[str, FeatureSchema]:
        return {f.feature_id: f for f in self.schema}

    def subset(self, records: list[ConsultationRecord]) -> "DatasetTable":
        return DatasetTable(list(self.schema), list(self.targets), records, dict(self.provenance))


@dataclass
class IioSplit:
    source_a: DatasetTable
    target_b: DatasetTable
    test: DatasetTable
    overlap_fraction: float
    deleted_features: list[str]


# ---------------------------------------------------------------------------
# schema descriptor + CSV ingestion
# ---------------------------------------------------------------------------


def load_schema(schema_path: str | Path) -> tuple[list[FeatureSchema], list[str], str, str | None]:
    """Parse a schema descriptor; returns (features, targets, sentinel, id column)."""
    with open(schema_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("features", "targets"):
        if key not in doc:
            raise SchemaError(f"schema descriptor missing {key!r}")
    features = []
    for item in doc["features"]:
        features.append(
            FeatureSchema(
                feature_id=item["id"],
                kind=item["kind"],
                question_text=item.get("question", item["id"]),
                levels=tuple(item.get("levels", ())),
                simultaneity_group=int(item.get("group", 0)),
            )
        )
    ids = [f.feature_id for f in features]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate feature ids in schema descriptor")
    targets = list(doc["targets"])
    if len(set(targets)) != len(targets):
        raise SchemaError("duplicate target ids in schema descriptor")
    sentinel = doc.get("missing_sentinel", "")
    return features, targets, sentinel, doc.get("record_id_column")


def parse_raw_value(feature: FeatureSchema, raw, row: int | None = None):
    """Coerce a raw cell/JSON value to the feature's canonical python value."""
    if feature.kind == "continuous":
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise DataValidationError(
                f"unparseable number {raw!r} for continuous feature", row, feature.feature_id
            ) from None
        if not math.isfinite(value):
            raise DataValidationError(f"non-finite value {raw!r}", row, feature.feature_id)
        return value
    if feature.kind == "binary":
        if isinstance(raw, bool):
            return int(raw)
        text = str(raw).strip()
        if text in ("0", "1"):
            return int(text)
        raise DataValidationError(
            f"binary feature expects 0 or 1, got {raw!r}", row, feature.feature_id
        )
    text = str(raw)
    if text not in feature.levels:
        raise DataValidationError(
            f"value {text!r} outside declared levels {list(feature.levels)}", row, feature.feature_id
        )
    return text


def load_dataset(data_path: str | Path, schema_path: str | Path) -> DatasetTable:
    """Ingest a CSV against its schema descriptor.

    Blank/sentinel cells become absent answers.  Unknown columns, bad
    categorical levels, and unparseable numbers raise with row/column
    coordinates.  Answers are ordered by (simultaneity group, schema order).
    """
    features, targets, sentinel, id_column = load_schema(schema_path)
    by_id = {f.feature_id: f for f in features}
    order = sorted(range(len(features)), key=lambda i: (features[i].simultaneity_group, i))

    with open(data_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError("empty CSV file") from None
        known = set(by_id) | set(targets) | ({id_column} if id_column else set())
        for col in header:
            if col not in known:
                raise DataValidationError(f"unknown column {col!r}", row=0, column=col)
        for col in list(by_id) + targets:
            if col not in header:
                raise DataValidationError(f"column {col!r} declared in schema but missing from CSV", column=col)
        col_index = {col: i for i, col in enumerate(header)}

        records = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataValidationError(
                    f"expected {len(header)} cells, got {len(row)}", row=row_num
                )
            answers = []
            for i in order:
                feature = features[i]
                cell = row[col_index[feature.feature_id]]
                if cell == sentinel:
                    continue
                value = parse_raw_value(feature, cell, row=row_num)
                answers.append(Answer(feature.feature_id, value, feature.simultaneity_group))
            labels = {}
            for target in targets:
                cell = row[col_index[target]]
                if cell not in ("0", "1"):
                    raise DataValidationError(
                        f"label must be 0 or 1, got {cell!r}", row=row_num, column=target
                    )
                labels[target] = int(cell)
            rid = row[col_index[id_column]] if id_column else str(row_num)
            records.append(ConsultationRecord(rid, answers, labels))

    return DatasetTable(features, targets, records, provenance={"source": str(data_path)})


def write_dataset_csv(table: DatasetTable, data_path: str | Path, schema_path: str | Path,
                      sentinel: str = "") -> None:
    """Emit a table as CSV + schema descriptor (the load_dataset wire format)."""
    features = table.schema
    header = ["record_id"] + [f.feature_id for f in features] + list(table.targets)
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in table.records:
            by_fid = {a.feature_id: a.value for a in rec.answers}
            row = [rec.record_id]
            for f in features:
                if f.feature_id in by_fid:
                    value = by_fid[f.feature_id]
                    row.append(repr(value) if isinstance(value, float) else str(value))
                else:
                    row.append(sentinel)
            row += [str(rec.labels[t]) for t in table.targets]
            writer.writerow(row)
    doc = {
        "features": [
            {
                "id": f.feature_id,
                "kind": f.kind,
                "question": f.question_text,
                "group": f.simultaneity_group,
                **({"levels": list(f.levels)} if f.kind == "categorical" else {}),
            }
            for f in features
        ],
        "targets": list(table.targets),
        "missing_sentinel": sentinel,
        "record_id_column": "record_id",
    }
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# answer encoding / normalization
# ---------------------------------------------------------------------------


@dataclass
class ContinuousStats:
    mean: float
    std: float


def compute_normalization_stats(table: DatasetTable, warn=None) -> dict[str, ContinuousStats]:
    """Per-continuous-feature mean/stddev over the answered (non-missing) cells."""
    stats: dict[str, ContinuousStats] = {}
    values: dict[str, list[float]] = {f.feature_id: [] for f in table.schema if f.kind == "continuous"}
    for rec in table.records:
        for a in rec.answers:
            if a.feature_id in values:
                values[a.feature_id].append(float(a.value))
    for fid, vals in values.items():
        if vals:
            arr = np.asarray(vals)
            stats[fid] = ContinuousStats(float(arr.mean()), float(arr.std()))
        else:
            stats[fid] = ContinuousStats(0.0, 1.0)
    return stats


def encode_answer(feature: FeatureSchema, value, stats: dict[str, ContinuousStats] | None) -> np.ndarray:
    """Raw answer -> encoder input vector (z-score / 0-1 scalar / one-hot)."""
    if feature.kind == "continuous":
        st = (stats or {}).get(feature.feature_id, ContinuousStats(0.0, 1.0))
        if st.std == 0.0:
            warnings.warn(f"feature {feature.feature_id!r} was constant in training; encoding as 0")
            return np.zeros(1)
        return np.array([(float(value) - st.mean) / st.std])
    if feature.kind == "binary":
        return np.array([float(value)])
    onehot = np.zeros(len(feature.levels))
    onehot[feature.levels.index(value)] = 1.0
    return onehot


# ---------------------------------------------------------------------------
# IIO split simulation
# ---------------------------------------------------------------------------


def simulate_iio_split(
    full: DatasetTable,
    overlap: float,
    sizes: tuple[int, int, int],
    seed: int,
) -> IioSplit:
    """Partition records into disjoint A/B/test and delete features from A.

    ceil((1 - overlap) * F) features are removed from A's schema and records;
    B and the test set keep every feature.
    """
    if not 0.0 < overlap <= 1.0:
        raise ValueError(f"overlap must be in (0, 1], got {overlap}")
    n_a, n_b, n_test = sizes
    if n_a + n_b + n_test > len(full.records):
        raise ValueError(
            f"sizes {sizes} exceed the {len(full.records)} available records"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(full.records))
    rec_a = [full.records[i] for i in order[:n_a]]
    rec_b = [full.records[i] for i in order[n_a:n_a + n_b]]
    rec_test = [full.records[i] for i in order[n_a + n_b:n_a + n_b + n_test]]

    n_features = len(full.schema)
    n_delete = math.ceil((1.0 - overlap) * n_features)
    deleted = sorted(rng.choice(full.feature_ids(), size=n_delete, replace=False).tolist()) if n_delete else []
    deleted_set = set(deleted)
    schema_a = [f for f in full.schema if f.feature_id not in deleted_set]
    keep = {f.feature_id for f in schema_a}

    source_a = DatasetTable(
        schema_a, list(full.targets), [r.restricted(keep) for r in rec_a],
        provenance={**full.provenance, "role": "source_a", "deleted_features": deleted},
    )
    target_b = full.subset(rec_b)
    target_b.provenance["role"] = "target_b"
    test = full.subset(rec_test)
    test.provenance["role"] = "test"
    return IioSplit(source_a, target_b, test, overlap, deleted)


# ---------------------------------------------------------------------------
# synthetic data with a known generative rule
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Desk-scale generator: iid features, logistic labels in a sparse weight vector."""

    n_records: int = 1000
    n_continuous: int = 6
    n_binary: int = 3
    n_categorical: int = 1
    n_levels: int = 3
    n_targets: int = 2
    label_mode: str = "threshold"  # threshold: y = 1[z > 0]; bernoulli: y ~ Bern(sigmoid(z))
    missing_rate: float = 0.0
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ValueError("missing_rate must be in [0, 1]")
        if self.n_records < 1 or self.n_targets < 1:
            raise ValueError("n_records and n_targets must be >= 1")
        if self.n_continuous + self.n_binary + self.n_categorical < 1:
            raise ValueError("need at least one feature")
        if self.label_mode not in ("threshold", "bernoulli"):
            raise ValueError(f"unknown label_mode {self.label_mode!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        return cls(**doc)


def _synthetic_schema(spec: SyntheticSpec) -> list[FeatureSchema]:
    schema = []
    for i in range(spec.n_continuous):
        schema.append(FeatureSchema(f"num{i}", "continuous", f"numeric measurement {i}", (), i % 3))
    for i in range(spec.n_binary):
        schema.append(FeatureSchema(f"flag{i}", "binary", f"yes/no question {i}", (), i % 3))
    levels = tuple(f"lv{j}" for j in range(spec.n_levels))
    for i in range(spec.n_categorical):
        schema.append(FeatureSchema(f"cat{i}", "categorical", f"multiple choice {i}", levels, i % 3))
    return schema


def _encoded_row(schema: list[FeatureSchema], raw: dict[str, object]) -> np.ndarray:
    parts = []
    for f in schema:
        v = raw[f.feature_id]
        if f.kind == "continuous":
            parts.append([float(v)])
        elif f.kind == "binary":
            parts.append([float(v)])
        else:
            onehot = [0.0] * len(f.levels)
            onehot[f.levels.index(v)] = 1.0
            parts.append(onehot)
    return np.concatenate(parts)


def generate_synthetic(spec: SyntheticSpec) -> DatasetTable:
    """Draw iid features, label via the logistic rule, then apply missingness.

    The sampled weights/intercepts are recorded in the table's provenance so
    tests can replay the exact rule.
    """
    rng = np.random.default_rng(spec.seed)
    schema = _synthetic_schema(spec)
    width = sum(f.encoded_width for f in schema)

    # sparse weights: roughly half the encoded dims active per target
    weights = np.zeros((spec.n_targets, width))
    for d in range(spec.n_targets):
        active = rng.random(width) < 0.5
        if not active.any():
            active[rng.integers(width)] = True
        weights[d, active] = rng.normal(0.0, 2.0, size=int(active.sum()))

    # intercept centers z at the feature means so classes stay roughly balanced
    mean_vec = []
    for f in schema:
        if f.kind == "continuous":
            mean_vec.append([0.0])
        elif f.kind == "binary":
            mean_vec.append([0.5])
        else:
            mean_vec.append([1.0 / len(f.levels)] * len(f.levels))
    mean_vec = np.concatenate(mean_vec)
    intercepts = -(weights @ mean_vec)

    # answers stored in consultation order: by simultaneity group, then schema order
    ask_order = sorted(range(len(schema)), key=lambda i: (schema[i].simultaneity_group, i))
    records = []
    for n in range(spec.n_records):
        raw: dict[str, object] = {}
        for f in schema:
            if f.kind == "continuous":
                raw[f.feature_id] = float(rng.normal())
            elif f.kind == "binary":
                raw[f.feature_id] = int(rng.integers(0, 2))
            else:
                raw[f.feature_id] = f.levels[rng.integers(len(f.levels))]
        x = _encoded_row(schema, raw)
        z = weights @ x + intercepts
        if spec.noise > 0:
            z = z + rng.normal(0.0, spec.noise, size=z.shape)
        if spec.label_mode == "threshold":
            y = (z > 0).astype(int)
        else:
            y = (rng.random(z.shape) < 1.0 / (1.0 + np.exp(-z))).astype(int)
        labels = {f"target{d}": int(y[d]) for d in range(spec.n_targets)}

        answers = []
        for i in ask_order:
            f = schema[i]
            if spec.missing_rate > 0 and rng.random() < spec.missing_rate:
                continue
            answers.append(Answer(f.feature_id, raw[f.feature_id], f.simultaneity_group))
        records.append(ConsultationRecord(f"r{n:05d}", answers, labels))

    provenance = {
        "generator": "synthetic-logistic",
        "spec": {
            "n_records": spec.n_records,
            "n_continuous": spec.n_continuous,
            "n_binary": spec.n_binary,
            "n_categorical": spec.n_categorical,
            "n_levels": spec.n_levels,
            "n_targets": spec.n_targets,
            "label_mode": spec.label_mode,
            "missing_rate": spec.missing_rate,
            "noise": spec.noise,
            "seed": spec.seed,
        },
        "weights": weights.tolist(),
        "intercepts": intercepts.tolist(),
    }
    targets = [f"target{d}" for d in range(spec.n_targets)]
    return DatasetTable(schema, targets, records, provenance)


def generate_xor(n_records: int = 600, n_noise_flags: int = 2, seed: int = 0) -> DatasetTable:
    """Two binary features whose XOR is the label -- not linearly separable."""
    rng = np.random.default_rng(seed)
    schema = [
        FeatureSchema("bit_a", "binary", "first input bit", (), 0),
        FeatureSchema("bit_b", "binary", "second input bit", (), 0),
    ]
    for i in range(n_noise_flags):
        schema.append(FeatureSchema(f"noise{i}", "binary", f"irrelevant bit {i}", (), 1))
    records = []
    for n in range(n_records):
        a, b = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        answers = [Answer("bit_a", a, 0), Answer("bit_b", b, 0)]
        for i in range(n_noise_flags):
            answers.append(Answer(f"noise{i}", int(rng.integers(0, 2)), 1))
        records.append(ConsultationRecord(f"x{n:05d}", answers, {"parity": a ^ b}))
    return DatasetTable(schema, ["parity"], records, {"generator": "xor"})
