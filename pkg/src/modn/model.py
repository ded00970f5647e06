"""Modular decision-support network: trained initial state, feature-specific
encoders that apply residual state updates, and target-specific sigmoid
decoders read out at every consultation step.

A model is immutable after training/loading; all inference helpers here are
pure functions of (model, answers).  Records with missing features simply
skip the corresponding encoders; absent values are never filled in.
"""

from __future__ import annotations

import base64
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import (
    MlpSpec,
    ParamStore,
    Tape,
    Tensor,
    add,
    concat_last,
    gather_rows,
    init_mlp_params,
    mlp_forward,
    rows_add,
    tile_rows,
)
from .data import ContinuousStats, ConsultationRecord, FeatureSchema, SchemaError, encode_answer

MODEL_FORMAT = "modn-model"
MODEL_FORMAT_VERSION = 1
DEFAULT_STATE_DIM = 32
INITIAL_STATE_PARAM = "initial_state"


class MissingEncoderError(KeyError):
    """The record answers a feature this model was never trained on."""

    def __init__(self, feature_id: str):
        self.feature_id = feature_id
        super().__init__(f"no encoder for feature {feature_id!r}")


class MissingDecoderError(KeyError):
    def __init__(self, target_id: str):
        self.target_id = target_id
        super().__init__(f"no decoder for target {target_id!r}")


class CorruptModelError(ValueError):
    """Model file is truncated, malformed, or internally inconsistent."""


class ModelVersionError(ValueError):
    pass


class FingerprintMismatchError(ValueError):
    pass


def schema_fingerprint(schema: list[FeatureSchema], targets: list[str]) -> str:
    doc = {
        "features": [
            [f.feature_id, f.kind, list(f.levels), f.simultaneity_group] for f in schema
        ],
        "targets": list(targets),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _module_seed(seed: int, kind: str, name: str) -> int:
    # stable per-module seed so adding a feature never perturbs the others
    digest = hashlib.sha256(f"{seed}:{kind}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ModnModel:
    schema: list[FeatureSchema]
    targets: list[str]
    state_dim: int
    encoder_hidden: int
    decoder_hidden: int
    hidden_activation: str
    params: ParamStore
    stats: dict[str, ContinuousStats] = field(default_factory=dict)
    version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        self._schema_by_id = {f.feature_id: f for f in self.schema}

    # -- structure ----------------------------------------------------------

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema, self.targets)

    def feature_ids(self) -> list[str]:
        return [f.feature_id for f in self.schema]

    def feature(self, feature_id: str) -> FeatureSchema:
        try:
            return self._schema_by_id[feature_id]
        except KeyError:
            raise MissingEncoderError(feature_id) from None

    def encoder_spec(self, feature_id: str) -> MlpSpec:
        width = self.feature(feature_id).encoded_width
        return MlpSpec((self.state_dim + width, self.encoder_hidden, self.state_dim),
                       hidden_activation=self.hidden_activation)

    def decoder_spec(self, target_id: str) -> MlpSpec:
        if target_id not in self.targets:
            raise MissingDecoderError(target_id)
        return MlpSpec((self.state_dim, self.decoder_hidden, 1),
                       hidden_activation=self.hidden_activation,
                       output_activation="sigmoid")

    def encoder_prefix(self, feature_id: str) -> str:
        return f"encoder.{feature_id}."

    def decoder_prefix(self, target_id: str) -> str:
        return f"decoder.{target_id}."

    def encoder_param_names(self, feature_id: str) -> list[str]:
        p = self.encoder_prefix(feature_id)
        return [n for n in self.params.names() if n.startswith(p)]

    def decoder_param_names(self, target_id: str) -> list[str]:
        p = self.decoder_prefix(target_id)
        return [n for n in self.params.names() if n.startswith(p)]

    def initial_state(self) -> np.ndarray:
        return self.params[INITIAL_STATE_PARAM].data.copy()

    def clone(self) -> "ModnModel":
        return ModnModel(
            schema=list(self.schema),
            targets=list(self.targets),
            state_dim=self.state_dim,
            encoder_hidden=self.encoder_hidden,
            decoder_hidden=self.decoder_hidden,
            hidden_activation=self.hidden_activation,
            params=self.params.clone(),
            stats=dict(self.stats),
            version=self.version,
        )

    def add_feature(self, feature: FeatureSchema, seed: int) -> None:
        """Register a new feature with a freshly initialized encoder."""
        if feature.feature_id in self._schema_by_id:
            raise SchemaError(f"feature {feature.feature_id!r} already in the model")
        self.schema.append(feature)
        self._schema_by_id[feature.feature_id] = feature
        rng = np.random.default_rng(_module_seed(seed, "encoder", feature.feature_id))
        spec = self.encoder_spec(feature.feature_id)
        prefix = self.encoder_prefix(feature.feature_id)
        init_mlp_params(self.params, prefix, spec, rng)
        # zero output layer: the residual branch starts as the identity, which
        # keeps state magnitudes tame and trains far better than a random branch
        last = len(spec.layer_sizes) - 2
        self.params[f"{prefix}w{last}"].data[...] = 0.0


def init_model(
    schema: list[FeatureSchema],
    targets: list[str],
    state_dim: int = DEFAULT_STATE_DIM,
    seed: int = 0,
    encoder_hidden: int | None = None,
    decoder_hidden: int | None = None,
    hidden_activation: str = "tanh",
    stats: dict[str, ContinuousStats] | None = None,
) -> ModnModel:
    """One encoder per feature, one decoder per target, zero initial state."""
    if state_dim < 1:
        raise ValueError(f"state_dim must be >= 1, got {state_dim}")
    if not schema or not targets:
        raise SchemaError("schema and target list must be non-empty")
    fids = [f.feature_id for f in schema]
    if len(set(fids)) != len(fids):
        raise SchemaError("duplicate feature ids")
    if len(set(targets)) != len(targets):
        raise SchemaError("duplicate target ids")
    if set(fids) & set(targets):
        raise SchemaError("feature and target ids overlap")

    encoder_hidden = encoder_hidden or 2 * state_dim
    decoder_hidden = decoder_hidden or 2 * state_dim
    params = ParamStore(rng_seed=seed)
    params.add(INITIAL_STATE_PARAM, np.zeros(state_dim))
    model = ModnModel(
        schema=[], targets=list(targets), state_dim=state_dim,
        encoder_hidden=encoder_hidden, decoder_hidden=decoder_hidden,
        hidden_activation=hidden_activation, params=params,
        stats=dict(stats or {}),
    )
    for f in schema:
        model.add_feature(f, seed)
    for t in targets:
        rng = np.random.default_rng(_module_seed(seed, "decoder", t))
        init_mlp_params(params, model.decoder_prefix(t), model.decoder_spec(t), rng)
    return model


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def encode_step(
    model: ModnModel,
    state: np.ndarray,
    answer: tuple[str, np.ndarray],
    tape: Tape | None = None,
    state_tensor: Tensor | None = None,
) -> np.ndarray | Tensor:
    """Residual update: state + delta(state ++ encoded answer).  Pure."""
    feature_id, encoded = answer
    spec = model.encoder_spec(feature_id)
    st = state_tensor if state_tensor is not None else Tensor(np.asarray(state, dtype=np.float64))
    if st.data.shape != (model.state_dim,):
        raise ValueError(f"state has shape {st.data.shape}, expected ({model.state_dim},)")
    encoded = np.asarray(encoded, dtype=np.float64)
    if encoded.shape != (spec.in_dim - model.state_dim,):
        raise ValueError(
            f"encoded answer for {feature_id!r} has shape {encoded.shape}, "
            f"expected ({spec.in_dim - model.state_dim},)"
        )
    inp = concat_last(tape, st, Tensor(encoded))
    delta = mlp_forward(spec, model.params, inp, tape, prefix=model.encoder_prefix(feature_id))
    out = add(tape, st, delta)
    return out if state_tensor is not None else out.data


def decode(model: ModnModel, state: np.ndarray, target_id: str) -> float:
    spec = model.decoder_spec(target_id)
    st = Tensor(np.asarray(state, dtype=np.float64))
    out = mlp_forward(spec, model.params, st, None, prefix=model.decoder_prefix(target_id))
    return float(out.data[0])


def decode_all(model: ModnModel, state: np.ndarray) -> dict[str, float]:
    return {t: decode(model, state, t) for t in model.targets}


@dataclass
class TrajectoryStep:
    index: int
    feature_id: str | None  # None on the initial row
    question: str | None
    value: object | None
    probabilities: dict[str, float]


@dataclass
class Trajectory:
    targets: list[str]
    steps: list[TrajectoryStep]
    threshold: float = 0.5

    def matrix(self) -> np.ndarray:
        """(steps + 1) x targets probability matrix."""
        return np.array([[s.probabilities[t] for t in self.targets] for s in self.steps])

    def final_probabilities(self) -> dict[str, float]:
        return self.steps[-1].probabilities

    def to_json_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "threshold": self.threshold,
            "steps": [
                {
                    "index": s.index,
                    "feature_id": s.feature_id,
                    "question": s.question,
                    "value": s.value,
                    "probabilities": s.probabilities,
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Trajectory":
        steps = [
            TrajectoryStep(d["index"], d["feature_id"], d.get("question"), d.get("value"),
                           dict(d["probabilities"]))
            for d in doc["steps"]
        ]
        return cls(list(doc["targets"]), steps, float(doc.get("threshold", 0.5)))


def run_consultation(model: ModnModel, record: ConsultationRecord) -> Trajectory:
    """Decode-all after every encoded answer; row 0 decodes the initial state."""
    state = model.initial_state()
    steps = [TrajectoryStep(0, None, None, None, decode_all(model, state))]
    for i, answer in enumerate(record.answers, start=1):
        feature = model.feature(answer.feature_id)
        encoded = encode_answer(feature, answer.value, model.stats)
        state = encode_step(model, state, (answer.feature_id, encoded))
        steps.append(
            TrajectoryStep(i, answer.feature_id, feature.question_text, answer.value,
                           decode_all(model, state))
        )
    return Trajectory(list(model.targets), steps)


# ---------------------------------------------------------------------------
# batched rollout (training/eval fast path)
# ---------------------------------------------------------------------------


def encoded_sequence(model: ModnModel, record: ConsultationRecord) -> list[tuple[str, np.ndarray]]:
    out = []
    for a in record.answers:
        feature = model.feature(a.feature_id)
        out.append((a.feature_id, encode_answer(feature, a.value, model.stats)))
    return out


def rollout_states(
    model: ModnModel,
    sequences: list[list[tuple[str, np.ndarray]]],
    tape: Tape | None,
) -> list[Tensor]:
    """Advance a batch of consultations in lockstep.

    Returns one [batch, state_dim] tensor per step t = 0..max_len; row i of
    states[t] is record i's state after min(t, len_i) answers.  At each step
    the batch is regrouped by feature so every encoder runs once on its rows.
    """
    n = len(sequences)
    states = [tile_rows(tape, model.params[INITIAL_STATE_PARAM], n)]
    max_len = max((len(s) for s in sequences), default=0)
    for t in range(1, max_len + 1):
        by_feature: dict[str, list[int]] = {}
        for i, seq in enumerate(sequences):
            if len(seq) >= t:
                by_feature.setdefault(seq[t - 1][0], []).append(i)
        current = states[-1]
        for fid in sorted(by_feature):
            rows = np.asarray(by_feature[fid], dtype=np.intp)
            answers = np.stack([sequences[i][t - 1][1] for i in by_feature[fid]])
            sub = gather_rows(tape, current, rows)
            inp = concat_last(tape, sub, Tensor(answers))
            delta = mlp_forward(model.encoder_spec(fid), model.params, inp, tape,
                                prefix=model.encoder_prefix(fid))
            current = rows_add(tape, current, rows, delta)
        states.append(current)
    return states


def predict_records(model: ModnModel, records: list[ConsultationRecord]) -> np.ndarray:
    """Final-step probabilities, [n_records, n_targets].  Batched fast path."""
    if not records:
        return np.zeros((0, len(model.targets)))
    sequences = [encoded_sequence(model, r) for r in records]
    states = rollout_states(model, sequences, None)
    final = np.stack([states[len(seq)].data[i] for i, seq in enumerate(sequences)])
    probs = np.empty((len(records), len(model.targets)))
    for d, target in enumerate(model.targets):
        out = mlp_forward(model.decoder_spec(target), model.params, Tensor(final), None,
                          prefix=model.decoder_prefix(target))
        probs[:, d] = out.data[:, 0]
    return probs


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_model(model: ModnModel, destination: str | Path) -> None:
    """Single-file JSON container; layout documented in docs/model_format.md."""
    doc = {
        "format": MODEL_FORMAT,
        "format_version": model.version,
        "schema_fingerprint": model.fingerprint,
        "state_dim": model.state_dim,
        "encoder_hidden": model.encoder_hidden,
        "decoder_hidden": model.decoder_hidden,
        "hidden_activation": model.hidden_activation,
        "targets": list(model.targets),
        "features": [
            {
                "id": f.feature_id,
                "kind": f.kind,
                "question": f.question_text,
                "group": f.simultaneity_group,
                "levels": list(f.levels),
            }
            for f in model.schema
        ],
        "normalization_stats": {
            fid: {"mean": st.mean, "std": st.std} for fid, st in sorted(model.stats.items())
        },
        "rng_seed": model.params.rng_seed,
        "params": {
            name: {
                "shape": list(t.data.shape),
                "dtype": "<f8",
                "data": base64.b64encode(np.ascontiguousarray(t.data, dtype="<f8").tobytes()).decode("ascii"),
            }
            for name, t in model.params.items()
        },
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    with open(destination, "w", encoding="utf-8") as fh:
        fh.write(blob)


def load_model(
    source: str | Path,
    expected_fingerprint: str | None = None,
    allow_fingerprint_mismatch: bool = False,
) -> ModnModel:
    try:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModelError(f"cannot parse model file {source}: {exc}") from None

    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptModelError(f"{source} is not a model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {doc.get('format_version')!r}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        schema = [
            FeatureSchema(f["id"], f["kind"], f.get("question", f["id"]),
                          tuple(f.get("levels", ())), int(f.get("group", 0)))
            for f in doc["features"]
        ]
        targets = list(doc["targets"])
        stats = {
            fid: ContinuousStats(float(st["mean"]), float(st["std"]))
            for fid, st in doc["normalization_stats"].items()
        }
        params = ParamStore(rng_seed=int(doc.get("rng_seed", 0)))
        for name in sorted(doc["params"]):
            entry = doc["params"][name]
            raw = base64.b64decode(entry["data"], validate=True)
            shape = tuple(int(s) for s in entry["shape"])
            expected_bytes = int(np.prod(shape, dtype=np.int64)) * 8
            if len(raw) != expected_bytes:
                raise CorruptModelError(
                    f"parameter {name!r}: blob has {len(raw)} bytes, expected {expected_bytes}"
                )
            params.add(name, np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
        model = ModnModel(
            schema=schema, targets=targets, state_dim=int(doc["state_dim"]),
            encoder_hidden=int(doc["encoder_hidden"]), decoder_hidden=int(doc["decoder_hidden"]),
            hidden_activation=doc["hidden_activation"], params=params, stats=stats,
            version=int(doc["format_version"]),
        )
    except CorruptModelError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptModelError(f"malformed model file {source}: {exc}") from None

    stored = doc.get("schema_fingerprint")
    recomputed = model.fingerprint
    if stored != recomputed:
        if not allow_fingerprint_mismatch:
            raise FingerprintMismatchError(
                f"stored fingerprint {stored!r} does not match embedded schema ({recomputed!r})"
            )
        warnings.warn("schema fingerprint mismatch, proceeding as requested")
    if expected_fingerprint is not None and recomputed != expected_fingerprint:
        if not allow_fingerprint_mismatch:
            raise FingerprintMismatchError(
                f"model fingerprint {recomputed!r} != expected {expected_fingerprint!r}"
            )
        warnings.warn("schema fingerprint mismatch, proceeding as requested")
    return model
