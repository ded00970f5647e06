"""Stepwise supervised training: every consultation step of every record is
supervised with binary cross-entropy on all targets, simultaneous question
groups are reshuffled each epoch, and a freeze mask can pin any subset of
parameters.  The two porting procedures (fine-tune and compartmentalised
update) are thin wrappers that extend a trained model with fresh encoders
before handing off to ``train``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import (
    ContractError,
    OptimizerConfig,
    Tape,
    Tensor,
    add_n,
    backward,
    bce_with_logits,
    constant,
    gather_rows,
    mlp_forward,
    mul_const,
)
from .data import Answer, ConsultationRecord, DatasetTable, FeatureSchema, SchemaError, compute_normalization_stats
from .model import (
    DEFAULT_STATE_DIM,
    INITIAL_STATE_PARAM,
    ModnModel,
    encode_step,
    encoded_sequence,
    rollout_states,
)

STEP_WEIGHT_MODES = ("uniform", "final_only")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    state_dim: int = DEFAULT_STATE_DIM
    step_loss_weights: str = "uniform"
    shuffle_seed: int = 0
    patience: int = 20
    include_initial_step: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.step_loss_weights not in STEP_WEIGHT_MODES:
            raise ValueError(f"step_loss_weights must be one of {STEP_WEIGHT_MODES}")
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FreezeMask:
    frozen_param_names: frozenset[str]

    @classmethod
    def none(cls) -> "FreezeMask":
        return cls(frozenset())

    @classmethod
    def of(cls, names) -> "FreezeMask":
        return cls(frozenset(names))

    @classmethod
    def for_modules(
        cls,
        model: ModnModel,
        encoders=(),
        decoders=(),
        initial_state: bool = False,
    ) -> "FreezeMask":
        names: set[str] = set()
        for fid in encoders:
            names.update(model.encoder_param_names(fid))
        for tid in decoders:
            names.update(model.decoder_param_names(tid))
        if initial_state:
            names.add(INITIAL_STATE_PARAM)
        return cls(frozenset(names))

    def validate(self, model: ModnModel) -> None:
        unknown = [n for n in self.frozen_param_names if n not in model.params]
        if unknown:
            raise ContractError(f"freeze mask names unknown parameters: {sorted(unknown)}")


@dataclass
class LossReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_macro_f1: list[dict[str, float]] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def stepwise_loss(
    model: ModnModel,
    record: ConsultationRecord,
    tape: Tape,
    weights: str = "uniform",
    include_initial_step: bool = True,
) -> Tensor:
    """Summed BCE over steps t = 0..T and all targets, as one scalar node."""
    if weights not in STEP_WEIGHT_MODES:
        raise ValueError(f"weights must be one of {STEP_WEIGHT_MODES}")
    labels = np.array([[float(record.labels[t])] for t in model.targets])
    sequence = encoded_sequence(model, record)

    terms = []
    state = model.params[INITIAL_STATE_PARAM]  # the graph must reach the trained constant

    def decode_terms(st):
        for d, target in enumerate(model.targets):
            z = mlp_forward(model.decoder_spec(target), model.params, st, tape,
                            prefix=model.decoder_prefix(target), logits=True)
            terms.append(bce_with_logits(tape, z, labels[d]))

    total_steps = len(sequence)
    for t in range(total_steps + 1):
        if t > 0:
            state = encode_step(model, None, sequence[t - 1], tape, state_tensor=state)
        if t == 0 and not include_initial_step:
            continue
        if weights == "final_only" and t != total_steps:
            continue
        decode_terms(state)

    if not terms:
        return constant(tape, 0.0)
    return add_n(tape, terms)


def batched_stepwise_loss(
    model: ModnModel,
    sequences: list[list[tuple[str, np.ndarray]]],
    labels: np.ndarray,
    tape: Tape | None,
    weights: str = "uniform",
    include_initial_step: bool = True,
) -> Tensor:
    """Mean-per-record stepwise loss over a batch (gradients equal the average
    of the per-record graphs up to float summation order)."""
    n = len(sequences)
    states = rollout_states(model, sequences, tape)
    lengths = np.array([len(s) for s in sequences])
    terms = []
    for t in range(len(states)):
        if weights == "uniform":
            rows = np.nonzero(lengths >= t)[0]
        else:
            rows = np.nonzero(lengths == t)[0]
        if t == 0 and not include_initial_step:
            rows = np.array([], dtype=np.intp)
        if rows.size == 0:
            continue
        sub = gather_rows(tape, states[t], rows)
        for d, target in enumerate(model.targets):
            z = mlp_forward(model.decoder_spec(target), model.params, sub, tape,
                            prefix=model.decoder_prefix(target), logits=True)
            terms.append(bce_with_logits(tape, z, labels[rows, d:d + 1]))
    if not terms:
        return constant(tape, 0.0)
    return mul_const(tape, add_n(tape, terms), 1.0 / n)


# ---------------------------------------------------------------------------
# shuffling
# ---------------------------------------------------------------------------


def shuffle_simultaneous(record: ConsultationRecord, seed) -> ConsultationRecord:
    """Permute answers within each simultaneity group; group order is kept."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    groups: dict[int, list[Answer]] = {}
    order: list[int] = []
    for a in record.answers:
        if a.simultaneity_group not in groups:
            groups[a.simultaneity_group] = []
            order.append(a.simultaneity_group)
        groups[a.simultaneity_group].append(a)
    shuffled: list[Answer] = []
    for tag in order:
        members = groups[tag]
        for i in rng.permutation(len(members)):
            shuffled.append(members[i])
    return ConsultationRecord(record.record_id, shuffled, dict(record.labels))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def _check_compatible(model: ModnModel, table: DatasetTable, what: str) -> None:
    known = set(model.feature_ids())
    for rec in table.records:
        for a in rec.answers:
            if a.feature_id not in known:
                raise SchemaError(
                    f"{what} record {rec.record_id!r} answers {a.feature_id!r}, "
                    "which has no encoder in the model"
                )
    missing = [t for t in model.targets if t not in table.targets]
    if missing:
        raise SchemaError(f"{what} is missing labels for targets {missing}")


def _epoch_metrics(model, val_sequences, val_labels, config):
    """Validation loss and per-target macro F1 on the validation split."""
    from .metrics import macro_f1_arrays

    loss = batched_stepwise_loss(model, val_sequences, val_labels, None,
                                 config.step_loss_weights, config.include_initial_step)
    states = rollout_states(model, val_sequences, None)
    final = np.stack([states[len(seq)].data[i] for i, seq in enumerate(val_sequences)])
    f1 = {}
    for d, target in enumerate(model.targets):
        out = mlp_forward(model.decoder_spec(target), model.params, Tensor(final), None,
                          prefix=model.decoder_prefix(target))
        decisions = (out.data[:, 0] >= 0.5).astype(int)
        f1[target] = macro_f1_arrays(decisions, val_labels[:, d].astype(int))
    return float(loss.data), f1


def train(
    model: ModnModel,
    train_set: DatasetTable,
    val_set: DatasetTable | None,
    config: TrainConfig,
    mask: FreezeMask | None = None,
) -> tuple[ModnModel, LossReport]:
    """Train a copy of the model; returns the best-validation-loss snapshot.

    Parameters named by the mask are untouched (byte-identical).  Record
    order and the order within simultaneity groups are reshuffled per epoch
    from ``config.shuffle_seed``.
    """
    if not train_set.records:
        raise ValueError("training set is empty")
    mask = mask or FreezeMask.none()
    mask.validate(model)

    model = model.clone()
    frozen = set(mask.frozen_param_names)
    trainable = [n for n in model.params.names() if n not in frozen]
    if not trainable:
        return model, LossReport()

    _check_compatible(model, train_set, "train set")
    # freeze normalization stats for any continuous feature still lacking them
    missing_stats = {
        f.feature_id for f in model.schema
        if f.kind == "continuous" and f.feature_id not in model.stats
    }
    if missing_stats:
        fresh = compute_normalization_stats(train_set)
        for fid in missing_stats & set(fresh):
            model.stats[fid] = fresh[fid]

    if val_set is not None and val_set.records:
        _check_compatible(model, val_set, "validation set")
        val_records = val_set.records
    else:
        val_records = []

    rng = np.random.default_rng(config.shuffle_seed)
    optimizer = config.optimizer.build()
    records = train_set.records
    n = len(records)
    label_matrix = np.array([[float(r.labels[t]) for t in model.targets] for r in records])
    encoded_cache = [dict(encoded_sequence(model, r)) for r in records]
    val_sequences = [encoded_sequence(model, r) for r in val_records]
    val_labels = np.array([[float(r.labels[t]) for t in model.targets] for r in val_records]) \
        if val_records else np.zeros((0, len(model.targets)))

    report = LossReport()
    best_loss = np.inf
    best_params = model.params.clone()
    best_epoch = -1
    stale = 0

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_sequences = []
        for i in order:
            shuffled = shuffle_simultaneous(records[i], rng)
            cache = encoded_cache[i]
            epoch_sequences.append([(a.feature_id, cache[a.feature_id]) for a in shuffled.answers])

        train_loss = 0.0
        for start in range(0, n, config.batch_size):
            rows = slice(start, min(start + config.batch_size, n))
            batch_sequences = epoch_sequences[rows]
            batch_labels = label_matrix[order[rows]]
            tape = Tape()
            loss = batched_stepwise_loss(model, batch_sequences, batch_labels, tape,
                                         config.step_loss_weights, config.include_initial_step)
            if not np.isfinite(loss.data):
                raise ContractError(f"training loss diverged at epoch {epoch}")
            backward(tape, loss, model.params)
            optimizer.step(model.params, frozen)
            train_loss += float(loss.data) * len(batch_sequences)
        train_loss /= n

        if val_records:
            val_loss, val_f1 = _epoch_metrics(model, val_sequences, val_labels, config)
        else:
            val_loss, val_f1 = train_loss, {}
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.val_macro_f1.append(val_f1)

        if val_loss < best_loss:
            best_loss = val_loss
            best_params = model.params.clone()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.params = best_params
    report.best_epoch = best_epoch
    return model, report


# ---------------------------------------------------------------------------
# porting procedures
# ---------------------------------------------------------------------------


def _extend_model(source: ModnModel, new_features: list[FeatureSchema], seed: int) -> ModnModel:
    existing = set(source.feature_ids())
    for f in new_features:
        if f.feature_id in existing:
            raise SchemaError(f"new feature {f.feature_id!r} already exists in the source model")
    model = source.clone()
    for f in new_features:
        model.add_feature(f, seed)
    return model


def fine_tune(
    source_model: ModnModel,
    target_train: DatasetTable,
    target_val: DatasetTable | None,
    new_features: list[FeatureSchema],
    config: TrainConfig,
) -> ModnModel:
    """Port all modules, add fresh encoders for the new features, train everything."""
    model = _extend_model(source_model, new_features, config.shuffle_seed)
    trained, _ = train(model, target_train, target_val, config)
    return trained


def modular_update(
    source_model: ModnModel,
    target_train: DatasetTable,
    target_val: DatasetTable | None,
    new_features: list[FeatureSchema],
    config: TrainConfig,
) -> ModnModel:
    """Train only the new-feature encoders; every ported parameter is frozen,
    so predictions on records without new features are exactly preserved."""
    model = _extend_model(source_model, new_features, config.shuffle_seed)
    new_param_names: set[str] = set()
    for f in new_features:
        new_param_names.update(model.encoder_param_names(f.feature_id))
    mask = FreezeMask.of(n for n in model.params.names() if n not in new_param_names)
    trained, _ = train(model, target_train, target_val, config, mask=mask)
    return trained
