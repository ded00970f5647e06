"""Modular decision-support network with feature-wise encoders, stepwise
decoders, an imperfect-interoperability experiment harness, and a live
consultation service."""

from .autodiff import (
    Adam,
    ConfigError,
    ContractError,
    MlpSpec,
    OptimizerConfig,
    ParamStore,
    Sgd,
    ShapeError,
    Tape,
    Tensor,
    backward,
    grad_check,
    init_mlp_params,
    mlp_forward,
    optimizer_step,
)
from .data import (
    Answer,
    ConsultationRecord,
    DataValidationError,
    DatasetTable,
    FeatureSchema,
    IioSplit,
    SchemaError,
    SyntheticSpec,
    compute_normalization_stats,
    encode_answer,
    generate_synthetic,
    generate_xor,
    load_dataset,
    simulate_iio_split,
    write_dataset_csv,
)
from .metrics import (
    PredictionSet,
    TTestResult,
    cv_5x2,
    macro_f1,
    macro_f1_arrays,
    mean_ci,
    overall_f1,
    paired_t_5x2cv,
    paired_t_test,
)
from .model import (
    CorruptModelError,
    FingerprintMismatchError,
    MissingDecoderError,
    MissingEncoderError,
    ModelVersionError,
    ModnModel,
    Trajectory,
    decode,
    decode_all,
    encode_step,
    init_model,
    load_model,
    predict_records,
    run_consultation,
    save_model,
    schema_fingerprint,
)
from .training import (
    FreezeMask,
    LossReport,
    TrainConfig,
    batched_stepwise_loss,
    fine_tune,
    modular_update,
    shuffle_simultaneous,
    stepwise_loss,
    train,
)
from .experiments import (
    ComparisonTable,
    ExperimentConfig,
    ResultsTable,
    baseline_logreg,
    baseline_mlp,
    compare_models_5x2cv,
    evaluate,
    export_results,
    import_results,
    logreg_fitter,
    mlp_fitter,
    modn_fitter,
    overall_macro_f1,
    run_iio_experiment,
    split_train_val,
)

__version__ = "0.1.0"
