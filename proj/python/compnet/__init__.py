"""CompNet: designed features weighted by image-conditioned weight matrices."""

from ._compnet import (  # noqa: F401
    CheckpointError,
    ConfigError,
    DataError,
    Dataset,
    Model,
    ModelConfig,
    OptimState,
    Normalizer,
    SynthSpec,
    TrainConfig,
    evaluate,
    feature_importance,
    fit,
    fusion_weight_matrix,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    run_cli,
    save_checkpoint,
    save_dataset,
    split,
    train_epoch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
