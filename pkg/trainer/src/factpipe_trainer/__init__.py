"""Fine-tuning harness for exported feedback conversations.

Consumes the SFT JSONL files the pipeline's exporter writes, fine-tunes a
small locally-constructed causal LM with low-rank adapters, and can check a
served model's outputs for parseability.
"""

from __future__ import annotations

from .errors import (
    AdapterMismatch,
    EmptyFixture,
    EndpointUnavailable,
    InvalidSftLine,
    MixedTemplateVersions,
    ResourceExhausted,
    TrainerError,
    UnknownBaseModel,
)
from .model import (
    BASE_MODELS,
    DEFAULT_TARGETS,
    LoraConv1D,
    apply_lora,
    build_base_model,
    count_parameters,
    load_adapter,
    save_adapter,
)
from .sft_data import (
    EOS_ID,
    PAD_ID,
    SEP_ID,
    VOCAB_SIZE,
    TrainExample,
    batch_order,
    collate,
    decode,
    encode,
    encode_example,
    load_sft,
)
from .train import FULL_SCALE_PROFILE, TrainConfig, TrainResult, train
from .validate import ParseRateReport, http_transport, validate_outputs

__version__ = "0.1.0"

__all__ = [
    "AdapterMismatch",
    "BASE_MODELS",
    "DEFAULT_TARGETS",
    "EOS_ID",
    "EmptyFixture",
    "EndpointUnavailable",
    "FULL_SCALE_PROFILE",
    "InvalidSftLine",
    "LoraConv1D",
    "MixedTemplateVersions",
    "PAD_ID",
    "ParseRateReport",
    "ResourceExhausted",
    "SEP_ID",
    "TrainConfig",
    "TrainExample",
    "TrainResult",
    "TrainerError",
    "UnknownBaseModel",
    "VOCAB_SIZE",
    "apply_lora",
    "batch_order",
    "build_base_model",
    "collate",
    "count_parameters",
    "decode",
    "encode",
    "encode_example",
    "http_transport",
    "load_adapter",
    "load_sft",
    "save_adapter",
    "train",
    "validate_outputs",
    "__version__",
]
