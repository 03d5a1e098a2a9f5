"""Training loop: adapt a small causal LM to reproduce exported feedback JSON.

Loss is next-byte cross-entropy over the assistant portion only — the user
prompt conditions the model but contributes no gradient. Everything the run
needs to be rerun or audited lands in the output directory: adapter factors,
a per-step loss curve, and a metadata file recording the exact configuration
and the template version of the data trained on.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch.nn import functional as F

from .errors import EmptyFixture, MixedTemplateVersions, ResourceExhausted
from .model import (
    DEFAULT_TARGETS,
    apply_lora,
    build_base_model,
    count_parameters,
    save_adapter,
    trainable_parameters,
)
from .sft_data import IGNORE_INDEX, VOCAB_SIZE, encode_example, iter_batches, load_sft

log = logging.getLogger(__name__)

LOSS_FILE = "loss.csv"
META_FILE = "train_meta.json"
ADAPTER_DIR = "adapter"

# Reference profile for a production-scale run on a large chat model. Kept as
# documentation only: it is far outside what the CPU-scale defaults (and the
# test gate) are meant to cover.
FULL_SCALE_PROFILE: dict[str, int] = {"iterations": 8_000, "batch_size": 32}

# Defaults below marked "local choice" are tuned for CPU-scale smoke runs and
# come from no external reference configuration.
HYPERPARAMETER_NOTE = (
    "learning_rate, adapter_rank, adapter_alpha, batch_size, and max_seq_len "
    "are local choices sized for CPU-scale runs, not values taken from any "
    "reference configuration."
)


@dataclass(frozen=True)
class TrainConfig:
    sft_path: Path
    out_dir: Path
    base_model: str = "tiny-gpt2-random"
    iterations: int = 20
    batch_size: int = 8            # local choice
    learning_rate: float = 1e-2    # local choice
    adapter_rank: int = 8          # local choice
    adapter_alpha: float = 16.0    # local choice
    adapter_targets: tuple[str, ...] = DEFAULT_TARGETS
    max_seq_len: int = 256         # local choice
    quantize_4bit: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sft_path", Path(self.sft_path))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.adapter_rank < 1:
            raise ValueError(f"adapter_rank must be >= 1, got {self.adapter_rank}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_seq_len < 8:
            raise ValueError(f"max_seq_len must be >= 8, got {self.max_seq_len}")


@dataclass(frozen=True)
class TrainResult:
    out_dir: Path
    steps: int
    initial_loss: float
    final_loss: float
    losses: tuple[float, ...] = field(repr=False)

    @property
    def adapter_dir(self) -> Path:
        return self.out_dir / ADAPTER_DIR


def _step_loss(model, batch: dict[str, torch.Tensor]) -> torch.Tensor:
    """Shifted cross-entropy over labelled positions only."""
    logits = model(
        input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
    ).logits
    shifted_logits = logits[:, :-1, :].reshape(-1, VOCAB_SIZE)
    shifted_labels = batch["labels"][:, 1:].reshape(-1)
    return F.cross_entropy(shifted_logits, shifted_labels, ignore_index=IGNORE_INDEX)


def train(config: TrainConfig) -> TrainResult:
    """Run the configured fine-tune and write adapter, loss curve, and metadata."""
    started = time.monotonic()
    examples = load_sft(config.sft_path)
    if not examples:
        raise EmptyFixture(f"{config.sft_path}: no examples to train on")
    versions = sorted({ex.template_version for ex in examples})
    if len(versions) > 1:
        raise MixedTemplateVersions(
            f"{config.sft_path}: found template versions {versions}; train on one at a time"
        )

    model = build_base_model(config.base_model, config.seed)
    base_params, _ = count_parameters(model)
    wrapped = apply_lora(
        model, config.adapter_rank, config.adapter_alpha, config.adapter_targets
    )
    _, trainable = count_parameters(model)
    log.info(
        "base %s: %d parameters, %d trainable across %d adapters",
        config.base_model, base_params, trainable, wrapped,
    )
    if config.quantize_4bit:
        log.warning("quantize_4bit requested but no 4-bit kernels on this install; recorded, not applied")

    encoded = [encode_example(ex, config.max_seq_len) for ex in examples]
    optimizer = torch.optim.AdamW(trainable_parameters(model), lr=config.learning_rate)
    torch.manual_seed(config.seed)

    losses: list[float] = []
    batches = iter_batches(encoded, config.batch_size, config.iterations, config.seed)
    try:
        for step, batch in enumerate(batches, start=1):
            optimizer.zero_grad()
            loss = _step_loss(model, batch)
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            log.info("step %d/%d loss %.4f", step, config.iterations, losses[-1])
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise ResourceExhausted(
                "ran out of memory; reduce batch_size or max_seq_len, or pick a smaller base model"
            ) from exc
        raise

    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    save_adapter(
        model, out_dir / ADAPTER_DIR,
        base_model=config.base_model, rank=config.adapter_rank,
        alpha=config.adapter_alpha, targets=config.adapter_targets,
    )
    with open(out_dir / LOSS_FILE, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, value in enumerate(losses, start=1):
            writer.writerow([step, f"{value:.6f}"])

    meta = asdict(config)
    meta["sft_path"] = str(config.sft_path)
    meta["out_dir"] = str(config.out_dir)
    meta["adapter_targets"] = list(config.adapter_targets)
    meta.update({
        "template_version": versions[0],
        "n_examples": len(examples),
        "base_model_parameters": base_params,
        "trainable_parameters": trainable,
        "adapters_applied": wrapped,
        "quantization_applied": False,
        "initial_loss": losses[0],
        "final_loss": losses[-1],
        "wall_time_s": round(time.monotonic() - started, 3),
        "hyperparameter_note": HYPERPARAMETER_NOTE,
    })
    with open(out_dir / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return TrainResult(
        out_dir=out_dir,
        steps=len(losses),
        initial_loss=losses[0],
        final_loss=losses[-1],
        losses=tuple(losses),
    )
