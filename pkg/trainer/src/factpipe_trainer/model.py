"""Base model registry and low-rank adapters.

The registry builds models from local configuration only — nothing is ever
fetched from a hub, which is what keeps the smoke test runnable offline.
Adapters are hand-rolled low-rank (A @ B) deltas over the transformer's
Conv1D projections; only the adapter factors are trainable.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import nn
from transformers import GPT2Config, GPT2LMHeadModel
from transformers.pytorch_utils import Conv1D

from .errors import AdapterMismatch, UnknownBaseModel
from .sft_data import EOS_ID, PAD_ID, VOCAB_SIZE

DEFAULT_TARGETS = ("c_attn", "c_proj", "c_fc")
ADAPTER_WEIGHTS_FILE = "adapter_weights.pt"
ADAPTER_CONFIG_FILE = "adapter_config.json"


def _build_tiny_gpt2(seed: int) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=VOCAB_SIZE,
        n_positions=256,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=None,
        eos_token_id=EOS_ID,
        pad_token_id=PAD_ID,
        # Dropout off: at this scale it is pure noise, and a zero rate keeps
        # forward passes (and therefore loss curves) reproducible.
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
    )
    return GPT2LMHeadModel(config)


BASE_MODELS = {
    "tiny-gpt2-random": _build_tiny_gpt2,
}


def build_base_model(identifier: str, seed: int) -> GPT2LMHeadModel:
    """Construct a base model from the local registry; init is deterministic per seed."""
    try:
        builder = BASE_MODELS[identifier]
    except KeyError:
        known = ", ".join(sorted(BASE_MODELS))
        raise UnknownBaseModel(f"unknown base model {identifier!r}; known: {known}") from None
    model = builder(seed)
    model.train()
    return model


class LoraConv1D(nn.Module):
    """Wraps a Conv1D projection with a trainable low-rank residual.

    Conv1D stores its weight as (in_features, out_features) and computes
    x @ W + b, so the delta is x @ A @ B scaled by alpha/rank. B starts at
    zero: the wrapped module is exactly the base module until training moves it.
    """

    def __init__(self, base: Conv1D, rank: int, alpha: float):
        super().__init__()
        in_features, out_features = base.weight.shape
        self.base = base
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(in_features, rank))
        self.lora_b = nn.Parameter(torch.zeros(rank, out_features))
        nn.init.normal_(self.lora_a, std=0.02)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a @ self.lora_b) * self.scale


def apply_lora(
    model: nn.Module,
    rank: int,
    alpha: float,
    targets: tuple[str, ...] = DEFAULT_TARGETS,
) -> int:
    """Freeze the model and wrap every targeted Conv1D. Returns the wrap count."""
    for param in model.parameters():
        param.requires_grad_(False)
    wrapped = 0
    for name, module in list(model.named_modules()):
        if not isinstance(module, Conv1D):
            continue
        parent_path, _, attr = name.rpartition(".")
        if attr not in targets:
            continue
        parent = model.get_submodule(parent_path) if parent_path else model
        setattr(parent, attr, LoraConv1D(module, rank, alpha))
        wrapped += 1
    return wrapped


def trainable_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def count_parameters(model: nn.Module) -> tuple[int, int]:
    """(total, trainable) parameter counts."""
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in trainable_parameters(model))
    return total, trainable


def adapter_state(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: param.detach().clone()
        for name, param in model.named_parameters()
        if "lora_" in name
    }


def save_adapter(
    model: nn.Module,
    out_dir: str | Path,
    *,
    base_model: str,
    rank: int,
    alpha: float,
    targets: tuple[str, ...] = DEFAULT_TARGETS,
) -> Path:
    """Write adapter factors and their configuration; returns the adapter directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state(model), out_dir / ADAPTER_WEIGHTS_FILE)
    config = {
        "base_model": base_model,
        "rank": rank,
        "alpha": alpha,
        "targets": list(targets),
    }
    with open(out_dir / ADAPTER_CONFIG_FILE, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def load_adapter(model: nn.Module, adapter_dir: str | Path) -> dict:
    """Load saved adapter factors into an already-wrapped model.

    The model must have been wrapped with the same rank and targets; any
    missing or shape-mismatched tensor raises AdapterMismatch.
    """
    adapter_dir = Path(adapter_dir)
    with open(adapter_dir / ADAPTER_CONFIG_FILE, encoding="utf-8") as fh:
        config = json.load(fh)
    saved = torch.load(adapter_dir / ADAPTER_WEIGHTS_FILE, weights_only=True)
    current = {name: p for name, p in model.named_parameters() if "lora_" in name}
    if set(saved) != set(current):
        missing = sorted(set(saved) ^ set(current))
        raise AdapterMismatch(f"adapter parameters do not line up; first differences: {missing[:4]}")
    with torch.no_grad():
        for name, tensor in saved.items():
            if current[name].shape != tensor.shape:
                raise AdapterMismatch(
                    f"{name}: saved shape {tuple(tensor.shape)} vs model {tuple(current[name].shape)}"
                )
            current[name].copy_(tensor)
    return config
