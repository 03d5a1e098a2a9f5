"""Command-line entry points: train and validate."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import TrainerError
from .train import TrainConfig, train
from .validate import http_transport, validate_outputs

log = logging.getLogger("factpipe_trainer")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig(
        sft_path=args.sft,
        out_dir=args.out,
        base_model=args.base_model,
        iterations=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        adapter_rank=args.adapter_rank,
        adapter_alpha=args.adapter_alpha,
        max_seq_len=args.max_seq_len,
        quantize_4bit=args.quantize_4bit,
        seed=args.seed,
    )
    result = train(config)
    _emit({
        "out_dir": str(result.out_dir),
        "steps": result.steps,
        "initial_loss": round(result.initial_loss, 6),
        "final_loss": round(result.final_loss, 6),
    })
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    transport = http_transport(args.base_url, args.model, args.timeout)
    report = validate_outputs(args.sft, transport)
    _emit(report.to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factpipe-trainer",
        description="Fine-tune a small causal LM on exported feedback conversations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a fine-tune and write adapter + loss curve")
    p_train.add_argument("--sft", required=True, help="SFT JSONL file to train on")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--base-model", default="tiny-gpt2-random")
    p_train.add_argument("--iterations", type=int, default=20)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--learning-rate", type=float, default=1e-2)
    p_train.add_argument("--adapter-rank", type=int, default=8)
    p_train.add_argument("--adapter-alpha", type=float, default=16.0)
    p_train.add_argument("--max-seq-len", type=int, default=256)
    p_train.add_argument("--quantize-4bit", action="store_true")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=cmd_train)

    p_validate = sub.add_parser(
        "validate", help="measure how often a served model's outputs parse as feedback"
    )
    p_validate.add_argument("--sft", required=True, help="SFT JSONL fixture with gold answers")
    p_validate.add_argument("--base-url", required=True, help="chat endpoint base URL")
    p_validate.add_argument("--model", required=True, help="model name to request")
    p_validate.add_argument("--timeout", type=float, default=60.0)
    p_validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainerError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
