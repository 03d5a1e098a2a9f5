"""The trainer's end-to-end gate: a short CPU fine-tune must measurably learn."""

import json
import time

from factpipe_trainer.sft_data import load_sft
from factpipe_trainer.train import TrainConfig, train


def test_twenty_step_smoke_run(sft_fixture, tmp_path):
    started = time.monotonic()

    # The fixture produced by the exporter must pass this package's own
    # independent schema validation.
    assert len(load_sft(sft_fixture)) == 50

    result = train(TrainConfig(
        sft_path=sft_fixture, out_dir=tmp_path / "run", iterations=20, seed=0,
    ))
    assert result.steps == 20

    lines = (tmp_path / "run" / "loss.csv").read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "step,loss"
    assert len(lines) == 21  # header + one row per step

    # Learning signal: the final loss must sit at least 5% below the first.
    assert result.final_loss <= 0.95 * result.initial_loss

    meta = json.loads((tmp_path / "run" / "train_meta.json").read_text(encoding="utf-8"))
    assert meta["template_version"] == "v1"
    assert (result.adapter_dir / "adapter_weights.pt").is_file()
    assert time.monotonic() - started < 600
