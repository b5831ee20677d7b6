import csv
import json

import pytest
from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker, create_async_engine
from sqlalchemy.pool import NullPool

import app.db
from app.cli import cli_dispatch
from app.config import config
from conftest import make_run_config
from progtune.tasks.runconfig import dump_run_config


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.yaml"
    dump_run_config(make_run_config(), path)
    return path


@pytest.fixture
def temp_store(tmp_path, monkeypatch):
    engine = create_async_engine(f"sqlite+aiosqlite:///{tmp_path / 'runs.db'}", poolclass=NullPool)
    monkeypatch.setattr(app.db, "engine", engine)
    monkeypatch.setattr(app.db, "AsyncSessionLocal", async_sessionmaker(engine, class_=AsyncSession, expire_on_commit=False))
    return engine


def _count(capsys, *argv):
    assert cli_dispatch(["count", *argv, "--json"]) == 0
    return json.loads(capsys.readouterr().out)


def test_count_full_fine_tuning_bert_base(capsys):
    report = _count(capsys, "--arch", "bert-base", "--epochs", "3", "--mode", "ft")
    assert report["cumulative"] == pytest.approx(330e6, rel=0.02)
    assert report["reduction"] == 0.0
    assert report["variant"] == "full"


def test_count_progtuning_span_head(capsys):
    report = _count(capsys, "--arch", "bert-base", "--epochs", "3", "--mode", "progtune", "--head", "qa")
    assert report["cumulative"] == pytest.approx(241.6e6, rel=0.02)
    assert report["full_cumulative"] == pytest.approx(326.7e6, rel=0.02)
    assert len(report["per_epoch"]) == 3


def test_count_text_output(capsys):
    assert cli_dispatch(["count", "--arch", "bert-large", "--epochs", "3", "--mode", "progtune"]) == 0
    out = capsys.readouterr().out
    assert "bert-large" in out
    assert "reduction=0.30" in out


def test_count_custom_dims_and_peft(capsys):
    report = _count(
        capsys, "--arch", "custom", "--dims", "2,8,2,16,11,16", "--epochs", "2",
        "--mode", "progtune", "--peft", "lora", "--rank", "2", "--targets", "Wq,Wk",
    )
    assert report["peft"] == "lora"
    head = 8 * 2 + 2 + 8 * 8 + 8
    assert report["per_epoch"] == [2 * 2 * 2 * 8 * 2 + head, 2 * 2 * 8 * 2 + head]


@pytest.mark.parametrize(
    "argv",
    [
        ["count", "--arch", "bert-base"],
        ["count", "--arch", "bert-base", "--epochs", "3", "--bogus"],
        ["launch"],
        [],
        ["count", "--arch", "custom", "--epochs", "3"],
        ["count", "--arch", "custom", "--epochs", "3", "--dims", "1,2"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    assert cli_dispatch(argv) == 2
    diagnostic = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diagnostic["error"]["code"] == "USAGE"


def test_library_errors_exit_1_with_json_diagnostic(capsys):
    assert cli_dispatch(["count", "--arch", "bert-base", "--epochs", "13", "--mode", "progtune"]) == 1
    diagnostic = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diagnostic["error"]["code"] == "CONFIG_INVALID"


def test_train_rejects_epoch_mismatch_before_training(tmp_path, capsys):
    path = tmp_path / "edited.yaml"
    path.write_text(dump_run_config(make_run_config()).replace("stages: 2", "stages: 3"), encoding="utf-8")
    out_dir = tmp_path / "out"
    assert cli_dispatch(["train", "--config", str(path), "--output-dir", str(out_dir), "--no-store"]) == 1
    assert "CONFIG_INVALID" in capsys.readouterr().err
    assert not out_dir.exists()


def test_train_writes_identical_exports_for_identical_runs(tmp_path, config_file, capsys):
    outputs = []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        assert cli_dispatch(["train", "--config", str(config_file), "--output-dir", str(out_dir), "--no-store"]) == 0
        printed = capsys.readouterr().out.split()
        assert printed == [str(out_dir / "tiny-seed0.csv"), str(out_dir / "tiny-seed0-ledger.csv")]
        outputs.append((out_dir / "tiny-seed0.csv").read_bytes())
    assert outputs[0] == outputs[1]
    rows = list(csv.DictReader(outputs[0].decode().splitlines()))
    assert [r["epoch"] for r in rows] == ["1", "2", "summary"]


def test_train_repeats_write_mean_and_store_runs(tmp_path, config_file, temp_store, capsys):
    out_dir = tmp_path / "out"
    argv = ["train", "--config", str(config_file), "--output-dir", str(out_dir), "--repeats", "2", "--mode", "ft"]
    assert cli_dispatch(argv) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [str(out_dir / f"tiny-{s}.csv") for s in ("seed0", "seed0-ledger", "seed1", "seed1-ledger", "mean")]

    export_dir = tmp_path / "export"
    assert cli_dispatch(["export", "--name", "tiny", "--merge", "--format", "jsonl", "--output-dir", str(export_dir)]) == 0
    exported = capsys.readouterr().out.split()
    names = ("tiny-run1.jsonl", "tiny-run1-ledger.jsonl", "tiny-run2.jsonl", "tiny-run2-ledger.jsonl", "tiny-mean.jsonl")
    assert exported == [str(export_dir / name) for name in names]
    summary = json.loads((export_dir / "tiny-run1.jsonl").read_text().splitlines()[-1])
    assert summary["epoch"] == "summary"
    assert summary["reduction"] == 0.0
    ledger_rows = [json.loads(line) for line in (export_dir / "tiny-run1-ledger.jsonl").read_text().splitlines()]
    assert {row["epoch"] for row in ledger_rows} == {1, 2}
    assert sum(row["count"] for row in ledger_rows) == summary["updated_params"]


def test_export_unknown_run_is_a_usage_error(temp_store, capsys):
    assert cli_dispatch(["export", "--run-id", "99"]) == 2
    assert "no stored run" in capsys.readouterr().err


def test_ablate_emits_three_variant_table(tmp_path, config_file, temp_store, capsys):
    out_dir = tmp_path / "out"
    assert cli_dispatch(["ablate", "--config", str(config_file), "--output-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    for variant in ("standard", "wolb", "fromhb"):
        assert variant in out
    with (out_dir / "tiny-ablation.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [r["variant"] for r in rows] == ["standard", "wolb", "fromhb"]
    assert int(rows[1]["updated_params"]) < int(rows[0]["updated_params"])


def test_probe_reports_every_block(tmp_path, config_file, capsys):
    out_dir = tmp_path / "out"
    assert cli_dispatch(["probe", "--config", str(config_file), "--output-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "block   1" in out and "block   2" in out
    assert (out_dir / "tiny-probe.csv").exists()


def test_ledger_export_rows_match_the_metric_counts(tmp_path, config_file, capsys):
    out_dir = tmp_path / "out"
    assert cli_dispatch(["train", "--config", str(config_file), "--output-dir", str(out_dir), "--no-store"]) == 0
    with (out_dir / "tiny-seed0.csv").open(newline="") as handle:
        metrics = list(csv.DictReader(handle))
    with (out_dir / "tiny-seed0-ledger.csv").open(newline="") as handle:
        ledger = list(csv.DictReader(handle))
    assert list(ledger[0]) == ["epoch", "tag_class", "count"]
    for row in metrics[:-1]:
        assert sum(int(r["count"]) for r in ledger if r["epoch"] == row["epoch"]) == int(row["updated_params"])


def test_settings_supply_seed_and_output_directory(tmp_path, monkeypatch, capsys):
    text = dump_run_config(make_run_config()).replace("  seed: 0\n", "")
    path = tmp_path / "unseeded.yaml"
    path.write_text(text, encoding="utf-8")
    monkeypatch.setattr(config, "DEFAULT_SEED", 3)
    monkeypatch.setattr(config, "OUTPUT_DIR", str(tmp_path / "settings-out"))

    assert cli_dispatch(["train", "--config", str(path), "--no-store"]) == 0
    printed = capsys.readouterr().out.split()
    assert printed[0] == str(tmp_path / "settings-out" / "tiny-seed3.csv")
    assert (tmp_path / "settings-out" / "tiny-seed3.csv").exists()


def test_explicit_seed_in_file_wins_over_settings(tmp_path, config_file, monkeypatch, capsys):
    monkeypatch.setattr(config, "DEFAULT_SEED", 3)
    assert cli_dispatch(["train", "--config", str(config_file), "--output-dir", str(tmp_path), "--no-store"]) == 0
    assert capsys.readouterr().out.split()[0] == str(tmp_path / "tiny-seed0.csv")


@pytest.mark.parametrize(
    "argv",
    [
        ["--peft", "adapter", "--bottleneck", "4096"],
        ["--peft", "lora", "--rank", "768"],
    ],
)
def test_count_rejects_peft_wider_than_the_model(capsys, argv):
    assert cli_dispatch(["count", "--arch", "bert-base", "--epochs", "3", *argv]) == 1
    diagnostic = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diagnostic["error"]["code"] == "CONFIG_INVALID"
