import json

import pytest

from mi_guard.errors import ConfigValidationError
from mi_guard.main import EXIT_CONFIG_INVALID, EXIT_OK, EXIT_STAGE_FAILED, main
from mi_guard.schemas.experiment import parse_experiment
from mi_guard.services.reports import read_sweep_csv


# ============================================================================
# Validation
# ============================================================================

def test_lrnfree_with_argmax_and_no_sampling_is_rejected(tiny_experiment):
    document = {**tiny_experiment, "defenses": {"argmax": True}}
    with pytest.raises(ConfigValidationError) as info:
        parse_experiment(document)
    assert "lrn_free" in str(info.value)


def test_every_violation_is_listed(tiny_experiment):
    document = {
        **tiny_experiment,
        "seeds": [1, 1],
        "training": {"learning_rate": -1.0},
        "dataset": {"synthetic": {"num_classes": 1, "dim": 4, "per_class": 2}},
    }
    with pytest.raises(ConfigValidationError) as info:
        parse_experiment(document)
    assert len(info.value.violations) >= 3


def test_unknown_keys_are_rejected(tiny_experiment):
    with pytest.raises(ConfigValidationError):
        parse_experiment({**tiny_experiment, "advesaries": ["lrn"]})


def test_sampling_with_label_only_defense_is_accepted(tiny_experiment):
    config = parse_experiment(
        {**tiny_experiment, "adversaries": ["lrn_free", "sampling"], "defenses": {"argmax": True}}
    )
    assert config.defenses.label_only == ["argmax"]


def test_bitflip_on_continuous_data_is_rejected(tiny_experiment):
    document = {
        **tiny_experiment,
        "dataset": {"synthetic": {"kind": "continuous", "num_classes": 2, "dim": 3, "per_class": 8}},
        "adversaries": ["sampling"],
        "sampling": {"kind": "bitflip"},
    }
    with pytest.raises(ConfigValidationError):
        parse_experiment(document)


def test_invalid_config_exits_2_before_training(tiny_experiment, write_config, tmp_path, capsys):
    out = tmp_path / "never"
    path = write_config({**tiny_experiment, "defenses": {"argmax": True}})
    assert main(["train", str(path), "--output-dir", str(out)]) == EXIT_CONFIG_INVALID
    assert not out.exists()
    assert "needs posterior access" in capsys.readouterr().err


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["train", str(path)]) == EXIT_CONFIG_INVALID


def test_duplicate_seed_override_exits_2(tiny_experiment, write_config, tmp_path):
    path = write_config(tiny_experiment)
    assert main(["train", str(path), "--seeds", "1,1", "--output-dir", str(tmp_path / "o")]) == EXIT_CONFIG_INVALID


# ============================================================================
# Subcommands
# ============================================================================

def test_schema_subcommand(tmp_path):
    out = tmp_path / "schema.json"
    assert main(["schema", "--output", str(out)]) == EXIT_OK
    schema = json.loads(out.read_text())
    assert {"dataset", "seeds", "defenses", "sweeps"} <= set(schema["properties"])


def test_train_writes_checkpoints_and_manifest(tiny_experiment, write_config, tmp_path):
    out = tmp_path / "run"
    path = write_config(tiny_experiment)
    assert main(["train", str(path), "--output-dir", str(out), "--seeds", "0,1"]) == EXIT_OK
    for seed in (0, 1):
        assert (out / f"seed-{seed}" / "victim.json").exists()
        assert (out / f"seed-{seed}" / "shadow.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert manifest["subcommand"] == "train"


def test_attack_is_reproducible(tiny_experiment, write_config, tmp_path):
    path = write_config({**tiny_experiment, "adversaries": ["lrn", "lrn_free", "sampling"]})
    for name in ("a", "b"):
        assert main(["attack", str(path), "--output-dir", str(tmp_path / name)]) == EXIT_OK
    for artifact in ("attack.json", "manifest.json", "seed-0/scores-lrn.csv", "seed-0/scores-sampling.csv"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()
    rows = (tmp_path / "a" / "seed-0" / "scores-sampling.csv").read_text().splitlines()
    assert rows[0] == "record_id,score,is_member,adversary,p,N"
    assert rows[1].endswith(",sampling,0.05,5")
    assert (tmp_path / "a" / "seed-0" / "scores-lrn.csv").read_text().splitlines()[1].endswith(",lrn,,")


def test_defend_records_fail_closed(tiny_experiment, write_config, tmp_path):
    document = {
        **tiny_experiment,
        "adversaries": ["lrn_free", "sampling"],
        "defenses": {"argmax": True, "rr": {}, "dp_logits": {"noise_multiplier": 0.1}},
    }
    out = tmp_path / "defend"
    assert main(["defend", str(write_config(document)), "--output-dir", str(out)]) == EXIT_OK
    results = json.loads((out / "defend.json").read_text())["results"]
    closed = [r for r in results if r["status"] == "fail_closed"]
    assert {(r["defense"], r["adversary"]) for r in closed} == {("argmax", "lrn_free"), ("rr", "lrn_free")}
    degraded = [r for r in results if r["defense"] == "dp_logits" and r["adversary"] == "sampling"]
    assert degraded[0]["report"]["query_degraded"] is True


def test_bitflip_sweep_has_21_parameter_rows(tiny_experiment, write_config, tmp_path):
    grid = [round(i * 0.005, 10) for i in range(21)]
    document = {**tiny_experiment, "sweeps": [{"family": "sampling", "grid": grid}]}
    out = tmp_path / "sweep"
    assert main(["sweep", str(write_config(document)), "--output-dir", str(out)]) == EXIT_OK
    rows = read_sweep_csv(out / "sweep-0-sampling.csv")
    assert len([r for r in rows if r.seed is None]) == 21
    assert [r.param for r in rows if r.seed is None] == grid


def test_report_merges_stage_outputs(tiny_experiment, write_config, tmp_path):
    out = tmp_path / "merged"
    path = write_config(tiny_experiment)
    assert main(["attack", str(path), "--output-dir", str(out)]) == EXIT_OK
    assert main(["report", str(path), "--output-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert {"attack", "training"} <= set(report["sections"])


def test_stage_failure_exits_1_and_names_the_stage(tiny_experiment, write_config, tmp_path, capsys):
    document = {
        **tiny_experiment,
        "dataset": {"csv": {"path": str(tmp_path / "missing.csv"), "kind": "binary", "num_classes": 2}},
    }
    assert main(["train", str(write_config(document)), "--output-dir", str(tmp_path / "o")]) == EXIT_STAGE_FAILED
    assert "prepare" in capsys.readouterr().err
