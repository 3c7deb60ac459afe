import json

from mi_guard.schemas.attack import MembershipScore
from mi_guard.schemas.experiment import parse_experiment
from mi_guard.schemas.report import SWEEP_CSV_COLUMNS, SweepRow
from mi_guard.services.reports import (
    config_hash,
    emit_report,
    read_sweep_csv,
    write_manifest,
    write_scores_csv,
)

ROWS = [
    SweepRow(defense="dplogits", param=0.01, seed=0, accuracy=0.8125, auc=0.61, epsilon=443.6, delta=0.004, queries=40),
    SweepRow(defense="dplogits", param=0.01, seed=1, accuracy=0.75, auc=0.59, epsilon=443.6, delta=0.004, queries=40),
    SweepRow(defense="dplogits", param=0.01, seed=None, accuracy=0.78125, auc=0.6, epsilon=443.6, delta=0.004, queries=40),
    SweepRow(defense="none", param=0.0, seed=None, accuracy=0.9, auc=0.7, epsilon=None, delta=0.0, queries=0),
]


def test_empty_report_has_header_and_empty_rows(tmp_path):
    csv_path, json_path = emit_report([], {"seeds": [0]}, tmp_path / "empty")
    assert csv_path.read_text() == ",".join(SWEEP_CSV_COLUMNS) + "\n"
    assert json.loads(json_path.read_text())["rows"] == []


def test_csv_round_trip(tmp_path):
    csv_path, _ = emit_report(ROWS, {}, tmp_path / "sweep")
    assert read_sweep_csv(csv_path) == ROWS


def test_unbounded_epsilon_is_written_as_inf(tmp_path):
    csv_path, json_path = emit_report(ROWS[-1:], {}, tmp_path / "sweep")
    assert csv_path.read_text().splitlines()[1].split(",")[5] == "inf"
    assert json.loads(json_path.read_text())["rows"][0]["epsilon"] is None


def test_mean_row_seed_column(tmp_path):
    csv_path, _ = emit_report(ROWS, {}, tmp_path / "sweep")
    assert csv_path.read_text().splitlines()[3].split(",")[2] == "mean"


def test_identical_inputs_give_identical_files(tmp_path):
    meta = {"config_hash": "abc", "seeds": [0, 1]}
    a = emit_report(ROWS, meta, tmp_path / "a" / "sweep")
    b = emit_report(ROWS, meta, tmp_path / "b" / "sweep")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_scores_csv(tmp_path):
    scores = [MembershipScore(record_id="r-0", score=0.25, is_member=True),
              MembershipScore(record_id="r-1", score=0.5)]
    path = write_scores_csv(scores, tmp_path / "scores.csv", adversary="lrn_free")
    assert path.read_text().splitlines() == [
        "record_id,score,is_member,adversary,p,N",
        "r-0,0.25,1,lrn_free,,",
        "r-1,0.5,,lrn_free,,",
    ]


def test_sampling_scores_csv_records_p_and_n(tmp_path):
    scores = [MembershipScore(record_id="r-0", score=0.75, is_member=False)]
    path = write_scores_csv(scores, tmp_path / "scores.csv", adversary="sampling", p=0.02, n_samples=100)
    assert path.read_text().splitlines()[1] == "r-0,0.75,0,sampling,0.02,100"


def test_config_hash_ignores_output_dir(tiny_experiment):
    a = parse_experiment({**tiny_experiment, "output_dir": "x"})
    b = parse_experiment({**tiny_experiment, "output_dir": "y"})
    c = parse_experiment({**tiny_experiment, "seeds": [0, 1]})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_manifest_records_seeds_and_versions(tmp_path, tiny_experiment):
    config = parse_experiment(tiny_experiment)
    manifest = json.loads(write_manifest(config, "train", tmp_path).read_text())
    assert manifest["seeds"] == [0]
    assert manifest["subcommand"] == "train"
    assert manifest["config_hash"] == config_hash(config)
    assert {"mi_guard", "numpy", "dp_accounting"} <= set(manifest["versions"])
