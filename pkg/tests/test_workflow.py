import json

import pytest

from mi_guard.errors import StageError
from mi_guard.pipeline import workflow
from mi_guard.pipeline.workflow import SUBCOMMANDS, create_workflow, run_workflow
from mi_guard.schemas.experiment import parse_experiment


@pytest.mark.parametrize("subcommand", sorted(SUBCOMMANDS))
def test_graph_has_one_node_per_stage(subcommand):
    graph = create_workflow(subcommand).get_graph()
    stages = {node for node in graph.nodes if not node.startswith("__")}
    assert stages == set(SUBCOMMANDS[subcommand])


def test_unknown_subcommand_is_rejected():
    with pytest.raises(ValueError):
        create_workflow("deploy")


def test_train_graph_runs_prepare_then_train(tiny_experiment, tmp_path):
    config = parse_experiment({**tiny_experiment, "output_dir": str(tmp_path)})
    state = run_workflow(config, "train")
    assert list(state["contexts"]) == [0]
    assert state["artifacts"][0].endswith("manifest.json")
    assert (tmp_path / "seed-0" / "victim.json").exists()


def test_failing_stage_is_named(tiny_experiment, tmp_path, monkeypatch):
    def broken(state):
        raise RuntimeError("disk full")

    monkeypatch.setitem(workflow.STAGES, "train", broken)
    config = parse_experiment({**tiny_experiment, "output_dir": str(tmp_path)})
    with pytest.raises(StageError) as info:
        run_workflow(config, "train")
    assert info.value.stage == "train"
    assert isinstance(info.value.cause, RuntimeError)
    # the manifest is written before any stage runs
    assert json.loads((tmp_path / "manifest.json").read_text())["subcommand"] == "train"
