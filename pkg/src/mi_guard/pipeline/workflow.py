"""LangGraph workflows behind the CLI subcommands."""

from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import Callable

from langgraph.graph import END, StateGraph

from mi_guard.config import settings
from mi_guard.errors import StageError
from mi_guard.pipeline.stages import (
    attack_stage,
    defend_stage,
    prepare_stage,
    report_stage,
    sweep_stage,
    train_stage,
)
from mi_guard.pipeline.state import RunState
from mi_guard.schemas.experiment import ExperimentConfig
from mi_guard.services.reports import write_manifest

logger = logging.getLogger(__name__)

Stage = Callable[[RunState], dict]

STAGES: dict[str, Stage] = {
    "prepare": prepare_stage,
    "train": train_stage,
    "attack": attack_stage,
    "defend": defend_stage,
    "sweep": sweep_stage,
    "report": report_stage,
}

# Stages after "prepare" share the cached per-seed artifacts, so a seed's
# victim and shadow are trained once per invocation.
SUBCOMMANDS: dict[str, tuple[str, ...]] = {
    "train": ("prepare", "train"),
    "attack": ("prepare", "train", "attack"),
    "defend": ("prepare", "train", "defend"),
    "sweep": ("prepare", "sweep"),
    "report": ("report",),
}


def stage_node(name: str, stage: Stage) -> Stage:
    """Graph node running ``stage``; any failure surfaces as ``StageError(name)``."""

    @functools.wraps(stage)
    def node(state: RunState) -> dict:
        logger.info("Stage '%s' starting", name)
        try:
            update = stage(state)
        except StageError:
            raise
        except Exception as exc:
            logger.error("Stage '%s' failed: %s", name, exc)
            raise StageError(name, exc) from exc
        logger.info("Stage '%s' done", name)
        return update

    return node


def create_workflow(subcommand: str):
    """
    Compile the linear stage graph of one subcommand.

    e.g. attack: START → prepare → train → attack → END
    """
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand '{subcommand}' (expected one of {sorted(SUBCOMMANDS)})")
    names = SUBCOMMANDS[subcommand]

    workflow = StateGraph(RunState)
    for name in names:
        workflow.add_node(name, stage_node(name, STAGES[name]))

    workflow.set_entry_point(names[0])
    for current, following in zip(names, names[1:]):
        workflow.add_edge(current, following)
    workflow.add_edge(names[-1], END)

    return workflow.compile()


def create_run_state(config: ExperimentConfig, subcommand: str) -> RunState:
    output_dir = Path(config.output_dir or settings.output_dir)
    return RunState(config=config, subcommand=subcommand, output_dir=output_dir, artifacts=[])


def run_workflow(config: ExperimentConfig, subcommand: str) -> RunState:
    """Run the stages of ``subcommand``; failures surface as :class:`StageError`.

    The manifest is written first, so even a failed run records how to
    reproduce it.
    """
    graph = create_workflow(subcommand)
    state = create_run_state(config, subcommand)
    manifest = write_manifest(config, subcommand, state["output_dir"])
    state["artifacts"] = [str(manifest)]
    return graph.invoke(state)
