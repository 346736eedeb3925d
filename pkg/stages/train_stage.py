#!/usr/bin/env python3
"""
Train Stage

Decomposes the consensus graph and trains one recurrent surrogate per
learning task. A task whose loss diverges is reported without affecting
the others; the stage then exits with the numerical-failure code.
"""

import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from joblib import Parallel, delayed

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig, TrainConfig
from dataset import ExperimentSet, Normalizer, fit_normalizer, load_manifest
from discovery import load_graph
from errors import DataError, NumericalError
from graphops import LearningTask, decompose, task_plan_to_json
from report_writer import ReportWriter
from stages.decompose_stage import resolve_graph
from stages.discover_stage import resolve_manifest
from surrogate import TrainedModel, model_to_json, train_task

logger = logging.getLogger(__name__)


def train_one(
    task: LearningTask, data: ExperimentSet, cfg: TrainConfig, normalizer: Normalizer,
) -> Tuple[Optional[TrainedModel], Optional[str]]:
    """(model, None) on success, (None, message) when the loss diverges."""
    try:
        return train_task(task, data, cfg, normalizer), None
    except NumericalError as e:
        return None, str(e)


class TrainStage(BaseStage):
    """Stage that trains the per-task recurrent surrogates."""

    def get_name(self) -> str:
        return "train"

    def get_description(self) -> str:
        return "Trains one dropout GRU surrogate per learning task of the consensus graph"

    def get_usage_example(self) -> str:
        return "python pipeline.py train --manifest artefacts/data/manifest.json --profile standard"

    def add_arguments(self, parser):
        parser.add_argument('--manifest', help='Experiment manifest (overrides the config file)')
        parser.add_argument('--graph', help='Graph JSON (default: <out>/discovery/consensus.json)')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        graph = load_graph(resolve_graph(args, config))
        data = load_manifest(resolve_manifest(args, config))
        if not data.calibration:
            raise DataError("empty calibration split: nothing to train on")
        missing = [n for n in graph.nodes if n not in data.node_names]
        if missing:
            raise DataError(f"Graph nodes absent from the manifest: {', '.join(missing)}")
        plan = decompose(graph)
        normalizer = fit_normalizer(data, data.calibration)
        configs = [config.train_config_for(task.key) for task in plan.tasks]

        logger.info(f"Training {len(plan.tasks)} task(s) with jobs={config.jobs}")
        if config.jobs > 1:
            results = Parallel(n_jobs=config.jobs)(
                delayed(train_one)(task, data, cfg, normalizer) for task, cfg in zip(plan.tasks, configs)
            )
        else:
            results = [train_one(task, data, cfg, normalizer) for task, cfg in zip(plan.tasks, configs)]

        loss_rows: List[Dict[str, Any]] = []
        failures = []
        writer = ReportWriter(config.output_dir)
        for task, (model, error) in zip(plan.tasks, results):
            if model is None:
                logger.error(f"Task {task.key} failed: {error}")
                failures.append(f"task {task.key}: {error}")
                continue
            writer.write_json(f"models/{task.key}.json", model_to_json(model))
            loss_rows.extend({'epoch': e + 1, 'task': task.key, 'loss': loss}
                             for e, loss in enumerate(model.loss_history))
        writer.write_json('models/task_plan.json', task_plan_to_json(plan))
        writer.write_csv('models/training_loss.csv', pd.DataFrame(loss_rows, columns=['epoch', 'task', 'loss']))
        writer.write_diagnostics('models/diagnostics.log', normalizer.warnings + failures)

        if failures:
            raise NumericalError(f"{len(failures)} of {len(plan.tasks)} task(s) failed to train")
        return {'models': len(plan.tasks)}
