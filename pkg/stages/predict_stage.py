#!/usr/bin/env python3
"""
Predict Stage

Propagates Monte-Carlo dropout ensembles from the root series of one
experiment through every task of the plan and writes ensembles, quantile
bands, the error eCDF and a scaled-MSE summary.
"""

import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import pandas as pd

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig, UQConfig, derive_seed
from dataset import Experiment, load_manifest
from errors import DataError
from graphops import TaskPlan, load_task_plan
from report_writer import ReportWriter
from stages.discover_stage import resolve_manifest
from surrogate import TrainedModel, load_model
from uq import (
    IntervalBand, PredictionEnsemble, coverage, ecdf, ecdf_frame, ensemble_frame, interval,
    interval_frame, propagate, scaled_mse,
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentPrediction:
    experiment_id: str
    ensembles: Dict[str, PredictionEnsemble]
    bands: Dict[str, IntervalBand]
    errors: Dict[str, Any] = field(default_factory=dict)
    scores: Dict[str, Dict[str, float]] = field(default_factory=dict)


def load_models(models_dir: str) -> Tuple[TaskPlan, Dict[str, TrainedModel]]:
    plan = load_task_plan(os.path.join(models_dir, 'task_plan.json'))
    models = {}
    for task in plan.tasks:
        models[task.key] = load_model(os.path.join(models_dir, f"{task.key}.json"))
    return plan, models


def predict_experiment(
    plan: TaskPlan,
    models: Dict[str, TrainedModel],
    experiment: Experiment,
    uq_cfg: UQConfig,
    seed: int,
) -> ExperimentPrediction:
    """Ensembles, bands and scaled errors of every predicted node of one experiment."""
    ensembles = propagate(
        plan, models, experiment.series, uq_cfg.ensemble_size, uq_cfg.dropout_rate,
        derive_seed(seed, 'predict', experiment.id),
    )
    predicted = [n for task in plan.tasks for n in task.outputs]
    prediction = ExperimentPrediction(experiment.id, ensembles, {})
    for node in predicted:
        band = interval(ensembles[node], uq_cfg.level)
        truth = experiment.series[node]
        errors, mean_error = scaled_mse(truth, band.mean)
        prediction.bands[node] = band
        prediction.errors[node] = errors
        prediction.scores[node] = {'scaled_mse': mean_error, 'coverage': coverage(band, truth)}
    return prediction


class PredictStage(BaseStage):
    """Stage that predicts one experiment with uncertainty bands."""

    def get_name(self) -> str:
        return "predict"

    def get_description(self) -> str:
        return "Propagates Monte-Carlo dropout ensembles from the root series of one experiment"

    def get_usage_example(self) -> str:
        return "python pipeline.py predict --experiment exp007 --manifest artefacts/data/manifest.json"

    def add_arguments(self, parser):
        parser.add_argument('--manifest', help='Experiment manifest (overrides the config file)')
        parser.add_argument('--models', help='Model directory (default: <out>/models)')
        parser.add_argument('--experiment', required=True, help='Experiment id to predict')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        data = load_manifest(resolve_manifest(args, config))
        experiment = data.get(args.experiment)
        plan, models = load_models(args.models or os.path.join(config.output_dir, 'models'))
        result = predict_experiment(plan, models, experiment, config.uq, config.seed)

        curves: List[pd.DataFrame] = []
        for node in sorted(result.errors):
            frame = ecdf_frame(ecdf(result.errors[node]))
            frame.insert(0, 'node', node)
            curves.append(frame)
        if not curves:
            raise DataError("The task plan predicts no nodes")

        writer = ReportWriter(config.output_dir)
        prefix = f"predictions/{experiment.id}"
        writer.write_csv(f"{prefix}/ensemble.csv", ensemble_frame(result.ensembles))
        writer.write_csv(f"{prefix}/interval.csv", interval_frame(result.bands))
        writer.write_csv(f"{prefix}/ecdf.csv", pd.concat(curves, ignore_index=True))
        writer.write_json(f"{prefix}/summary.json", {
            'experiment': experiment.id,
            'ensemble_size': config.uq.ensemble_size,
            'level': config.uq.level,
            'nodes': result.scores,
        })
        for node, score in sorted(result.scores.items()):
            logger.info(f"  {node}: scaled MSE {score['scaled_mse']:.6f}, coverage {score['coverage']:.3f}")
        return {'experiment': experiment.id, 'nodes': len(result.scores)}
