#!/usr/bin/env python3
"""
Evaluate Stage

Predicts every calibration and test experiment and summarizes the
per-experiment mean scaled MSE of each predicted node as eCDF curves and
box-plot statistics, one set per split.
"""

import logging
import os
import sys
from typing import Any, Dict, List

from joblib import Parallel, delayed

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig
from dataset import load_manifest
from report_writer import ReportWriter
from stages.discover_stage import resolve_manifest
from stages.predict_stage import load_models, predict_experiment
from uq import boxplot_stats, ecdf, ecdf_frame

logger = logging.getLogger(__name__)


def _scores(plan, models, experiment, uq_cfg, seed) -> Dict[str, Dict[str, float]]:
    return predict_experiment(plan, models, experiment, uq_cfg, seed).scores


class EvaluateStage(BaseStage):
    """Stage that scores the surrogates on both splits."""

    def get_name(self) -> str:
        return "evaluate"

    def get_description(self) -> str:
        return "Scores every calibration and test experiment (scaled MSE eCDF, box plots, coverage)"

    def get_usage_example(self) -> str:
        return "python pipeline.py evaluate --manifest artefacts/data/manifest.json --jobs 4"

    def add_arguments(self, parser):
        parser.add_argument('--manifest', help='Experiment manifest (overrides the config file)')
        parser.add_argument('--models', help='Model directory (default: <out>/models)')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        data = load_manifest(resolve_manifest(args, config))
        plan, models = load_models(args.models or os.path.join(config.output_dir, 'models'))
        splits = {'calibration': data.calibration, 'test': data.test}
        ids = [i for split in splits.values() for i in split]
        experiments = [data.get(i) for i in ids]

        logger.info(f"Evaluating {len(ids)} experiments "
                    f"(B={config.uq.ensemble_size}, level={config.uq.level}, jobs={config.jobs})")
        if config.jobs > 1:
            results = Parallel(n_jobs=config.jobs)(
                delayed(_scores)(plan, models, e, config.uq, config.seed) for e in experiments
            )
        else:
            results = [_scores(plan, models, e, config.uq, config.seed) for e in experiments]
        scores = dict(zip(ids, results))

        nodes = sorted({n for task in plan.tasks for n in task.outputs})
        boxplots: Dict[str, Dict[str, Any]] = {}
        summary: Dict[str, Any] = {'per_experiment': scores, 'splits': {}}
        curves = {}
        diagnostics: List[str] = []
        for split, split_ids in splits.items():
            if not split_ids:
                diagnostics.append(f"{split} split is empty; no statistics written")
                continue
            boxplots[split] = {}
            summary['splits'][split] = {}
            for node in nodes:
                errors = [scores[i][node]['scaled_mse'] for i in split_ids]
                curves[(split, node)] = ecdf(errors)
                boxplots[split][node] = boxplot_stats(errors)
                summary['splits'][split][node] = {
                    'mean_scaled_mse': sum(errors) / len(errors),
                    'mean_coverage': sum(scores[i][node]['coverage'] for i in split_ids) / len(split_ids),
                }

        writer = ReportWriter(config.output_dir)
        for (split, node), curve in sorted(curves.items()):
            writer.write_csv(f"evaluation/ecdf_{split}_{node}.csv", ecdf_frame(curve))
        writer.write_json('evaluation/boxplot.json', boxplots)
        writer.write_json('evaluation/summary.json', summary)
        writer.write_diagnostics('evaluation/diagnostics.log', diagnostics)
        return {'experiments': len(ids), 'nodes': len(nodes)}
