#!/usr/bin/env python3
"""
Discover Stage

Runs causal discovery on every calibration experiment, aggregates the
per-experiment graphs into a consensus graph with inclusion probabilities
and scores everything against the truth graph when the manifest has one.
"""

import dataclasses
import json
import logging
import os
import sys
from typing import Any, Dict, List, Sequence

from joblib import Parallel, delayed

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import DiscoveryConfig, PipelineConfig, derive_seed
from dataset import Experiment, NodeSchema, load_manifest
from discovery import (
    CausalGraph, aggregate, discover, discover_lagged, graph_from_json, graph_to_dot,
    graph_to_json, structural_hamming_distance,
)
from errors import DataError, UsageError
from report_writer import ReportWriter

logger = logging.getLogger(__name__)


def discover_experiment(experiment: Experiment, schema: Sequence[NodeSchema], cfg: DiscoveryConfig) -> CausalGraph:
    """One experiment's graph; the per-experiment seed only depends on its id."""
    cfg = dataclasses.replace(cfg, seed=derive_seed(cfg.seed, 'discover', experiment.id))
    if cfg.lag > 0:
        return discover_lagged(experiment, schema, cfg.lag, cfg)
    return discover(experiment, schema, cfg)


def resolve_manifest(args, config: PipelineConfig) -> str:
    manifest = getattr(args, 'manifest', None) or config.manifest
    if not manifest:
        raise UsageError("No manifest given (use --manifest or the 'manifest' config key)")
    return manifest


def load_truth(path: str) -> CausalGraph:
    """True graph stored by the simulate stage."""
    if not os.path.exists(path):
        raise DataError(f"Truth file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return graph_from_json(json.load(f)['dag'])
    except (json.JSONDecodeError, KeyError) as e:
        raise DataError(f"Truth file {path} is malformed: {e}")


class DiscoverStage(BaseStage):
    """Stage that discovers per-experiment and consensus causal graphs."""

    def get_name(self) -> str:
        return "discover"

    def get_description(self) -> str:
        return "Discovers a causal graph per calibration experiment and their consensus graph"

    def get_usage_example(self) -> str:
        return "python pipeline.py discover --manifest artefacts/data/manifest.json --jobs 4"

    def add_arguments(self, parser):
        parser.add_argument('--manifest', help='Experiment manifest (overrides the config file)')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        data = load_manifest(resolve_manifest(args, config))
        if not data.calibration:
            raise DataError("empty calibration split: nothing to discover from")
        cfg = config.discovery
        experiments = [data.get(i) for i in data.calibration]
        logger.info(f"Discovering graphs for {len(experiments)} experiments "
                    f"(alpha={cfg.alpha}, method={cfg.ci_method}, lag={cfg.lag}, jobs={config.jobs})")

        if config.jobs > 1:
            graphs: List[CausalGraph] = Parallel(n_jobs=config.jobs)(
                delayed(discover_experiment)(e, data.schema, cfg) for e in experiments
            )
        else:
            graphs = [discover_experiment(e, data.schema, cfg) for e in experiments]
        consensus = aggregate(graphs, cfg.inclusion_threshold)

        summary: Dict[str, Any] = {
            'experiments': [e.id for e in experiments],
            'threshold': cfg.inclusion_threshold,
            'consensus_edges': [f"{a}->{b}" for a, b in sorted(consensus.directed)],
        }
        if data.truth_path and cfg.lag == 0:
            truth = load_truth(data.truth_path)
            per_experiment = {e.id: structural_hamming_distance(g, truth) for e, g in zip(experiments, graphs)}
            summary['structural_hamming_distance'] = {
                'per_experiment': per_experiment,
                'consensus': structural_hamming_distance(consensus, truth),
            }
            logger.info(f"Consensus structural Hamming distance to truth: "
                        f"{summary['structural_hamming_distance']['consensus']}")

        diagnostics = []
        for experiment, graph in zip(experiments, graphs):
            diagnostics.extend(f"{experiment.id}: {line}" for line in graph.diagnostics)
        diagnostics.extend(f"consensus: {line}" for line in consensus.diagnostics)
        if 'structural_hamming_distance' in summary:
            shd = summary['structural_hamming_distance']
            diagnostics.extend(f"{k}: structural Hamming distance {v}" for k, v in shd['per_experiment'].items())
            diagnostics.append(f"consensus: structural Hamming distance {shd['consensus']}")

        writer = ReportWriter(config.output_dir)
        for experiment, graph in zip(experiments, graphs):
            writer.write_json(f"discovery/graphs/{experiment.id}.json", graph_to_json(graph))
        writer.write_json('discovery/consensus.json', graph_to_json(consensus))
        writer.write_text('discovery/consensus.dot', graph_to_dot(consensus, 'consensus'))
        writer.write_json('discovery/summary.json', summary)
        writer.write_diagnostics('discovery/diagnostics.log', diagnostics)
        return {'graphs': len(graphs), 'consensus_edges': len(consensus.directed)}
