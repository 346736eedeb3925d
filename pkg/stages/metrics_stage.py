#!/usr/bin/env python3
"""
Metrics Stage

Turns a directory of per-step contact-network dumps into the feature table
(graph metrics, fabric and strong-fabric components, stress invariants).
"""

import logging
import os
import sys
from typing import Any, Dict

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig
from micromech import read_contact_dumps, read_stress_table, timestep_features
from report_writer import ReportWriter

logger = logging.getLogger(__name__)


class MetricsStage(BaseStage):
    """Stage that extracts micromechanical features from contact dumps."""

    def get_name(self) -> str:
        return "metrics"

    def get_description(self) -> str:
        return "Extracts contact-graph metrics and fabric features from per-step contact dumps"

    def get_usage_example(self) -> str:
        return "python pipeline.py metrics --dumps artefacts/contacts --stress artefacts/stress.csv"

    def add_arguments(self, parser):
        parser.add_argument('--dumps', required=True, help='Directory of per-step contact CSVs')
        parser.add_argument('--stress', help='Optional CSV of per-step stress components sigma11..sigma13')
        parser.add_argument('--particles', type=int, help='Particle count (default: particles in contact)')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        named = read_contact_dumps(args.dumps, args.particles)
        graphs = [graph for _, graph in named]
        stresses = read_stress_table(args.stress, len(graphs)) if args.stress else None
        table, diagnostics = timestep_features(graphs, stresses, jobs=config.jobs)
        table.insert(1, 'dump', [name for name, _ in named])

        writer = ReportWriter(config.output_dir)
        writer.write_csv('metrics/features.csv', table)
        writer.write_diagnostics('metrics/diagnostics.log', diagnostics)
        return {'steps': len(table), 'columns': len(table.columns)}
