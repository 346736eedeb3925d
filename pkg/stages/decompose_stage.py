#!/usr/bin/env python3
"""
Decompose Stage

Splits a consensus DAG into merged learning tasks and writes the task plan
with its prediction order.
"""

import logging
import os
import sys
from typing import Any, Dict

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig
from discovery import load_graph
from graphops import decompose, prediction_order, task_graph_to_dot, task_plan_to_json
from report_writer import ReportWriter

logger = logging.getLogger(__name__)


def resolve_graph(args, config: PipelineConfig) -> str:
    return getattr(args, 'graph', None) or os.path.join(config.output_dir, 'discovery', 'consensus.json')


class DecomposeStage(BaseStage):
    """Stage that turns a DAG into a schedule of learning tasks."""

    def get_name(self) -> str:
        return "decompose"

    def get_description(self) -> str:
        return "Decomposes a consensus DAG into merged (inputs -> outputs) learning tasks"

    def get_usage_example(self) -> str:
        return "python pipeline.py decompose --graph artefacts/discovery/consensus.json"

    def add_arguments(self, parser):
        parser.add_argument('--graph', help='Graph JSON (default: <out>/discovery/consensus.json)')

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        graph = load_graph(resolve_graph(args, config))
        plan = decompose(graph)
        report = task_plan_to_json(plan)
        report['prediction_order'] = prediction_order(plan)

        writer = ReportWriter(config.output_dir)
        writer.write_json('plan/task_plan.json', report)
        writer.write_text('plan/task_plan.dot', task_graph_to_dot(plan))
        return {'tasks': len(plan.tasks), 'prediction_order': report['prediction_order']}
