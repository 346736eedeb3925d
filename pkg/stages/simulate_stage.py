#!/usr/bin/env python3
"""
Simulate Stage

Writes a synthetic experiment set (CSV per experiment, manifest and truth
graph) from a random structural equation model, so the rest of the
pipeline can be scored against a known graph.
"""

import dataclasses
import logging
import os
import sys
from typing import Any, Dict

import numpy as np

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig, derive_seed
from errors import UsageError
from semgen import random_dag, random_sem, write_experiment_set

logger = logging.getLogger(__name__)


class SimulateStage(BaseStage):
    """Stage that generates synthetic experiments with a known causal graph."""

    def get_name(self) -> str:
        return "simulate"

    def get_description(self) -> str:
        return "Generates synthetic non-stationary experiments from a random rooted SEM"

    def get_usage_example(self) -> str:
        return "python pipeline.py simulate --nodes 4 --experiments 10 --out artefacts"

    def add_arguments(self, parser):
        parser.add_argument('--nodes', type=int, default=4, help='Nodes including the root U')
        parser.add_argument('--edge-prob', type=float, default=0.5)
        parser.add_argument('--experiments', type=int, default=10)
        parser.add_argument('--length', type=int, default=300, help='Time steps per experiment')
        parser.add_argument('--kind', choices=['linear', 'tanh', 'mixed'], default='tanh')
        parser.add_argument('--noise', type=float, default=0.1)
        parser.add_argument('--calibration-fraction', type=float, default=0.5)

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        if args.experiments < 1:
            raise UsageError("--experiments must be >= 1")
        if not 0.0 < args.calibration_fraction <= 1.0:
            raise UsageError("--calibration-fraction must lie in (0, 1]")

        dag = random_dag(args.nodes, args.edge_prob, derive_seed(config.seed, 'dag'))
        base = random_sem(dag, derive_seed(config.seed, 'mechanisms'), kind=args.kind,
                          noise_scale=args.noise, length=args.length)
        # every experiment follows its own loading path of the root variable
        rng = np.random.default_rng(derive_seed(config.seed, 'paths'))
        specs = []
        for k in range(args.experiments):
            specs.append(dataclasses.replace(
                base,
                seed=derive_seed(config.seed, 'experiment', k),
                u_slope=float(rng.uniform(0.5, 1.5)),
                u_amplitude=float(rng.uniform(0.2, 0.8)),
                u_frequency=float(rng.uniform(1.0, 3.0)),
            ))

        out_dir = os.path.join(config.output_dir, 'data')
        manifest = write_experiment_set(specs, out_dir, args.calibration_fraction)
        logger.info(f"True graph: {', '.join(f'{a}->{b}' for a, b in sorted(dag.directed)) or '(no edges)'}")
        return {'manifest': manifest, 'experiments': len(specs), 'edges': len(dag.directed)}
