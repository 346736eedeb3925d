#!/usr/bin/env python3
"""
Causal Surrogate Pipeline - Command Line Entry Point

Routes subcommands to pipeline stages: simulate data, discover causal
graphs, decompose them into learning tasks, train recurrent surrogates,
and predict/evaluate with Monte-Carlo dropout uncertainty.
"""

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from config import CAUSAL_LOG_LEVEL, PipelineConfig, load_pipeline_config
from errors import PipelineError, UsageError

# Import stages
from stages.simulate_stage import SimulateStage
from stages.discover_stage import DiscoverStage
from stages.decompose_stage import DecomposeStage
from stages.train_stage import TrainStage
from stages.predict_stage import PredictStage
from stages.evaluate_stage import EvaluateStage
from stages.metrics_stage import MetricsStage
from stages.help_stage import HelpStage

logger = logging.getLogger(__name__)

# Register all available stages here, in pipeline order
STAGES = [
    SimulateStage(),
    DiscoverStage(),
    DecomposeStage(),
    TrainStage(),
    PredictStage(),
    EvaluateStage(),
    MetricsStage(),
]
STAGES.append(HelpStage(list(STAGES)))


class PipelineArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors become UsageError (exit code 1)."""

    def error(self, message):
        raise UsageError(message)


class StageRouter:
    """Routes a command line to the matching stage."""

    def __init__(self, stages: List):
        self.stages = {stage.get_name(): stage for stage in stages}
        self.parser = self._build_parser(stages)
        logger.debug(f"Initialized StageRouter with {len(stages)} stages")

    def _build_parser(self, stages: List) -> PipelineArgumentParser:
        common = PipelineArgumentParser(add_help=False)
        common.add_argument('--config', help='Pipeline config JSON')
        common.add_argument('--out', help='Output directory')
        common.add_argument('--seed', type=int, help='Master seed')
        common.add_argument('--jobs', type=int, help='Worker processes')
        common.add_argument('--profile', help='Named profile (standard, deep)')
        common.add_argument('--log-level', default=CAUSAL_LOG_LEVEL, help='DEBUG, INFO, WARNING, ...')

        parser = PipelineArgumentParser(prog='pipeline.py', description=__doc__.strip().splitlines()[0])
        subparsers = parser.add_subparsers(dest='stage', metavar='stage', parser_class=PipelineArgumentParser)
        for stage in stages:
            sub = subparsers.add_parser(stage.get_name(), parents=[common], help=stage.get_description())
            stage.add_arguments(sub)
        return parser

    def route(self, argv: Optional[List[str]] = None) -> int:
        """
        Parse the command line, run the selected stage and map failures to exit codes.

        Returns:
            int: 0 success, 1 usage error, 2 data error, 3 numerical failure
        """
        try:
            args = self.parser.parse_args(argv)
            if not args.stage:
                raise UsageError(f"No stage given. Choose one of: {', '.join(self.stages)}")
            level = getattr(logging, str(args.log_level).upper(), None)
            if not isinstance(level, int):
                raise UsageError(f"Unknown log level '{args.log_level}'")
            logging.getLogger().setLevel(level)
            config = load_pipeline_config(args.config, args.profile, args.seed, args.jobs, args.out)
        except UsageError as e:
            logger.error(f"Usage error: {e}")
            self.parser.print_usage(sys.stderr)
            return e.exit_code

        stage = self.stages[args.stage]
        logger.info("=" * 80)
        logger.info(f"Stage: {stage.get_name()} (profile={config.profile}, seed={config.seed}, jobs={config.jobs})")
        logger.info("=" * 80)
        debug = logger.isEnabledFor(logging.DEBUG)
        try:
            with np.errstate(over='ignore', under='ignore'):
                summary = stage.run(args, config)
        except PipelineError as e:
            logger.error(f"Error in stage {stage.get_name()}: {e}", exc_info=debug)
            return e.exit_code
        except (ArithmeticError, np.linalg.LinAlgError) as e:
            logger.error(f"Numerical failure in stage {stage.get_name()}: {e}", exc_info=True)
            return 3
        except (OSError, ValueError, KeyError) as e:
            logger.error(f"Error in stage {stage.get_name()}: {e}", exc_info=True)
            return 2
        logger.info(f"✓ Stage {stage.get_name()} finished: {summary}")
        return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    return StageRouter(STAGES).route(argv)


if __name__ == '__main__':
    sys.exit(main())
