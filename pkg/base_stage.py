#!/usr/bin/env python3
"""
Base Stage Pattern for the causal surrogate pipeline

This module provides the base class for pipeline subcommands.
All stages inherit from BaseStage and implement the required methods.
"""

import argparse
from abc import ABC, abstractmethod
from typing import Any, Dict
import logging

from config import PipelineConfig

logger = logging.getLogger(__name__)


class BaseStage(ABC):
    """
    Base class for all pipeline stages.

    To create a new stage:
    1. Create a new file in stages/ (e.g., my_stage.py)
    2. Import BaseStage: from base_stage import BaseStage
    3. Create a class that inherits from BaseStage
    4. Implement all @abstractmethod methods
    5. Register your stage in pipeline.py

    Example:
        class CountStage(BaseStage):
            def get_name(self) -> str:
                return "count"

            def get_description(self) -> str:
                return "Counts experiments in the manifest"

            def get_usage_example(self) -> str:
                return "python pipeline.py count --manifest data/manifest.json"

            def add_arguments(self, parser):
                parser.add_argument('--manifest')

            def run(self, args, config):
                data = load_manifest(args.manifest or config.manifest)
                return {'experiments': len(data.experiments)}
    """

    @abstractmethod
    def get_name(self) -> str:
        """
        Return the subcommand name for this stage.

        Returns:
            str: Stage name (e.g., "discover", "train")
        """
        pass

    @abstractmethod
    def get_description(self) -> str:
        """
        Return a one-line description of what this stage does.

        Returns:
            str: Brief description shown by the help stage
        """
        pass

    @abstractmethod
    def get_usage_example(self) -> str:
        """
        Return an example command line for this stage.

        Returns:
            str: Example usage string
        """
        pass

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register stage-specific flags (none by default)."""

    @abstractmethod
    def run(self, args: argparse.Namespace, config: PipelineConfig) -> Dict[str, Any]:
        """
        Execute the stage.

        Inputs are validated before the first output file is written.
        Library errors (DataError, NumericalError, UsageError) propagate to
        the router, which maps them to exit codes.

        Args:
            args: Parsed command-line arguments
            config: Pipeline configuration (profile, file and flags merged)

        Returns:
            dict: Summary of what was produced (logged by the router)
        """
        pass
