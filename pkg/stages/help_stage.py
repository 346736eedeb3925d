#!/usr/bin/env python3
"""
Help Stage

Lists every registered stage with its description and an example.
"""

import os
import sys
from typing import Any, Dict, List

# Add parent directory to path to import base_stage
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from base_stage import BaseStage
from config import PipelineConfig


class HelpStage(BaseStage):
    """Stage that prints the help text of all stages."""

    def __init__(self, stages: List[BaseStage]):
        self.stages = stages

    def get_name(self) -> str:
        return "help"

    def get_description(self) -> str:
        return "Lists all available stages"

    def get_usage_example(self) -> str:
        return "python pipeline.py help"

    def get_help_text_all(self) -> str:
        help_text = "Available Stages:\n" + "=" * 60 + "\n\n"
        for i, stage in enumerate(self.stages, 1):
            help_text += f"{i}. {stage.get_name().upper()}\n"
            help_text += f"   {stage.get_description()}\n"
            help_text += f"   Example: {stage.get_usage_example()}\n"
            help_text += "\n"
        help_text += "=" * 60 + "\n"
        help_text += "\nExit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure\n"
        return help_text

    def run(self, args, config: PipelineConfig) -> Dict[str, Any]:
        print(self.get_help_text_all())
        return {'stages': [s.get_name() for s in self.stages]}
