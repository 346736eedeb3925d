#!/usr/bin/env python3
"""
Report Writer

Deterministic JSON, CSV and text artefacts inside the pipeline output
directory. Reports carry no timestamps so repeated runs with the same seed
produce byte-identical files.
"""

import json
import logging
import os
from typing import Any, Iterable

import pandas as pd

from errors import UsageError

logger = logging.getLogger(__name__)


class ReportWriter:
    """Writes artefacts below one output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = os.path.realpath(os.path.expanduser(output_dir))
        logger.info(f"Report writer: output directory set to {self.output_dir}")

    def path(self, relative: str) -> str:
        """
        Resolve a path below the output directory, creating parent folders.

        Paths that escape the output directory (.., absolute paths elsewhere,
        symlinks) are rejected.
        """
        absolute = os.path.realpath(os.path.join(self.output_dir, relative))
        try:
            common = os.path.commonpath([absolute, self.output_dir])
        except ValueError:
            common = ''
        if common != self.output_dir:
            raise UsageError(f"Refusing to write outside the output directory: {relative}")
        os.makedirs(os.path.dirname(absolute), exist_ok=True)
        return absolute

    def write_json(self, relative: str, content: Any) -> str:
        path = self.path(relative)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(content, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        logger.info(f"Wrote JSON to {path}")
        return path

    def write_csv(self, relative: str, frame: pd.DataFrame) -> str:
        path = self.path(relative)
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        logger.info(f"Wrote CSV to {path} ({len(frame)} rows)")
        return path

    def write_text(self, relative: str, text: str) -> str:
        path = self.path(relative)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Wrote text to {path}")
        return path

    def write_diagnostics(self, relative: str, lines: Iterable[str]) -> str:
        lines = list(lines)
        return self.write_text(relative, ''.join(f"{line}\n" for line in lines))
