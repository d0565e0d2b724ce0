#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Report writer implementation.

Provides a concrete implementation of ReportWriterPort that writes CSV tables
(RFC-4180 quoting, shortest round-trip float formatting), JSON reports and a
manifest.json hashing every file of the run.
"""

import csv
import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from core.domain.entities import RunManifest
from core.domain.exceptions import OutputExistsError
from core.ports import ReportWriterPort

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def format_value(value: Any) -> str:
    """Format a CSV cell; floats use repr, the shortest string that round-trips."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return str(value)


def jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats (to null) for JSON output."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


class ReportWriter(ReportWriterPort):
    """Writes run outputs into one directory."""

    def __init__(self, output_dir: str = "output", force: bool = False):
        """Initialize the ReportWriter.

        Args:
            output_dir (str): Directory receiving every output file
            force (bool): Overwrite existing files instead of refusing
        """
        logger.debug("Initializing ReportWriter with output_dir=%s, force=%s", output_dir, force)
        self.output_dir = Path(output_dir)
        self.force = force
        self._written: List[str] = []
        os.makedirs(self.output_dir, exist_ok=True)

    def _target(self, name: str) -> Path:
        path = self.output_dir / name
        if path.exists() and not self.force:
            logger.error("Output file already exists: %s", path)
            raise OutputExistsError(str(path))
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """Write a CSV table.

        Args:
            name (str): File name inside the output directory
            header (Sequence[str]): Column names
            rows (Iterable[Sequence[Any]]): Table rows

        Returns:
            str: Path of the written file
        """
        path = self._target(name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            writer.writerow(header)
            count = 0
            for row in rows:
                writer.writerow([format_value(v) for v in row])
                count += 1
        logger.debug("Wrote %s (%d rows)", path, count)
        self._written.append(str(path))
        return str(path)

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        """Write a JSON document with sorted keys and return its path."""
        path = self._target(name)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(jsonable(payload), handle, indent=2, sort_keys=True, allow_nan=False)
            handle.write("\n")
        logger.debug("Wrote %s", path)
        self._written.append(str(path))
        return str(path)

    def write_manifest(self, manifest: RunManifest) -> str:
        """Hash every file written so far into the manifest and write manifest.json."""
        for written in self._written:
            digest = hashlib.sha256(Path(written).read_bytes()).hexdigest()
            manifest.files[Path(written).name] = digest
        return self.write_json(MANIFEST_NAME, manifest.to_dict())
