"""
CSV, summary and error artifacts of an experiment run
"""

import csv
import json
import logging
import math
import threading
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import BilliardError

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Text form of one CSV/summary cell; floats keep 17 significant digits."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return f"{value:.17g}"
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, np.ndarray):
        return format_value(value.tolist())
    if isinstance(value, (list, tuple)):
        return '[' + ', '.join(format_value(v) for v in value) + ']'
    return str(value)


def _json_ready(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Fraction):
        return format_value(value)
    return value


class ReportWriter:
    """Writes the artifacts of one run into an output directory.

    Writes are serialized so experiments may fan out their solves freely.
    """

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        self.files: List[str] = []
        self._lock = threading.Lock()

    @property
    def started(self) -> bool:
        return bool(self.files)

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_csv(self, name: str, header: Sequence[str],
                  rows: Iterable[Sequence[Any]]) -> Path:
        """Header names carry units in brackets, e.g. 'r [arclength]'."""
        with self._lock:
            path = self._path(name)
            with open(path, 'w', newline='', encoding='utf-8') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_value(v) for v in row])
            self.files.append(name)
        logger.info(f"Wrote {path}")
        return path

    def write_summary(self, title: str, sections: Dict[str, Dict[str, Any]]) -> Path:
        with self._lock:
            path = self._path('summary.txt')
            lines = [title, '=' * len(title)]
            for section, values in sections.items():
                lines.append('')
                lines.append(f"[{section}]")
                for key, value in values.items():
                    lines.append(f"{key}: {format_value(value)}")
            with open(path, 'w', newline='', encoding='utf-8') as f:
                f.write('\n'.join(lines) + '\n')
            self.files.append('summary.txt')
        logger.info(f"Wrote {path}")
        return path

    def write_error(self, error: BilliardError, experiment: Optional[str] = None) -> Path:
        """error.json with the structured record and the partial outputs it leaves behind."""
        with self._lock:
            record = error.to_dict()
            record['experiment'] = experiment
            record['partial_outputs'] = list(self.files)
            path = self._path('error.json')
            with open(path, 'w', newline='', encoding='utf-8') as f:
                json.dump(_json_ready(record), f, indent=2, sort_keys=True)
                f.write('\n')
        logger.error(f"Run failed ({error.category}): {error.message}")
        return path
