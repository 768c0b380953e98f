"""Output writer for CSV, JSON and binary run artifacts"""

import csv
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
from loguru import logger


FLOAT_FORMAT = '.17g'


def format_value(value: Any) -> str:
    """Render one CSV cell; floats keep all 17 significant digits"""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class OutputWriter:
    """Writes run artifacts into one directory, stamping each with the config hash and seed"""

    def __init__(self, directory: Union[str, Path], config_hash: str, seed: int):
        """
        Initialize output writer

        Args:
            directory: Output directory (created if missing)
            config_hash: Hash of the merged configuration
            seed: Master seed of the run
        """
        self.directory = Path(directory)
        self.config_hash = config_hash
        self.seed = int(seed)
        self.written: List[Path] = []
        os.makedirs(self.directory, exist_ok=True)

    @property
    def header(self) -> str:
        return f"# sivctl config_hash={self.config_hash} seed={self.seed}"

    def _path(self, name: str) -> Path:
        path = self.directory / name
        self.written.append(path)
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """
        Write a CSV file with the provenance header line

        Args:
            name: File name inside the output directory
            columns: Column names
            rows: Row tuples

        Returns:
            Path written
        """
        path = self._path(name)
        count = 0
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(self.header + '\n')
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                if len(row) != len(columns):
                    raise ValueError(f"{name}: row has {len(row)} values for {len(columns)} columns")
                writer.writerow([format_value(v) for v in row])
                count += 1
        logger.debug(f"Wrote {count} rows to {path}")
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        """Write a JSON object carrying config_hash and seed keys"""
        path = self._path(name)
        payload = {'config_hash': self.config_hash, 'seed': self.seed}
        payload.update(data)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
            f.write('\n')
        logger.debug(f"Wrote {path}")
        return path

    def write_bytes(self, name: str, data: bytes) -> Path:
        path = self._path(name)
        path.write_bytes(data)
        logger.debug(f"Wrote {len(data)} bytes to {path}")
        return path

    def summary(self) -> str:
        return f"{len(self.written)} files in {self.directory}"


def read_csv_header(path: Union[str, Path]) -> Dict[str, str]:
    """Parse the provenance header of a written CSV file"""
    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline().strip()
    if not first.startswith('# sivctl '):
        raise ValueError(f"{path}: missing sivctl header")
    fields = {}
    for token in first[len('# sivctl '):].split():
        key, _, value = token.partition('=')
        fields[key] = value
    return fields
