import csv
import json
import math
import numbers
import platform
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set

import numpy as np
import scipy


def format_cell(value: Any) -> str:
    """Floats in 17-significant-digit scientific notation, '.' decimal point"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return f"{float(value):.16e}"
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def versions() -> Dict[str, str]:
    from runner import __version__
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "lab": __version__,
    }


class RunOutput:
    """
    Files of one experiment run, all named <experiment>_<name>.<ext>

    Files are staged in a scratch directory and reach output_dir only on
    commit(); discard() drops them, so a failed run leaves no partial set.
    """

    def __init__(self, experiment: str, output_dir: Path):
        self.experiment = experiment
        self.output_dir = Path(output_dir)
        self.written: Set[str] = set()
        self._staging: Optional[Path] = None

    def _path(self, name: str, suffix: str) -> Path:
        filename = f"{self.experiment}_{name}.{suffix}"
        if filename in self.written:
            raise ValueError(f"{filename} was already written in this run")
        return self.output_dir / filename

    def _write(self, path: Path, write):
        if self._staging is None:
            self._staging = Path(tempfile.mkdtemp(prefix=f"{self.experiment}_", suffix=".staging"))
        staged = self._staging / path.name
        try:
            with open(staged, "w", encoding="utf-8", newline="") as f:
                write(f)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        self.written.add(path.name)

    def commit(self) -> List[Path]:
        """Move every staged file into output_dir, creating it if needed"""
        if self._staging is None:
            return []
        moved = []
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            for name in sorted(self.written):
                target = self.output_dir / name
                shutil.move(str(self._staging / name), str(target))
                moved.append(target)
        except OSError as e:
            raise OSError(f"cannot move results into {self.output_dir}: {e}") from e
        finally:
            self.discard()
        return moved

    def discard(self):
        if self._staging is not None:
            shutil.rmtree(self._staging, ignore_errors=True)
            self._staging = None

    def emit_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """
        Write one CSV file; every row is checked against the header width
        before the file is opened. The returned path is where the file
        lands on commit()
        """
        rows = [list(row) for row in rows]
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise ValueError(f"row {i} of {name} has {len(row)} fields, header has {len(header)}")
        path = self._path(name, "csv")

        def write(f):
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])

        self._write(path, write)
        return path

    def write_summary(self, config_echo: Dict[str, Any], seeds: Dict[str, int], status: int,
                      results: Dict[str, Any], error: Optional[str] = None) -> Path:
        summary = {
            "experiment": self.experiment,
            "config": config_echo,
            "versions": versions(),
            "seeds": seeds,
            "status": status,
            "results": results,
            "files": sorted(self.written),
        }
        if error is not None:
            summary["error"] = error
        path = self._path("summary", "json")
        text = json.dumps(_jsonable(summary), sort_keys=True, indent=2, allow_nan=False) + "\n"
        self._write(path, lambda f: f.write(text))
        return path
