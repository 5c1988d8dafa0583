"""Append-only ``key=value`` record files: training metric logs and evaluation reports."""
from pathlib import Path
from typing import Dict, List, Optional, Union

PathLike = Union[str, Path]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_record(fields: Dict[str, object]) -> str:
    return " ".join(f"{key}={_fmt(value)}" for key, value in fields.items() if value is not None)


def parse_record(line: str) -> Dict[str, str]:
    return dict(token.split("=", 1) for token in line.split())


class MetricLog:
    """One record per line, UTF-8, flushed as written."""

    def __init__(self, path: Optional[PathLike] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[str] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, **fields) -> str:
        line = format_record(fields)
        self.records.append(line)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return line


def read(path: PathLike) -> List[Dict[str, str]]:
    return [parse_record(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
