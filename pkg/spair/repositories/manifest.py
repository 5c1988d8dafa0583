"""Dataset manifest: one ``idx=<n> kind=<s> seed=<u64> severity=<f>`` line per sample.

Leading ``#`` lines carry the generation geometry (``# h=<n> w=<n> tau=<f>``).
"""
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from pydantic import ValidationError

from spair.core.errors import FormatError
from spair.schemas.reports import ManifestEntry

PathLike = Union[str, Path]
FIELDS = ("idx", "kind", "seed", "severity")


def format_entry(entry: ManifestEntry) -> str:
    return f"idx={entry.idx} kind={entry.kind} seed={entry.seed} severity={entry.severity!r}"


def dumps(entries: Sequence[ManifestEntry], h: int, w: int, tau: float) -> str:
    lines = [f"# h={h} w={w} tau={tau!r}"]
    lines.extend(format_entry(e) for e in entries)
    return "\n".join(lines) + "\n"


def _pairs(text: str, offset: int) -> Dict[str, str]:
    pairs = {}
    for token in text.split():
        key, eq, value = token.partition("=")
        if not eq:
            raise FormatError(f"expected key=value, got {token!r}", offset=offset)
        pairs[key] = value
    return pairs


def loads(text: str) -> Tuple[List[ManifestEntry], Dict[str, str]]:
    """Entries plus the header fields."""
    entries, header = [], {}
    offset = 0
    for line in text.splitlines(keepends=True):
        content = line.strip()
        if content.startswith("#"):
            header.update(_pairs(content[1:], offset))
        elif content:
            pairs = _pairs(content, offset)
            if tuple(pairs) != FIELDS:
                raise FormatError(f"manifest line must have fields {' '.join(FIELDS)}", offset=offset)
            try:
                entries.append(ManifestEntry.model_validate(pairs))
            except ValidationError as exc:
                raise FormatError(f"invalid manifest entry: {exc.errors()[0]['msg']}", offset=offset) from exc
        offset += len(line.encode("utf-8"))
    return entries, header


def write(path: PathLike, entries: Sequence[ManifestEntry], h: int, w: int, tau: float) -> None:
    Path(path).write_text(dumps(entries, h, w, tau), encoding="utf-8")


def read(path: PathLike) -> Tuple[List[ManifestEntry], Dict[str, str]]:
    return loads(Path(path).read_text(encoding="utf-8"))
