"""File helpers: atomic writes, provenance header lines, comment-aware reads."""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import tempfile
from pathlib import Path

from mints import __version__


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance_line(seed, config: dict) -> str:
    return f"# mints {__version__} seed={seed} config={config_hash(config)}"


@contextlib.contextmanager
def atomic_writer(path, header_line=None):
    """Open a temp file beside ``path``; rename over it only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            if header_line:
                fh.write(header_line.rstrip("\n") + "\n")
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def read_data_lines(path):
    """Return ``[(lineno, text), ...]`` with ``#`` comment and blank lines dropped."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for n, line in enumerate(fh, start=1):
            s = line.rstrip("\r\n")
            if not s.strip() or s.lstrip().startswith("#"):
                continue
            out.append((n, s))
    return out
