"""Shared fixtures: a content-addressed cache for long runs and the acceptance log.

Long acceptance runs are cached under ``.acceptance-cache/`` keyed by the run
configuration and a hash of the numerical source files, so editing the
code always invalidates them.  Set ``LOCALFILTER_NO_CACHE=1`` to bypass.
"""
from __future__ import annotations

import hashlib
import os
import pickle
from pathlib import Path

import pytest

import localfilter
from localfilter.config import to_ini

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance-cache"
ACCEPTANCE_LINES: list[str] = []
# modules whose edits can change numbers; cli and report output do not
NUMERIC_MODULES = ("config", "decomposition", "fem", "filter", "flow", "mesh", "metrics",
                   "orchestrator", "scenarios")


def _source_digest() -> str:
    h = hashlib.sha256()
    pkg = Path(localfilter.__file__).parent
    for p in sorted(pkg / f"{m}.py" for m in NUMERIC_MODULES):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


_DIGEST = _source_digest()


def cached(tag: str, cfg, fn):
    """Return ``fn()``, reusing a pickled result for the same tag, config and sources."""
    key = hashlib.sha256((tag + to_ini(cfg) + _DIGEST).encode()).hexdigest()[:24]
    path = CACHE / f"{tag}-{key}.pkl"
    if os.environ.get("LOCALFILTER_NO_CACHE") != "1" and path.is_file():
        with path.open("rb") as fh:
            return pickle.load(fh)
    out = fn()
    CACHE.mkdir(exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        pickle.dump(out, fh)
    tmp.replace(path)
    return out


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
