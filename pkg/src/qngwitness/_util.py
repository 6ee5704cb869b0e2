"""Small shared helpers: atomic file output, config hashing, worker count."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile

PACKAGE_VERSION = "0.1.0"


def worker_count() -> int:
    """Worker cap from the QNG_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("QNG_THREADS", "1")))
    except ValueError:
        return 1


def config_hash(config: dict) -> str:
    """Short stable hash of a configuration dict (canonical JSON, sha256)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def atomic_write_text(path: str, text: str) -> None:
    """Write text to `path` via a temp file in the same directory + rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def json_sanitize(obj):
    """Make a structure JSON-serializable; infinities become strings."""
    if isinstance(obj, dict):
        return {k: json_sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_sanitize(v) for v in obj]
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return None
        return obj
    if hasattr(obj, "item"):  # numpy scalar
        return json_sanitize(obj.item())
    return obj
