"""File-backed persistence helpers: canonical JSON, atomic writes, checksums.

All stores in the package (students, videos, sessions, fixtures) write
through here so the on-disk bytes are reproducible: keys sorted, fixed
separators, full-precision floats (json round-trips Python floats via
repr, which is shortest-round-trip exact).
"""

import hashlib
import json
import os
import tempfile

from .errors import CorruptStore


def canonical_dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def checksum(payload) -> str:
    return hashlib.sha256(canonical_dumps(payload).encode("utf-8")).hexdigest()


def atomic_write_json(path: str, payload, indent: int | None = None) -> None:
    """Write-temp-then-rename so readers never observe a half-written file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            if indent is None:
                handle.write(canonical_dumps(payload))
            else:
                json.dump(payload, handle, sort_keys=True, indent=indent, ensure_ascii=False)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_checksummed(path: str, body: dict) -> None:
    """Persist `body` alongside a sha256 of its canonical serialization."""
    atomic_write_json(path, {"body": body, "checksum": checksum(body)})


def read_checksummed(path: str) -> dict:
    document = read_json(path)
    body = document.get("body")
    stored = document.get("checksum")
    if body is None or stored != checksum(body):
        raise CorruptStore(f"checksum mismatch in {path}")
    return body
