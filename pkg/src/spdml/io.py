"""File formats: plain-text matrices, JSON manifests and atomic writes.

Matrix files are UTF-8 text. The first line is ``# rows cols``; each
following line holds one row of space-separated decimal literals written
with 17 significant digits, so doubles round-trip exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "format_matrix",
    "parse_matrix",
    "read_matrix",
    "write_matrix",
    "atomic_write_text",
    "DatasetManifest",
    "ManifestError",
    "read_manifest",
    "write_manifest",
]

MANIFEST_VERSION = 1


class ManifestError(ValueError):
    """Manifest or data file is malformed."""


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    rows = [" ".join(f"{v:.16e}" for v in row) for row in M]
    return f"# {M.shape[0]} {M.shape[1]}\n" + "".join(r + "\n" for r in rows)


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ManifestError(f"{source}: missing '# rows cols' header")
    try:
        rows, cols = (int(v) for v in lines[0][1:].split())
    except ValueError:
        raise ManifestError(f"{source}: malformed header {lines[0]!r}") from None
    body = lines[1:]
    if len(body) != rows:
        raise ManifestError(f"{source}: header declares {rows} rows, found {len(body)}")
    try:
        M = np.array([[float(v) for v in ln.split()] for ln in body], dtype=float).reshape(rows, -1)
    except ValueError as exc:
        raise ManifestError(f"{source}: {exc}") from None
    if M.shape != (rows, cols):
        raise ManifestError(f"{source}: expected {rows}x{cols}, found {M.shape[0]}x{M.shape[1]}")
    return M


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    return parse_matrix(path.read_text(encoding="utf-8"), str(path))


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, M) -> None:
    atomic_write_text(path, format_matrix(M))


@dataclass
class DatasetManifest:
    """List of ``(path, label)`` samples of one kind.

    ``kind="features"``: each file is an ``n_features x r`` observation
    matrix. ``kind="spd"``: each file is an ``n x n`` SPD matrix. Relative
    paths resolve against ``root`` (the manifest's directory).
    """

    kind: str
    n: int
    samples: list
    root: Path = Path(".")
    version: int = MANIFEST_VERSION

    def paths(self) -> list:
        return [self.root / p for p, _ in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self.samples], dtype=int)

    def load(self) -> list:
        """Read every sample, checking shapes against the declared size."""
        out = []
        for path in self.paths():
            if not path.exists():
                raise ManifestError(f"{path}: file not found")
            M = read_matrix(path)
            if M.shape[0] != self.n or (self.kind == "spd" and M.shape[1] != self.n):
                raise ManifestError(f"{path}: shape {M.shape} does not match declared n={self.n}")
            out.append(M)
        return out

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "kind": self.kind,
            "n": self.n,
            "samples": [{"path": str(p), "label": int(lab)} for p, lab in self.samples],
        }
        return json.dumps(doc, indent=2) + "\n"


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from None
    kind = doc.get("kind")
    if kind not in ("features", "spd"):
        raise ManifestError(f"{path}: kind must be 'features' or 'spd', got {kind!r}")
    n = doc.get("n", doc.get("n_features"))
    if not isinstance(n, int) or n < 1:
        raise ManifestError(f"{path}: missing or invalid 'n'")
    samples = []
    for s in doc.get("samples", []):
        lab = s.get("label")
        if not isinstance(lab, int) or isinstance(lab, bool) or lab < 1:
            raise ManifestError(f"{path}: label must be a positive integer, got {lab!r}")
        samples.append((s["path"], lab))
    if not samples:
        raise ManifestError(f"{path}: no samples")
    return DatasetManifest(kind, n, samples, root=path.parent, version=int(doc.get("version", 1)))


def write_manifest(path, manifest: DatasetManifest) -> None:
    atomic_write_text(path, manifest.to_json())
