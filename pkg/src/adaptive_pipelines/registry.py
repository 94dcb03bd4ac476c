"""Append-only, file-based profile registry with a content-hash index."""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

from filelock import FileLock

from . import _canonical
from .config import ProjectConfig
from .evolution import SchemaVersionGraph
from .exceptions import AlreadyExists, ParentMissing, ProjectExists, UnknownBatch

BATCH_KINDS = ("data", "dp", "ep", "changereport", "assertions", "run", "meta")
PIPELINE_KINDS = ("pp", "ppd", "optimize_report", "adapt_report", "constraints")
_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode(artifact: Any) -> bytes:
    if isinstance(artifact, bytes):
        return artifact
    if isinstance(artifact, str):
        return artifact.encode("utf-8")
    return _canonical.dumps(artifact).encode("utf-8")


class Project:
    """One project's directory; every artifact is written once and never rewritten."""

    def __init__(self, root: Path, name: str):
        self.root = Path(root)
        self.name = name
        self.path = self.root / name
        self._lock = FileLock(str(self.path / ".lock"))

    # ------------------------------------------------------------ locking / index

    @contextmanager
    def lock(self) -> Iterator[None]:
        with self._lock:
            yield

    def _index(self) -> dict[str, str]:
        p = self.path / "index.json"
        return _canonical.loads(p.read_text("utf-8")) if p.exists() else {}

    def _record(self, rel: str, data: bytes) -> None:
        index = self._index()
        index[rel] = hashlib.sha256(data).hexdigest()
        _atomic_write(self.path / "index.json", _canonical.dumps(index).encode("utf-8"))

    # ------------------------------------------------------------ paths

    @staticmethod
    def _rel(scope: str, ident: int, kind: str) -> str:
        if scope == "batch":
            if kind not in BATCH_KINDS:
                raise ValueError(f"unknown batch artifact kind {kind!r}")
            return f"batches/{int(ident)}/{kind}.{'csv' if kind == 'data' else 'json'}"
        if scope == "pipeline":
            if kind not in PIPELINE_KINDS:
                raise ValueError(f"unknown pipeline artifact kind {kind!r}")
            return f"pipelines/{int(ident)}/{kind}.json"
        raise ValueError(f"unknown scope {scope!r}")

    def exists(self, scope: str, ident: int, kind: str) -> bool:
        return (self.path / self._rel(scope, ident, kind)).exists()

    # ------------------------------------------------------------ put / get

    def put(self, scope: str, ident: int, kind: str, artifact: Any) -> Path:
        """Store an artifact (object with ``to_dict``, plain JSON data, or raw text)."""
        rel = self._rel(scope, ident, kind)
        path = self.path / rel
        if path.exists():
            raise AlreadyExists(f"{self.name}/{rel} already exists")
        if scope == "pipeline" and kind == "pp":
            doc = artifact.to_dict() if hasattr(artifact, "to_dict") else artifact
            parent = doc.get("parent")
            if parent is not None and not self.exists("pipeline", parent, "pp"):
                raise ParentMissing(f"pipeline version {ident} names missing parent {parent}")
        if scope == "pipeline" and kind == "ppd" and not self.exists("pipeline", ident, "pp"):
            raise ParentMissing(f"pipeline diff {ident} has no pipeline profile")
        data = _encode(artifact)
        with self.lock():
            if path.exists():
                raise AlreadyExists(f"{self.name}/{rel} already exists")
            _atomic_write(path, data)
            self._record(rel, data)
        return path

    def get_bytes(self, scope: str, ident: int, kind: str) -> bytes:
        path = self.path / self._rel(scope, ident, kind)
        if not path.exists():
            if scope == "batch" and not (self.path / "batches" / str(int(ident))).exists():
                raise UnknownBatch(f"batch {ident} is not in project {self.name}")
            raise FileNotFoundError(str(path))
        return path.read_bytes()

    def get(self, scope: str, ident: int, kind: str) -> Any:
        data = self.get_bytes(scope, ident, kind)
        if kind == "data":
            return data.decode("utf-8")
        return _canonical.loads(data.decode("utf-8"))

    # ------------------------------------------------------------ listings

    def _ids(self, sub: str) -> list[int]:
        d = self.path / sub
        if not d.exists():
            return []
        return sorted(int(p.name) for p in d.iterdir() if p.is_dir() and p.name.isdigit())

    def batches(self) -> list[int]:
        return self._ids("batches")

    def versions(self) -> list[int]:
        return [v for v in self._ids("pipelines") if self.exists("pipeline", v, "pp")]

    def history(self, kind: str, property: str | None = None, statistic: str | None = None) -> list:
        """Batch-ordered artifacts of ``kind``; with ``property`` only that property's
        statistics (or one ``statistic``) per batch, i.e. a drift time series."""
        out = []
        for b in self.batches():
            if not self.exists("batch", b, kind):
                continue
            doc = self.get("batch", b, kind)
            if property is None:
                out.append(doc)
                continue
            stats = doc.get("stats", {}).get(property) if isinstance(doc, dict) else None
            if statistic is not None:
                stats = None if stats is None else stats.get(statistic)
            out.append({"batch": b, "value": stats})
        return out

    # ------------------------------------------------------------ mutable snapshots

    def config(self) -> ProjectConfig:
        return ProjectConfig.from_dict(_canonical.loads((self.path / "config.json").read_text("utf-8")))

    def graph(self) -> SchemaVersionGraph:
        p = self.path / "graph.json"
        if not p.exists():
            return SchemaVersionGraph()
        return SchemaVersionGraph.from_dict(_canonical.loads(p.read_text("utf-8")))

    def save_graph(self, graph: SchemaVersionGraph) -> None:
        graph.validate()
        data = _canonical.dumps(graph.to_dict()).encode("utf-8")
        with self.lock():
            _atomic_write(self.path / "graph.json", data)
            self._record("graph.json", data)

    # ------------------------------------------------------------ integrity

    def fsck(self) -> list[str]:
        """Problems found when re-hashing every indexed file (empty when consistent)."""
        problems = []
        index = self._index()
        for rel, digest in sorted(index.items()):
            p = self.path / rel
            if not p.exists():
                problems.append(f"{rel}: indexed but missing")
            elif hashlib.sha256(p.read_bytes()).hexdigest() != digest:
                problems.append(f"{rel}: content hash mismatch")
        for p in sorted(self.path.rglob("*")):
            rel = p.relative_to(self.path).as_posix()
            if p.is_file() and rel not in index and rel not in ("index.json", ".lock") and not p.name.startswith("."):
                problems.append(f"{rel}: not indexed")
        for v in self.versions():
            parent = self.get("pipeline", v, "pp").get("parent")
            if parent is not None and not self.exists("pipeline", parent, "pp"):
                problems.append(f"pipelines/{v}: parent {parent} missing")
        return problems


class Registry:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def init_project(self, name: str, config: ProjectConfig | dict | None = None) -> Project:
        if not _NAME.match(name):
            raise ValueError(f"invalid project name {name!r}")
        cfg = config if isinstance(config, ProjectConfig) else ProjectConfig.from_dict(config or {})
        path = self.root / name
        if path.exists():
            raise ProjectExists(f"project {name!r} already exists under {self.root}")
        path.mkdir(parents=True)
        (path / "batches").mkdir()
        (path / "pipelines").mkdir()
        project = Project(self.root, name)
        data = _canonical.dumps(cfg.to_dict()).encode("utf-8")
        _atomic_write(path / "config.json", data)
        project._record("config.json", data)
        return project

    def project(self, name: str) -> Project:
        if not (self.root / name / "config.json").exists():
            raise FileNotFoundError(f"no project {name!r} under {self.root}")
        return Project(self.root, name)

    def projects(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "config.json").exists())
