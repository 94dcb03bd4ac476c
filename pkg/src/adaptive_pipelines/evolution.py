"""Schema modification operations, their inference between schemas, and the schema version graph."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .exceptions import EdgeInconsistent, InapplicableSMO
from .model import DType, PropertyDescriptor, Schema
from .profiling import CategoricalStats, DataProfile, NumericStats, TextStats, total_variation

ADD, REMOVE, RENAME, RETYPE = "add", "remove", "rename", "retype"


@dataclass(frozen=True)
class SMO:
    kind: str
    name: str
    new_name: str | None = None  # rename
    dtype: DType | None = None  # add: the new property's type; retype: the new type
    old_dtype: DType | None = None  # retype

    def __post_init__(self):
        if self.kind not in (ADD, REMOVE, RENAME, RETYPE):
            raise ValueError(f"unknown SMO kind {self.kind!r}")
        if self.kind == RENAME and (not self.new_name or self.new_name == self.name):
            raise ValueError("rename needs a different new name")
        if self.kind == RETYPE and self.dtype == self.old_dtype:
            raise ValueError("retype needs two different types")
        if self.dtype is not None:
            object.__setattr__(self, "dtype", DType(self.dtype))
        if self.old_dtype is not None:
            object.__setattr__(self, "old_dtype", DType(self.old_dtype))

    @classmethod
    def add(cls, name: str, dtype: DType | str) -> SMO:
        return cls(ADD, name, dtype=DType(dtype))

    @classmethod
    def remove(cls, name: str) -> SMO:
        return cls(REMOVE, name)

    @classmethod
    def rename(cls, old: str, new: str) -> SMO:
        return cls(RENAME, old, new_name=new)

    @classmethod
    def retype(cls, name: str, old: DType | str, new: DType | str) -> SMO:
        return cls(RETYPE, name, dtype=DType(new), old_dtype=DType(old))

    @property
    def touched(self) -> set[str]:
        return {self.name} | ({self.new_name} if self.new_name else set())

    def to_dict(self) -> dict:
        if self.kind == ADD:
            return {"op": ADD, "name": self.name, "dtype": self.dtype.value}
        if self.kind == REMOVE:
            return {"op": REMOVE, "name": self.name}
        if self.kind == RENAME:
            return {"op": RENAME, "old": self.name, "new": self.new_name}
        return {"op": RETYPE, "name": self.name, "dtype_old": self.old_dtype.value, "dtype_new": self.dtype.value}

    @classmethod
    def from_dict(cls, d: Mapping) -> SMO:
        op = d["op"]
        if op == ADD:
            return cls.add(d["name"], d["dtype"])
        if op == REMOVE:
            return cls.remove(d["name"])
        if op == RENAME:
            return cls.rename(d["old"], d["new"])
        if op == RETYPE:
            return cls.retype(d["name"], d["dtype_old"], d["dtype_new"])
        raise ValueError(f"unknown SMO {op!r}")

    def __str__(self) -> str:
        if self.kind == RENAME:
            return f"rename({self.name} -> {self.new_name})"
        if self.kind == RETYPE:
            return f"retype({self.name}: {self.old_dtype.value} -> {self.dtype.value})"
        if self.kind == ADD:
            return f"add({self.name}: {self.dtype.value})"
        return f"remove({self.name})"


def apply_smos(schema: Schema, smos: Sequence[SMO]) -> Schema:
    """Apply ``smos`` in order; raises InapplicableSMO naming the first offending index."""
    props = [(p.name, p.dtype) for p in schema.properties]
    for i, smo in enumerate(smos):
        names = [n for n, _ in props]
        if smo.kind == ADD:
            if smo.name in names:
                raise InapplicableSMO(i, f"{smo.name!r} already exists")
            props.append((smo.name, smo.dtype))
        elif smo.kind == REMOVE:
            if smo.name not in names:
                raise InapplicableSMO(i, f"{smo.name!r} does not exist")
            props = [p for p in props if p[0] != smo.name]
        elif smo.kind == RENAME:
            if smo.name not in names:
                raise InapplicableSMO(i, f"{smo.name!r} does not exist")
            if smo.new_name in names:
                raise InapplicableSMO(i, f"{smo.new_name!r} already exists")
            props = [(smo.new_name if n == smo.name else n, t) for n, t in props]
        else:
            if smo.name not in names:
                raise InapplicableSMO(i, f"{smo.name!r} does not exist")
            current = dict(props)[smo.name]
            if current != smo.old_dtype:
                raise InapplicableSMO(i, f"{smo.name!r} is {current.value}, not {smo.old_dtype.value}")
            props = [(n, smo.dtype if n == smo.name else t) for n, t in props]
    return Schema(tuple(PropertyDescriptor(n, t) for n, t in props))


def rename_map(smos: Sequence[SMO]) -> dict[str, str]:
    return {s.name: s.new_name for s in smos if s.kind == RENAME}


# ---------------------------------------------------------------- inference

@dataclass(frozen=True)
class RenameConfig:
    delta: float = 0.25  # distance below which a pair may be a rename
    margin: float = 0.1  # required gap to the runner-up
    name_similarity: float = 0.5  # similar names with shifted data are reported ambiguous
    epsilon: float = 1e-9


@dataclass(frozen=True)
class RenameEvidence:
    old: str
    new: str
    dtype_match: bool
    distance: float
    name_similarity: float
    verdict: str  # rename | ambiguous | distinct
    margin: float | None = None

    def to_dict(self) -> dict:
        return {"old": self.old, "new": self.new, "dtype_match": self.dtype_match,
                "distance": self.distance if math.isfinite(self.distance) else None,
                "name_similarity": self.name_similarity, "verdict": self.verdict,
                "margin": self.margin if self.margin is None or math.isfinite(self.margin) else None}

    @classmethod
    def from_dict(cls, d: Mapping) -> RenameEvidence:
        dist = d["distance"]
        return cls(d["old"], d["new"], d["dtype_match"], math.inf if dist is None else dist, d["name_similarity"],
                   d["verdict"], d.get("margin"))


def name_similarity(a: str, b: str) -> float:
    """Longest common subsequence length over the longer name's length."""
    if not a or not b:
        return 0.0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b):
            cur.append(prev[j] + 1 if ca == cb else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1] / max(len(a), len(b))


def distribution_distance(old, new, eps: float = 1e-9) -> float:
    """Distance between two property statistics of the same kind (``inf`` when incomparable)."""
    if isinstance(old, NumericStats) and isinstance(new, NumericStats):
        if old.mean is None or new.mean is None:
            return math.inf
        scale = max(old.std or 0.0, eps)
        return max(abs(new.mean - old.mean), abs(new.std - old.std)) / scale
    if isinstance(old, CategoricalStats) and isinstance(new, CategoricalStats):
        return total_variation(old.proportions, new.proportions)
    if isinstance(old, TextStats) and isinstance(new, TextStats):
        dv = abs(new.vocabulary_size - old.vocabulary_size) / max(old.vocabulary_size, 1)
        dl = abs(new.mean_length - old.mean_length) / max(old.mean_length, eps)
        return max(dv, dl)
    return math.inf


def infer_smos(old_schema: Schema, new_schema: Schema, old_profile: DataProfile | None = None,
               new_profile: DataProfile | None = None, config: RenameConfig = RenameConfig()
               ) -> tuple[list[SMO], list[RenameEvidence]]:
    """SMOs turning ``old_schema`` into ``new_schema`` plus the evidence behind every rename decision.

    Removed/added pairs of equal type are matched greedily by ascending
    distribution distance; a pair becomes a rename only when it is close and
    clearly better than every competitor. Anything else stays remove + add.
    """
    old_names, new_names = set(old_schema.names), set(new_schema.names)
    retypes = [SMO.retype(n, old_schema.dtype_of(n), new_schema.dtype_of(n))
               for n in sorted(old_names & new_names) if old_schema.dtype_of(n) != new_schema.dtype_of(n)]
    removed, added = sorted(old_names - new_names), sorted(new_names - old_names)

    dist: dict[tuple[str, str], float] = {}
    for r in removed:
        for a in added:
            if old_schema.dtype_of(r) != new_schema.dtype_of(a):
                continue
            if old_profile is None or new_profile is None:
                dist[(r, a)] = math.inf
            else:
                dist[(r, a)] = distribution_distance(old_profile.stats.get(r), new_profile.stats.get(a),
                                                     config.epsilon)
    sim = {pair: name_similarity(*pair) for pair in dist}
    ordered = sorted(dist, key=lambda p: (dist[p], -sim[p], p))

    evidence: dict[tuple[str, str], RenameEvidence] = {}
    renames: list[SMO] = []
    used_old: set[str] = set()
    used_new: set[str] = set()
    for r, a in ordered:
        d = dist[(r, a)]
        if r in used_old or a in used_new:
            continue
        if d >= config.delta:
            break
        rivals = [dist[p] for p in dist if p != (r, a) and p[0] not in used_old and p[1] not in used_new
                  and (p[0] == r or p[1] == a)]
        margin = min(rivals) - d if rivals else math.inf
        if margin >= config.margin:
            renames.append(SMO.rename(r, a))
            evidence[(r, a)] = RenameEvidence(r, a, True, d, sim[(r, a)], "rename", margin)
            used_old.add(r)
            used_new.add(a)
        else:
            # never guess: both sides stay remove + add
            evidence[(r, a)] = RenameEvidence(r, a, True, d, sim[(r, a)], "ambiguous", margin)
            used_old.add(r)
            used_new.add(a)
    for pair in ordered:
        if pair in evidence:
            continue
        d = dist[pair]
        verdict = "ambiguous" if d >= config.delta and sim[pair] >= config.name_similarity else "distinct"
        evidence[pair] = RenameEvidence(pair[0], pair[1], True, d, sim[pair], verdict)

    renamed_old = {s.name for s in renames}
    renamed_new = {s.new_name for s in renames}
    smos = (sorted(renames, key=lambda s: s.name) + retypes
            + [SMO.remove(r) for r in removed if r not in renamed_old]
            + [SMO.add(a, new_schema.dtype_of(a)) for a in added if a not in renamed_new])
    return smos, [evidence[p] for p in sorted(evidence)]


# ---------------------------------------------------------------- schema version graph

@dataclass
class GraphNode:
    fingerprint: str
    schema: Schema
    first_batch: int
    pipeline_version: int | None = None

    def to_dict(self) -> dict:
        return {"fingerprint": self.fingerprint, "schema": self.schema.to_dict(), "first_batch": self.first_batch,
                "pipeline_version": self.pipeline_version}


@dataclass
class GraphEdge:
    source: str
    target: str
    smos: list[SMO]
    batch_id: int

    def to_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "smos": [s.to_dict() for s in self.smos],
                "batch": self.batch_id}


@dataclass
class SchemaVersionGraph:
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)
    initial: str | None = None

    @classmethod
    def start(cls, schema: Schema, batch_id: int, pipeline_version: int | None = None) -> SchemaVersionGraph:
        fp = schema.fingerprint
        return cls({fp: GraphNode(fp, schema, batch_id, pipeline_version)}, [], fp)

    def node(self, fingerprint: str) -> GraphNode:
        return self.nodes[fingerprint]

    def associate(self, fingerprint: str, pipeline_version: int) -> None:
        self.nodes[fingerprint].pipeline_version = pipeline_version

    def to_dict(self) -> dict:
        return {"initial": self.initial, "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
                "edges": [e.to_dict() for e in self.edges]}

    @classmethod
    def from_dict(cls, d: Mapping, validate: bool = True) -> SchemaVersionGraph:
        g = cls()
        g.initial = d.get("initial")
        for n in d.get("nodes", []):
            schema = Schema.from_dict(n["schema"])
            if schema.fingerprint != n["fingerprint"]:
                raise EdgeInconsistent(f"node {n['fingerprint']} does not match its schema")
            g.nodes[n["fingerprint"]] = GraphNode(n["fingerprint"], schema, n["first_batch"],
                                                  n.get("pipeline_version"))
        for e in d.get("edges", []):
            g.edges.append(GraphEdge(e["from"], e["to"], [SMO.from_dict(s) for s in e["smos"]], e["batch"]))
        if validate:
            g.validate()
        return g

    def validate(self) -> None:
        """Re-check every edge and connectivity from the initial node."""
        for i, e in enumerate(self.edges):
            if e.source not in self.nodes or e.target not in self.nodes:
                raise EdgeInconsistent(f"edge {i} references an unknown node")
            try:
                result = apply_smos(self.nodes[e.source].schema, e.smos)
            except InapplicableSMO as exc:
                raise EdgeInconsistent(f"edge {i}: {exc}") from exc
            if result != self.nodes[e.target].schema:
                raise EdgeInconsistent(f"edge {i}: SMOs do not map its source onto its target")
        if self.nodes:
            if self.initial not in self.nodes:
                raise EdgeInconsistent("initial node missing")
            reach, frontier = {self.initial}, [self.initial]
            while frontier:
                cur = frontier.pop()
                for e in self.edges:
                    if e.source == cur and e.target not in reach:
                        reach.add(e.target)
                        frontier.append(e.target)
            if reach != set(self.nodes):
                raise EdgeInconsistent("graph is not connected from the initial node")


def graph_extend(graph: SchemaVersionGraph, from_fingerprint: str, smos: Sequence[SMO], new_schema: Schema,
                 batch_id: int) -> SchemaVersionGraph:
    if from_fingerprint not in graph.nodes:
        raise EdgeInconsistent(f"unknown source node {from_fingerprint}")
    try:
        result = apply_smos(graph.nodes[from_fingerprint].schema, smos)
    except InapplicableSMO as exc:
        raise EdgeInconsistent(str(exc)) from exc
    if result != new_schema:
        raise EdgeInconsistent("SMOs do not map the source schema onto the new schema")
    out = copy.deepcopy(graph)
    fp = new_schema.fingerprint
    if fp not in out.nodes:
        out.nodes[fp] = GraphNode(fp, new_schema, batch_id)
    out.edges.append(GraphEdge(from_fingerprint, fp, list(smos), batch_id))
    return out


def graph_lookup(graph: SchemaVersionGraph, schema: Schema) -> tuple[GraphNode, int | None] | None:
    node = graph.nodes.get(schema.fingerprint)
    return None if node is None else (node, node.pipeline_version)
