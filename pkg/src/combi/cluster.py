"""In-process simulation of ComBI on a compute cluster.

Nodes are actors that only talk through messages.  A round-based scheduler
delivers every message sent in round ``r`` during round ``r + 1``, in send
order, so a run is fully reproducible.  Node 0 is the master; it also holds
a shard and searches it like any other node, without messaging itself.

Per query the master broadcasts the query (v-1 messages), collects v-1 local
top-k lists, merges them, then asks each other node for the stored codes of
its selected ids (v-1 requests, v-1 replies): 4(v-1) messages in total.
"""

from __future__ import annotations

import json
import struct
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bitcode import BitCode, BitDataset, HyperplaneSet, generate_hyperplanes, hash_vectors
from .errors import InvalidArgument, InvalidState
from .forest import CombiForest, forest_build
from .metrics import linear_scan_knn
from .tree import MutateBudget, Neighbor, rank

KINDS = ("ShareHashParams", "BuildDone", "QueryBroadcast", "LocalResult", "SelectIds", "FeatureReply")
MODES = ("exact", "approximate")

_HEAD = struct.Struct("<BHHI")  # kind, from, to, round
_PAIR = np.dtype([("id", "<u8"), ("hd", "<u2")])


@dataclass(frozen=True)
class ShardPlan:
    """Row-to-node assignment; node 0 is the master."""

    v: int
    assignment: np.ndarray = field(repr=False)

    master = 0

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if self.v < 1:
            raise InvalidArgument("need at least one node")
        if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() >= self.v)):
            raise InvalidArgument("assignment must map every row to a node in [0, v)")
        if a.size >= self.v and np.unique(a).size != self.v:
            raise InvalidArgument("every node needs at least one row")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def round_robin(cls, n: int, v: int) -> "ShardPlan":
        _check_nodes(n, v)
        return cls(v, np.arange(n, dtype=np.int64) % v)

    @classmethod
    def seeded(cls, n: int, v: int, seed: int = 0) -> "ShardPlan":
        """Round-robin over a seeded shuffle of the rows."""
        _check_nodes(n, v)
        order = np.random.default_rng(seed).permutation(n)
        a = np.empty(n, dtype=np.int64)
        a[order] = np.arange(n) % v
        return cls(v, a)

    def rows(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == node)


def _check_nodes(n: int, v: int) -> None:
    if v < 1:
        raise InvalidArgument("need at least one node")
    if v > n:
        raise InvalidArgument(f"{v} nodes for {n} samples")


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class ClusterMessage:
    kind: str
    src: int
    dst: int
    payload: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown message kind {self.kind!r}")
        if self.kind == "LocalResult":
            res = self.payload["neighbors"]
            if len(res) > self.payload["k"] or list(res) != rank(res):
                raise InvalidState("LocalResult must be ranked and hold at most k entries")

    def encode(self, rnd: int = 0) -> bytes:
        """Wire form, used for byte accounting and transcript checksums."""
        p = self.payload
        head = _HEAD.pack(KINDS.index(self.kind), self.src, self.dst, rnd)
        if self.kind == "ShareHashParams":
            body = struct.pack("<IIIQQ", p["bits"], p["dim"], p["trees"], p["hash_seed"], p["forest_seed"])
        elif self.kind == "BuildDone":
            body = struct.pack("<QQ", p["samples"], p["nodes"])
        elif self.kind == "QueryBroadcast":
            q: BitCode = p["query"]
            body = struct.pack("<IIBHH", p["qid"], p["k"], MODES.index(p["mode"]),
                               p["min_mutate"], p["max_mutate"]) + q.words.astype("<u8").tobytes()
        elif self.kind == "LocalResult":
            pairs = np.array([(nb.id, nb.hd) for nb in p["neighbors"]], dtype=_PAIR)
            body = struct.pack("<II", p["qid"], len(pairs)) + pairs.tobytes()
        elif self.kind == "SelectIds":
            ids = np.asarray(p["ids"], dtype="<u8")
            body = struct.pack("<II", p["qid"], ids.size) + ids.tobytes()
        else:
            ids = np.asarray(p["ids"], dtype="<u8")
            words = np.asarray(p["words"], dtype="<u8")
            body = struct.pack("<II", p["qid"], ids.size) + ids.tobytes() + words.tobytes()
        return head + body


@dataclass(frozen=True)
class Delivery:
    round: int
    message: ClusterMessage
    size: int
    crc: int

    def record(self) -> dict:
        m = self.message
        return {"round": self.round, "from": m.src, "to": m.dst, "kind": m.kind,
                "size": self.size, "crc32": self.crc}


class Scheduler:
    """Delivers messages in rounds; sends made while handling round r arrive in r+1."""

    def __init__(self):
        self.round = 0
        self._outbox: list[ClusterMessage] = []
        self.transcript: list[Delivery] = []

    def send(self, msg: ClusterMessage) -> None:
        self._outbox.append(msg)

    def run(self, actors: Sequence["NodeActor"]) -> None:
        while self._outbox:
            self.round += 1
            batch, self._outbox = self._outbox, []
            for msg in batch:
                raw = msg.encode(self.round)
                self.transcript.append(Delivery(self.round, msg, len(raw), zlib.crc32(raw)))
                actors[msg.dst].handle(msg, self)


# -- actors ------------------------------------------------------------------


class NodeActor:
    def __init__(self, node: int, shard_rows: np.ndarray, codes: BitDataset | None,
                 vectors: np.ndarray | None, ids: np.ndarray):
        self.node = node
        self.rows = shard_rows
        self._codes = codes
        self._vectors = vectors
        self._ids = ids
        self.shard: BitDataset | None = None
        self.forest: CombiForest | None = None
        self.busy = 0.0

    def build(self, p: dict) -> None:
        t0 = time.perf_counter()
        if self._vectors is not None:
            planes = generate_hyperplanes(p["dim"], p["bits"], p["hash_seed"])
            self.shard = hash_vectors(self._vectors, planes, self._ids)
        else:
            self.shard = self._codes
        self.forest = forest_build(self.shard, p["trees"], seed=p["forest_seed"])
        self.busy += time.perf_counter() - t0

    def local_search(self, query: BitCode, k: int, mode: str, budget: MutateBudget) -> list[Neighbor]:
        t0 = time.perf_counter()
        if mode == "exact":
            res = linear_scan_knn(self.shard, query, k)
        else:
            res = self.forest.knn(query, k, budget)[0]
        self.busy += time.perf_counter() - t0
        return res

    def fetch(self, ids: Sequence[int]) -> np.ndarray:
        pos = {int(i): r for r, i in enumerate(self.shard.ids.tolist())}
        rows = np.array([pos[int(i)] for i in ids], dtype=np.int64)
        return self.shard.words[rows] if rows.size else np.zeros((0, self.shard.words.shape[1]), np.uint64)

    def handle(self, msg: ClusterMessage, sched: Scheduler) -> None:
        p = msg.payload
        if msg.kind == "ShareHashParams":
            self.build(p)
            sched.send(ClusterMessage("BuildDone", self.node, msg.src, {
                "samples": self.shard.n,
                "nodes": sum(t.node_count for t in self.forest.trees)}))
        elif msg.kind == "QueryBroadcast":
            res = self.local_search(p["query"], p["k"], p["mode"],
                                    MutateBudget(p["min_mutate"], p["max_mutate"]))
            sched.send(ClusterMessage("LocalResult", self.node, msg.src,
                                      {"qid": p["qid"], "k": p["k"], "neighbors": tuple(res)}))
        elif msg.kind == "SelectIds":
            sched.send(ClusterMessage("FeatureReply", self.node, msg.src, {
                "qid": p["qid"], "ids": tuple(p["ids"]), "words": self.fetch(p["ids"])}))
        else:
            raise InvalidState(f"node {self.node} cannot handle {msg.kind}")


class MasterActor(NodeActor):
    def __init__(self, *args, v: int, owner: dict[int, int]):
        super().__init__(*args)
        self.v = v
        self.owner = owner
        self.done: dict[int, dict] = {}
        self._pending: list[Neighbor] = []
        self._replies = 0
        self.selected: list[Neighbor] = []
        self.features: dict[int, np.ndarray] = {}
        self._k = 0
        self._qid = 0

    def start_query(self, qid: int, query: BitCode, k: int, mode: str,
                    budget: MutateBudget, sched: Scheduler) -> None:
        self._qid, self._k = qid, k
        self._replies = 0
        self.features = {}
        self.selected = []
        payload = {"qid": qid, "query": query, "k": k, "mode": mode,
                   "min_mutate": budget.min_mutate, "max_mutate": budget.max_mutate}
        for node in range(1, self.v):
            sched.send(ClusterMessage("QueryBroadcast", self.node, node, payload))
        self._pending = list(self.local_search(query, k, mode, budget))
        if self.v == 1:
            self._select(sched)

    def _select(self, sched: Scheduler) -> None:
        self.selected = rank(self._pending, self._k)
        by_node: dict[int, list[int]] = {n: [] for n in range(self.v)}
        for nb in self.selected:
            by_node[self.owner[nb.id]].append(nb.id)
        mine = by_node.pop(0)
        for i, w in zip(mine, self.fetch(mine)):
            self.features[i] = w
        for node, ids in by_node.items():
            sched.send(ClusterMessage("SelectIds", self.node, node, {"qid": self._qid, "ids": tuple(ids)}))

    def handle(self, msg: ClusterMessage, sched: Scheduler) -> None:
        p = msg.payload
        if msg.kind == "BuildDone":
            self.done[msg.src] = dict(p)
        elif msg.kind == "LocalResult":
            if p["qid"] != self._qid:
                raise InvalidState(f"stale result for query {p['qid']}")
            self._pending.extend(p["neighbors"])
            self._replies += 1
            if self._replies == self.v - 1:
                self._select(sched)
        elif msg.kind == "FeatureReply":
            for i, w in zip(p["ids"], p["words"]):
                self.features[int(i)] = w
        else:
            super().handle(msg, sched)


# -- public API --------------------------------------------------------------


@dataclass
class ClusterState:
    plan: ShardPlan
    actors: list[NodeActor]
    length: int
    build_transcript: list[Delivery]
    planes: HyperplaneSet | None = None

    @property
    def master(self) -> MasterActor:
        return self.actors[0]

    @property
    def v(self) -> int:
        return self.plan.v

    def shard_ids(self, node: int) -> list[int]:
        return self.actors[node].shard.ids.tolist()


@dataclass
class ClusterSearchResult:
    neighbors: list[Neighbor]
    features: dict[int, BitCode]
    node_times: list[float]
    messages: int
    bytes: int
    transcript: list[Delivery]

    def transcript_lines(self) -> str:
        return "".join(json.dumps(d.record(), sort_keys=True) + "\n" for d in self.transcript)


def cluster_build(
    data: BitDataset | np.ndarray,
    v: int,
    bits: int | None = None,
    seed: int = 0,
    trees: int = 4,
    plan: ShardPlan | None = None,
    ids: Sequence[int] | None = None,
) -> ClusterState:
    """Shard ``data`` over ``v`` nodes and build a forest on each.

    ``data`` is either pre-hashed codes, or raw vectors that every node
    hashes with the hyperplanes derived from the broadcast ``(bits, seed)``.
    """
    if isinstance(data, BitDataset):
        n, length, dim, vectors = data.n, data.length, 0, None
        ids = data.ids
    else:
        vectors = np.asarray(data, dtype=np.float64)
        if vectors.ndim != 2:
            raise InvalidArgument("vectors must be a 2-d array")
        if bits is None:
            raise InvalidArgument("bits is required when hashing vectors")
        n, dim = vectors.shape
        length = bits
        ids = np.arange(n, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
        if ids.shape != (n,) or np.unique(ids).size != n:
            raise InvalidArgument("need one unique id per vector")
    _check_nodes(n, v)
    if plan is None:
        plan = ShardPlan.round_robin(n, v)
    elif plan.v != v or plan.assignment.shape != (n,):
        raise InvalidArgument("shard plan does not match the data or node count")

    owner = {int(i): int(a) for i, a in zip(np.asarray(ids).tolist(), plan.assignment.tolist())}
    actors: list[NodeActor] = []
    for node in range(v):
        rows = plan.rows(node)
        codes = data.subset(rows) if vectors is None else None
        vec = vectors[rows] if vectors is not None else None
        args = (node, rows, codes, vec, np.asarray(ids)[rows])
        actors.append(MasterActor(*args, v=v, owner=owner) if node == 0 else NodeActor(*args))

    params = {"bits": length, "dim": dim, "trees": trees, "hash_seed": seed, "forest_seed": seed}
    sched = Scheduler()
    for node in range(1, v):
        sched.send(ClusterMessage("ShareHashParams", 0, node, params))
    actors[0].build(params)
    sched.run(actors)
    if len(actors[0].done) != v - 1:
        raise InvalidState("not every node reported BuildDone")
    planes = generate_hyperplanes(dim, length, seed) if vectors is not None else None
    return ClusterState(plan, actors, length, sched.transcript, planes)


def cluster_search(
    state: ClusterState,
    query: BitCode,
    k: int,
    budget: MutateBudget | None = None,
    mode: str = "exact",
    qid: int = 0,
) -> ClusterSearchResult:
    if k < 1:
        raise InvalidArgument("k must be positive")
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}")
    if query.length != state.length:
        raise InvalidArgument(f"query length {query.length} != {state.length}")
    budget = budget or MutateBudget(0, 2)
    budget.check(state.length)
    for a in state.actors:
        a.busy = 0.0
    sched = Scheduler()
    master = state.master
    master.start_query(qid, query, k, mode, budget, sched)
    sched.run(state.actors)
    feats = {i: BitCode.from_words(w, state.length) for i, w in master.features.items()}
    if set(feats) != {nb.id for nb in master.selected}:
        raise InvalidState("feature round did not return every selected id")
    return ClusterSearchResult(
        neighbors=list(master.selected),
        features=feats,
        node_times=[a.busy for a in state.actors],
        messages=len(sched.transcript),
        bytes=sum(d.size for d in sched.transcript),
        transcript=sched.transcript,
    )


def dump_transcript(deliveries: Sequence[Delivery], path) -> None:
    from .formats import write_jsonl

    write_jsonl((d.record() for d in deliveries), path)
