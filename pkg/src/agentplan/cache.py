"""Multi-layer multi-purpose cache.

Four stores share one facade:

* symbolic result tier — exact-key lookups for repeated deterministic work;
* semantic result tier — embedding similarity over stochastic results,
  gated by a hybrid structural test (capability + parameter slots must match
  exactly before cosine similarity is consulted);
* plan cache — optimized bindings keyed by a canonical subgraph signature;
* policy cache — past selection decisions keyed by planning context.

Result entries live in a short-term LRU tier and are promoted to a
long-term LFU tier after a configurable number of hits. Caches accelerate;
they never change planner or selector answers.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .workflow import AbstractWorkflow

EMBEDDING_DIM = 256
DEFAULT_TAU = 0.85
_SIM_EPS = 1e-9

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)
_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return _WS.sub(" ", _PUNCT.sub(" ", text.lower())).strip()


def digest(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedBagEmbedder:
    """Deterministic reference embedding: token counts hashed into a fixed
    number of buckets, L2-normalized. Empty text maps to the zero vector,
    which marks the input non-embeddable."""

    def __init__(self, dim: int = EMBEDDING_DIM):
        self.dim = dim

    def _bucket(self, token: str) -> int:
        h = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(h[:8], "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in normalize_text(text).split():
            counts[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(counts))
        if norm == 0.0:
            return counts
        return counts / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v))


@dataclass(frozen=True)
class TaskSignature:
    """Canonical identity of one task request.

    Normalization is applied on construction, so signatures differing only
    in case or whitespace collide by design.
    """

    capability: str
    input_digest: str
    param_slots: tuple[tuple[str, str], ...] = ()
    free_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "free_text", normalize_text(self.free_text))

    @staticmethod
    def for_payload(capability: str, payload: str, param_slots=(), free_text: str = "") -> "TaskSignature":
        return TaskSignature(
            capability=capability,
            input_digest=digest(normalize_text(payload)),
            param_slots=tuple((str(k), str(v)) for k, v in param_slots),
            free_text=free_text,
        )

    def key(self) -> str:
        blob = json.dumps(
            [self.capability, self.input_digest, list(self.param_slots), self.free_text],
            separators=(",", ":"),
        )
        return digest(blob)

    def structural_key(self) -> str:
        blob = json.dumps([self.capability, list(self.param_slots)], separators=(",", ":"))
        return digest(blob)


@dataclass
class CacheEntry:
    kind: str  # result | plan | policy
    key: str
    payload: bytes
    deterministic_source: bool
    tier: str = "short"
    hits: int = 0
    created_at: int = 0
    last_hit: int = 0
    embedding: Optional[np.ndarray] = None
    structural_key: str = ""


@dataclass
class TierStats:
    lookups: int = 0
    hits: int = 0
    promotions: int = 0
    evictions: int = 0
    stale: int = 0

    def as_dict(self) -> dict:
        return {
            "lookups": self.lookups,
            "hits": self.hits,
            "promotions": self.promotions,
            "evictions": self.evictions,
            "stale": self.stale,
        }


# ---------------------------------------------------------------------------
# Plan signatures


def plan_signature(w: AbstractWorkflow, rounds: int = 3) -> str:
    """Canonical hash of the capability-labeled data-edge subgraph.

    Iterative neighborhood refinement (fixed round count): each node label
    absorbs the sorted labels of its in- and out-neighbors, then the sorted
    multiset of final labels is hashed. Isomorphic labeled graphs collide;
    a path and a fan-out over the same labels do not.
    """
    labels = {s.agent_id: digest(s.capability.id) for s in w.nodes}
    preds: dict[str, list[str]] = {a: [] for a in w.agent_ids}
    succs: dict[str, list[str]] = {a: [] for a in w.agent_ids}
    for e in w.data_edges():
        succs[e.src].append(e.dst)
        preds[e.dst].append(e.src)
    for _ in range(rounds):
        labels = {
            a: digest(
                labels[a]
                + "|" + ",".join(sorted(labels[p] for p in preds[a]))
                + "|" + ",".join(sorted(labels[s] for s in succs[a]))
            )
            for a in labels
        }
    blob = ",".join(sorted(labels.values()))
    return digest(f"{len(w.nodes)}|{len(w.data_edges())}|{blob}")


# ---------------------------------------------------------------------------
# The cache facade


class MMCache:
    def __init__(
        self,
        short_capacity: int = 1024,
        long_capacity: int = 8192,
        promote_hits: int = 3,
        embedder: Optional[Embedder] = None,
        payload_limit: int = 1 << 20,
        ttl: Optional[int] = None,
    ):
        self.short_capacity = short_capacity
        self.long_capacity = long_capacity
        self.promote_hits = promote_hits
        self.embedder = embedder or HashedBagEmbedder()
        self.payload_limit = payload_limit
        self.ttl = ttl

        self._entries: dict[str, CacheEntry] = {}
        self._short: OrderedDict[str, None] = OrderedDict()  # LRU order
        self._long: set[str] = set()
        self._semantic_keys: set[str] = set()
        self._plans: dict[str, tuple] = {}
        self._policies: dict[str, str] = {}
        self._clock = 0
        self.rejected = 0
        self._lock = threading.Lock()
        self._stats = {name: TierStats() for name in ("exact", "semantic", "plan", "policy")}

    # -- clock / stats ------------------------------------------------------

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def stats(self) -> dict[str, dict]:
        return {name: ts.as_dict() for name, ts in self._stats.items()}

    def reset_stats(self) -> None:
        with self._lock:
            self._stats = {name: TierStats() for name in self._stats}
            self.rejected = 0

    def __len__(self) -> int:
        return len(self._entries)

    # -- result tiers ---------------------------------------------------------

    def _expired(self, entry: CacheEntry) -> bool:
        return self.ttl is not None and (self._clock - entry.created_at) > self.ttl

    def _drop(self, key: str) -> None:
        self._entries.pop(key, None)
        self._short.pop(key, None)
        self._long.discard(key)
        self._semantic_keys.discard(key)

    def _register_hit(self, entry: CacheEntry) -> None:
        entry.hits += 1
        entry.last_hit = self._clock
        if entry.tier == "short":
            self._short.move_to_end(entry.key)
            if entry.hits >= self.promote_hits:
                self._promote(entry)

    def _promote(self, entry: CacheEntry) -> None:
        self._short.pop(entry.key, None)
        entry.tier = "long"
        self._long.add(entry.key)
        self._stats["exact"].promotions += 1
        while len(self._long) > self.long_capacity:
            victim = min(
                self._long,
                key=lambda k: (self._entries[k].hits, self._entries[k].last_hit, k),
            )
            self._drop(victim)
            self._stats["exact"].evictions += 1

    def get_exact(self, sig: TaskSignature) -> Optional[bytes]:
        """Symbolic tier: hit iff an entry with the same canonical key exists."""
        with self._lock:
            self._tick()
            self._stats["exact"].lookups += 1
            entry = self._entries.get(sig.key())
            if entry is None or self._expired(entry):
                if entry is not None:
                    self._drop(entry.key)
                return None
            self._register_hit(entry)
            self._stats["exact"].hits += 1
            return entry.payload

    def get_semantic(self, sig: TaskSignature, tau: float = DEFAULT_TAU) -> Optional[tuple[bytes, float]]:
        """Semantic tier: hybrid equivalence test.

        A candidate must match the structural component exactly (capability
        and parameter slot names and values) and reach cosine similarity
        >= tau on the free-text embeddings. The highest-similarity
        qualifying entry wins.
        """
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        with self._lock:
            self._tick()
            self._stats["semantic"].lookups += 1
            query_vec = self.embedder.embed(sig.free_text)
            if float(np.linalg.norm(query_vec)) == 0.0:
                return None  # non-embeddable query
            skey = sig.structural_key()
            best: Optional[tuple[float, str]] = None
            for key in list(self._semantic_keys):
                entry = self._entries.get(key)
                if entry is None:
                    self._semantic_keys.discard(key)
                    continue
                if self._expired(entry):
                    self._drop(key)
                    continue
                if entry.structural_key != skey or entry.embedding is None:
                    continue
                sim = cosine(query_vec, entry.embedding)
                if sim >= tau - _SIM_EPS and (best is None or (sim, key) > best):
                    best = (sim, key)
            if best is None:
                return None
            sim, key = best
            entry = self._entries[key]
            self._register_hit(entry)
            self._stats["semantic"].hits += 1
            return entry.payload, min(sim, 1.0)

    def put_result(self, sig: TaskSignature, payload: bytes, deterministic_source: bool) -> Optional[CacheEntry]:
        """Insert into the short tier. Deterministic results are reusable via
        the symbolic tier only; stochastic results are additionally indexed
        for semantic lookup."""
        if len(payload) > self.payload_limit:
            with self._lock:
                self.rejected += 1
            return None
        with self._lock:
            key = sig.key()
            now = self._tick()
            entry = CacheEntry(
                kind="result",
                key=key,
                payload=payload,
                deterministic_source=deterministic_source,
                tier="short",
                created_at=now,
                last_hit=now,
                structural_key=sig.structural_key(),
            )
            if not deterministic_source:
                vec = self.embedder.embed(sig.free_text)
                if float(np.linalg.norm(vec)) > 0.0:
                    entry.embedding = vec
                    self._semantic_keys.add(key)
            if key in self._entries:
                self._drop(key)
                self._semantic_keys.discard(key)
                if entry.embedding is not None:
                    self._semantic_keys.add(key)
            self._entries[key] = entry
            self._short[key] = None
            self._short.move_to_end(key)
            while len(self._short) > self.short_capacity:
                victim, _ = self._short.popitem(last=False)
                self._drop(victim)
                self._stats["exact"].evictions += 1
            return entry

    # -- plan cache -----------------------------------------------------------

    def put_plan(self, signature: str, bindings: tuple, cost) -> None:
        with self._lock:
            self._plans[signature] = (bindings, cost)

    def get_plan(self, signature: str) -> Optional[tuple]:
        with self._lock:
            self._stats["plan"].lookups += 1
            hit = self._plans.get(signature)
            if hit is not None:
                self._stats["plan"].hits += 1
            return hit

    # -- policy cache ---------------------------------------------------------

    @staticmethod
    def policy_context(structure_label: str, objectives: Sequence[str], policy_repr: str) -> str:
        return digest(json.dumps([structure_label, list(objectives), policy_repr], separators=(",", ":")))

    def put_policy(self, context_key: str, plan_hash: str) -> None:
        with self._lock:
            self._policies[context_key] = plan_hash

    def get_policy(self, context_key: str) -> Optional[str]:
        with self._lock:
            self._stats["policy"].lookups += 1
            hit = self._policies.get(context_key)
            if hit is not None:
                self._stats["policy"].hits += 1
            return hit

    def mark_policy_stale(self, context_key: str) -> None:
        with self._lock:
            self._stats["policy"].stale += 1
            self._policies.pop(context_key, None)

    # -- snapshot -------------------------------------------------------------

    def export_jsonl(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self._entries):
                e = self._entries[key]
                doc = {
                    "kind": e.kind,
                    "key": e.key,
                    "payload": base64.b64encode(e.payload).decode("ascii"),
                    "deterministic_source": e.deterministic_source,
                    "tier": e.tier,
                    "hits": e.hits,
                    "created_at": e.created_at,
                    "last_hit": e.last_hit,
                    "structural_key": e.structural_key,
                    "embedding": e.embedding.tolist() if e.embedding is not None else None,
                }
                fh.write(json.dumps(doc, sort_keys=True) + "\n")

    @classmethod
    def import_jsonl(cls, path, **kwargs) -> "MMCache":
        cache = cls(**kwargs)
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                doc = json.loads(line)
                entry = CacheEntry(
                    kind=doc["kind"],
                    key=doc["key"],
                    payload=base64.b64decode(doc["payload"]),
                    deterministic_source=doc["deterministic_source"],
                    tier=doc["tier"],
                    hits=doc["hits"],
                    created_at=doc["created_at"],
                    last_hit=doc["last_hit"],
                    structural_key=doc.get("structural_key", ""),
                    embedding=np.array(doc["embedding"]) if doc.get("embedding") else None,
                )
                cache._entries[entry.key] = entry
                if entry.tier == "short":
                    cache._short[entry.key] = None
                else:
                    cache._long.add(entry.key)
                if entry.embedding is not None:
                    cache._semantic_keys.add(entry.key)
                cache._clock = max(cache._clock, entry.created_at, entry.last_hit)
        return cache
