"""Blackboard, retrievable knowledge bases, and conversation memory windows.

The blackboard realizes knowledge edges: producers write versioned artifacts
under declared keys, consumers read the latest version. Retrieval is lexical
tf-idf: deterministic, dependency-free, and checkable against a naive oracle.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import KnowledgeError
from .gateway import ChatMessage

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokenization; everything else is a separator."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Artifact:
    value: Any
    producer: str
    version: int


class Blackboard:
    """Shared, versioned key-value store with per-key atomicity.

    Writes are restricted to keys the producing node declared as outputs;
    declarations are registered by the engine as the graph (and any
    expansions) are loaded. Seeded entries bypass the declaration check and
    carry the reserved producer ``__seed__``.
    """

    SEED_PRODUCER = "__seed__"

    def __init__(self, declarations: Mapping[str, Iterable[str]] | None = None) -> None:
        self._entries: dict[str, Artifact] = {}
        self._declarations: dict[str, set[str]] = {}
        self._lock = threading.Lock()
        for node_id, keys in (declarations or {}).items():
            self.declare_outputs(node_id, keys)

    def declare_outputs(self, node_id: str, keys: Iterable[str]) -> None:
        with self._lock:
            self._declarations.setdefault(node_id, set()).update(keys)

    def write(self, key: str, value: Any, producer: str) -> int:
        """Write one artifact version; returns the new version number."""
        with self._lock:
            if producer != self.SEED_PRODUCER:
                declared = self._declarations.get(producer, set())
                if key not in declared:
                    raise KnowledgeError(
                        "UNDECLARED_OUTPUT",
                        f"node {producer!r} did not declare output key {key!r}",
                    )
            previous = self._entries.get(key)
            version = 1 if previous is None else previous.version + 1
            self._entries[key] = Artifact(value=value, producer=producer, version=version)
            return version

    def seed(self, key: str, value: Any) -> int:
        return self.write(key, value, producer=self.SEED_PRODUCER)

    def read(self, key: str) -> Any:
        return self.entry(key).value

    def entry(self, key: str) -> Artifact:
        with self._lock:
            if key not in self._entries:
                raise KnowledgeError("KEY_ABSENT", f"no artifact under key {key!r}")
            return self._entries[key]

    def has(self, key: str) -> bool:
        with self._lock:
            return key in self._entries

    def keys(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def snapshot(self) -> dict[str, dict]:
        """Stable serializable view: key -> {value, producer, version}."""
        with self._lock:
            return {
                key: {"value": art.value, "producer": art.producer, "version": art.version}
                for key, art in sorted(self._entries.items())
            }


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tags", tuple(self.tags))


class KnowledgeBase:
    """Document store with a token index kept consistent on every ingest."""

    def __init__(self, name: str, documents: Iterable[Document] = ()) -> None:
        self.name = name
        self._docs: dict[str, Document] = {}
        self._counts: dict[str, dict[str, int]] = {}  # doc id -> token -> count
        for doc in documents:
            self.ingest(doc)

    def ingest(self, doc: Document) -> None:
        if doc.id in self._docs:
            raise KnowledgeError("DUPLICATE_DOC", f"document id {doc.id!r} already ingested in {self.name!r}")
        self._docs[doc.id] = doc
        counts: dict[str, int] = {}
        for token in tokenize(doc.text):
            counts[token] = counts.get(token, 0) + 1
        self._counts[doc.id] = counts

    def get(self, doc_id: str) -> Document | None:
        return self._docs.get(doc_id)

    def ids(self) -> list[str]:
        return sorted(self._docs)

    def __len__(self) -> int:
        return len(self._docs)

    def token_count(self, doc_id: str, token: str) -> int:
        return self._counts.get(doc_id, {}).get(token, 0)

    def doc_frequency(self, token: str) -> int:
        return sum(1 for counts in self._counts.values() if token in counts)


def retrieve(kb: KnowledgeBase, query: str, k: int) -> list[tuple[Document, float]]:
    """Top-k documents by tf-idf: score(d) = sum over query tokens of
    tf(token, d) * (ln((N+1)/(df+1)) + 1).

    Ranked by score descending then id ascending; zero-score documents are
    dropped. Raises EMPTY_QUERY when the query normalizes to no tokens.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tokenize(query)
    if not tokens:
        raise KnowledgeError("EMPTY_QUERY", "query has no tokens after normalization")

    n_docs = len(kb)
    idf = {token: math.log((n_docs + 1) / (kb.doc_frequency(token) + 1)) + 1.0 for token in set(tokens)}

    scored: list[tuple[Document, float]] = []
    for doc_id in kb.ids():
        score = sum(kb.token_count(doc_id, token) * idf[token] for token in tokens)
        if score > 0:
            doc = kb.get(doc_id)
            assert doc is not None
            scored.append((doc, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored[:k]


def load_kb_dir(name: str, directory: str | Path) -> KnowledgeBase:
    """Build a knowledge base from a directory of ``*.txt`` files.

    The file stem is the document id; an optional first line ``tags: a,b``
    declares tags and is stripped from the text.
    """
    kb = KnowledgeBase(name)
    directory = Path(directory)
    if not directory.is_dir():
        raise KnowledgeError("KB_DIR_MISSING", f"knowledge base directory {str(directory)!r} does not exist")
    for path in sorted(directory.glob("*.txt")):
        raw = path.read_text(encoding="utf-8")
        tags: tuple[str, ...] = ()
        text = raw
        first, _, rest = raw.partition("\n")
        if first.startswith("tags:"):
            tags = tuple(t.strip() for t in first[len("tags:"):].split(",") if t.strip())
            text = rest
        kb.ingest(Document(id=path.stem, text=text, tags=tags))
    return kb


@dataclass(frozen=True)
class MemoryWindow:
    """Bounded conversation memory; the system message is never evicted."""

    max_messages: int
    eviction: str = "drop_oldest_nonsystem"

    def __post_init__(self) -> None:
        if self.max_messages < 1:
            raise ValueError("max_messages must be >= 1")
        if self.eviction != "drop_oldest_nonsystem":
            raise ValueError(f"unknown eviction policy {self.eviction!r}")


def apply_window(messages: list[ChatMessage], window: MemoryWindow) -> list[ChatMessage]:
    """Trim to at most max_messages, keeping the system message plus the
    most recent remainder. Idempotent; retained order is preserved."""
    if len(messages) <= window.max_messages:
        return list(messages)
    if messages and messages[0].role == "system":
        keep = window.max_messages - 1
        tail = messages[1:][-keep:] if keep > 0 else []
        return [messages[0]] + tail
    return list(messages[-window.max_messages:])
