"""Structured part knowledge: embedding boundary, exact flat-L2 index,
retrieval, and knowledge-augmented answer composition.

The built-in embedder is a character-trigram feature hasher — deterministic
across processes and platforms — so retrieval behaves identically everywhere
without a neural encoder. Real sentence encoders attach through the same
``embed(text)`` contract. The index is exact: a dense squared-Euclidean scan.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import InputError, KnowledgeError
from .formats import write_canonical_json
from .postproc import RankedObject


@dataclass(frozen=True)
class KnowledgeEntry:
    part_id: str
    label: str
    display_name: str = ""
    description: str = ""
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.part_id:
            raise KnowledgeError("entry needs a part_id")
        if not self.label:
            raise KnowledgeError(f"entry {self.part_id!r} has an empty label")

    def to_dict(self) -> dict:
        return {
            "part_id": self.part_id,
            "label": self.label,
            "display_name": self.display_name,
            "description": self.description,
            "attributes": self.attributes,
        }


def load_knowledge_base(path: str | Path) -> list[KnowledgeEntry]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read knowledge base {path}: {exc}") from exc
    entries = doc["entries"] if isinstance(doc, dict) else doc
    out = []
    for raw in entries:
        try:
            out.append(
                KnowledgeEntry(
                    part_id=str(raw["part_id"]),
                    label=str(raw["label"]),
                    display_name=str(raw.get("display_name", raw["label"])),
                    description=str(raw.get("description", "")),
                    attributes=dict(raw.get("attributes", {})),
                )
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad knowledge entry {raw!r}: {exc}") from exc
    return out


class EmbedderProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Character-trigram feature hashing into `dim` buckets, L2-normalized.

    The hash is blake2b (8-byte digest) of the lowercased trigram bytes:
    bucket = h % dim, sign from the next bit. Fixed and documented so vectors
    are reproducible across processes, machines, and runs.
    """

    def __init__(self, dim: int = 64, ngram: int = 3):
        if dim < 1:
            raise KnowledgeError("embedder dimension must be >= 1")
        if ngram < 1:
            raise KnowledgeError("ngram must be >= 1")
        self.dim = dim
        self.ngram = ngram

    def config(self) -> dict:
        return {"type": "hashing", "dim": self.dim, "ngram": self.ngram}

    def embed(self, text: str) -> np.ndarray:
        lowered = text.lower()
        grams = [lowered[i : i + self.ngram] for i in range(len(lowered) - self.ngram + 1)]
        if not grams:
            raise KnowledgeError(f"text {text!r} too short to embed (needs >= {self.ngram} chars)")
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in grams:
            h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "big")
            bucket = h % self.dim
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise KnowledgeError(f"text {text!r} hashed to the zero vector")
        return vec / norm


def make_embedder(config: dict) -> EmbedderProvider:
    if config.get("type") != "hashing":
        raise InputError(f"unknown embedder type {config.get('type')!r}")
    return HashingEmbedder(dim=int(config["dim"]), ngram=int(config.get("ngram", 3)))


@dataclass
class FlatIndex:
    """Exact nearest-neighbor index: dense vectors, squared-L2 scan."""

    entries: list[KnowledgeEntry]
    vectors: np.ndarray  # (N, dim) float64
    embedder_config: dict

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.entries)


def build_index(entries: Sequence[KnowledgeEntry], embedder: EmbedderProvider) -> FlatIndex:
    """Embed each entry's label; index order is input order."""
    entries = list(entries)
    if not entries:
        raise KnowledgeError("cannot build an index from zero entries")
    seen = set()
    for entry in entries:
        if entry.part_id in seen:
            raise KnowledgeError(f"duplicate part_id {entry.part_id!r}")
        seen.add(entry.part_id)
    vectors = np.stack([np.asarray(embedder.embed(e.label), dtype=np.float64) for e in entries])
    if vectors.shape[1] != embedder.dim:
        raise KnowledgeError("embedder returned vectors of the wrong dimension")
    config = embedder.config() if hasattr(embedder, "config") else {"type": "external", "dim": embedder.dim}
    return FlatIndex(entries=entries, vectors=vectors, embedder_config=config)


def query_vector(index: FlatIndex, vector: np.ndarray, top_m: int) -> list[tuple[KnowledgeEntry, float]]:
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    if len(index) == 0:
        raise KnowledgeError("index is empty")
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (index.dim,):
        raise KnowledgeError(f"query vector has shape {vector.shape}, index dim is {index.dim}")
    distances = ((index.vectors - vector) ** 2).sum(axis=1)
    order = np.argsort(distances, kind="stable")[:top_m]
    return [(index.entries[int(i)], float(distances[int(i)])) for i in order]


def query(index: FlatIndex, text: str, top_m: int, embedder: EmbedderProvider | None = None) -> list[tuple[KnowledgeEntry, float]]:
    """Exact scan: ascending squared-L2 distance, ties by index order."""
    if embedder is None:
        embedder = make_embedder(index.embedder_config)
    return query_vector(index, embedder.embed(text), top_m)


def save_index(index: FlatIndex, path: str | Path) -> None:
    write_canonical_json(
        path,
        {
            "schema": "partsight-flat-index/1",
            "embedder": index.embedder_config,
            "entries": [e.to_dict() for e in index.entries],
            "vectors": [[float(v) for v in row] for row in index.vectors],
        },
    )


def load_index(path: str | Path) -> FlatIndex:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read index {path}: {exc}") from exc
    if doc.get("schema") != "partsight-flat-index/1":
        raise InputError(f"{path}: not a flat index file")
    entries = [
        KnowledgeEntry(
            part_id=e["part_id"],
            label=e["label"],
            display_name=e.get("display_name", ""),
            description=e.get("description", ""),
            attributes=e.get("attributes", {}),
        )
        for e in doc["entries"]
    ]
    vectors = np.asarray(doc["vectors"], dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(entries):
        raise InputError(f"{path}: vector block does not match entries")
    return FlatIndex(entries=entries, vectors=vectors, embedder_config=doc["embedder"])


@dataclass(frozen=True)
class ContextBlock:
    """Retrieval result for one ranked object, in depth order."""

    label: str
    depth: float
    matches: tuple[tuple[KnowledgeEntry, float], ...] = ()
    no_knowledge: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "depth": self.depth,
            "no_knowledge": self.no_knowledge,
            "matches": [
                {"part_id": e.part_id, "display_name": e.display_name, "distance": d}
                for e, d in self.matches
            ],
        }


def compose_context(
    ranked_objects: Sequence[RankedObject],
    index: FlatIndex,
    embedder: EmbedderProvider | None = None,
    per_object_m: int = 1,
) -> list[ContextBlock]:
    """Retrieve per-object knowledge, concatenated in depth order.

    Objects whose labels cannot be embedded are kept with a no-knowledge
    marker instead of failing the whole query.
    """
    if not ranked_objects:
        raise KnowledgeError("no ranked objects to compose context for")
    if len(index) == 0:
        raise KnowledgeError("knowledge index is empty")
    if embedder is None:
        embedder = make_embedder(index.embedder_config)
    blocks = []
    for obj in ranked_objects:
        try:
            matches = query_vector(index, embedder.embed(obj.label), per_object_m)
            blocks.append(ContextBlock(obj.label, obj.depth, tuple(matches)))
        except KnowledgeError:
            blocks.append(ContextBlock(obj.label, obj.depth, (), no_knowledge=True))
    return blocks


class ResponderProvider(Protocol):
    def respond(self, query_text: str, context: list[ContextBlock]) -> str: ...


NO_KNOWLEDGE_ANSWER = "I have no part knowledge for what is currently in view."


class TemplateResponder:
    """Deterministic responder answering from the nearest matched entry.

    Names the part, reports its depth rank, quotes the description, and
    answers attribute lookups when the query mentions an attribute name.
    """

    def respond(self, query_text: str, context: list[ContextBlock]) -> str:
        usable = [b for b in context if b.matches and not b.no_knowledge]
        if not usable:
            return NO_KNOWLEDGE_ANSWER
        top = usable[0]
        entry = top.matches[0][0]
        name = entry.display_name or entry.label

        lines = [f"The closest part is {name} (detected as '{top.label}', depth {top.depth:g})."]
        lowered = query_text.lower()
        hits = [
            key
            for key in sorted(entry.attributes)
            if key.lower() in lowered or key.lower().replace("_", " ") in lowered
        ]
        for key in hits:
            lines.append(f"{key.replace('_', ' ')}: {entry.attributes[key]}.")
        if entry.description:
            lines.append(entry.description)
        if len(usable) > 1:
            others = ", ".join(
                (b.matches[0][0].display_name or b.label) for b in usable[1:]
            )
            lines.append(f"Also in view, farther away: {others}.")
        return " ".join(lines)


def generate_answer(query_text: str, context: list[ContextBlock], responder: ResponderProvider) -> str:
    if not query_text.strip():
        raise ValueError("query text is empty")
    if not context:
        return NO_KNOWLEDGE_ANSWER
    return responder.respond(query_text, context)
