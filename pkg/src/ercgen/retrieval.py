"""Speaker-stripped, label-balanced demonstration base and top-1 cosine retrieval."""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

from .corpus import Corpus, address, open_text

SAME_LABEL = "same_label"
ALL_LABELS = "all_labels"
PAIRINGS = (SAME_LABEL, ALL_LABELS)

DEFAULT_DIM = 256
NORM_TOL = 1e-6
# scores this close are ties, resolved by lowest entry id
TIE_EPS = 1e-12

_TOKEN = re.compile(r"\w+")


class EmptyClass(ValueError):
    pass


class EmptyAdmissibleSet(LookupError):
    pass


class MissingVector(KeyError):
    pass


class TransportError(RuntimeError):
    pass


class Embedder(Protocol):
    embedder_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def normalize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        guard = np.zeros(vec.shape[0])
        guard[0] = 1.0
        return guard
    return vec / norm


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def ngram_features(text: str) -> list[str]:
    toks = tokenize(text)
    return toks + [f"{a} {b}" for a, b in zip(toks, toks[1:])]


@lru_cache(maxsize=1 << 16)
def _feature_hash(feature: str) -> int:
    return int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "big")


class HashedNgramEmbedder:
    """Feature-hashed word unigram + bigram counts.

    Bucket is the hash modulo ``dim``; with ``signed`` the top hash bit picks
    the sign so colliding features tend to cancel rather than pile up.
    """

    def __init__(self, dim: int = DEFAULT_DIM, signed: bool = True):
        self.dim = dim
        self.signed = signed
        self.embedder_id = f"hashed-ngram-{dim}" + ("" if signed else "-unsigned")

    def counts(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for feat in ngram_features(text):
            h = _feature_hash(feat)
            sign = -1.0 if self.signed and (h >> 63) & 1 else 1.0
            vec[h % self.dim] += sign
        return vec

    def embed(self, text: str) -> np.ndarray:
        return normalize(self.counts(text))


def text_key(text: str) -> str:
    """Row id under which a text's vector is stored in a vector file."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def write_vector_file(path, ids: Sequence, vectors: np.ndarray, embedder_id: str, *, tag: str | None = None) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    with open_text(path, "w") as fh:
        header = f"{vectors.shape[1]} {embedder_id}"
        if tag:
            header += f" {tag}"
        fh.write(header + "\n")
        for i, row in zip(ids, vectors):
            fh.write(f"{i} " + " ".join(repr(float(x)) for x in row) + "\n")


def read_vector_file(path) -> tuple[int, str, dict[str, np.ndarray]]:
    with open_text(path) as fh:
        header = fh.readline().split()
        if len(header) < 2:
            raise ValueError(f"{path}: vector file header needs '<dim> <embedder_id>'")
        dim, embedder_id = int(header[0]), header[1]
        rows: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            rows[parts[0]] = np.array([float(x) for x in parts[1:]])
    return dim, embedder_id, rows


class VectorFileEmbedder:
    """Precomputed vectors (e.g. from a sentence encoder), keyed by ``text_key``."""

    def __init__(self, path: str | os.PathLike):
        self.dim, self.embedder_id, self._rows = read_vector_file(path)

    def embed(self, text: str) -> np.ndarray:
        key = text_key(text)
        try:
            return normalize(self._rows[key])
        except KeyError:
            raise MissingVector(f"no vector for id {key} ({text[:40]!r})") from None


class HttpEmbedder:
    """POST ``{"text": ...}`` and expect ``{"vector": [...]}`` back."""

    def __init__(self, endpoint: str, dim: int | None = None, *, timeout: float = 30.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.dim = dim or 0
        self.embedder_id = f"http:{endpoint}"
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = self._client.post(self.endpoint, json={"text": text})
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise TransportError(f"embedding endpoint returned HTTP {resp.status_code}")
        vec = np.asarray(resp.json()["vector"], dtype=np.float64)
        if self.dim and vec.shape != (self.dim,):
            raise TransportError(f"expected {self.dim}-dim vector, got shape {vec.shape}")
        self.dim = vec.shape[0]
        return normalize(vec)


def make_embedder(kind: str = "hashed-ngram", *, dim: int = DEFAULT_DIM, path=None, endpoint=None) -> Embedder:
    if kind == "hashed-ngram":
        return HashedNgramEmbedder(dim)
    if kind == "vector-file":
        return VectorFileEmbedder(path)
    if kind == "http":
        return HttpEmbedder(endpoint, dim)
    raise ValueError(f"unknown embedder {kind!r}")


def embed(text: str, embedder: Embedder) -> np.ndarray:
    return embedder.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(normalize(a), normalize(b)))


def strip_speakers(text: str, names: Iterable[str]) -> str:
    names = sorted({n for n in names if n}, key=len, reverse=True)
    if not names:
        return text
    pat = re.compile(r"(?<!\w)(?:" + "|".join(re.escape(n) for n in names) + r")(?!\w)")
    out = pat.sub(" ", text)
    out = re.sub(r"\s+([,.!?;:])", r"\1", out)
    out = re.sub(r"^[\s,;:]+", "", out)
    return re.sub(r"\s+", " ", out).strip()


@dataclass(frozen=True, eq=False)
class DomainEntry:
    id: int
    text: str
    label: str
    vector: np.ndarray = field(repr=False)
    address: tuple = ()


class RetrievalIndex:
    """Immutable exhaustive-scan index over domain entries."""

    def __init__(self, entries: Sequence[DomainEntry], embedder_id: str, embedder: Embedder | None = None):
        self.entries = tuple(entries)
        self.embedder_id = embedder_id
        self.embedder = embedder
        if self.entries:
            self.matrix = np.vstack([e.vector for e in self.entries]).astype(np.float64)
            self.matrix.setflags(write=False)
        else:
            self.matrix = np.zeros((0, embedder.dim if embedder else 0))
        self.dim = self.matrix.shape[1]
        norms = np.linalg.norm(self.matrix, axis=1)
        if np.any(np.abs(norms - 1.0) >= NORM_TOL):
            raise ValueError("index vectors must have unit L2 norm")
        self.ids = np.array([e.id for e in self.entries], dtype=np.int64)
        if len(set(self.ids.tolist())) != len(self.ids):
            raise ValueError("duplicate entry ids")
        self.labels = np.array([e.label for e in self.entries], dtype=object)
        self._addr = {tuple(e.address): i for i, e in enumerate(self.entries) if e.address}

    def __len__(self) -> int:
        return len(self.entries)

    def label_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.label] = out.get(e.label, 0) + 1
        return out

    def scores(self, query: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(query, dtype=np.float64)

    def _admissible(self, pairing: str, gold: str | None, exclude) -> np.ndarray:
        if pairing not in PAIRINGS:
            raise ValueError(f"unknown pairing {pairing!r}")
        mask = np.ones(len(self.entries), dtype=bool)
        if pairing == SAME_LABEL:
            if gold is None:
                raise ValueError("same_label pairing needs the gold label")
            mask &= self.labels == gold
        if exclude is not None:
            own = self._addr.get(tuple(exclude))
            if own is not None:
                mask[own] = False
        if not mask.any():
            raise EmptyAdmissibleSet(f"no admissible entries (pairing={pairing}, gold={gold!r})")
        return mask

    def _pick(self, scores: np.ndarray, mask: np.ndarray) -> DomainEntry:
        best = scores[mask].max()
        cand = np.flatnonzero(mask & (scores >= best - TIE_EPS))
        return self.entries[cand[np.argmin(self.ids[cand])]]

    def _vector(self, query) -> np.ndarray:
        if isinstance(query, str):
            if self.embedder is None:
                raise ValueError("index has no embedder; pass a vector")
            return self.embedder.embed(query)
        return np.asarray(query, dtype=np.float64)

    def retrieve_top1(
        self,
        query: np.ndarray | str,
        pairing: str = ALL_LABELS,
        gold: str | None = None,
        exclude: tuple | None = None,
    ) -> DomainEntry:
        """Highest-cosine admissible entry; ties go to the lowest entry id."""
        if not self.entries:
            raise EmptyAdmissibleSet("index is empty")
        mask = self._admissible(pairing, gold, exclude)
        return self._pick(self.scores(self._vector(query)), mask)

    def retrieve_many(
        self,
        queries: Sequence,
        pairing: str = ALL_LABELS,
        golds: Sequence[str | None] | None = None,
        excludes: Sequence | None = None,
        *,
        block: int = 1024,
    ) -> list[DomainEntry]:
        """Batched ``retrieve_top1`` with identical results."""
        if not self.entries:
            raise EmptyAdmissibleSet("index is empty")
        n = len(queries)
        golds = golds if golds is not None else [None] * n
        excludes = excludes if excludes is not None else [None] * n
        out = []
        for lo in range(0, n, block):
            q = np.vstack([self._vector(x) for x in queries[lo : lo + block]])
            s = q @ self.matrix.T
            for j in range(q.shape[0]):
                mask = self._admissible(pairing, golds[lo + j], excludes[lo + j])
                out.append(self._pick(s[j], mask))
        return out

    def save(self, prefix: str | os.PathLike, *, tag: str | None = None) -> None:
        prefix = str(prefix)
        write_vector_file(prefix + ".vectors", [e.id for e in self.entries], self.matrix, self.embedder_id, tag=tag)
        with open_text(prefix + ".entries.jsonl", "w") as fh:
            for e in self.entries:
                rec = {"id": e.id, "label": e.label, "text": e.text, "address": list(e.address)}
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, prefix: str | os.PathLike, embedder: Embedder | None = None) -> RetrievalIndex:
        prefix = str(prefix)
        _, embedder_id, rows = read_vector_file(prefix + ".vectors")
        if embedder is not None and embedder.embedder_id != embedder_id:
            raise ValueError(f"index built with {embedder_id}, got embedder {embedder.embedder_id}")
        entries = []
        with open_text(prefix + ".entries.jsonl") as fh:
            for line in fh:
                rec = json.loads(line)
                entries.append(DomainEntry(rec["id"], rec["text"], rec["label"], rows[str(rec["id"])], tuple(rec["address"])))
        return cls(entries, embedder_id, embedder)


def retrieve_top1(query, index: RetrievalIndex, pairing: str = ALL_LABELS, gold: str | None = None, exclude=None) -> DomainEntry:
    return index.retrieve_top1(query, pairing, gold, exclude)


def build_domain_base(
    train: Corpus,
    embedder: Embedder,
    seed: int,
    *,
    strip_names: Iterable[str] | None = None,
    split: str | None = "train",
) -> RetrievalIndex:
    """Downsample every label to the rarest label's count, strip speaker names, embed."""
    if split is not None:
        train = train.split(split)
    if len(train) == 0:
        raise EmptyClass("training split is empty")
    names = set(train.manifest.speaker_set if strip_names is None else strip_names)
    pools: dict[str, list] = {label: [] for label in train.manifest.label_set}
    for conv, u in train.iter_utterances():
        pools[u.emotion].append((address(conv, u), u.text))
    empty = [label for label, pool in pools.items() if not pool]
    if empty:
        raise EmptyClass(f"labels without training utterances: {empty}")
    m = min(len(pool) for pool in pools.values())

    chosen = []
    for label, pool in pools.items():
        pool.sort()
        rng = random.Random(f"{seed}:domain:{label}")
        chosen.extend((addr, text, label) for addr, text in rng.sample(pool, m))
    chosen.sort()

    entries = []
    for i, (addr, text, label) in enumerate(chosen):
        clean = strip_speakers(text, names)
        entries.append(DomainEntry(i, clean, label, embedder.embed(clean), addr))
    return RetrievalIndex(entries, embedder.embedder_id, embedder)
