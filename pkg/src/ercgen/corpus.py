"""Conversation corpora: line-delimited ingest, validation, serialization and stats."""

from __future__ import annotations

import gzip
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
RECORD_FIELDS = ("dataset", "conv_id", "split", "index", "speaker", "text", "emotion")


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Utterance:
    conv_id: str
    index: int
    speaker: str
    text: str
    emotion: str


@dataclass(frozen=True)
class Conversation:
    id: str
    dataset_id: str
    split: str
    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for u in self.utterances:
            seen.setdefault(u.speaker, None)
        return list(seen)


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    label_set: tuple[str, ...]
    speaker_set: tuple[str, ...]
    # split -> {"conversations": int, "utterances": int}; checked at ingest when present
    split_sizes: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    dialogue: bool = True
    # unified corpora: conversations keep their source dataset id
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.label_set:
            raise CorpusError(f"{self.dataset_id}: empty label set")
        if len(set(self.label_set)) != len(self.label_set):
            raise CorpusError(f"{self.dataset_id}: duplicate labels in label set")

    @property
    def num_classes(self) -> int:
        return len(self.label_set)

    def to_json(self) -> dict:
        out = {
            "dataset_id": self.dataset_id,
            "labels": list(self.label_set),
            "speakers": list(self.speaker_set),
        }
        if self.split_sizes:
            out["split_sizes"] = {k: dict(v) for k, v in self.split_sizes.items()}
        if not self.dialogue:
            out["dialogue"] = False
        if self.sources:
            out["sources"] = list(self.sources)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> DatasetManifest:
        return cls(
            dataset_id=obj["dataset_id"],
            label_set=tuple(obj["labels"]),
            speaker_set=tuple(obj.get("speakers", ())),
            split_sizes={k: dict(v) for k, v in obj.get("split_sizes", {}).items()},
            dialogue=obj.get("dialogue", True),
            sources=tuple(obj.get("sources", ())),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> DatasetManifest:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def dump(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SplitStats:
    conversations: int
    utterances: int
    class_counts: dict[str, int]

    @property
    def avg_utt(self) -> float:
        if self.conversations == 0:
            return 0.0
        return round(self.utterances / self.conversations, 2)


@dataclass(frozen=True)
class Corpus:
    manifest: DatasetManifest
    conversations: tuple[Conversation, ...] = ()

    def split(self, name: str) -> Corpus:
        return Corpus(self.manifest, tuple(c for c in self.conversations if c.split == name))

    def by_dataset(self, dataset_id: str) -> Corpus:
        return Corpus(self.manifest, tuple(c for c in self.conversations if c.dataset_id == dataset_id))

    @property
    def dataset_ids(self) -> list[str]:
        return sorted({c.dataset_id for c in self.conversations})

    def __len__(self) -> int:
        return sum(len(c) for c in self.conversations)

    def iter_utterances(self) -> Iterator[tuple[Conversation, Utterance]]:
        for conv in self.conversations:
            for u in conv.utterances:
                yield conv, u

    def conversation(self, dataset_id: str, conv_id: str) -> Conversation:
        key = (dataset_id, conv_id)
        lookup = self.__dict__.get("_lookup")
        if lookup is None:
            lookup = {(c.dataset_id, c.id): c for c in self.conversations}
            object.__setattr__(self, "_lookup", lookup)
        return lookup[key]


def address(conv: Conversation, utt: Utterance) -> tuple[str, str, int]:
    """Globally unique utterance address: (dataset_id, conv_id, index)."""
    return (conv.dataset_id, conv.id, utt.index)


def open_text(path: str | os.PathLike, mode: str = "r"):
    """Open a UTF-8 text file, transparently handling ``.gz``."""
    path = str(path)
    if path.endswith(".gz"):
        if "w" in mode:
            # mtime=0 keeps compressed output byte-stable across runs
            raw = gzip.GzipFile(path, mode="wb", mtime=0)
            return io.TextIOWrapper(raw, encoding="utf-8", newline="\n")
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, mode, encoding="utf-8", newline="\n" if "w" in mode else None)


def _parse_record(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed JSON ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise CorpusError("record is not an object", lineno)
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise CorpusError(f"missing fields {missing}", lineno)
    if not isinstance(rec["index"], int) or isinstance(rec["index"], bool) or rec["index"] < 0:
        raise CorpusError(f"index must be a non-negative integer, got {rec['index']!r}", lineno)
    for key in ("dataset", "conv_id", "split", "speaker", "text", "emotion"):
        if not isinstance(rec[key], str):
            raise CorpusError(f"field {key!r} must be a string", lineno)
    return rec


def read_corpus(lines: Iterable[str], manifest: DatasetManifest, *, check_sizes: bool = True) -> Corpus:
    """Build a validated corpus from line-delimited utterance records."""
    labels = set(manifest.label_set)
    datasets = {manifest.dataset_id, *manifest.sources}
    speakers = set(manifest.speaker_set)
    convs: dict[tuple[str, str], dict] = {}
    order: list[tuple[str, str]] = []

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        rec = _parse_record(line, lineno)
        if rec["dataset"] not in datasets:
            raise CorpusError(f"dataset {rec['dataset']!r} does not match manifest {manifest.dataset_id!r}", lineno)
        if rec["split"] not in SPLITS:
            raise CorpusError(f"unknown split {rec['split']!r}", lineno)
        if not rec["emotion"]:
            raise CorpusError("missing emotion label", lineno)
        if rec["emotion"] not in labels:
            raise CorpusError(f"label {rec['emotion']!r} not in label set of {manifest.dataset_id}", lineno)
        if speakers and rec["speaker"] not in speakers:
            raise CorpusError(f"speaker {rec['speaker']!r} not in speaker set of {manifest.dataset_id}", lineno)
        if not rec["text"].strip():
            raise CorpusError("empty utterance text", lineno)

        key = (rec["dataset"], rec["conv_id"])
        slot = convs.get(key)
        if slot is None:
            slot = convs[key] = {"split": rec["split"], "utts": []}
            order.append(key)
        elif slot["split"] != rec["split"]:
            raise CorpusError(f"conversation {rec['conv_id']!r} spans splits", lineno)
        expected = len(slot["utts"])
        if rec["index"] < expected:
            raise CorpusError(f"duplicate (conv_id, index) = ({rec['conv_id']!r}, {rec['index']})", lineno)
        if rec["index"] != expected:
            raise CorpusError(
                f"conversation {rec['conv_id']!r}: expected index {expected}, got {rec['index']}", lineno
            )
        slot["utts"].append(Utterance(rec["conv_id"], rec["index"], rec["speaker"], rec["text"], rec["emotion"]))

    conversations = []
    for ds, cid in order:
        slot = convs[(ds, cid)]
        conv = Conversation(cid, ds, slot["split"], tuple(slot["utts"]))
        if manifest.dialogue and len(conv.speakers) < 2:
            log.warning("%s/%s has a single speaker", ds, cid)
        conversations.append(conv)

    corpus = Corpus(manifest, tuple(conversations))
    if check_sizes:
        verify_split_sizes(corpus)
    return corpus


def ingest(path: str | os.PathLike, manifest: DatasetManifest, *, check_sizes: bool = True) -> Corpus:
    with open_text(path) as fh:
        return read_corpus(fh, manifest, check_sizes=check_sizes)


def verify_split_sizes(corpus: Corpus) -> None:
    declared = corpus.manifest.split_sizes
    if not declared or not corpus.conversations:
        return
    actual = stats(corpus)
    for split, sizes in declared.items():
        got = actual.get(split, SplitStats(0, 0, {}))
        if sizes.get("conversations", got.conversations) != got.conversations or sizes.get(
            "utterances", got.utterances
        ) != got.utterances:
            raise CorpusError(
                f"{corpus.manifest.dataset_id}/{split}: manifest declares {dict(sizes)}, "
                f"found {got.conversations} conversations / {got.utterances} utterances"
            )


def iter_records(corpus: Corpus) -> Iterator[dict]:
    for conv, u in corpus.iter_utterances():
        yield {
            "dataset": conv.dataset_id,
            "conv_id": conv.id,
            "split": conv.split,
            "index": u.index,
            "speaker": u.speaker,
            "text": u.text,
            "emotion": u.emotion,
        }


def write_corpus(corpus: Corpus, path: str | os.PathLike, *, provenance: dict | None = None) -> None:
    with open_text(path, "w") as fh:
        for rec in iter_records(corpus):
            if provenance:
                rec.update(provenance)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def stats(corpus: Corpus) -> dict[str, SplitStats]:
    """Per-split conversation / utterance / class counts."""
    out = {}
    for split in SPLITS:
        convs = [c for c in corpus.conversations if c.split == split]
        counts = {label: 0 for label in corpus.manifest.label_set}
        n = 0
        for c in convs:
            for u in c.utterances:
                counts[u.emotion] = counts.get(u.emotion, 0) + 1
                n += 1
        out[split] = SplitStats(len(convs), n, counts)
    return out


def stats_table(corpus: Corpus) -> list[dict]:
    rows = []
    for split, st in stats(corpus).items():
        rows.append(
            {
                "dataset": corpus.manifest.dataset_id,
                "split": split,
                "conversations": st.conversations,
                "utterances": st.utterances,
                "classes": corpus.manifest.num_classes,
                "avg_utt": f"{st.avg_utt:.2f}",
            }
        )
    return rows
