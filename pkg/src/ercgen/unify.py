"""Unified label space across benchmarks and one-hot speaker renumbering."""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .corpus import Conversation, Corpus, DatasetManifest, Utterance

log = logging.getLogger(__name__)

UNIFIED_ID = "UIME"
UNIFIED_LABELS = ("joyful", "sad", "neutral", "mad", "excited", "powerful", "fear", "peaceful", "disgust")
BENCHMARKS = ("IEMOCAP", "MELD", "EmoryNLP")

# sha256 over the canonical benchmark rows of the shipped mapping table
MAPPING_DIGEST = "75d37022cd6ad05bcf987d62543d56bf12a1817fdea03478f1588c9537f7fef0"


class UnknownLabel(LookupError):
    """No unified label exists for a (dataset, source label) pair."""


class MappingIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class LabelMapping:
    rows: dict[tuple[str, str], str]
    unified_set: tuple[str, ...] = UNIFIED_LABELS

    def __post_init__(self):
        bad = {v for v in self.rows.values() if v not in self.unified_set}
        if bad:
            raise MappingIntegrityError(f"unified labels outside the unified set: {sorted(bad)}")

    def map(self, dataset_id: str, source_label: str) -> str:
        try:
            return self.rows[(dataset_id, source_label)]
        except KeyError:
            raise UnknownLabel(f"{dataset_id}: no unified label for {source_label!r}") from None

    def source_labels(self, dataset_id: str) -> list[str]:
        return [src for (ds, src) in self.rows if ds == dataset_id]

    def check_manifest(self, manifest: DatasetManifest) -> list[str]:
        """Manifest labels without a mapping row (warned, not fatal)."""
        missing = [lab for lab in manifest.label_set if (manifest.dataset_id, lab) not in self.rows]
        for lab in missing:
            log.warning("%s label %r has no unified mapping row", manifest.dataset_id, lab)
        return missing


def canonical_digest(rows: dict[tuple[str, str], str], datasets: Iterable[str] = BENCHMARKS) -> str:
    keep = set(datasets)
    lines = sorted(f"{ds}\t{src}\t{uni}\n" for (ds, src), uni in rows.items() if ds in keep)
    return hashlib.sha256("".join(lines).encode("utf-8")).hexdigest()


def load_mapping(path: str | os.PathLike | None = None, *, verify: bool = True) -> LabelMapping:
    """Read the mapping table; extra datasets are allowed, benchmark rows must be untouched."""
    if path is None:
        text = resources.files("ercgen.data").joinpath("label_mapping.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows: dict[tuple[str, str], str] = {}
    for rec in csv.DictReader(text.splitlines(), delimiter="\t"):
        key = (rec["dataset_id"], rec["source_label"])
        if key in rows:
            raise MappingIntegrityError(f"duplicate mapping row {key}")
        rows[key] = rec["unified_label"]
    if verify and canonical_digest(rows) != MAPPING_DIGEST:
        raise MappingIntegrityError("benchmark rows of the mapping table do not match the reference table")
    return LabelMapping(rows)


_DEFAULT: LabelMapping | None = None


def default_mapping() -> LabelMapping:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_mapping()
    return _DEFAULT


def map_emotion(dataset_id: str, source_label: str, mapping: LabelMapping | None = None) -> str:
    return (mapping or default_mapping()).map(dataset_id, source_label)


@dataclass(frozen=True)
class SpeakerRegistry:
    ids: dict[str, dict[str, int]]
    ranges: dict[str, tuple[int, int]]  # dataset -> (start, length)

    def global_id(self, dataset_id: str, speaker: str) -> int:
        return self.ids[dataset_id][speaker]

    def label(self, dataset_id: str, speaker: str) -> str:
        return str(self.ids[dataset_id][speaker])

    @property
    def size(self) -> int:
        return sum(n for _, n in self.ranges.values())

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(str(i) for i in range(1, self.size + 1))

    @property
    def names(self) -> set[str]:
        return {name for m in self.ids.values() for name in m}

    def rows(self) -> list[tuple[str, str, int]]:
        out = []
        for ds, m in self.ids.items():
            out.extend((ds, name, gid) for name, gid in m.items())
        return sorted(out, key=lambda r: r[2])

    def dump(self, path: str | os.PathLike, *, comment: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write("dataset_id\tspeaker_name\tglobal_id\n")
            for ds, name, gid in self.rows():
                fh.write(f"{ds}\t{name}\t{gid}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> SpeakerRegistry:
        ids: dict[str, dict[str, int]] = {}
        with open(path, encoding="utf-8") as fh:
            for rec in csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter="\t"):
                ids.setdefault(rec["dataset_id"], {})[rec["speaker_name"]] = int(rec["global_id"])
        ranges = {ds: (min(m.values()), len(m)) for ds, m in ids.items()}
        return cls(ids, ranges)


def build_registry(manifests: Sequence[DatasetManifest]) -> SpeakerRegistry:
    """Assign consecutive global ids: dataset k occupies n_1+..+n_{k-1}+1 .. n_1+..+n_k."""
    ids: dict[str, dict[str, int]] = {}
    ranges: dict[str, tuple[int, int]] = {}
    next_id = 1
    for m in manifests:
        if m.dataset_id in ids:
            raise ValueError(f"dataset {m.dataset_id!r} listed twice")
        local: dict[str, int] = {}
        for name in m.speaker_set:
            if name in local:
                raise ValueError(f"{m.dataset_id}: duplicate speaker {name!r}")
            local[name] = next_id + len(local)
        ids[m.dataset_id] = local
        ranges[m.dataset_id] = (next_id, len(local))
        next_id += len(local)
    return SpeakerRegistry(ids, ranges)


def unified_manifest(registry: SpeakerRegistry, sources: Sequence[str], mapping: LabelMapping) -> DatasetManifest:
    return DatasetManifest(
        dataset_id=UNIFIED_ID,
        label_set=tuple(mapping.unified_set),
        speaker_set=registry.labels,
        sources=tuple(sources),
    )


def unify_corpus(
    corpora: Sequence[Corpus],
    mapping: LabelMapping | None = None,
    registry: SpeakerRegistry | None = None,
) -> Corpus:
    mapping = mapping or default_mapping()
    if registry is None:
        registry = build_registry([c.manifest for c in corpora])
    sources = [c.manifest.dataset_id for c in corpora]
    conversations = []
    for corpus in corpora:
        mapping.check_manifest(corpus.manifest)
        for conv in corpus.conversations:
            utts = []
            for u in conv.utterances:
                try:
                    label = mapping.map(conv.dataset_id, u.emotion)
                except UnknownLabel as exc:
                    raise UnknownLabel(f"{conv.dataset_id}/{conv.id}#{u.index}: {exc}") from None
                utts.append(Utterance(u.conv_id, u.index, registry.label(conv.dataset_id, u.speaker), u.text, label))
            conversations.append(Conversation(conv.id, conv.dataset_id, conv.split, tuple(utts)))
    return Corpus(unified_manifest(registry, sources, mapping), tuple(conversations))
