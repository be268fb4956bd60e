"""Two-stage training files and inference prompt sets.

Stage 1 holds only speaker-identification samples. Stage 2 holds one main
sample (weight 1.0) per utterance plus one emotion-impact sample (weight
alpha) per non-initial utterance, so a trainer minimising the weighted
per-record loss optimises ``L_main + alpha * L_e``.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from typing import Collection, Iterable

from .corpus import Corpus, address, open_text
from .prompt import (
    EMOTION_IMPACT,
    MAIN,
    SPEAKER_ID,
    PromptSample,
    WindowSpec,
    build_impact_prompt,
    build_main_prompt,
    build_speaker_prompt,
    read_samples,
    write_samples,
)
from .retrieval import ALL_LABELS, SAME_LABEL, RetrievalIndex
from .unify import SpeakerRegistry

DEFAULT_ALPHA = 0.1
ALPHA_GRID = (0.0, 0.05, 0.1, 0.2)


@dataclass
class StageExport:
    stage: int
    records: list[PromptSample]
    alpha: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = {1: {SPEAKER_ID}, 2: {MAIN, EMOTION_IMPACT}}[self.stage]
        bad = {r.task for r in self.records} - allowed
        if bad:
            raise ValueError(f"stage {self.stage} cannot hold {sorted(bad)} samples")

    def write(self, path: str | os.PathLike, *, provenance: dict | None = None) -> None:
        write_samples(self.records, path, provenance=provenance)

    @classmethod
    def read(cls, path: str | os.PathLike, stage: int) -> StageExport:
        records = list(read_samples(path))
        alpha = next((r.loss_weight for r in records if r.task == EMOTION_IMPACT), None)
        return cls(stage, records, alpha)


def _in_subset(restrict: Collection | None, addr) -> bool:
    return restrict is None or addr in restrict


def _demonstrations(index: RetrievalIndex | None, targets, pairing: str, use_gold: bool) -> list:
    if index is None:
        return [None] * len(targets)
    return index.retrieve_many(
        [u.text for _, u in targets],
        pairing,
        golds=[u.emotion if use_gold else None for _, u in targets],
        excludes=[address(conv, u) for conv, u in targets],
    )


def export_stage1(
    corpus: Corpus,
    registry: SpeakerRegistry | None = None,
    *,
    seed: int = 0,
    split: str | None = "train",
    restrict: Collection | None = None,
) -> StageExport:
    """One speaker-identification sample per utterance.

    Candidates are the corpus manifest's speakers; for a unified corpus those
    are already the registry's global ids.
    """
    if split is not None:
        corpus = corpus.split(split)
    # a unified corpus already carries global ids; a single corpus is relabelled on request
    relabel = registry is not None and not corpus.manifest.sources
    candidates = registry.labels if relabel else corpus.manifest.speaker_set
    records = []
    for conv, u in corpus.iter_utterances():
        if not _in_subset(restrict, address(conv, u)):
            continue
        label = registry.label(conv.dataset_id, u.speaker) if relabel else None
        records.append(build_speaker_prompt(u, candidates, conversation=conv, speaker_label=label))
    random.Random(f"{seed}:stage1").shuffle(records)
    return StageExport(1, records)


def export_stage2(
    corpus: Corpus,
    spec: WindowSpec,
    index: RetrievalIndex | None,
    alpha: float = DEFAULT_ALPHA,
    *,
    seed: int = 0,
    pairing: str = SAME_LABEL,
    split: str | None = "train",
    restrict: Collection | None = None,
) -> StageExport:
    """Main + emotion-impact samples; ``index=None`` drops the demonstration block."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if split is not None:
        corpus = corpus.split(split)
    labels = corpus.manifest.label_set
    targets = [(conv, u) for conv, u in corpus.iter_utterances() if _in_subset(restrict, address(conv, u))]
    demos = _demonstrations(index, targets, pairing, use_gold=True)
    records = []
    for (conv, u), demo in zip(targets, demos):
        records.append(build_main_prompt(conv, u.index, spec, demo, labels))
        if u.index > 0:
            records.append(build_impact_prompt(conv, u.index, spec, labels, alpha))
    random.Random(f"{seed}:stage2").shuffle(records)
    return StageExport(2, records, alpha)


def build_inference_prompts(
    corpus: Corpus,
    spec: WindowSpec,
    index: RetrievalIndex | None,
    *,
    pairing: str = ALL_LABELS,
    split: str | None = "test",
) -> list[PromptSample]:
    """Main-task prompts in corpus order; gold labels stay in meta for scoring only."""
    if split is not None:
        corpus = corpus.split(split)
    labels = corpus.manifest.label_set
    targets = list(corpus.iter_utterances())
    demos = _demonstrations(index, targets, pairing, use_gold=pairing == SAME_LABEL)
    return [build_main_prompt(conv, u.index, spec, demo, labels) for (conv, u), demo in zip(targets, demos)]


def task_weight_multiset(records: Iterable[PromptSample]) -> dict[tuple[str, float], int]:
    out: dict[tuple[str, float], int] = {}
    for r in records:
        key = (r.task, r.loss_weight)
        out[key] = out.get(key, 0) + 1
    return out


def write_json(path, obj) -> None:
    with open_text(path, "w") as fh:
        fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
