"""History windows and prompt assembly for the main task and both auxiliary tasks."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol, Sequence

from .corpus import Conversation, Utterance, open_text

MAIN = "main"
SPEAKER_ID = "speaker_id"
EMOTION_IMPACT = "emotion_impact"
TASKS = (MAIN, SPEAKER_ID, EMOTION_IMPACT)

DEFAULT_WINDOW = 12
WINDOW_GRID = (1, 5, 12, 20)

ROLE = "Now you are an expert of sentiment and emotional analysis."
MAIN_INSTRUCTION = ROLE + " The following conversation noted between '### ###' involves several speakers."
MAIN_STATEMENT = 'Please select the emotional label of <{speaker}: "{text}"> from <{labels}>:'
SPEAKER_INSTRUCTION = ROLE + ' Please select the Speaker label of the utterance <Speaker: "{text}"> from <{candidates}>:'
IMPACT_STATEMENT = (
    "Based on the above historical utterances, the next utterance is spoken by <{speaker}>, "
    "please predict the emotion states of <{speaker}> from <{labels}>:"
)
DEMO_HEADER = "Here is a similar example:"
HISTORY_FENCE = "###"


class SkippedFirstTurn(Exception):
    """The first utterance has no history; its impact-prediction sample is dropped."""


class Demonstration(Protocol):
    text: str
    label: str


@dataclass(frozen=True)
class WindowSpec:
    w: int = DEFAULT_WINDOW
    include_current: bool = True

    def __post_init__(self):
        if self.w < 1:
            raise ValueError(f"history window must be >= 1, got {self.w}")


@dataclass(frozen=True)
class PromptSample:
    task: str
    input_text: str
    target_text: str
    loss_weight: float = 1.0
    meta: dict = field(default_factory=dict, compare=True, hash=False)

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "input": self.input_text,
            "output": self.target_text,
            "weight": self.loss_weight,
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> PromptSample:
        if rec["task"] not in TASKS:
            raise ValueError(f"unknown task {rec['task']!r}")
        return cls(rec["task"], rec["input"], rec["output"], float(rec["weight"]), dict(rec.get("meta", {})))

    @property
    def address(self) -> tuple[str, str, int]:
        return (self.meta["dataset_id"], self.meta["conv_id"], self.meta["index"])


@dataclass(frozen=True)
class MainPromptParts:
    """The four rendered parts of a main-task prompt; ``text`` is their plain concatenation."""

    instruction: str
    history: str
    label_statement: str
    demonstration: str = ""

    @property
    def text(self) -> str:
        return self.instruction + self.history + self.label_statement + self.demonstration


def speaker_tag(speaker: str) -> str:
    return f"Speaker_{speaker}"


def format_line(utt: Utterance) -> str:
    return f'{speaker_tag(utt.speaker)}: "{utt.text}"'


def format_labels(labels: Sequence[str]) -> str:
    return ", ".join(labels)


def extract_history(conversation: Conversation, index: int, spec: WindowSpec) -> tuple[Utterance, ...]:
    n = len(conversation.utterances)
    if not 0 <= index < n:
        raise IndexError(f"utterance index {index} outside conversation of length {n}")
    end = index + 1 if spec.include_current else index
    start = max(0, end - spec.w)
    return conversation.utterances[start:end]


def render_history(utts: Iterable[Utterance]) -> str:
    lines = [HISTORY_FENCE, *(format_line(u) for u in utts), HISTORY_FENCE]
    return "\n".join(lines) + "\n"


def render_demonstration(demo: Demonstration | None) -> str:
    if demo is None:
        return ""
    return f"{DEMO_HEADER}\n{demo.text}\n{demo.label}\n"


def _meta(conversation: Conversation, utt: Utterance, **extra) -> dict:
    meta = {
        "dataset_id": conversation.dataset_id,
        "conv_id": conversation.id,
        "index": utt.index,
        "gold": utt.emotion,
    }
    meta.update(extra)
    return meta


def main_prompt_parts(
    conversation: Conversation,
    index: int,
    spec: WindowSpec,
    label_set: Sequence[str],
    demo: Demonstration | None = None,
) -> MainPromptParts:
    if not label_set:
        raise ValueError("label set is empty")
    utt = conversation.utterances[index]
    history = extract_history(conversation, index, WindowSpec(spec.w, include_current=True))
    statement = MAIN_STATEMENT.format(speaker=speaker_tag(utt.speaker), text=utt.text, labels=format_labels(label_set))
    return MainPromptParts(MAIN_INSTRUCTION + "\n", render_history(history), statement + "\n", render_demonstration(demo))


def build_main_prompt(
    conversation: Conversation,
    index: int,
    spec: WindowSpec,
    demo: Demonstration | None,
    label_set: Sequence[str],
) -> PromptSample:
    parts = main_prompt_parts(conversation, index, spec, label_set, demo)
    utt = conversation.utterances[index]
    extra = {}
    if demo is not None and getattr(demo, "id", None) is not None:
        extra["demo_id"] = demo.id
    return PromptSample(MAIN, parts.text, utt.emotion, 1.0, _meta(conversation, utt, **extra))


def build_speaker_prompt(
    utterance: Utterance,
    speaker_set: Sequence[str],
    *,
    conversation: Conversation | None = None,
    speaker_label: str | None = None,
) -> PromptSample:
    """Context-free speaker identification sample.

    ``speaker_label`` overrides the gold target (e.g. a global id when the
    candidate list is a unified registry).
    """
    target = speaker_label if speaker_label is not None else utterance.speaker
    if target not in speaker_set:
        raise ValueError(f"speaker {target!r} not among candidates")
    text = SPEAKER_INSTRUCTION.format(text=utterance.text, candidates=format_labels(speaker_set))
    if conversation is not None:
        meta = _meta(conversation, utterance)
    else:
        meta = {"conv_id": utterance.conv_id, "index": utterance.index, "gold": utterance.emotion}
    return PromptSample(SPEAKER_ID, text, target, 1.0, meta)


def build_impact_prompt(
    conversation: Conversation,
    index: int,
    spec: WindowSpec,
    label_set: Sequence[str],
    alpha: float = 0.1,
) -> PromptSample:
    if index == 0:
        raise SkippedFirstTurn(f"{conversation.id}#0")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    utt = conversation.utterances[index]
    history = extract_history(conversation, index, WindowSpec(spec.w, include_current=False))
    statement = IMPACT_STATEMENT.format(speaker=speaker_tag(utt.speaker), labels=format_labels(label_set))
    text = MAIN_INSTRUCTION + "\n" + render_history(history) + statement + "\n"
    return PromptSample(EMOTION_IMPACT, text, utt.emotion, alpha, _meta(conversation, utt))


def write_samples(samples: Iterable[PromptSample], path: str | os.PathLike, *, provenance: dict | None = None) -> None:
    with open_text(path, "w") as fh:
        for s in samples:
            rec = s.to_record()
            if provenance:
                rec["meta"] = {**rec["meta"], **provenance}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_samples(path: str | os.PathLike) -> Iterator[PromptSample]:
    with open_text(path) as fh:
        for line in fh:
            if line.strip():
                yield PromptSample.from_record(json.loads(line))
