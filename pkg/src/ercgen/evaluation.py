"""Free-text completion parsing and weighted-F1 scoring."""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass, field
from typing import Sequence

from .backend import BackendConfig, BackendError, generate_many, make_backend
from .corpus import open_text
from .prompt import PromptSample


class _Unparseable:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "UNPARSEABLE"

    def __reduce__(self):
        return (_Unparseable, ())


UNPARSEABLE = _Unparseable()

_PUNCT = string.punctuation + string.whitespace + "“”‘’«»"


def normalize_completion(text: str) -> str:
    text = text.strip().lower()
    first = text.split("\n", 1)[0] if text else ""
    return first.strip(_PUNCT)


def parse_prediction(text: str, label_set: Sequence[str]):
    """Map a completion onto ``label_set``; returns ``UNPARSEABLE`` when ambiguous or empty.

    Exact (normalized) match first; otherwise the labels occurring as
    substrings, after dropping any that sit inside another match, must reduce
    to exactly one.
    """
    if not label_set:
        raise ValueError("label set is empty")
    norm = normalize_completion(text)
    lowered = {lab.lower(): lab for lab in label_set}
    if norm in lowered:
        return lowered[norm]
    hits = [lab for lab in lowered if lab and lab in norm]
    hits = [h for h in hits if not any(h != o and h in o for o in hits)]
    if len(hits) == 1:
        return lowered[hits[0]]
    return UNPARSEABLE


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_class: dict[str, ClassScore]
    weighted_f1: float
    n: int
    unparseable_count: int = 0
    accuracy: float = 0.0
    per_dataset: dict[str, EvalReport] = field(default_factory=dict)

    @property
    def unparseable_fraction(self) -> float:
        return self.unparseable_count / self.n if self.n else 0.0

    def to_json(self) -> dict:
        out = {
            "weighted_f1": self.weighted_f1,
            "accuracy": self.accuracy,
            "n": self.n,
            "unparseable_count": self.unparseable_count,
            "per_class": [
                {"label": lab, "precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support}
                for lab, s in self.per_class.items()
            ],
        }
        if self.per_dataset:
            out["per_dataset"] = {k: v.to_json() for k, v in self.per_dataset.items()}
        return out

    def render(self, title: str = "") -> str:
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'label':<14}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}")
        for lab, s in self.per_class.items():
            lines.append(f"{lab:<14}{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}{s.support:>9d}")
        lines.append(f"{'weighted':<14}{'':>10}{'':>10}{self.weighted_f1:>10.4f}{self.n:>9d}")
        lines.append(f"W-F1 {100 * self.weighted_f1:.2f}  accuracy {100 * self.accuracy:.2f}  unparseable {self.unparseable_count}")
        for ds, rep in self.per_dataset.items():
            lines.append("")
            lines.append(rep.render(f"[{ds}]"))
        return "\n".join(lines)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def weighted_f1(gold: Sequence[str], pred: Sequence, labels: Sequence[str] | None = None) -> EvalReport:
    """Support-weighted F1. ``UNPARSEABLE`` predictions are always wrong and never a false positive."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    if labels is None:
        labels = sorted({*gold, *(p for p in pred if p is not UNPARSEABLE)})
    tp = {lab: 0 for lab in labels}
    fp = dict(tp)
    support = dict(tp)
    unparseable = 0
    for g, p in zip(gold, pred):
        if g not in support:
            raise ValueError(f"gold label {g!r} outside the label set")
        support[g] += 1
        if p is UNPARSEABLE:
            unparseable += 1
        elif p == g:
            tp[g] += 1
        elif p in fp:
            fp[p] += 1
    n = len(gold)
    per_class = {}
    total = 0.0
    for lab in labels:
        prec = tp[lab] / (tp[lab] + fp[lab]) if tp[lab] + fp[lab] else 0.0
        rec = tp[lab] / support[lab] if support[lab] else 0.0
        f = _f1(prec, rec)
        per_class[lab] = ClassScore(prec, rec, f, support[lab])
        total += support[lab] * f
    return EvalReport(
        per_class=per_class,
        weighted_f1=total / n if n else 0.0,
        n=n,
        unparseable_count=unparseable,
        accuracy=sum(tp.values()) / n if n else 0.0,
    )


class EvalAborted(RuntimeError):
    def __init__(self, cause: BackendError, completed: int, checkpoint):
        self.cause = cause
        self.completed = completed
        self.checkpoint = checkpoint
        super().__init__(f"{cause}; {completed} completions checkpointed to {checkpoint}")


def _key(sample: PromptSample) -> str:
    m = sample.meta
    return f"{m.get('dataset_id')}\t{m.get('conv_id')}\t{m.get('index')}"


def load_checkpoint(path) -> dict[str, str]:
    done: dict[str, str] = {}
    if path is None or not os.path.exists(path):
        return done
    with open_text(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                done[rec["key"]] = rec["completion"]
    return done


def run_inference(
    samples: Sequence[PromptSample],
    config: BackendConfig,
    *,
    backend=None,
    checkpoint: str | os.PathLike | None = None,
) -> list[str]:
    """Generate a completion per sample, resuming from and appending to ``checkpoint``."""
    done = load_checkpoint(checkpoint)
    todo = [i for i, s in enumerate(samples) if _key(s) not in done]
    fh = open(checkpoint, "a", encoding="utf-8") if checkpoint is not None else None

    def record(j: int, text: str) -> None:
        s = samples[todo[j]]
        done[_key(s)] = text
        if fh is not None:
            fh.write(json.dumps({"key": _key(s), "completion": text}, ensure_ascii=False) + "\n")
            fh.flush()

    try:
        generate_many([samples[i] for i in todo], config, backend=backend or make_backend(config), on_result=record)
    except BackendError as exc:
        raise EvalAborted(exc, len(done), checkpoint) from exc
    finally:
        if fh is not None:
            fh.close()
    return [done[_key(s)] for s in samples]


def score(samples: Sequence[PromptSample], completions: Sequence[str], label_set: Sequence[str]) -> EvalReport:
    preds = [parse_prediction(c, label_set) for c in completions]
    gold = [s.meta["gold"] for s in samples]
    report = weighted_f1(gold, preds, label_set)
    datasets = sorted({s.meta.get("dataset_id") for s in samples})
    if len(datasets) > 1:
        for ds in datasets:
            idx = [i for i, s in enumerate(samples) if s.meta.get("dataset_id") == ds]
            report.per_dataset[ds] = weighted_f1([gold[i] for i in idx], [preds[i] for i in idx], label_set)
    return report


def evaluate_run(
    samples: Sequence[PromptSample],
    config: BackendConfig,
    label_set: Sequence[str],
    *,
    backend=None,
    checkpoint=None,
) -> EvalReport:
    completions = run_inference(samples, config, backend=backend, checkpoint=checkpoint)
    return score(samples, completions, label_set)
