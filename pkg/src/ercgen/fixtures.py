"""Synthetic benchmark fixtures matching the benchmark split sizes.

Texts are templated; only the counts (conversations / utterances per split,
label inventory, speaker structure) mirror the real benchmarks.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

from .corpus import DatasetManifest, ingest

# dataset -> split -> (conversations, utterances)
BENCHMARK_SIZES = {
    "IEMOCAP": {"train": (108, 5163), "val": (12, 647), "test": (31, 1623)},
    "MELD": {"train": (1038, 9989), "val": (114, 1109), "test": (280, 2610)},
    "EmoryNLP": {"train": (713, 9934), "val": (99, 1344), "test": (85, 1328)},
}
MINI_SIZES = {
    "IEMOCAP": {"train": (2, 16), "test": (2, 20)},
    "MELD": {"train": (3, 18), "test": (4, 20)},
    "EmoryNLP": {"train": (3, 18), "test": (3, 20)},
}

LABELS = {
    "IEMOCAP": ("happy", "sad", "neutral", "angry", "excited", "scared"),
    "MELD": ("joyful", "sad", "neutral", "angry", "surprise", "fear", "disgust"),
    "EmoryNLP": ("joyful", "sad", "neutral", "mad", "powerful", "frustrated", "peaceful"),
}
LABEL_WEIGHTS = {
    "IEMOCAP": (0.09, 0.15, 0.24, 0.17, 0.14, 0.21),
    "MELD": (0.17, 0.07, 0.47, 0.11, 0.12, 0.03, 0.03),
    "EmoryNLP": (0.22, 0.07, 0.30, 0.11, 0.07, 0.13, 0.10),
}
_FRIENDS = ("Joey", "Chandler", "Ross", "Rachel", "Monica", "Phoebe")
SPEAKERS = {
    "IEMOCAP": tuple(f"Ses0{s}{g}" for s in range(1, 6) for g in "FM"),
    "MELD": _FRIENDS + ("Gunther", "Janice", "Mike", "Emily", "Carol", "Richard", "Tag", "Mona"),
    "EmoryNLP": _FRIENDS + ("Ben", "Susan", "Paolo", "Julie", "Pete", "Kathy", "Barry"),
}

# fixture label -> phrase family
_FAMILY = {
    "happy": "joyful", "joyful": "joyful", "sad": "sad", "neutral": "neutral", "angry": "mad", "mad": "mad",
    "excited": "excited", "surprise": "powerful", "powerful": "powerful", "scared": "fear", "fear": "fear",
    "frustrated": "fear", "peaceful": "peaceful", "disgust": "disgust",
}
_PHRASES = {
    "joyful": ["I am so happy for you", "this is great news", "I love this place", "that was so much fun",
               "we had a wonderful time", "you always make me laugh"],
    "sad": ["I miss her so much", "I am sorry it ended like this", "it hurts to think about it",
            "I feel lonely tonight", "we lost everything", "I could cry right now"],
    "neutral": ["I will pick up the groceries later", "the meeting is at three", "can you pass me the remote",
                "we should check the schedule", "I think the bus leaves at noon", "let me get my coat"],
    "mad": ["I hate when you do that", "this is ridiculous", "shut up and listen to me",
            "that was a stupid idea", "I am so angry with you", "you are being annoying"],
    "excited": ["I cannot wait for tomorrow", "wow look at this", "this is amazing", "we are finally going",
                "that is incredible news", "I am so excited"],
    "powerful": ["what are you doing here", "really you did that", "seriously you got the job",
                 "whoa I did not expect that", "I am proud of what we built", "I feel confident about this"],
    "fear": ["I am scared of the dark", "I am worried about the test", "please help me with this",
             "I am nervous about the interview", "I am so frustrated with this form", "I am terrified of heights"],
    "peaceful": ["let us just relax for a bit", "it is so calm out here", "thanks for being here",
                 "this is a nice quiet evening", "I need some rest", "that sounds gentle enough"],
    "disgust": ["eww that is gross", "this food is disgusting", "that smell is nasty",
                "yuck get it away from me", "that makes me sick", "what a nasty thing to say"],
}
_OPENERS = ["", "", "", "well, ", "you know, ", "honestly, ", "oh, ", "listen, ", "hey, ", "look, "]
_TOPICS = ["the apartment", "the wedding", "the coffee house", "the museum", "the trip", "your sister",
           "the audition", "the party", "the new job", "the dinner", "the game", "the baby", "the car",
           "the letter", "the interview", "the holidays", "the neighbours", "the movie"]
_TAILS = ["", "", " today", " again", " right now", " I think", " to be honest", " for sure"]


def _lengths(rng: random.Random, n_conv: int, n_utt: int, minimum: int = 2) -> list[int]:
    lengths = [minimum] * n_conv
    weights = [rng.gammavariate(2.0, 1.0) for _ in range(n_conv)]
    for i in rng.choices(range(n_conv), weights=weights, k=n_utt - minimum * n_conv):
        lengths[i] += 1
    return lengths


def _text(rng: random.Random, label: str, names: list[str]) -> str:
    family = _FAMILY[label]
    # a third of utterances carry a phrase from an unrelated family, so keyword rules stay imperfect
    if rng.random() < 0.33:
        family = rng.choice(sorted(_PHRASES))
    core = rng.choice(_PHRASES[family])
    text = rng.choice(_OPENERS) + core
    if rng.random() < 0.5:
        text += " about " + rng.choice(_TOPICS)
    text += rng.choice(_TAILS)
    if names and rng.random() < 0.15:
        text = f"{rng.choice(names)}, {text}"
    return text[0].upper() + text[1:] + rng.choice([".", ".", "!", "?"])


def _speaker_pool(dataset_id: str, split: str) -> tuple[str, ...]:
    if dataset_id == "IEMOCAP":
        # sessions 1-4 for training/validation, session 5 held out
        return SPEAKERS["IEMOCAP"][8:] if split == "test" else SPEAKERS["IEMOCAP"][:8]
    return SPEAKERS[dataset_id]


def generate_records(dataset_id: str, sizes: dict, seed: int = 0, cover_labels: bool = False) -> list[dict]:
    rng = random.Random(f"fixture:{dataset_id}:{seed}")
    labels, weights = LABELS[dataset_id], LABEL_WEIGHTS[dataset_id]
    records = []
    for split in ("train", "val", "test"):
        if split not in sizes:
            continue
        n_conv, n_utt = sizes[split]
        pool = _speaker_pool(dataset_id, split)
        cover = []
        if cover_labels:
            # every label at least twice, so a same-label partner always exists
            cover = list(labels) * 2
            rng.shuffle(cover)
        for c, length in enumerate(_lengths(rng, n_conv, n_utt)):
            conv_id = f"{dataset_id}-{split}-{c:04d}"
            if dataset_id == "IEMOCAP":
                session = rng.randrange(len(pool) // 2)
                cast = [pool[2 * session], pool[2 * session + 1]]
            else:
                cast = rng.sample(pool, rng.choice([2, 2, 3, 3, 4]))
            label = rng.choices(labels, weights)[0]
            for i in range(length):
                speaker = cast[i % 2] if i < 2 or rng.random() < 0.6 and len(cast) == 2 else rng.choice(cast)
                if cover:
                    label = cover.pop(0)
                elif rng.random() > 0.5:
                    label = rng.choices(labels, weights)[0]
                others = [s for s in cast if s != speaker] if dataset_id != "IEMOCAP" else []
                records.append(
                    {
                        "dataset": dataset_id,
                        "conv_id": conv_id,
                        "split": split,
                        "index": i,
                        "speaker": speaker,
                        "text": _text(rng, label, others),
                        "emotion": label,
                    }
                )
    return records


def manifest_for(dataset_id: str, sizes: dict | None = None) -> DatasetManifest:
    sizes = BENCHMARK_SIZES[dataset_id] if sizes is None else sizes
    return DatasetManifest(
        dataset_id=dataset_id,
        label_set=LABELS[dataset_id],
        speaker_set=SPEAKERS[dataset_id],
        split_sizes={s: {"conversations": c, "utterances": u} for s, (c, u) in sizes.items()},
    )


def fixture_dir() -> Path:
    return Path(str(resources.files("ercgen.data").joinpath("fixtures")))


def corpus_path(dataset_id: str, mini: bool = False) -> Path:
    return fixture_dir() / f"{'mini_' if mini else ''}{dataset_id.lower()}.jsonl.gz"


def manifest_path(dataset_id: str, mini: bool = False) -> Path:
    return fixture_dir() / f"{'mini_' if mini else ''}{dataset_id.lower()}.manifest.json"


def load(dataset_id: str, mini: bool = False):
    return ingest(corpus_path(dataset_id, mini), DatasetManifest.load(manifest_path(dataset_id, mini)))
