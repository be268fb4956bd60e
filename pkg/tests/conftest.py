import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ercgen import fixtures  # noqa: E402
from ercgen.corpus import Conversation, Corpus, DatasetManifest, Utterance  # noqa: E402
from ercgen.unify import unify_corpus  # noqa: E402

BENCH = ("IEMOCAP", "MELD", "EmoryNLP")
REPO = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def full_corpora():
    return [fixtures.load(ds) for ds in BENCH]


@pytest.fixture(scope="session")
def mini_corpora():
    return [fixtures.load(ds, mini=True) for ds in BENCH]


@pytest.fixture(scope="session")
def unified_full(full_corpora):
    return unify_corpus(full_corpora)


@pytest.fixture(scope="session")
def unified_mini(mini_corpora):
    return unify_corpus(mini_corpora)


def make_corpus(lengths, labels=("a", "b", "c"), speakers=("X", "Y"), dataset="T", split="train", texts=None, emotions=None):
    """Small hand-built corpus: one conversation per entry of ``lengths``."""
    manifest = DatasetManifest(dataset, tuple(labels), tuple(speakers))
    convs = []
    k = 0
    for c, n in enumerate(lengths):
        utts = []
        for i in range(n):
            text = texts[k] if texts else f"utterance {c} {i}"
            utts.append(Utterance(f"c{c}", i, speakers[i % len(speakers)], text, emotions[k] if emotions else labels[k % len(labels)]))
            k += 1
        convs.append(Conversation(f"c{c}", dataset, split, tuple(utts)))
    return Corpus(manifest, tuple(convs))



def pooled_corpus(sizes: dict[str, int]) -> Corpus:
    """One conversation per dataset holding ``n`` utterances; only addresses matter for mixing."""
    convs = []
    for ds, n in sizes.items():
        utts = tuple(Utterance("c", i, "s", "t", "x") for i in range(n))
        convs.append(Conversation("c", ds, "train", utts))
    return Corpus(DatasetManifest("U", ("x",), ("s",), sources=tuple(sizes)), tuple(convs))


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
