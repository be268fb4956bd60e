import random

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import confusion_weighted_f1

from ercgen.backend import BackendConfig, BackendError, HttpBackend
from ercgen.evaluation import (
    UNPARSEABLE,
    EvalAborted,
    load_checkpoint,
    parse_prediction,
    run_inference,
    score,
    weighted_f1,
)
from ercgen.prompt import PromptSample

LABELS = ("joyful", "sad", "neutral", "mad", "excited", "powerful", "fear", "peaceful", "disgust")


@pytest.mark.parametrize(
    "text, expected",
    [
        ("joyful", "joyful"),
        ("  Sad.\n", "sad"),
        ('"Neutral"', "neutral"),
        ("The emotion is mad", "mad"),
        ("excited\nbecause reasons: sad", "excited"),
        ("joyful or sad", UNPARSEABLE),
        ("", UNPARSEABLE),
        ("banana", UNPARSEABLE),
    ],
)
def test_parse_prediction(text, expected):
    assert parse_prediction(text, LABELS) == expected


def test_parse_prefers_longest_nested_label():
    assert parse_prediction("very frustrated", ("frustrated", "rustrated")) == "frustrated"
    with pytest.raises(ValueError):
        parse_prediction("x", ())


def test_hand_case():
    assert weighted_f1(list("aab"), list("abb")).weighted_f1 == pytest.approx(0.6667, abs=1e-4)


def test_perfect_and_per_class():
    rep = weighted_f1(list("abcab"), list("abcab"))
    assert rep.weighted_f1 == 1.0 and rep.accuracy == 1.0
    assert rep.per_class["a"].support == 2


def test_unparseable_is_never_a_false_positive():
    rep = weighted_f1(["a", "b"], ["a", UNPARSEABLE], ["a", "b"])
    assert rep.per_class["a"].precision == 1.0
    assert rep.per_class["b"].recall == 0.0
    assert rep.unparseable_count == 1 and rep.unparseable_fraction == 0.5


def test_length_mismatch_and_unknown_gold():
    with pytest.raises(ValueError):
        weighted_f1(["a"], [])
    with pytest.raises(ValueError):
        weighted_f1(["z"], ["a"], ["a"])


def random_instance(rng: random.Random):
    labels = [f"l{i}" for i in range(rng.randint(1, 6))]
    n = rng.randint(1, 40)
    gold = [rng.choice(labels) for _ in range(n)]
    pred = [UNPARSEABLE if rng.random() < 0.1 else rng.choice(labels) for _ in range(n)]
    return gold, pred, labels


def test_matches_confusion_oracle():
    rng = random.Random(7)
    for _ in range(500):
        gold, pred, labels = random_instance(rng)
        oracle = confusion_weighted_f1(gold, [None if p is UNPARSEABLE else p for p in pred], labels)
        assert abs(weighted_f1(gold, pred, labels).weighted_f1 - oracle) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_invariance(seed):
    rng = random.Random(seed)
    gold, pred, labels = random_instance(rng)
    perm = labels[:]
    rng.shuffle(perm)
    rename = {a: f"x{b}" for a, b in zip(labels, perm)}
    gold2 = [rename[g] for g in gold]
    pred2 = [p if p is UNPARSEABLE else rename[p] for p in pred]
    a = weighted_f1(gold, pred, labels).weighted_f1
    b = weighted_f1(gold2, pred2, [rename[x] for x in labels]).weighted_f1
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unparseable_never_helps(seed):
    rng = random.Random(seed)
    gold, pred, labels = random_instance(rng)
    correct = [i for i, (g, p) in enumerate(zip(gold, pred)) if g == p]
    if not correct:
        return
    worse = list(pred)
    worse[rng.choice(correct)] = UNPARSEABLE
    assert weighted_f1(gold, worse, labels).weighted_f1 <= weighted_f1(gold, pred, labels).weighted_f1 + 1e-12


def samples(n, ds=None):
    return [
        PromptSample("main", f"p{i}", "sad", 1.0, {"dataset_id": ds or f"D{i % 2}", "conv_id": "c", "index": i, "gold": "sad"})
        for i in range(n)
    ]


def test_score_breaks_down_by_dataset():
    s = samples(4)
    rep = score(s, ["sad", "sad", "mad", "sad"], LABELS)
    assert set(rep.per_dataset) == {"D0", "D1"}
    assert rep.per_dataset["D1"].weighted_f1 == 1.0
    assert "per_dataset" in rep.to_json()
    assert "W-F1" in rep.render("t")
    assert not score(samples(2, "X"), ["sad", "sad"], LABELS).per_dataset


def test_checkpoint_resume(tmp_path):
    s = samples(6, "D")
    calls = []

    def failing(request):
        prompt = request.read().decode()
        calls.append(prompt)
        if '"p3"' in prompt and len(calls) < 5:
            return httpx.Response(503)
        return httpx.Response(200, json={"text": "sad"})

    cfg = BackendConfig(kind="http", endpoint="http://m/", retries=0, concurrency=1)
    backend = HttpBackend(cfg, httpx.Client(transport=httpx.MockTransport(failing)))
    ckpt = tmp_path / "ckpt.jsonl"
    with pytest.raises(EvalAborted) as info:
        run_inference(s, cfg, backend=backend, checkpoint=ckpt)
    assert info.value.completed == 3
    assert isinstance(info.value.cause, BackendError)
    assert len(load_checkpoint(ckpt)) == 3
    before = len(calls)
    out = run_inference(s, cfg, backend=backend, checkpoint=ckpt)
    assert out == ["sad"] * 6
    assert len(calls) - before == 3
