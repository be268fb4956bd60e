import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus

from ercgen.prompt import EMOTION_IMPACT, MAIN, SPEAKER_ID, PromptSample, WindowSpec
from ercgen.retrieval import ALL_LABELS, HashedNgramEmbedder, build_domain_base
from ercgen.training import (
    DEFAULT_ALPHA,
    StageExport,
    build_inference_prompts,
    export_stage1,
    export_stage2,
    task_weight_multiset,
)
from ercgen.unify import build_registry


def test_default_alpha():
    assert DEFAULT_ALPHA == 0.1


def test_stage1_one_sample_per_utterance():
    corpus = make_corpus([4, 6])
    out = export_stage1(corpus, seed=0)
    assert len(out.records) == 10
    assert {r.task for r in out.records} == {SPEAKER_ID}
    assert all(r.loss_weight == 1.0 for r in out.records)


def test_stage1_relabels_through_registry():
    corpus = make_corpus([3], speakers=("X", "Y"), dataset="B")
    other = make_corpus([1], speakers=("P", "Q", "R"), dataset="A")
    registry = build_registry([other.manifest, corpus.manifest])
    out = export_stage1(corpus, registry, seed=0)
    assert {r.target_text for r in out.records} <= set(registry.labels)
    assert {r.target_text for r in out.records} == {"4", "5"}


def test_unified_stage1_targets_are_global_ids(unified_mini):
    out = export_stage1(unified_mini, seed=0)
    assert {r.target_text for r in out.records} <= set(unified_mini.manifest.speaker_set)
    assert all(r.target_text.isdigit() for r in out.records)


def test_stage_rejects_wrong_tasks():
    with pytest.raises(ValueError):
        StageExport(1, [PromptSample(MAIN, "x", "y")])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=6), st.sampled_from([0.0, 0.05, 0.1, 0.2]))
def test_stage2_shape(lengths, alpha):
    corpus = make_corpus(lengths)
    out = export_stage2(corpus, WindowSpec(3), None, alpha, seed=1)
    n = sum(lengths)
    assert task_weight_multiset(out.records) == {
        k: v for k, v in {(MAIN, 1.0): n, (EMOTION_IMPACT, alpha): n - len(lengths)}.items() if v
    }


def test_stage2_uses_same_label_demonstrations(unified_mini):
    index = build_domain_base(unified_mini, HashedNgramEmbedder(), seed=2)
    out = export_stage2(unified_mini, WindowSpec(), index, seed=2)
    label_of = {e.id: e.label for e in index.entries}
    mains = [r for r in out.records if r.task == MAIN]
    assert mains and all(label_of[r.meta["demo_id"]] == r.target_text for r in mains)


def test_stage2_round_trip(tmp_path, unified_mini):
    out = export_stage2(unified_mini, WindowSpec(), None, 0.1, seed=5)
    out.write(tmp_path / "s2.jsonl")
    back = StageExport.read(tmp_path / "s2.jsonl", 2)
    assert back.records == out.records and back.alpha == 0.1


def test_stage2_subset_restriction(unified_mini):
    train = unified_mini.split("train")
    conv = train.conversations[0]
    keep = {(conv.dataset_id, conv.id, 0), (conv.dataset_id, conv.id, 1)}
    out = export_stage2(unified_mini, WindowSpec(), None, seed=0, restrict=keep)
    assert sorted(r.task for r in out.records) == [EMOTION_IMPACT, MAIN, MAIN]


def test_shuffle_is_seeded():
    corpus = make_corpus([5, 5])
    a = export_stage2(corpus, WindowSpec(), None, seed=3).records
    assert a == export_stage2(corpus, WindowSpec(), None, seed=3).records
    assert a != export_stage2(corpus, WindowSpec(), None, seed=4).records


def test_inference_prompts_follow_corpus_order(unified_mini):
    index = build_domain_base(unified_mini, HashedNgramEmbedder(), seed=2)
    prompts = build_inference_prompts(unified_mini, WindowSpec(), index, pairing=ALL_LABELS)
    test = unified_mini.split("test")
    assert [p.address for p in prompts] == [(c.dataset_id, c.id, u.index) for c, u in test.iter_utterances()]
    assert all("Here is a similar example:" in p.input_text for p in prompts)
