from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import pooled_corpus

from ercgen.mixing import (
    DEFAULT_FRACTIONS,
    RATIO,
    SINGLE,
    TOTAL,
    MixPlan,
    composition,
    plan_grid,
    quota,
    read_subset_manifest,
    sample,
    write_subset_manifest,
)

BENCH = {"IEMOCAP": 5163, "MELD": 9989, "EmoryNLP": 9934}


def test_half_fraction_counts():
    corpus = pooled_corpus(BENCH)
    ratio = sample(corpus, MixPlan(RATIO, Fraction(1, 2), 0))
    assert composition(ratio) == {"EmoryNLP": 4967, "IEMOCAP": 2581, "MELD": 4994}
    assert len(ratio) == 12542
    assert len(sample(corpus, MixPlan(TOTAL, Fraction(1, 2), 0))) == 12542


def test_floor_quota():
    assert quota(Fraction(1, 64), 5163) == 80
    assert quota(Fraction(1, 3), 2) == 0
    assert quota(Fraction(1), 7) == 7


def test_plan_validation():
    with pytest.raises(ValueError):
        MixPlan("other", Fraction(1, 2))
    with pytest.raises(ValueError):
        MixPlan(TOTAL, Fraction(0))
    with pytest.raises(ValueError):
        MixPlan(TOTAL, Fraction(3, 2))
    with pytest.raises(ValueError):
        MixPlan(SINGLE, Fraction(1, 2))
    with pytest.raises(ValueError):
        MixPlan(TOTAL, Fraction(1, 2), dataset="MELD")


def test_grid_has_fourteen_plans():
    grid = plan_grid(seed=3)
    assert len(grid) == 14
    assert [p.fraction for p in grid[::2]] == list(DEFAULT_FRACTIONS)
    assert len({p.plan_id for p in grid}) == 14
    assert len(plan_grid(strategies=[SINGLE], datasets=list(BENCH))) == 21


def test_zero_quota_warns(caplog):
    corpus = pooled_corpus({"A": 1, "B": 100})
    picked = sample(corpus, MixPlan(RATIO, Fraction(1, 2), 0))
    assert composition(picked) == {"B": 50}
    assert "leaves no samples from A" in caplog.text


def test_single_strategy():
    corpus = pooled_corpus({"A": 10, "B": 20})
    picked = sample(corpus, MixPlan(SINGLE, Fraction(1, 2), 0, "B"))
    assert composition(picked) == {"B": 10}
    with pytest.raises(KeyError):
        sample(corpus, MixPlan(SINGLE, Fraction(1, 2), 0, "C"))


def test_subset_manifest_round_trip(tmp_path):
    corpus = pooled_corpus({"A": 10, "B": 20})
    plan = MixPlan(TOTAL, Fraction(1, 4), 9)
    picked = sample(corpus, plan)
    write_subset_manifest(tmp_path / "m.json", plan, picked, config_hash="h")
    plan2, addrs = read_subset_manifest(tmp_path / "m.json")
    assert plan2 == plan and sorted(addrs) == sorted(picked)


def test_sampling_is_seeded():
    corpus = pooled_corpus({"A": 50, "B": 70})
    plan = MixPlan(TOTAL, Fraction(1, 8), 11)
    assert sample(corpus, plan) == sample(corpus, plan)
    assert sample(corpus, plan) != sample(corpus, MixPlan(TOTAL, Fraction(1, 8), 12))


@settings(max_examples=60, deadline=None)
@given(
    st.dictionaries(st.sampled_from(["A", "B", "C", "D"]), st.integers(0, 300), min_size=1),
    st.sampled_from(DEFAULT_FRACTIONS),
    st.integers(0, 1000),
)
def test_equal_quantity_property(sizes, f, seed):
    corpus = pooled_corpus(sizes)
    target = sum(quota(f, n) for n in sizes.values())
    total = sample(corpus, MixPlan(TOTAL, f, seed))
    ratio = sample(corpus, MixPlan(RATIO, f, seed))
    assert len(total) == len(ratio) == target
    assert len(set(total)) == len(total) and len(set(ratio)) == len(ratio)
    comp = composition(ratio)
    for ds, n in sizes.items():
        assert comp.get(ds, 0) == quota(f, n)
