"""Aggregate algebra tests: merge laws, flat-fold oracles, top-k, text codec."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melt import aggregates as agg
from melt.aggregates import (
    AggregateError,
    AggregateKindError,
    CountedKeyBody,
    HistogramBody,
    SummaryAgg,
    SummaryBody,
    body_from_text,
    body_to_text,
    display_value,
    empty_body,
    fold_samples,
    merge,
    merge_all,
    select_topk,
)


def summary_of(*pairs):
    body = SummaryBody()
    for group, metric, value, weight in pairs:
        body.add(group, metric, value, weight)
    return body


class TestSummaryMerge:
    def test_spec_example(self):
        a = SummaryAgg(2, 10, 1, 9)
        b = SummaryAgg(3, 6, 2, 4)
        merged = a.merge(b)
        assert (merged.count, merged.sum, merged.min, merged.max) == (5, 16, 1, 9)

    def test_identity(self):
        a = SummaryAgg(2, 10, 1, 9)
        merged = a.merge(SummaryAgg())
        assert (merged.count, merged.sum, merged.min, merged.max) == (2, 10, 1, 9)

    def test_flat_fold_matches_two_sided_fold(self):
        # oracle: fold the five raw values directly
        values = [1.0, 9.0, 2.0, 2.0, 4.0]
        left = SummaryAgg()
        for v in values[:2]:
            left.add(v)
        right = SummaryAgg()
        for v in values[2:]:
            right.add(v)
        flat = SummaryAgg()
        for v in values:
            flat.add(v)
        merged = left.merge(right)
        assert merged.count == flat.count
        assert merged.min == flat.min and merged.max == flat.max
        assert math.isclose(merged.sum, flat.sum, rel_tol=1e-9)


def random_tree_fold(rng: random.Random, items: list) -> agg.Body:
    """Fold bodies over a random binary tree shape."""
    if len(items) == 1:
        return items[0]
    cut = rng.randint(1, len(items) - 1)
    left = random_tree_fold(rng, items[:cut])
    right = random_tree_fold(rng, items[cut:])
    return merge(left, right)


def test_tree_shape_independence_1000_samples():
    rng = random.Random(7)
    samples = [("job." + str(rng.randint(0, 9)), "IO_RD_BW",
                rng.uniform(0, 1e9), 1.0) for _ in range(1000)]
    flat = fold_samples(samples, "summary")

    for trial in range(5):
        shuffled = samples[:]
        rng.shuffle(shuffled)
        # split into leaf bodies of random size, merge over a random tree
        leaves, i = [], 0
        while i < len(shuffled):
            n = rng.randint(1, 40)
            leaves.append(fold_samples(shuffled[i:i + n], "summary"))
            i += n
        tree = random_tree_fold(rng, leaves)
        assert set(tree.entries) == set(flat.entries)
        for key, agg_flat in flat.entries.items():
            agg_tree = tree.entries[key]
            assert agg_tree.count == agg_flat.count
            assert agg_tree.min == agg_flat.min
            assert agg_tree.max == agg_flat.max
            assert math.isclose(agg_tree.sum, agg_flat.sum, rel_tol=1e-9)


summary_bodies = st.builds(
    lambda pairs: summary_of(*pairs),
    st.lists(st.tuples(st.sampled_from(["a", "b", "c"]),
                       st.sampled_from(["IO_RD_BW", "META_OP_RATE"]),
                       st.floats(0, 1e6, allow_nan=False),
                       st.floats(0.5, 4, allow_nan=False)), max_size=8),
)

counted_bodies = st.builds(
    lambda pairs: fold_samples([(k, "", c, 1) for k, c in pairs], "counted-key"),
    st.lists(st.tuples(st.text(min_size=1, max_size=5), st.integers(1, 50)), max_size=8),
)


def assert_summary_close(a: SummaryBody, b: SummaryBody):
    assert set(a.entries) == set(b.entries)
    for key in a.entries:
        x, y = a.entries[key], b.entries[key]
        assert x.count == pytest.approx(y.count, rel=1e-9)
        assert x.sum == pytest.approx(y.sum, rel=1e-9, abs=1e-9)
        assert x.min == y.min and x.max == y.max


@given(summary_bodies, summary_bodies, summary_bodies)
@settings(max_examples=100)
def test_summary_merge_laws(a, b, c):
    assert_summary_close(merge(a, b), merge(b, a))
    assert_summary_close(merge(merge(a, b), c), merge(a, merge(b, c)))
    assert_summary_close(merge(a, empty_body("summary")), a)


@given(counted_bodies, counted_bodies, counted_bodies)
@settings(max_examples=100)
def test_counted_merge_laws(a, b, c):
    assert merge(a, b).counts == merge(b, a).counts
    assert merge(merge(a, b), c).counts == merge(a, merge(b, c)).counts
    assert merge(a, empty_body("counted-key")).counts == a.counts


def test_histogram_merge_and_conservation():
    edges = (10.0, 100.0, 1000.0)
    rng = random.Random(3)
    samples = [("g", "IO_RD_BW", rng.uniform(0, 2000), 1.0) for _ in range(500)]
    flat = fold_samples(samples, "histogram", edges)
    assert flat.total() == 500

    parts = [fold_samples(samples[i:i + 50], "histogram", edges) for i in range(0, 500, 50)]
    tree = random_tree_fold(rng, parts)
    assert tree.entries == flat.entries
    assert tree.total() == 500


def test_histogram_bucketing_edges():
    body = HistogramBody(edges=(10.0, 20.0))
    for v in (5, 10, 15, 20, 25):
        body.add("g", "m", v)
    assert body.entries[("g", "m")] == [1, 2, 2]


def test_kind_and_edge_mismatch():
    with pytest.raises(AggregateKindError):
        merge(SummaryBody(), CountedKeyBody())
    with pytest.raises(AggregateKindError):
        merge(HistogramBody(edges=(1.0,)), HistogramBody(edges=(2.0,)))
    with pytest.raises(AggregateError):
        HistogramBody(edges=(2.0, 1.0))


class TestDisplayValue:
    def test_sum_metric(self):
        body = summary_of(("j", "IO_RD_BW", 100.0, 1.0), ("j", "IO_RD_BW", 50.0, 1.0))
        assert display_value(body, "j", "IO_RD_BW") == 150.0

    def test_mean_metric_weighted(self):
        # two windows: 10 ops averaging 100 bytes, 30 ops averaging 200 bytes
        body = summary_of(("j", "IO_CLNT_AVG_RD_SZ", 100.0, 10.0),
                          ("j", "IO_CLNT_AVG_RD_SZ", 200.0, 30.0))
        assert display_value(body, "j", "IO_CLNT_AVG_RD_SZ") == pytest.approx(175.0)

    def test_missing_reads_zero(self):
        assert display_value(SummaryBody(), "j", "IO_RD_BW") == 0.0


class TestTopK:
    def test_published_ordering(self):
        gi = 1024 ** 3
        rates = {
            "conway.2789": 12 * gi,
            "tait.4321": 7.8 * gi,
            "euler.22397": 7.2 * gi,
            "tait.4334": 3.4 * gi,
            "euler.22388": 0.78 * gi,
        }
        body = summary_of(*[(j, "IO_RD_BW", v, 1.0) for j, v in rates.items()])
        ranked = select_topk(body, 5, "IO_RD_BW")
        assert [g for g, _ in ranked] == [
            "conway.2789", "tait.4321", "euler.22397", "tait.4334", "euler.22388"]

    def test_k_larger_than_groups(self):
        body = summary_of(("a", "IO_RD_BW", 1.0, 1.0), ("b", "IO_RD_BW", 2.0, 1.0))
        assert len(select_topk(body, 10, "IO_RD_BW")) == 2

    def test_tie_breaks_lexicographic(self):
        body = summary_of(("b", "IO_RD_BW", 5.0, 1.0), ("a", "IO_RD_BW", 5.0, 1.0))
        assert [g for g, _ in select_topk(body, 2, "IO_RD_BW")] == ["a", "b"]

    def test_counted_key(self):
        body = fold_samples([("/proj/a", "", 7, 1), ("/proj/b", "", 3, 1),
                             ("/proj/c", "", 9, 1)], "counted-key")
        assert select_topk(body, 2)[0] == ("/proj/c", 9.0)

    def test_absent_key_metric(self):
        body = summary_of(("a", "IO_RD_BW", 1.0, 1.0))
        with pytest.raises(AggregateError, match="META_OP_RATE"):
            select_topk(body, 1, "META_OP_RATE")

    def test_merge_then_topk_equals_bruteforce(self):
        rng = random.Random(11)
        for _ in range(20):
            n = rng.randint(1, 60)
            samples = [(f"job.{rng.randint(0, 12)}", "IO_RD_BW",
                        rng.choice([1.0, 2.5, 7.0, 7.0, 100.0]), 1.0)
                       for _ in range(n)]
            halves = [fold_samples(samples[: n // 2], "summary"),
                      fold_samples(samples[n // 2:], "summary")]
            merged = merge_all(halves, "summary")
            # brute force: total per key over the raw samples
            totals: dict[str, float] = {}
            for g, _m, v, w in samples:
                totals[g] = totals.get(g, 0.0) + v * w
            expect = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
            got = select_topk(merged, 5, "IO_RD_BW")
            assert [g for g, _ in got] == [g for g, _ in expect]
            for (_, a), (_, b) in zip(got, expect):
                assert a == pytest.approx(b, rel=1e-9)


class TestTextCodec:
    def test_summary_roundtrip(self):
        body = summary_of(("job a%1\nx", "IO_RD_BW", 1.5, 2.0), ("j2", "META_OP_RATE", 3.0, 1.0))
        back = body_from_text(body_to_text(body))
        assert_summary_close(back, body)

    def test_histogram_roundtrip(self):
        body = HistogramBody(edges=(1.0, 10.5))
        body.add("g one", "m", 0.5)
        body.add("g one", "m", 5)
        body.add("g one", "m", 50)
        back = body_from_text(body_to_text(body))
        assert back.edges == body.edges and back.entries == body.entries

    def test_counted_roundtrip(self):
        body = CountedKeyBody({"/proj/a b": 3, "mkdir": 9})
        back = body_from_text(body_to_text(body))
        assert back.counts == body.counts

    def test_empty_bodies(self):
        for kind, edges in (("summary", ()), ("histogram", (1.0,)), ("counted-key", ())):
            body = empty_body(kind, edges)
            back = body_from_text(body_to_text(body))
            assert back.kind == kind

    def test_deterministic_ordering(self):
        a = summary_of(("b", "M", 1, 1), ("a", "M", 2, 1))
        b = summary_of(("a", "M", 2, 1), ("b", "M", 1, 1))
        assert body_to_text(a) == body_to_text(b)

    def test_malformed(self):
        with pytest.raises(AggregateError):
            body_from_text("nonsense")
        with pytest.raises(AggregateError):
            body_from_text("kind=summary\ng too few")
        with pytest.raises(AggregateError):
            body_from_text("kind=wat")
