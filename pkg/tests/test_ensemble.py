"""Tests for probability-sum ensembling and exhaustive subset search."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionbench.ensemble import (
    EnsembleSpec,
    SubsetResult,
    ensemble_predict,
    ensemble_scores,
    load_search_results,
    save_search_results,
    search_subsets,
)
from lesionbench.pipeline.batches import PredictionBatch


def make_batch(probs, model_id, sample_ids=None):
    probs = np.asarray(probs, dtype=np.float64)
    if sample_ids is None:
        sample_ids = tuple(f"s{i}" for i in range(probs.shape[0]))
    return PredictionBatch(sample_ids=sample_ids, probs=probs, model_id=model_id)


def random_members(rng, k_members=3, n=12, c=4):
    return [
        make_batch(rng.dirichlet(np.ones(c), size=n), model_id=f"m{j}")
        for j in range(k_members)
    ]


# ---------------------------------------------------------------------------
# independent oracle


def oracle_topk(row, k):
    return sorted(range(len(row)), key=lambda j: (-row[j], j))[:k]


def oracle_subset_accuracy(batches, members, labels, k):
    by_id = {b.model_id: b for b in batches}
    total = sum(by_id[m].probs for m in members)
    hits = sum(1 for i, y in enumerate(labels) if y in oracle_topk(total[i].tolist(), k))
    return hits / len(labels)


# ---------------------------------------------------------------------------
# EnsembleSpec


class TestEnsembleSpec:
    def test_valid(self):
        spec = EnsembleSpec(member_ids=("a", "b"))
        assert spec.k_members == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EnsembleSpec(member_ids=())

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            EnsembleSpec(member_ids=("a", "a"))


# ---------------------------------------------------------------------------
# ensemble_scores


class TestEnsembleScores:
    def test_single_member_identity(self, rng):
        (batch,) = random_members(rng, k_members=1)
        out = ensemble_scores([batch])
        np.testing.assert_array_equal(out.probs, batch.probs)
        assert out.model_id == batch.model_id

    def test_hand_summed_rows(self):
        a = make_batch([[0.6, 0.3, 0.1]], "a")
        b = make_batch([[0.1, 0.55, 0.35]], "b")
        out = ensemble_scores([a, b])
        np.testing.assert_allclose(out.probs, [[0.7, 0.85, 0.45]], atol=1e-15)
        assert out.model_id == "a+b"
        assert not out.normalized
        assert ensemble_predict([a, b], 1) == [[1]]

    def test_hand_summed_top2(self):
        a = make_batch([[0.6, 0.3, 0.1]], "a")
        b = make_batch([[0.1, 0.55, 0.35]], "b")
        assert ensemble_predict([a, b], 2) == [[1, 0]]

    def test_same_member_twice_preserves_argmax(self, rng):
        members = random_members(rng, k_members=1)
        once = ensemble_predict(members, 1)
        twice = ensemble_predict(members + members, 1)
        assert once == twice

    def test_normalize_flag(self, rng):
        members = random_members(rng, k_members=3)
        out = ensemble_scores(members, normalize=True)
        assert out.normalized
        np.testing.assert_allclose(out.probs.sum(axis=1), 1.0, atol=1e-12)
        raw = ensemble_scores(members)
        np.testing.assert_allclose(raw.probs.sum(axis=1), 3.0, atol=1e-9)

    def test_mismatched_samples_rejected(self):
        a = make_batch([[0.5, 0.5]], "a", sample_ids=("x",))
        b = make_batch([[0.5, 0.5]], "b", sample_ids=("y",))
        with pytest.raises(ValueError, match="different samples"):
            ensemble_scores([a, b])

    def test_mismatched_classes_rejected(self):
        a = make_batch([[0.5, 0.5]], "a")
        b = make_batch([[0.3, 0.3, 0.4]], "b")
        with pytest.raises(ValueError, match="classes"):
            ensemble_scores([a, b])

    def test_empty_member_list_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            ensemble_scores([])

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        members = random_members(rng, k_members=int(rng.integers(2, 5)))
        base = ensemble_scores(members).probs
        perm = rng.permutation(len(members))
        shuffled = ensemble_scores([members[i] for i in perm]).probs
        np.testing.assert_allclose(base, shuffled, atol=1e-12)

    @given(
        st.integers(min_value=0, max_value=10_000),
        st.floats(min_value=0.01, max_value=50.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_positive_scaling_argmax_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        members = random_members(rng, k_members=3)
        scaled = [
            PredictionBatch(
                sample_ids=m.sample_ids,
                probs=m.probs * scale,
                model_id=m.model_id,
                normalized=False,
            )
            for m in members
        ]
        for k in (1, 2):
            assert ensemble_predict(members, k) == ensemble_predict(scaled, k)

    def test_monotone_consistency(self, rng):
        # every member puts its largest probability on the same label
        for _ in range(30):
            c = int(rng.integers(2, 6))
            n = int(rng.integers(1, 8))
            target = rng.integers(0, c, size=n)
            members = []
            for j in range(3):
                probs = rng.dirichlet(np.ones(c), size=n)
                for i in range(n):
                    top = probs[i].argmax()
                    probs[i, top], probs[i, target[i]] = probs[i, target[i]], probs[i, top]
                members.append(make_batch(probs, f"m{j}"))
            top1 = [row[0] for row in ensemble_predict(members, 1)]
            assert top1 == target.tolist()

    def test_all_equal_rows_tie_to_label_zero(self):
        members = [make_batch([[0.25, 0.25, 0.25, 0.25]], f"m{j}") for j in range(2)]
        assert ensemble_predict(members, 1) == [[0]]

    def test_k_out_of_range(self, rng):
        members = random_members(rng, c=3)
        with pytest.raises(ValueError, match="k must be"):
            ensemble_predict(members, 4)


# ---------------------------------------------------------------------------
# search_subsets


def complementary_members(n_per_class=6, c=3, seed=0):
    """Each member is expert on one class and noisy elsewhere.

    Every expert answers its own class perfectly but spreads belief nearly
    uniformly (with slight noise) off-specialty, so singletons plateau and
    the full ensemble wins — the constructed analogue of a many-model desk
    experiment.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(c), n_per_class)
    n = labels.shape[0]
    members = []
    for expert_class in range(c):
        probs = np.full((n, c), 1.0 / c) + rng.normal(0, 0.01, size=(n, c))
        probs = np.clip(probs, 1e-4, None)
        for i, y in enumerate(labels):
            if y == expert_class:
                probs[i] = 0.02
                probs[i, y] = 1.0 - 0.02 * (c - 1)
        probs /= probs.sum(axis=1, keepdims=True)
        members.append(make_batch(probs, f"expert{expert_class}"))
    return members, labels


class TestSearchSubsets:
    def test_singleton(self, rng):
        members = random_members(rng, k_members=1)
        labels = rng.integers(0, 4, size=members[0].n_samples)
        results = search_subsets(members, labels)
        assert len(results) == 1 and results[0].member_ids == ("m0",)
        assert results[0].rank == 1

    def test_four_members_fifteen_subsets(self, rng):
        members = random_members(rng, k_members=4)
        labels = rng.integers(0, 4, size=members[0].n_samples)
        results = search_subsets(members, labels, k_values=(1, 3))
        assert len(results) == 15
        assert {r.member_ids for r in results} == {
            combo
            for size in range(1, 5)
            for combo in combinations(("m0", "m1", "m2", "m3"), size)
        }
        assert [r.rank for r in results] == list(range(1, 16))

    def test_sorted_by_top1_descending(self, rng):
        members = random_members(rng, k_members=3)
        labels = rng.integers(0, 4, size=members[0].n_samples)
        results = search_subsets(members, labels)
        tops = [r.top1 for r in results]
        assert tops == sorted(tops, reverse=True)

    def test_tie_breaks_smaller_subset_then_lexicographic(self):
        # two identical members: all subsets score identically
        probs = np.eye(2)[[0, 1, 0]]
        a = make_batch(probs, "a")
        b = make_batch(probs, "b")
        results = search_subsets([a, b], [0, 1, 0])
        assert [r.member_ids for r in results] == [("a",), ("b",), ("a", "b")]

    def test_accuracies_match_independent_oracle(self, rng):
        members = random_members(rng, k_members=4, n=20, c=5)
        labels = rng.integers(0, 5, size=20)
        results = search_subsets(members, labels, k_values=(1, 3))
        for res in results:
            for k in (1, 3):
                oracle = oracle_subset_accuracy(members, res.member_ids, labels.tolist(), k)
                assert res.accuracies[k] == pytest.approx(oracle, abs=1e-12)

    def test_complementary_fixture_best_subset(self):
        members, labels = complementary_members()
        results = search_subsets(members, labels, k_values=(1,))
        # brute-force re-evaluation oracle
        best_oracle = max(
            (
                combo
                for size in range(1, 4)
                for combo in combinations([m.model_id for m in members], size)
            ),
            key=lambda combo: (
                oracle_subset_accuracy(members, combo, labels.tolist(), 1),
                -len(combo),
            ),
        )
        assert results[0].member_ids == best_oracle
        assert results[0].member_ids == ("expert0", "expert1", "expert2")
        assert results[0].top1 == 1.0

    def test_member_limit(self):
        probs = np.array([[0.5, 0.5]])
        members = [make_batch(probs, f"m{j:02d}") for j in range(21)]
        with pytest.raises(ValueError, match="at most 20"):
            search_subsets(members, [0])

    def test_duplicate_ids_rejected(self, rng):
        members = random_members(rng, k_members=2)
        clone = PredictionBatch(
            sample_ids=members[0].sample_ids, probs=members[0].probs, model_id="m1"
        )
        with pytest.raises(ValueError, match="distinct"):
            search_subsets([members[0], members[1], clone], [0] * members[0].n_samples)

    def test_label_length_mismatch(self, rng):
        members = random_members(rng)
        with pytest.raises(ValueError, match="labels"):
            search_subsets(members, [0, 1])

    def test_results_round_trip(self, tmp_path, rng):
        members = random_members(rng, k_members=3)
        labels = rng.integers(0, 4, size=members[0].n_samples)
        results = search_subsets(members, labels, k_values=(1, 2))
        path = save_search_results(results, tmp_path / "search.json")
        loaded = load_search_results(path)
        assert loaded == results
