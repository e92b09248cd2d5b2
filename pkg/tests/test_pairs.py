import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from fairnorm.errors import NumericError
from fairnorm.pairs import (
    PairScores,
    ScorePair,
    collect_cluster_score_sets,
    cosine_similarity,
    generate_all_pairs,
    score_all_pairs,
)
from helpers import make_dataset, random_unit_dataset

vectors3 = st.lists(
    st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=3
).filter(lambda v: any(abs(x) > 1e-6 for x in v))


class TestCosine:
    def test_identity(self):
        assert cosine_similarity((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity((1.0, 0.0), (0.0, 1.0)) == 0.0

    def test_45_degrees(self):
        # hand value: 1/sqrt(2)
        assert abs(cosine_similarity((1.0, 1.0), (1.0, 0.0)) - 0.7071067812) <= 1e-9
        assert cosine_similarity((1.0, 1.0), (1.0, 0.0)) == pytest.approx(
            1.0 / math.sqrt(2.0), abs=1e-12
        )

    def test_zero_norm_rejected(self):
        with pytest.raises(NumericError, match="zero-norm"):
            cosine_similarity((0.0, 0.0), (1.0, 0.0))

    def test_dimension_mismatch(self):
        with pytest.raises(NumericError, match="mismatch"):
            cosine_similarity((1.0, 0.0), (1.0, 0.0, 0.0))

    @given(vectors3, vectors3)
    def test_symmetry_exact(self, a, b):
        assert cosine_similarity(a, b) == cosine_similarity(b, a)

    @given(vectors3, vectors3, st.floats(min_value=1e-3, max_value=1e3))
    def test_scale_invariance(self, a, b, lam):
        scaled = [lam * x for x in a]
        assert cosine_similarity(scaled, b) == pytest.approx(
            cosine_similarity(a, b), abs=1e-9
        )

    @given(vectors3, vectors3)
    def test_range_and_oracle(self, a, b):
        got = cosine_similarity(a, b)
        assert abs(got) <= 1.0 + 1e-6
        assert got == pytest.approx(oracles.brute_cosine(a, b), abs=1e-9)


class TestScorePair:
    def test_canonical_order(self):
        p = ScorePair(i=5, j=2, raw_score=0.25, genuine=False)
        assert (p.i, p.j) == (2, 5)

    def test_rejects_self_pair(self):
        with pytest.raises(NumericError):
            ScorePair(i=3, j=3, raw_score=0.1, genuine=True)

    def test_rejects_out_of_range_score(self):
        with pytest.raises(NumericError):
            ScorePair(i=0, j=1, raw_score=1.5, genuine=False)


class TestGenerateAllPairs:
    def test_four_samples_six_pairs(self, rng):
        ds = random_unit_dataset(rng, n=4, n_subjects=4)
        assert sum(1 for _ in generate_all_pairs(ds)) == 6

    def test_genuine_impostor_counts(self, rng):
        # 3 samples of one subject + 2 of another: C(3,2)+C(2,2)=4 genuine, 3*2=6 impostor
        vecs = rng.normal(size=(5, 3))
        ds = make_dataset(vecs, ["a", "a", "a", "b", "b"])
        pairs = list(generate_all_pairs(ds))
        assert sum(p.genuine for p in pairs) == 4
        assert sum(not p.genuine for p in pairs) == 6

    def test_lexicographic_order_and_uniqueness(self, rng):
        ds = random_unit_dataset(rng, n=9, n_subjects=3)
        seen = [(p.i, p.j) for p in generate_all_pairs(ds)]
        assert seen == sorted(set(seen))
        assert all(i < j for i, j in seen)
        assert len(seen) == 36

    def test_thousand_samples_streams(self, rng):
        ds = random_unit_dataset(rng, n=1000, n_subjects=100, dim=8)
        count = sum(1 for _ in generate_all_pairs(ds))
        assert count == 1000 * 999 // 2

    def test_subset(self, rng):
        ds = random_unit_dataset(rng, n=6, n_subjects=2)
        pairs = list(generate_all_pairs(ds, sample_subset=[4, 1, 3]))
        assert [(p.i, p.j) for p in pairs] == [(1, 3), (1, 4), (3, 4)]

    def test_needs_two_samples(self, rng):
        ds = random_unit_dataset(rng, n=3, n_subjects=3)
        with pytest.raises(NumericError):
            list(generate_all_pairs(ds, sample_subset=[1]))

    def test_matches_array_path_bitwise(self, rng):
        ds = random_unit_dataset(rng, n=40, n_subjects=8, dim=5)
        streamed = list(generate_all_pairs(ds))
        arrays = score_all_pairs(ds)
        assert [p.raw_score for p in streamed] == arrays.raw.tolist()
        assert [p.genuine for p in streamed] == arrays.genuine.tolist()
        assert [(p.i, p.j) for p in streamed] == list(zip(arrays.i.tolist(), arrays.j.tolist()))


class TestScoreAllPairs:
    def test_worker_count_independence(self, rng):
        # n > block size so several blocks exist
        ds = random_unit_dataset(rng, n=300, n_subjects=30, dim=6)
        one = score_all_pairs(ds, workers=1)
        three = score_all_pairs(ds, workers=3)
        assert np.array_equal(one.raw, three.raw)
        assert np.array_equal(one.i, three.i)
        assert np.array_equal(one.j, three.j)
        assert np.array_equal(one.genuine, three.genuine)

    def test_total_pair_count_property(self, rng):
        for n in (2, 7, 33):
            ds = random_unit_dataset(rng, n=n, n_subjects=2)
            ps = score_all_pairs(ds)
            assert len(ps) == n * (n - 1) // 2
            assert np.count_nonzero(ps.genuine) + np.count_nonzero(~ps.genuine) == len(ps)

    def test_scores_match_oracle(self, rng):
        vecs = rng.normal(size=(10, 4))
        ds = make_dataset(vecs, [f"u{i%3}" for i in range(10)])
        ps = score_all_pairs(ds)
        rows = oracles.brute_pair_rows(vecs, [f"u{i%3}" for i in range(10)])
        for (i, j, score, genuine), idx in zip(rows, range(len(ps))):
            assert (ps.i[idx], ps.j[idx]) == (i, j)
            assert ps.raw[idx] == pytest.approx(score, abs=1e-9)
            assert bool(ps.genuine[idx]) == genuine

    def test_iter_and_from_pairs_roundtrip(self, rng):
        ds = random_unit_dataset(rng, n=8, n_subjects=3)
        ps = score_all_pairs(ds)
        rebuilt = PairScores.from_pairs(ps.iter_pairs())
        assert np.array_equal(rebuilt.raw, ps.raw)
        assert np.array_equal(rebuilt.genuine, ps.genuine)

    def test_score_field_selection(self, rng):
        ds = random_unit_dataset(rng, n=5, n_subjects=2)
        ps = score_all_pairs(ds)
        with pytest.raises(NumericError, match="normalized"):
            ps.scores("normalized")
        with pytest.raises(NumericError, match="score_field"):
            ps.scores("fused")
        ps2 = ps.with_normalized(ps.raw + 0.1)
        assert np.array_equal(ps2.scores("normalized"), ps.raw + 0.1)


class TestClusterScoreSets:
    def test_cross_cluster_pair_counted_in_both(self):
        # two samples of one subject in different clusters: genuine score lands
        # in both clusters' genuine sets
        ds = make_dataset([[1.0, 0.0], [0.9, 0.1]], ["a", "a"])
        ps = score_all_pairs(ds)
        sets = collect_cluster_score_sets(ps, [0, 1], k=2)
        assert sets[0].genuine_scores.tolist() == ps.raw.tolist()
        assert sets[1].genuine_scores.tolist() == ps.raw.tolist()

    def test_intra_cluster_pair_counted_once(self, rng):
        ds = random_unit_dataset(rng, n=4, n_subjects=2)
        ps = score_all_pairs(ds)
        sets = collect_cluster_score_sets(ps, [0, 0, 0, 0], k=2)
        assert len(sets[0].genuine_scores) + len(sets[0].impostor_scores) == 6
        assert len(sets[1].genuine_scores) == 0
        assert len(sets[1].impostor_scores) == 0

    def test_degenerate_single_cluster_equals_global(self, rng):
        ds = random_unit_dataset(rng, n=10, n_subjects=4)
        ps = score_all_pairs(ds)
        sets = collect_cluster_score_sets(ps, np.zeros(10, dtype=int), k=1)
        assert sorted(sets[0].genuine_scores) == sorted(ps.raw[ps.genuine])
        assert sorted(sets[0].impostor_scores) == sorted(ps.raw[~ps.genuine])

    def test_unassigned_sample_rejected(self, rng):
        ds = random_unit_dataset(rng, n=5, n_subjects=2)
        ps = score_all_pairs(ds)
        with pytest.raises(NumericError, match="no cluster assignment"):
            collect_cluster_score_sets(ps, [0, 0, 0], k=1)
        with pytest.raises(NumericError, match="outside"):
            collect_cluster_score_sets(ps, [0, 0, 0, 0, 7], k=2)

    def test_brute_force_equivalence_random(self, rng):
        for trial in range(25):
            n = int(rng.integers(5, 20))
            k = int(rng.integers(1, 5))
            vecs = rng.normal(size=(n, 3))
            subjects = [f"u{int(s)}" for s in rng.integers(0, max(2, n // 2), size=n)]
            ds = make_dataset(vecs, subjects)
            assignment = rng.integers(0, k, size=n)
            ps = score_all_pairs(ds)
            got = collect_cluster_score_sets(ps, assignment, k)
            rows = [
                (int(ps.i[x]), int(ps.j[x]), float(ps.raw[x]), bool(ps.genuine[x]))
                for x in range(len(ps))
            ]
            want = oracles.brute_cluster_sets(rows, assignment, k)
            for c in range(k):
                assert sorted(got[c].genuine_scores.tolist()) == want[c]["gen"]
                assert sorted(got[c].impostor_scores.tolist()) == want[c]["imp"]

    def test_membership_count_property(self, rng):
        # intra-cluster pairs counted once, cross-cluster twice
        n, k = 30, 3
        ds = random_unit_dataset(rng, n=n, n_subjects=5)
        ps = score_all_pairs(ds)
        assignment = rng.integers(0, k, size=n)
        sets = collect_cluster_score_sets(ps, assignment, k)
        total = sum(len(s.genuine_scores) + len(s.impostor_scores) for s in sets)
        cross = int(np.count_nonzero(assignment[ps.i] != assignment[ps.j]))
        intra = len(ps) - cross
        assert total == intra + 2 * cross
