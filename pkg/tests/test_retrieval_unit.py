"""
Unit tests for galleries, the bucket index, both search modes, query selection and the benchmark

Search results are checked against brute-force oracles that sort every
candidate by (distance, entry id).
"""

from pathlib import Path

import numpy as np
import pyarrow.parquet as pq
import pytest

from repnet.domain.errors import DatasetValidationError, ParamValidationError, ShapeError, TableFormatError
from repnet.retrieval.bench import bench, ground_truth_counts, synthetic_gallery
from repnet.retrieval.gallery import Gallery, GalleryEntry, one_hot, read_gallery, write_gallery
from repnet.retrieval.index import bucket_stats, build_bucket_index
from repnet.retrieval.metrics import average_precision
from repnet.retrieval.queries import select_queries
from repnet.retrieval.search import bucket_search, linear_search


def make_gallery(rng, n=50, *, n_colors=4, n_models=5, d_sls=6, d_acs=5, ids=None, probs=None):
    vehicle_ids = np.asarray(ids if ids is not None else rng.integers(0, max(2, n // 3), size=n), dtype=np.int64)
    colors = rng.integers(n_colors, size=n)
    models = rng.integers(n_models, size=n)
    if probs == "truth":
        color_probs, model_probs = one_hot(colors, n_colors), one_hot(models, n_models)
    else:
        color_probs = rng.dirichlet(np.ones(n_colors), size=n)
        model_probs = rng.dirichlet(np.ones(n_models), size=n)
    sls = rng.normal(size=(n, d_sls))
    sls /= np.linalg.norm(sls, axis=1, keepdims=True)
    return Gallery(
        sample_idx=np.arange(100, 100 + n, dtype=np.int64),
        vehicle_ids=vehicle_ids,
        colors=colors.astype(np.int64),
        models=models.astype(np.int64),
        views=np.zeros(n, dtype=np.int64),
        splits=np.asarray(["all"] * n, dtype=object),
        sls=sls,
        acs=rng.normal(size=(n, d_acs)),
        color_probs=color_probs,
        model_probs=model_probs,
    ).validate()


def external_query(rng, gallery: Gallery) -> GalleryEntry:
    return GalleryEntry(
        sample_idx=-1,
        vehicle_id=-1,
        sls=rng.normal(size=gallery.sls.shape[1]),
        acs=rng.normal(size=gallery.acs.shape[1]),
        color_probs=rng.dirichlet(np.ones(gallery.color_probs.shape[1])),
        model_probs=rng.dirichlet(np.ones(gallery.model_probs.shape[1])),
    )


def sorted_oracle(rows, distances, k):
    order = sorted(range(len(rows)), key=lambda i: (distances[i], rows[i]))[:k]
    return [int(rows[i]) for i in order]


@pytest.mark.unit
class TestLinearSearch:
    def test_identical_entry_ranked_first(self, rng):
        g = make_gallery(rng)
        result = linear_search(g.entry(7), g, 5, exclude_self=False)
        assert result.entries[0] == 7
        assert result.distances[0] == 0.0

    def test_self_excluded_by_default(self, rng):
        g = make_gallery(rng)
        result = linear_search(g.entry(7), g, len(g))
        assert 7 not in result.entries.tolist()
        assert len(result) == len(g) - 1

    def test_k_beyond_gallery_returns_everything(self, rng):
        g = make_gallery(rng, n=12)
        result = linear_search(external_query(rng, g), g, 100)
        assert sorted(result.entries.tolist()) == list(range(12))
        assert result.is_ordered()

    def test_matches_oracle_over_seeds(self):
        for seed in range(20):
            r = np.random.default_rng(seed)
            g = make_gallery(r)
            q = external_query(r, g)
            d = np.sum((g.concat - q.concat) ** 2, axis=1)
            expected = sorted_oracle(np.arange(len(g)), d, 10)
            result = linear_search(q, g, 10)
            assert result.entries.tolist() == expected
            assert np.allclose(result.distances, d[expected], rtol=0, atol=1e-12)

    def test_ties_broken_by_entry_id(self, rng):
        g = make_gallery(rng, n=6)
        sls = np.repeat(g.sls[:1], 6, axis=0)
        acs = np.repeat(g.acs[:1], 6, axis=0)
        tied = Gallery(**{**{n: getattr(g, n) for n in ("sample_idx", "vehicle_ids", "colors", "models", "views", "splits", "color_probs", "model_probs")}, "sls": sls, "acs": acs})
        result = linear_search(external_query(rng, tied), tied, 4)
        assert result.entries.tolist() == [0, 1, 2, 3]

    def test_dimension_mismatch(self, rng):
        g = make_gallery(rng)
        q = external_query(rng, g)._replace(acs=np.zeros(3))
        with pytest.raises(ShapeError):
            linear_search(q, g, 3)

    def test_k_must_be_positive(self, rng):
        g = make_gallery(rng)
        with pytest.raises(ParamValidationError):
            linear_search(g.entry(0), g, 0)


@pytest.mark.unit
class TestBucketIndex:
    def test_every_entry_in_exactly_one_bucket(self, rng):
        g = make_gallery(rng, n=80)
        index = build_bucket_index(g)
        rows = np.concatenate(list(index.buckets.values()))
        assert sorted(rows.tolist()) == list(range(80))
        for (c, m), members in index.buckets.items():
            assert np.all(np.argmax(g.color_probs[members], axis=1) == c)
            assert np.all(np.argmax(g.model_probs[members], axis=1) == m)

    def test_single_predicted_combo(self, rng):
        g = make_gallery(rng, n=20)
        probs = np.zeros_like(g.color_probs)
        probs[:, 2] = 1.0
        single = Gallery(**{**{n: getattr(g, n) for n in ("sample_idx", "vehicle_ids", "colors", "models", "views", "splits", "sls", "acs")}, "color_probs": probs, "model_probs": one_hot(np.zeros(20, dtype=np.int64), 5)})
        index = build_bucket_index(single)
        assert list(index.buckets) == [(2, 0)]
        assert len(index) == 20

    def test_truth_probabilities_give_label_partition(self, rng):
        g = make_gallery(rng, n=60, probs="truth")
        index = build_bucket_index(g)
        for (c, m), members in index.buckets.items():
            expected = np.flatnonzero((g.colors == c) & (g.models == m))
            assert np.array_equal(members, expected)

    def test_ties_go_to_lowest_class(self, rng):
        g = make_gallery(rng, n=3)
        flat = Gallery(**{**{n: getattr(g, n) for n in ("sample_idx", "vehicle_ids", "colors", "models", "views", "splits", "sls", "acs")}, "color_probs": np.full((3, 4), 0.25), "model_probs": np.full((3, 5), 0.2)})
        assert list(build_bucket_index(flat).buckets) == [(0, 0)]

    def test_empty_gallery(self, rng):
        g = make_gallery(rng, n=10).subset(np.empty(0, dtype=np.int64))
        index = build_bucket_index(g)
        assert len(index) == 0
        stats = bucket_stats(index)
        assert stats["entries"] == 0 and stats["buckets_possible"] == 20

    def test_stats(self, rng):
        g = make_gallery(rng, n=40, probs="truth")
        stats = bucket_stats(build_bucket_index(g))
        assert stats["entries"] == 40
        assert stats["buckets_used"] == len({(c, m) for c, m in zip(g.colors, g.models)})
        assert stats["min_bucket"] <= stats["mean_bucket"] <= stats["max_bucket"]


@pytest.mark.unit
class TestBucketSearch:
    def test_matches_filter_then_sort_oracle(self):
        for seed in range(20):
            r = np.random.default_rng(100 + seed)
            g = make_gallery(r, n=60)
            index = build_bucket_index(g)
            q = external_query(r, g)
            top_colors = np.argsort(-q.color_probs, kind="stable")[:2]
            top_models = np.argsort(-q.model_probs, kind="stable")[:2]
            pred_c = np.argmax(g.color_probs, axis=1)
            pred_m = np.argmax(g.model_probs, axis=1)
            rows = np.flatnonzero(np.isin(pred_c, top_colors) & np.isin(pred_m, top_models))
            d = np.sum((g.sls[rows] - q.sls) ** 2, axis=1)
            expected = sorted_oracle(rows, d, 8)
            result = bucket_search(q, index, g, 8)
            assert result.entries.tolist() == expected
            assert result.candidates == rows.shape[0]

    def test_single_bucket_equals_linear_on_sls(self, rng):
        g = make_gallery(rng, n=30, n_colors=1, n_models=1)
        q = external_query(rng, g)
        result = bucket_search(q, build_bucket_index(g), g, 10)
        d = np.sum((g.sls - q.sls) ** 2, axis=1)
        assert result.entries.tolist() == sorted_oracle(np.arange(30), d, 10)

    def test_entries_outside_candidate_buckets_never_returned(self, rng):
        g = make_gallery(rng, n=50, n_colors=5, n_models=5, probs="truth")
        q = g.entry(0)
        # a same-identity twin predicted into a bucket outside the top-2 x top-2
        # one-hot query: its top-2 colors are its own color and the lowest other index
        twin_color = next(c for c in (2, 3, 4) if c != int(g.colors[0]))
        color_probs = g.color_probs.copy()
        color_probs[1] = one_hot(np.array([twin_color]), 5)[0]
        sls = g.sls.copy()
        sls[1] = sls[0]
        moved = Gallery(**{**{n: getattr(g, n) for n in ("sample_idx", "vehicle_ids", "colors", "models", "views", "splits", "acs", "model_probs")}, "sls": sls, "color_probs": color_probs})
        result = bucket_search(q, build_bucket_index(moved), moved, len(moved))
        allowed = set(build_bucket_index(moved).candidates(q.color_probs, q.model_probs).tolist())
        assert 1 not in result.entries.tolist()
        assert set(result.entries.tolist()) <= allowed

    def test_fewer_than_two_classes_uses_all_keys(self, rng):
        g = make_gallery(rng, n=20, n_colors=1, n_models=3)
        index = build_bucket_index(g)
        q = external_query(rng, g)
        keys = index.candidate_keys(q.color_probs, q.model_probs)
        assert len(keys) == 2 and all(c == 0 for c, _ in keys)

    def test_self_excluded(self, rng):
        g = make_gallery(rng, n=30, probs="truth")
        result = bucket_search(g.entry(4), build_bucket_index(g), g, 30)
        assert 4 not in result.entries.tolist()

    def test_sls_dimension_mismatch(self, rng):
        g = make_gallery(rng)
        q = external_query(rng, g)._replace(sls=np.zeros(2))
        with pytest.raises(ShapeError):
            bucket_search(q, build_bucket_index(g), g, 3)


@pytest.mark.unit
class TestSelectQueries:
    def test_one_per_identity_and_eligible_only(self, rng):
        ids = [0, 0, 1, 2, 2, 2, 3, 4, 4]
        g = make_gallery(rng, n=len(ids), ids=ids)
        rows = select_queries(g, 10, "random", seed=1)
        chosen = g.vehicle_ids[rows].tolist()
        assert sorted(chosen) == [0, 2, 4]
        assert rows.tolist() == sorted(rows.tolist())

    def test_random_is_seeded(self, rng):
        g = make_gallery(rng, n=60)
        assert np.array_equal(select_queries(g, 5, seed=3), select_queries(g, 5, seed=3))

    def test_tough_prefers_largest_identities(self, rng):
        ids = [0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3]
        g = make_gallery(rng, n=len(ids), ids=ids)
        rows = select_queries(g, 2, "tough")
        assert rows.tolist() == [2, 5]

    def test_nothing_to_query(self, rng):
        g = make_gallery(rng, n=4, ids=[0, 1, 2, 3])
        with pytest.raises(DatasetValidationError):
            select_queries(g, 3)

    def test_bad_mode(self, rng):
        g = make_gallery(rng)
        with pytest.raises(ParamValidationError):
            select_queries(g, 3, "easy")


@pytest.mark.unit
class TestGalleryFile:
    def test_parquet_round_trip(self, tmp_path: Path, rng):
        g = make_gallery(rng, n=15)
        path = write_gallery(tmp_path / "gallery.parquet", g)
        loaded = read_gallery(path)
        assert np.array_equal(loaded.sample_idx, g.sample_idx)
        assert np.array_equal(loaded.sls, g.sls)
        assert np.array_equal(loaded.model_probs, g.model_probs)
        assert loaded.splits.tolist() == ["all"] * 15

    def test_rows_by_sample_idx(self, rng):
        g = make_gallery(rng, n=5)
        assert g.rows_by_sample_idx([103, 100]).tolist() == [3, 0]

    def test_unreadable_file(self, tmp_path: Path):
        path = tmp_path / "gallery.parquet"
        path.write_bytes(b"PAR1 truncated")
        with pytest.raises(TableFormatError):
            read_gallery(path)

    def test_missing_column(self, tmp_path: Path, rng):
        table = make_gallery(rng, n=4).to_table().drop_columns(["acs"])
        path = tmp_path / "gallery.parquet"
        pq.write_table(table, path)
        with pytest.raises(TableFormatError, match="acs"):
            read_gallery(path)


@pytest.mark.unit
class TestBench:
    def test_synthetic_gallery_shape(self):
        g = synthetic_gallery(1000, n_colors=3, n_models=4, seed=1)
        assert len(g) == 1000
        assert np.allclose(np.linalg.norm(g.sls, axis=1), 1.0)
        index = build_bucket_index(g)
        for (c, m), members in index.buckets.items():
            assert np.all(g.colors[members] == c) and np.all(g.models[members] == m)

    def test_small_bench_report(self):
        g = synthetic_gallery(2000, n_colors=3, n_models=10, seed=2)
        queries = np.arange(0, 2000, 100)
        report = bench(g, queries, k=5, repetitions=1)
        assert report.queries == 20
        assert report.bucket_violations == 0
        assert report.same_id_recall_full == 1.0
        assert 0.0 <= report.map_bucket <= 1.0
        assert report.candidates_max <= len(g)
        assert set(report.as_dict()) >= {"speedup", "map_linear", "map_bucket"}

    def test_ground_truth_counts(self, rng):
        g = make_gallery(rng, n=5, ids=[0, 0, 0, 1, 1])
        assert ground_truth_counts(g, np.array([0, 3])).tolist() == [2, 1]
        assert ground_truth_counts(g, np.array([0]), exclude_self=False).tolist() == [3]

    def test_map_uses_full_linear_ranking(self, rng):
        g = make_gallery(rng, n=30, ids=np.repeat(np.arange(6), 5))
        queries = np.array([0, 7, 14])
        report = bench(g, queries, k=1, repetitions=1)
        expected, top1 = [], []
        for row in queries:
            q = g.entry(int(row))
            full = linear_search(q, g, len(g))
            expected.append(average_precision(g.vehicle_ids[full.entries], q.vehicle_id, 4))
            top1.append(average_precision(g.vehicle_ids[full.entries[:1]], q.vehicle_id, 4))
        assert report.map_linear == pytest.approx(float(np.mean(expected)))
        assert report.map_linear > float(np.mean(top1))

    def test_repetitions_checked(self, rng):
        g = make_gallery(rng)
        with pytest.raises(ParamValidationError):
            bench(g, np.array([0]), k=3, repetitions=0)
