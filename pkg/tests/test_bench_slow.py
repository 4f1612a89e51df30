import pytest

from repnet.retrieval.bench import bench, synthetic_gallery
from repnet.retrieval.index import build_bucket_index
from repnet.retrieval.queries import select_queries


@pytest.mark.slow
def test_bucket_search_at_100k_entries():
    gallery = synthetic_gallery(100_000, n_colors=7, n_models=250, seed=0)
    index = build_bucket_index(gallery)
    queries = select_queries(gallery, 1000, "random", seed=0)
    assert len(queries) == 1000

    report = bench(gallery, queries, k=10, repetitions=1, index=index)

    assert report.bucket_violations == 0
    assert report.same_id_recall_full == 1.0
    assert report.speedup >= 5.0, report.as_dict()
    # 4 of 7 x 250 buckets -> about 229 candidates per query
    assert 150 <= report.candidates_mean <= 320
