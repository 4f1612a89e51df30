"""
Pipeline integration tests on the toy configuration (in-memory, no CLI)
"""

import numpy as np
import pandas as pd
import pytest

from repnet.domain.errors import DatasetValidationError, ParamValidationError
from repnet.domain.models import RepressionKind
from repnet.pipelines.evaluation import (
    adopt_checkpoint,
    attribute_accuracy,
    build_gallery,
    evaluate_checkpoint,
    evaluate_rankings,
    rankings_frame,
    repression_cca,
    search_queries,
)
from repnet.pipelines.study import STUDY_COLUMNS, repression_wins, run_repression_study
from repnet.pipelines.training import check_dataset_fits, split_for_run, train_model, write_training_outputs
from repnet.retrieval.metrics import average_precision


@pytest.fixture(scope="module")
def toy_result(toy_run_config, toy_dataset):
    return train_model(toy_run_config, toy_dataset)


@pytest.mark.integration
class TestTraining:
    def test_log_and_split(self, toy_result, toy_dataset):
        assert len(toy_result.loss_log) == 30
        assert len(toy_result.train) + len(toy_result.holdout) == len(toy_dataset)
        assert np.all(toy_result.loss_log["total"] >= 0)
        assert toy_result.loss_log["lr"].iloc[0] == 0.02

    def test_rerun_is_bit_identical(self, toy_run_config, toy_dataset, toy_result):
        again = train_model(toy_run_config, toy_dataset)
        pd.testing.assert_frame_equal(again.loss_log, toy_result.loss_log, check_exact=True)
        for name in toy_result.params.layer_names:
            assert again.params.weights[name].tobytes() == toy_result.params.weights[name].tobytes()

    def test_resume_from_params_copies(self, toy_run_config, toy_dataset, toy_result):
        start = toy_result.params.copy()
        train_model(toy_run_config.with_overrides({"train": {"steps": 2}}), toy_dataset, params=start)
        assert np.array_equal(start.weights["rep"], toy_result.params.weights["rep"])

    def test_outputs(self, toy_result, tmp_path):
        from repnet.config import RunConfig
        from repnet.storage.checkpoint import load_checkpoint

        paths = write_training_outputs(toy_result, tmp_path)
        params, model = load_checkpoint(paths["checkpoint"])
        assert model == toy_result.config.model
        assert RunConfig.load(paths["config"], env_prefix=None) == toy_result.config
        assert len(pd.read_csv(paths["loss_log"])) == 30

    def test_dataset_must_fit_model(self, toy_run_config):
        from repnet.config import DataSpec
        from repnet.data.synthetic import generate_synthetic

        other = generate_synthetic(DataSpec(n_colors=2, n_models=3, feature_dim=12, samples_per_id=2), seed=0)
        with pytest.raises(DatasetValidationError):
            check_dataset_fits(other, toy_run_config)


@pytest.mark.integration
class TestEvaluation:
    def test_gallery_split_labels(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        _, holdout = split_for_run(toy_dataset, toy_run_config)
        held = set(holdout.sample_idx.tolist())
        for idx, split in zip(gallery.sample_idx.tolist(), gallery.splits.tolist()):
            assert split == ("holdout" if idx in held else "train")

    def test_true_attributes_only_on_training_rows(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset, true_attributes=True)
        train_rows = gallery.splits == "train"
        assert np.all(gallery.color_probs[train_rows].max(axis=1) == 1.0)
        assert np.array_equal(np.argmax(gallery.color_probs[train_rows], axis=1), gallery.colors[train_rows])
        assert np.all(gallery.color_probs[~train_rows].max(axis=1) < 1.0)

    def test_split_filter(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset, "holdout")
        assert set(gallery.splits.tolist()) == {"holdout"}
        with pytest.raises(ParamValidationError):
            build_gallery(toy_result.params, toy_run_config, toy_dataset, "test")

    def test_rankings_frame_layout(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        rows = np.array([0, 7])
        frame = rankings_frame(gallery, rows, search_queries(gallery, rows, 4))
        assert len(frame) == 8
        assert frame["rank"].tolist() == [1, 2, 3, 4] * 2
        assert set(frame["query_idx"]) == {int(gallery.sample_idx[0]), int(gallery.sample_idx[7])}

    def test_evaluate_rankings_hand_built(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        # sample 0 belongs to vehicle 0 (samples 0..4); T = 4 after self-exclusion
        frame = pd.DataFrame(
            {
                "query_idx": [0, 0, 0],
                "rank": [1, 2, 3],
                "gallery_idx": [1, 20, 2],
                "distance": [0.1, 0.2, 0.3],
                "vehicle_id_match": [1, 0, 1],
            }
        )
        report = evaluate_rankings(frame, gallery, [1, 3])
        assert report.map == pytest.approx((1 + 2 / 3) / 4)
        assert report.precision == {1: 1.0, 3: pytest.approx(2 / 3)}

    def test_query_without_rows_scores_zero(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        frame = pd.DataFrame(columns=["query_idx", "rank", "gallery_idx", "distance", "vehicle_id_match"])
        report = evaluate_rankings(frame, gallery, [1], query_idx=[0, 5])
        assert report.map == 0.0 and report.evaluated == 2

    def test_map_counts_matches_beyond_k(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        rows = np.array([0])
        top1 = rankings_frame(gallery, rows, search_queries(gallery, rows, 1))
        table_only = evaluate_rankings(top1, gallery, [1])
        full = evaluate_rankings(top1, gallery, [1], search="linear")
        ranking = search_queries(gallery, rows, len(gallery))[0]
        # vehicle 0 has five samples; T = 4 after self-exclusion
        expected = average_precision(gallery.vehicle_ids[ranking.entries], int(gallery.vehicle_ids[0]), 4)
        assert full.map == pytest.approx(expected)
        assert full.map > table_only.map
        assert full.precision == table_only.precision

    def test_bad_header(self, toy_result, toy_run_config, toy_dataset):
        gallery = build_gallery(toy_result.params, toy_run_config, toy_dataset)
        with pytest.raises(DatasetValidationError):
            evaluate_rankings(pd.DataFrame({"q": [0]}), gallery, [1])

    @pytest.mark.parametrize("search", ["linear", "bucket"])
    def test_evaluate_checkpoint(self, search, toy_result, toy_run_config, toy_dataset):
        evaluation = evaluate_checkpoint(toy_result.params, toy_run_config, toy_dataset, search=search)
        values = evaluation.as_dict()
        assert 0.0 <= values["map"] <= 1.0
        assert values["queries"] == 6
        assert 0.0 <= values["color_accuracy"] <= 1.0
        assert set(evaluation.rankings["gallery_idx"]) <= set(toy_result.holdout.sample_idx.tolist())

    def test_attribute_accuracy_needs_samples(self, toy_result, toy_run_config, toy_dataset):
        with pytest.raises(DatasetValidationError):
            attribute_accuracy(toy_result.params, toy_run_config.model, toy_dataset.subset(np.empty(0, dtype=np.int64)))

    def test_repression_cca_splits(self, toy_result, toy_run_config, toy_dataset):
        train = repression_cca(toy_result.params, toy_run_config, toy_dataset)
        everything = repression_cca(toy_result.params, toy_run_config, toy_dataset, "all")
        assert train.n == len(toy_result.train)
        assert everything.n == len(toy_dataset)
        with pytest.raises(ParamValidationError):
            repression_cca(toy_result.params, toy_run_config, toy_dataset, "val")

    def test_adopt_checkpoint_takes_model(self, toy_run_config, toy_dataset):
        model = toy_run_config.model.model_copy(update={"rep_kind": RepressionKind.SRL, "seed": 4})
        adopted = adopt_checkpoint(toy_run_config, model, toy_dataset)
        assert adopted.model.rep_kind is RepressionKind.SRL
        assert adopted.model.seed == 4
        assert adopted.retrieval == toy_run_config.retrieval


@pytest.mark.integration
class TestStudy:
    def test_rows_and_wins(self, toy_run_config, toy_dataset):
        cfg = toy_run_config.with_overrides({"train": {"steps": 3}})
        frame = run_repression_study(cfg, [RepressionKind.PRL, RepressionKind.NOREP], [0, 1], dataset=toy_dataset)
        assert list(frame.columns) == list(STUDY_COLUMNS)
        assert frame[["seed", "rep_kind"]].values.tolist() == [[0, "prl"], [0, "norep"], [1, "prl"], [1, "norep"]]
        wins = repression_wins(frame, RepressionKind.PRL, RepressionKind.NOREP)
        assert 0 <= wins <= 2

    def test_needs_kinds_and_seeds(self, toy_run_config):
        with pytest.raises(ParamValidationError):
            run_repression_study(toy_run_config, [], [0])

    def test_cca_column_for_every_kind(self, toy_run_config, toy_dataset):
        frame = run_repression_study(toy_run_config, list(RepressionKind), [0], dataset=toy_dataset)
        assert frame["cca_correlation"].notna().all()
        assert frame["cca_correlation"].between(-1.0, 1.0).all()

    def test_wins_counts_strictly_lower(self):
        frame = pd.DataFrame(
            {
                "seed": [0, 0, 1, 1, 2, 2],
                "rep_kind": ["prl", "norep"] * 3,
                "cca_correlation": [0.90, 0.95, 0.97, 0.96, 0.93, 0.93],
            }
        )
        assert repression_wins(frame, RepressionKind.PRL, RepressionKind.NOREP) == 1
