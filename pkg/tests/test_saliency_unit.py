"""
Unit tests for occlusion saliency maps and their file formats
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from repnet.analysis.saliency import (
    Occluder,
    SaliencyMap,
    occlusion_map,
    occlusion_saliency,
    to_pgm,
    write_pgm,
    write_saliency_csv,
)
from repnet.domain.errors import ParamValidationError


def identity(x):
    return np.asarray(x, dtype=np.float64).reshape(-1)


@pytest.mark.unit
class TestOccluder:
    def test_defaults(self):
        assert Occluder().resolve(64) == (4, 2)
        assert Occluder().resolve(10) == (1, 1)
        assert Occluder(size=6).resolve(64) == (6, 3)

    def test_larger_than_input(self):
        with pytest.raises(ParamValidationError):
            Occluder(size=9).resolve(8)


@pytest.mark.unit
class TestOcclusionMap:
    def test_identity_extractor_measures_occluded_mass(self, rng):
        x = rng.normal(size=10)
        sal = occlusion_map(identity, x, Occluder(size=3, stride=2))
        assert sal.values.shape == (4,)
        for i, value in enumerate(sal.values):
            assert value == pytest.approx(np.linalg.norm(x[2 * i:2 * i + 3]))

    def test_fill_equal_to_content_gives_zero_map(self):
        x = np.full(12, 0.5)
        sal = occlusion_map(identity, x, Occluder(size=4, stride=4, fill=0.5))
        assert not sal.values.any()

    def test_full_occlusion(self, rng):
        x = rng.normal(size=6)
        sal = occlusion_map(identity, x, Occluder(size=6, stride=1))
        assert sal.values.shape == (1,)
        assert sal.values[0] == pytest.approx(np.linalg.norm(x))

    def test_grid_positions_row_major(self, rng):
        x = rng.normal(size=(6, 8))
        sal = occlusion_map(identity, x, Occluder(size=2, stride=2))
        assert sal.values.shape == (3, 4)
        assert sal.grid.shape == (3, 4)
        assert sal.values[1, 2] == pytest.approx(np.linalg.norm(x[2:4, 4:6]))

    def test_threads_do_not_change_result(self, rng):
        x = rng.normal(size=(8, 8))
        serial = occlusion_map(identity, x, Occluder(size=2, stride=1))
        pooled = occlusion_map(identity, x, Occluder(size=2, stride=1), threads=4)
        assert np.array_equal(serial.values, pooled.values)

    def test_input_is_not_modified(self, rng):
        x = rng.normal(size=9)
        before = x.copy()
        occlusion_map(identity, x, Occluder(size=3, stride=3))
        assert np.array_equal(x, before)

    def test_rank_three_rejected(self):
        with pytest.raises(ParamValidationError):
            occlusion_map(identity, np.zeros((2, 2, 2)))


@pytest.mark.unit
class TestNetworkSaliency:
    def test_dead_inputs_have_zero_saliency(self, tiny_config, rng):
        from repnet.network import init_params

        params = init_params(tiny_config)
        params.weights["base_0"][4:] = 0.0
        x = rng.normal(size=tiny_config.input_dim)
        sal = occlusion_saliency(params, tiny_config, x, "F_SLS-3", Occluder(size=2, stride=2))
        assert sal.values.shape == (4,)
        assert sal.values[2] == 0.0 and sal.values[3] == 0.0
        assert sal.feature == "F_SLS-3"

    def test_grid_input_is_flattened(self, tiny_config, rng):
        from repnet.network import init_params

        params = init_params(tiny_config)
        sal = occlusion_saliency(params, tiny_config, rng.normal(size=(2, 4)), "F_ACS", Occluder(size=1, stride=1))
        assert sal.values.shape == (2, 4)
        assert np.all(sal.values >= 0)

    def test_unknown_feature(self, tiny_config, rng):
        from repnet.network import init_params

        with pytest.raises(ParamValidationError):
            occlusion_saliency(init_params(tiny_config), tiny_config, rng.normal(size=8), "F_nothing")


@pytest.mark.unit
class TestSaliencyFiles:
    def test_pgm_scaling(self):
        sal = SaliencyMap(values=np.array([[0.0, 1.0], [2.0, 4.0]]), size=1, stride=1, feature="F_SLS-3")
        assert to_pgm(sal) == "P2\n2 2\n255\n0 64\n128 255\n"

    def test_pgm_zero_map(self):
        sal = SaliencyMap(values=np.zeros(3), size=1, stride=1, feature="F_ACS")
        assert to_pgm(sal) == "P2\n3 1\n255\n0 0 0\n"

    def test_write_files(self, tmp_path: Path):
        sal = SaliencyMap(values=np.array([[0.5, 1.5, 2.0]]), size=1, stride=1, feature="F_ACS")
        frame = pd.read_csv(write_saliency_csv(tmp_path / "saliency.csv", sal))
        assert list(frame.columns) == ["c0", "c1", "c2"]
        assert frame.iloc[0].tolist() == [0.5, 1.5, 2.0]
        assert write_pgm(tmp_path / "saliency.pgm", sal).read_text(encoding="utf-8").startswith("P2\n3 1\n")
