import json

import numpy as np
import pytest

from conftest import smooth_erp
from omnisal import fusion
from omnisal import pipeline as pl
from omnisal.backends import dog_backend, precomputed_backend
from omnisal.imaging import write_smf
from omnisal.metrics import EPS
from omnisal.projection import CubemapSet, Rotation, cmp_to_erp, default_rotation_set
from omnisal.pipeline import (EquatorBias, Pipeline, PipelineConfig, PipelineError, apply_equator_bias,
                              compute_equator_bias, evaluate_dataset, load_bias, predict_erp, save_bias)


class TestEquatorBias:
    def test_identical_maps(self, rng):
        m = rng.random((4, 8))
        eb = compute_equator_bias([m, m, m])
        np.testing.assert_allclose(eb.map, m)
        assert eb.source_count == 3

    def test_two_maps(self):
        eb = compute_equator_bias([np.zeros((2, 4)), np.ones((2, 4))])
        np.testing.assert_allclose(eb.map, 0.5)

    def test_arithmetic(self):
        eb = compute_equator_bias([np.full((1, 2), v) for v in (0.2, 0.4, 0.9)])
        np.testing.assert_allclose(eb.map, (0.2 + 0.4 + 0.9) / 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            compute_equator_bias([])
        with pytest.raises(ValueError):
            compute_equator_bias([np.zeros((2, 2)), np.zeros((2, 3))])

    def test_apply(self, rng):
        b = rng.random((4, 8))
        np.testing.assert_allclose(apply_equator_bias(np.ones((4, 8)), EquatorBias(b, 1)), b)
        s = rng.random((4, 8))
        np.testing.assert_allclose(apply_equator_bias(s, EquatorBias(np.ones((4, 8)), 1)), s)
        assert apply_equator_bias(np.array([[0.5]]), EquatorBias(np.array([[0.3]]), 1))[0, 0] == pytest.approx(0.15)

    def test_zero_preservation(self, rng):
        s = rng.random((6, 6)) * (rng.random((6, 6)) > 0.5)
        b = rng.random((6, 6)) * (rng.random((6, 6)) > 0.5)
        out = apply_equator_bias(s, EquatorBias(b, 1))
        assert np.all(out[(s == 0) | (b == 0)] == 0)

    def test_resized_bias(self):
        out = apply_equator_bias(np.ones((8, 16)), EquatorBias(np.full((4, 8), 0.25), 1))
        assert out.shape == (8, 16)
        np.testing.assert_allclose(out, 0.25)

    def test_resize_wraps_at_seam(self):
        # output column 0 sits between source column 1 (across the seam) and column 0
        out = apply_equator_bias(np.ones((1, 4)), EquatorBias(np.array([[0.0, 1.0]]), 1))
        np.testing.assert_allclose(out[0], [0.25, 0.25, 0.75, 0.75])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            apply_equator_bias(np.array([[np.nan]]), EquatorBias(np.ones((1, 1)), 1))

    def test_disk_format(self, tmp_path, rng):
        eb = EquatorBias(rng.random((4, 8)).astype(np.float32), 7)
        p = tmp_path / "bias.smf"
        save_bias(eb, p)
        assert json.loads((tmp_path / "bias.smf.json").read_text()) == {"source_count": 7}
        back = load_bias(p)
        np.testing.assert_array_equal(back.map, eb.map)
        assert back.source_count == 7


def write_identical_maps(directory, stem, faces):
    for j in range(5):
        for f in range(6):
            write_smf(directory / f"{stem}_r{j}_f{f}.smf", faces[f].astype(np.float32))


class TestPredict:
    def test_shape_and_non_negative(self, rng):
        erp = smooth_erp(64, 32, 3)
        out = predict_erp(erp, PipelineConfig(face_size=16))
        assert out.shape == (32, 64)
        assert np.all(out >= 0) and np.all(np.isfinite(out))

    def test_average_of_identical_maps_is_back_projection(self, tmp_path, rng):
        l = 16
        faces = rng.random((6, l, l)).astype(np.float32)
        faces[0, 0, 0], faces[1, 0, 0] = 0.0, 1.0  # already min-max normalised jointly
        write_identical_maps(tmp_path, "pano", faces)
        cfg = PipelineConfig(backend=precomputed_backend(tmp_path, "{stem}_r{rot}_f{face}.smf"),
                             face_size=l, fusion="average")
        out = predict_erp(np.zeros((32, 64)), cfg, stem="pano")
        expected = cmp_to_erp(CubemapSet(faces.astype(np.float64), Rotation(0, 0)), 64, 32)
        assert np.abs(out - expected).mean() < 0.02
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_max_fusion_on_identical_maps(self, tmp_path, rng):
        faces = rng.random((6, 8, 8))
        faces[2, 3, 3], faces[4, 1, 1] = 0.0, 1.0
        write_identical_maps(tmp_path, "p", faces)
        be = precomputed_backend(tmp_path, "{stem}_r{rot}_f{face}.smf")
        a = predict_erp(np.zeros((16, 32)), PipelineConfig(backend=be, face_size=8, fusion="max"), stem="p")
        b = predict_erp(np.zeros((16, 32)), PipelineConfig(backend=be, face_size=8, fusion="average"), stem="p")
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_cnn_deterministic_with_bias(self, tmp_path, rng):
        fusion.save(fusion.init_weights(3), tmp_path / "w.bin")
        save_bias(EquatorBias(np.linspace(0, 1, 32 * 64).reshape(32, 64), 2), tmp_path / "eb.smf")
        cfg = PipelineConfig(face_size=12, fusion="cnn", weights=str(tmp_path / "w.bin"),
                             bias=str(tmp_path / "eb.smf"))
        erp = smooth_erp(64, 32, 3)
        p = Pipeline(cfg)
        a, b = p.predict(erp), p.predict(erp)
        assert a.tobytes() == b.tobytes()
        assert np.all(a[0] < a[-1].max() + 1)  # finite, bias applied
        assert np.all(a >= 0)

    def test_randomised_inputs_stay_finite(self, rng):
        cfg = PipelineConfig(face_size=8)
        for _ in range(5):
            erp = rng.random((16, 32, 3)) * rng.uniform(0.01, 100)
            out = predict_erp(erp, cfg)
            assert np.all(np.isfinite(out)) and np.all(out >= 0)

    def test_normalized_output(self):
        out = predict_erp(smooth_erp(32, 16), PipelineConfig(face_size=8, normalize_output=True))
        assert out.min() == 0.0 and out.max() == 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(fusion="cnn")
        with pytest.raises(ValueError):
            PipelineConfig(fusion="median")
        with pytest.raises(ValueError):
            PipelineConfig(rotations=tuple(default_rotation_set()[:3]))

    def test_stage_identified_on_failure(self, tmp_path):
        cfg = PipelineConfig(backend=precomputed_backend(tmp_path, "{stem}_r{rot}_f{face}.smf"), face_size=8)
        with pytest.raises(PipelineError) as info:
            predict_erp(np.zeros((16, 32)), cfg, stem="nothing")
        assert "rotation 0, face 0" in info.value.stage


class TestEvaluate:
    def test_identical(self, rng):
        maps = [rng.random((4, 8)) + 0.1 for _ in range(3)]
        mean, per = evaluate_dataset(maps, maps)
        # kld(p, p) carries the eps artefact eps * (1 - N)
        assert abs(mean.kld) <= 32 * EPS
        assert mean.cc == pytest.approx(1.0, abs=1e-9)
        assert len(per) == 3

    def test_identical_tiny_maps(self, rng):
        maps = [rng.random((2, 4)) + 0.1 for _ in range(2)]
        mean, _ = evaluate_dataset(maps, maps)
        assert abs(mean.kld) < 1e-6

    def test_single_image(self, rng):
        p, g = rng.random((2, 4, 8))
        mean, per = evaluate_dataset([p], [g])
        assert mean.kld == per[0].kld and mean.cc == per[0].cc

    def test_mean_arithmetic(self, rng, monkeypatch):
        from omnisal.metrics import MetricReport
        values = iter([MetricReport(0.4, 0.1), MetricReport(0.6, 0.3)])
        monkeypatch.setattr(pl, "report", lambda g, p, lat_weighted=False: next(values))
        mean, _ = evaluate_dataset([np.ones((2, 2))] * 2, [np.ones((2, 2))] * 2)
        assert mean.kld == pytest.approx(0.5) and mean.cc == pytest.approx(0.2)

    def test_errors(self):
        with pytest.raises(ValueError):
            evaluate_dataset([np.ones((2, 2))], [])
        with pytest.raises(ValueError):
            evaluate_dataset([np.ones((2, 2))], [np.ones((3, 3))])

    def test_lat_weighted_flag(self, rng):
        p, g = rng.random((2, 8, 16))
        a, _ = evaluate_dataset([p], [g])
        b, _ = evaluate_dataset([p], [g], lat_weighted=True)
        assert a.kld != b.kld
