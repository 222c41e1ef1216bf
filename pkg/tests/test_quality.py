import math

import numpy as np
import pytest

from radialkit import imaging, quality
from radialkit.dataset import DatasetRecipe, generate, write_manifest, read_manifest
from radialkit.geometry import DistortionModel
from radialkit.quality import (
    BaselineModel, ScoreRecord, fit_logistic, load_model, logistic_loss_and_grad,
    nqm, radial_features, read_scores, save_model, score_images, train_baseline,
    write_scores,
)

from conftest import radial_image, textured_image


class TestNqm:
    def test_equal_logits(self):
        assert nqm(0.3, 0.3) == 0.5
        assert nqm(-7.0, -7.0) == 0.5

    def test_hand_value(self):
        assert nqm(0.0, math.log(3)) == pytest.approx(0.75, abs=1e-12)

    def test_overflow_safe(self):
        assert nqm(1000.0, -1000.0) == pytest.approx(0.0, abs=1e-12)
        assert nqm(-1000.0, 1000.0) == pytest.approx(1.0, abs=1e-12)

    def test_shift_invariance(self):
        for shift in (-500.0, 3.7, 250.0):
            assert abs(nqm(1.2 + shift, -0.4 + shift) - nqm(1.2, -0.4)) < 1e-12

    def test_complement(self):
        rng = np.random.default_rng(0)
        for a, b in rng.normal(size=(200, 2)):
            assert abs(nqm(a, b) + nqm(b, a) - 1.0) < 1e-12
            assert 0.0 < nqm(a, b) < 1.0

    def test_monotone_in_gap(self):
        gaps = np.linspace(-20, 20, 1000)
        values = [nqm(-gap / 2, gap / 2) for gap in gaps]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestRadialFeatures:
    def test_uniform_image(self):
        img = np.full((40, 40), 120, dtype=np.uint8)
        f = radial_features(img, 4)
        assert np.allclose(f[:4], 120.0)
        assert np.allclose(f[4:], 0.0)

    def test_dark_center_bright_edge(self):
        f = radial_features(radial_image(64), 2)
        assert f[1] > f[0]

    @pytest.mark.parametrize("k", [2, 5, 8])
    def test_length(self, k):
        assert radial_features(textured_image(0, 32), k).shape == (2 * k,)

    def test_rotation_invariance(self):
        img = textured_image(5, 64)
        f0 = radial_features(img, 6)
        f90 = radial_features(np.rot90(img).copy(), 6)
        assert np.allclose(f0, f90, atol=1e-9)

    def test_k_too_small(self):
        with pytest.raises(ValueError):
            radial_features(textured_image(0, 32), 1)


class TestLogisticFit:
    def random_problem(self, rng, n=10, d=4):
        x = np.hstack([rng.normal(size=(n, d)), np.ones((n, 1))])
        y = (rng.random(n) < 0.5).astype(float)
        w = rng.normal(size=d + 1)
        return w, x, y

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        step = 1e-5
        for _ in range(100):
            w, x, y = self.random_problem(rng)
            if not (np.any(y == 1) and np.any(y == 0)):
                continue
            _, grad = logistic_loss_and_grad(w, x, y)
            for j in range(len(w)):
                e = np.zeros_like(w)
                e[j] = step
                lp, _ = logistic_loss_and_grad(w + e, x, y)
                lm, _ = logistic_loss_and_grad(w - e, x, y)
                fd = (lp - lm) / (2 * step)
                assert abs(grad[j] - fd) <= 1e-6 * max(1.0, abs(fd))

    def test_separable_two_points(self):
        feats = np.array([[1.0], [-1.0]])
        labels = np.array([1.0, 0.0])
        w, losses = fit_logistic(feats, labels, epochs=500)
        preds = (feats @ w[:-1] + w[-1]) > 0
        assert np.array_equal(preds, labels.astype(bool))

    def test_loss_non_increasing(self):
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(40, 6))
        labels = (rng.random(40) < 0.5).astype(float)
        labels[0], labels[1] = 1.0, 0.0
        _, losses = fit_logistic(feats, labels)
        for a, b in zip(losses, losses[1:]):
            assert b <= a + 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((3, 2)), np.ones(3))


def toy_manifest(tmp_path, lam=0.9, n=12):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(n):
        imaging.write_image(textured_image(i, 64), src / f"img{i:02d}.png")
    recipe = DatasetRecipe("toy", str(src), model=DistortionModel.dm(lam),
                           emit_undistorted=True)
    manifest = generate(recipe, tmp_path / "out")
    write_manifest(manifest, tmp_path / "out" / "manifest.csv")
    return read_manifest(tmp_path / "out" / "manifest.csv"), tmp_path / "out"


class TestBaseline:
    def test_training_deterministic(self, tmp_path):
        manifest, root = toy_manifest(tmp_path)
        m1 = train_baseline(manifest.entries, k=4, epochs=50, root=root)
        m2 = train_baseline(manifest.entries, k=4, epochs=50, root=root)
        assert np.array_equal(m1.weights, m2.weights)

    def test_distorted_training_images_score_low(self, tmp_path):
        manifest, root = toy_manifest(tmp_path, lam=0.9)
        model = train_baseline(manifest.entries, k=4, epochs=200, root=root)
        records = score_images(
            model,
            ((e.output, imaging.read_image(root / e.output))
             for e in manifest.entries))
        by_label = {e.output: e.label for e in manifest.entries}
        dist = [r.nqm for r in records if by_label[r.id] == "distorted"]
        undist = [r.nqm for r in records if by_label[r.id] == "undistorted"]
        assert np.mean(dist) < 0.5 < np.mean(undist)

    def test_logit_convention(self):
        model = BaselineModel(2, np.zeros(4), np.ones(4),
                              np.array([0.0, 0.0, 0.0, 0.0, 0.0]))
        records = score_images(model, [("x", np.full((8, 8), 50, np.uint8))])
        assert records[0].alpha == -records[0].beta
        assert records[0].nqm == 0.5

    def test_single_class_manifest_rejected(self, tmp_path):
        manifest, root = toy_manifest(tmp_path)
        only_distorted = [e for e in manifest.entries if e.label == "distorted"]
        with pytest.raises(ValueError):
            train_baseline(only_distorted, k=4, root=root)

    def test_model_file_round_trip(self, tmp_path):
        manifest, root = toy_manifest(tmp_path)
        model = train_baseline(manifest.entries, k=4, epochs=30, root=root)
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.k == model.k
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.mean, model.mean)
        assert loaded.metadata["epochs"] == 30

    def test_bad_model_file(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("something else\n")
        with pytest.raises(ValueError):
            load_model(path)


class TestScoreFiles:
    def test_round_trip(self, tmp_path):
        records = [ScoreRecord("a", 1.5, -0.5, nqm(1.5, -0.5)),
                   ScoreRecord("b", -2.0, 2.0, nqm(-2.0, 2.0))]
        path = tmp_path / "scores.csv"
        write_scores(records, path)
        loaded = read_scores(path)
        assert [(r.id, r.alpha, r.beta, r.nqm) for r in loaded] == \
               [(r.id, r.alpha, r.beta, r.nqm) for r in records]

    def test_nqm_only_format(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,nqm\np1,0.75\np2,0.25\n")
        loaded = read_scores(path)
        assert loaded[0].alpha is None
        assert loaded[0].nqm == 0.75

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("name,value\nx,1\n")
        with pytest.raises(ValueError):
            read_scores(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,nqm\np1,0.75\np1,0.25\n")
        with pytest.raises(ValueError):
            read_scores(path)
