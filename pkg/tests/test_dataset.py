import hashlib
from pathlib import Path

import numpy as np
import pytest

from radialkit import dataset, imaging
from radialkit.dataset import (
    CropSpec, DatasetRecipe, crop, draw_lambda, generate, parse_crop,
    parse_recipe, pipeline_pair, read_manifest, resolve_crop, write_manifest,
)
from radialkit.geometry import DistortionModel

from conftest import textured_image


def make_sources(tmp_path, n=3, size=48):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(n):
        imaging.write_image(textured_image(i, size), src / f"img{i:02d}.png")
    return src


def tree_hash(root):
    digest = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            digest.update(p.relative_to(root).as_posix().encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


class TestDrawLambda:
    def test_degenerate_range(self):
        assert draw_lambda(1, 5, 0.4, 0.4) == 0.4

    def test_deterministic(self):
        assert draw_lambda(123, 7, 0.1, 0.9) == draw_lambda(123, 7, 0.1, 0.9)

    def test_distinct_across_indices(self):
        values = {draw_lambda(123, i, 0.1, 0.9) for i in range(100)}
        assert len(values) == 100

    def test_uniform_mean(self):
        values = [draw_lambda(42, i, 0.1, 0.9) for i in range(10000)]
        assert abs(np.mean(values) - 0.5) < 0.02
        assert min(values) >= 0.1 and max(values) <= 0.9

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            draw_lambda(0, 0, 0.9, 0.1)


class TestCrop:
    def test_full_frame_identity(self):
        img = textured_image(0, 32)
        assert np.array_equal(crop(img, CropSpec(32, 32)), img)

    def test_center_half(self):
        img = textured_image(1, 100)
        out = crop(img, CropSpec(50, 50))
        assert out.shape == (50, 50)
        assert np.array_equal(out, img[25:75, 25:75])

    def test_out_of_bounds_clamped_and_flagged(self):
        x0, y0, w, h, clamped = resolve_crop(CropSpec(40, 40, (5.0, 5.0)), 32, 32)
        assert clamped
        assert (x0, y0) == (0, 0)
        assert x0 + w <= 32 and y0 + h <= 32

    def test_degenerate_crop_rejected(self):
        with pytest.raises(ValueError):
            resolve_crop(CropSpec(4, 4, (-100.0, -100.0)), 32, 32)
        with pytest.raises(ValueError):
            CropSpec(0, 4)

    def test_parse_crop(self):
        spec = parse_crop("10,20,30,40")
        assert (spec.center, spec.width, spec.height) == ((10.0, 20.0), 30, 40)
        frac = parse_crop("center:0.5")
        assert frac.resolve(100, 100) == CropSpec(50, 50)
        with pytest.raises(ValueError):
            parse_crop("center:1.5")
        with pytest.raises(ValueError):
            parse_crop("1,2,3")


class TestRecipe:
    def test_parse_fixed(self, tmp_path):
        path = tmp_path / "r.txt"
        path.write_text(
            "name = toy\nsource_dir = src\nmodel = dm:0.6\nemit_undistorted = true\n")
        recipe = parse_recipe(path)
        assert recipe.model == DistortionModel.dm(0.6)
        assert recipe.emit_undistorted

    def test_parse_range(self, tmp_path):
        path = tmp_path / "r.txt"
        path.write_text(
            "name = toy\nsource_dir = src\nmodel = dm\n"
            "lambda_min = 0.1\nlambda_max = 0.9\nseed = 7\n")
        recipe = parse_recipe(path)
        assert recipe.lambda_range == (0.1, 0.9)
        assert recipe.model_for(0.5) == DistortionModel.dm(0.5)

    def test_range_requires_seed(self):
        with pytest.raises(ValueError):
            DatasetRecipe("x", "src", model_tag="dm", lambda_range=(0.1, 0.9))

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "r.txt"
        path.write_text("name = x\nsource_dir = s\nmodel = dm:0.5\nbogus = 1\n")
        with pytest.raises(ValueError):
            parse_recipe(path)

    def test_range_end_validated(self):
        with pytest.raises(ValueError):
            DatasetRecipe("x", "src", model_tag="dm", lambda_range=(0.1, 1.5), seed=1)


class TestGenerate:
    def test_counting_contract(self, tmp_path):
        src = make_sources(tmp_path, 3)
        recipe = DatasetRecipe("toy", str(src), model=DistortionModel.dm(0.6),
                               emit_undistorted=True)
        manifest = generate(recipe, tmp_path / "out")
        labels = [e.label for e in manifest.entries]
        assert labels.count("distorted") == 3
        assert labels.count("undistorted") == 3
        assert len(manifest.entries) == 6

    def test_fixed_lambda_rows(self, tmp_path):
        src = make_sources(tmp_path, 2)
        recipe = DatasetRecipe("ep09", str(src), model=DistortionModel.dm(0.9))
        manifest = generate(recipe, tmp_path / "out")
        for e in manifest.entries:
            assert e.label == "distorted"
            assert e.lam == 0.9
            assert e.model == "dm:0.9"

    def test_determinism_double_run(self, tmp_path):
        src = make_sources(tmp_path, 4)
        recipe = DatasetRecipe("toy", str(src), model_tag="dm",
                               lambda_range=(0.1, 0.9), seed=11,
                               emit_undistorted=True)
        m1 = generate(recipe, tmp_path / "out1")
        write_manifest(m1, tmp_path / "out1" / "manifest.csv")
        m2 = generate(recipe, tmp_path / "out2", jobs=3)
        write_manifest(m2, tmp_path / "out2" / "manifest.csv")
        assert tree_hash(tmp_path / "out1") == tree_hash(tmp_path / "out2")

    def test_undistorted_rows_byte_identical_to_source(self, tmp_path):
        src = make_sources(tmp_path, 2)
        recipe = DatasetRecipe("toy", str(src), model=DistortionModel.dm(0.4),
                               emit_undistorted=True)
        manifest = generate(recipe, tmp_path / "out")
        for e in manifest.entries:
            if e.label == "undistorted":
                out_bytes = (tmp_path / "out" / e.output).read_bytes()
                assert out_bytes == Path(e.source).read_bytes()

    def test_unreadable_image_skipped_with_warning(self, tmp_path):
        src = make_sources(tmp_path, 2)
        (src / "broken.png").write_bytes(b"garbage")
        recipe = DatasetRecipe("toy", str(src), model=DistortionModel.dm(0.4))
        manifest = generate(recipe, tmp_path / "out")
        assert len(manifest.warnings) == 1
        skipped = [e for e in manifest.entries if e.label == "skipped"]
        assert len(skipped) == 1

    def test_empty_source_dir_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        recipe = DatasetRecipe("toy", str(tmp_path / "empty"),
                               model=DistortionModel.dm(0.4))
        with pytest.raises(ValueError):
            generate(recipe, tmp_path / "out")

    def test_manifest_round_trip(self, tmp_path):
        src = make_sources(tmp_path, 2)
        recipe = DatasetRecipe("toy", str(src), model_tag="dm",
                               lambda_range=(0.3, 0.7), seed=5)
        manifest = generate(recipe, tmp_path / "out")
        path = tmp_path / "out" / "manifest.csv"
        write_manifest(manifest, path)
        loaded = read_manifest(path)
        assert len(loaded.entries) == len(manifest.entries)
        for a, b in zip(loaded.entries, manifest.entries):
            assert a.output == b.output and a.label == b.label
            if b.lam is not None:
                assert a.lam == pytest.approx(b.lam, rel=1e-5)  # 6 significant digits
        # every row's file exists (outputs are relative to the manifest dir)
        for e in loaded.entries:
            if e.label != "skipped":
                assert (tmp_path / "out" / e.output).is_file()

    def test_crop_then_distort_recipe(self, tmp_path):
        src = make_sources(tmp_path, 2, size=64)
        recipe = DatasetRecipe("toy", str(src), model=DistortionModel.dm(0.5),
                               crop=dataset.CenterFractionCrop(0.5),
                               crop_order="crop_then_distort")
        manifest = generate(recipe, tmp_path / "out")
        img = imaging.read_image(tmp_path / "out" / manifest.entries[0].output)
        assert img.shape == (32, 32)


class TestPipelinePair:
    def test_identity_at_zero(self):
        img = textured_image(2, 64)
        result = pipeline_pair(img, 0.0, CropSpec(32, 32))
        assert np.array_equal(result.distort_then_crop, result.crop_then_distort)
        assert result.mean_disp_distort_first == 0.0
        assert result.mean_disp_crop_first == 0.0

    @pytest.mark.parametrize("frac", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("lam", [0.3, 0.5, 0.9])
    def test_crop_first_displaces_more(self, frac, lam):
        img = textured_image(3, 128)
        side = int(round(128 * frac))
        result = pipeline_pair(img, lam, CropSpec(side, side))
        assert result.mean_disp_crop_first > result.mean_disp_distort_first

    def test_stats_deterministic(self):
        img = textured_image(4, 64)
        r1 = pipeline_pair(img, 0.5, CropSpec(32, 32))
        r2 = pipeline_pair(img, 0.5, CropSpec(32, 32))
        assert r1.mean_disp_crop_first == r2.mean_disp_crop_first
        assert np.array_equal(r1.crop_then_distort, r2.crop_then_distort)
