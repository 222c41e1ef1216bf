"""Deterministic synthetic-corpus generation with provenance manifests.

A recipe names a source image tree and a distortion model (either a fixed
coefficient or a per-image uniform draw from a range) and optionally a
crop stage, ordered before or after the distortion. Generation is fully
determined by the recipe and the lexicographically sorted source list:
per-image coefficients come from a counter-based generator keyed by
(recipe seed, source index), so corpora are reproducible regardless of
filesystem enumeration order or parallelism.
"""

from __future__ import annotations

import concurrent.futures
import csv
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .geometry import DistortionModel, DescriptorError
from .imaging import WarpSpec, SYNTHESIZE

CROP_ORDERS = ("none", "distort_then_crop", "crop_then_distort")

MANIFEST_FIELDS = ("source", "output", "label", "model", "lambda", "seed", "fill_fraction")

IMAGE_EXTENSIONS = (".png", ".ppm", ".pgm")


@dataclass(frozen=True)
class CropSpec:
    """Axis-aligned crop; center=None means the image center."""

    width: int
    height: int
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("crop dimensions must be >= 1")


@dataclass
class DatasetRecipe:
    name: str
    source_dir: str
    model: DistortionModel | None = None        # fixed-coefficient mode
    model_tag: str | None = None                # range mode: family tag, e.g. "dm", "kbs"
    lambda_range: tuple[float, float] | None = None
    seed: int | None = None
    emit_undistorted: bool = False
    crop: CropSpec | None = None
    crop_order: str = "none"

    def __post_init__(self):
        if (self.model is None) == (self.lambda_range is None):
            raise ValueError("recipe needs exactly one of a fixed model or a lambda range")
        if self.lambda_range is not None:
            lo, hi = self.lambda_range
            if lo > hi:
                raise ValueError(f"lambda range reversed: [{lo}, {hi}]")
            if self.seed is None:
                raise ValueError("a seed is required with a lambda range")
            if self.model_tag is None:
                raise ValueError("a model tag is required with a lambda range")
            # Validate the range ends against the model invariants up front.
            self.model_for(lo)
            self.model_for(hi)
        if self.crop_order not in CROP_ORDERS:
            raise ValueError(f"unknown crop_order: {self.crop_order!r}")
        if self.crop_order != "none" and self.crop is None:
            raise ValueError("crop_order set but no crop given")

    def model_for(self, lam):
        if self.model is not None:
            return self.model
        return DistortionModel.parse(f"{self.model_tag}:{lam!r}")


@dataclass
class ManifestEntry:
    source: str
    output: str
    label: str                   # "distorted" | "undistorted" | "skipped"
    model: str = ""
    lam: float | None = None
    seed: str = ""
    fill_fraction: float = 0.0


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def draw_lambda(seed, index, lam_min, lam_max):
    """Deterministic uniform draw in [lam_min, lam_max], keyed by (seed, index)."""
    if lam_min > lam_max:
        raise ValueError(f"lambda range reversed: [{lam_min}, {lam_max}]")
    if lam_min == lam_max:
        return float(lam_min)
    u = np.random.Generator(np.random.Philox(key=[int(seed), int(index)])).random()
    return float(lam_min + u * (lam_max - lam_min))


def parse_recipe(path):
    """Parse a flat ``key = value`` recipe file."""
    fields = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in fields:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        fields[key] = value
    return recipe_from_fields(fields)


def recipe_from_fields(fields):
    known = {"name", "source_dir", "model", "lambda_min", "lambda_max",
             "seed", "emit_undistorted", "crop", "crop_order"}
    unknown = set(fields) - known
    if unknown:
        raise ValueError(f"unknown recipe keys: {sorted(unknown)}")
    for required in ("name", "source_dir", "model"):
        if required not in fields:
            raise ValueError(f"recipe missing required key {required!r}")

    has_range = "lambda_min" in fields or "lambda_max" in fields
    if has_range:
        if not ("lambda_min" in fields and "lambda_max" in fields):
            raise ValueError("lambda_min and lambda_max must be given together")
        model = None
        model_tag = fields["model"]
        lambda_range = (float(fields["lambda_min"]), float(fields["lambda_max"]))
    else:
        model = DistortionModel.parse(fields["model"])
        model_tag = None
        lambda_range = None

    seed = int(fields["seed"]) if "seed" in fields else None
    emit = fields.get("emit_undistorted", "false").lower() in ("1", "true", "yes")

    crop = None
    if "crop" in fields:
        crop = parse_crop(fields["crop"])
    crop_order = fields.get("crop_order", "distort_then_crop" if crop else "none")

    return DatasetRecipe(
        name=fields["name"], source_dir=fields["source_dir"],
        model=model, model_tag=model_tag, lambda_range=lambda_range,
        seed=seed, emit_undistorted=emit, crop=crop, crop_order=crop_order,
    )


def parse_crop(text):
    """Parse ``center:<frac>`` or ``cx,cy,w,h`` crop descriptors."""
    text = text.strip()
    if text.startswith("center:"):
        frac = float(text[len("center:"):])
        if not 0.0 < frac <= 1.0:
            raise ValueError(f"center crop fraction must be in (0, 1], got {frac}")
        # Dimensions are resolved against each image at generation time.
        return CenterFractionCrop(frac)
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"bad crop descriptor: {text!r}")
    cx, cy = float(parts[0]), float(parts[1])
    w, h = int(parts[2]), int(parts[3])
    return CropSpec(w, h, (cx, cy))


@dataclass(frozen=True)
class CenterFractionCrop:
    """Centered crop sized as a fraction of each image dimension."""

    fraction: float

    def resolve(self, width, height):
        return CropSpec(max(1, int(round(width * self.fraction))),
                        max(1, int(round(height * self.fraction))))


def resolve_crop(spec, width, height):
    """Clamp a crop rectangle to the frame; returns (x0, y0, w, h, clamped)."""
    if isinstance(spec, CenterFractionCrop):
        spec = spec.resolve(width, height)
    if spec.center is None:
        cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    else:
        cx, cy = spec.center
    x0 = int(round(cx - (spec.width - 1) / 2.0))
    y0 = int(round(cy - (spec.height - 1) / 2.0))
    x1 = x0 + spec.width
    y1 = y0 + spec.height
    cx0, cy0 = max(0, x0), max(0, y0)
    cx1, cy1 = min(width, x1), min(height, y1)
    if cx1 <= cx0 or cy1 <= cy0:
        raise ValueError("crop rectangle does not intersect the frame")
    clamped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1)
    return cx0, cy0, cx1 - cx0, cy1 - cy0, clamped


def crop(img, spec):
    """Sub-rectangle copy, clamped to the frame."""
    img = imaging.as_image(img)
    h, w = img.shape[:2]
    x0, y0, cw, ch, _ = resolve_crop(spec, w, h)
    return img[y0:y0 + ch, x0:x0 + cw].copy()


def list_sources(source_dir):
    """Sorted relative paths of supported images under a directory."""
    root = Path(source_dir)
    if not root.is_dir():
        raise ValueError(f"source directory not found: {source_dir}")
    rels = sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not rels:
        raise ValueError(f"no images found under {source_dir}")
    return rels


def generate(recipe, out_dir, jobs=1):
    """Generate one distorted output per source image, plus a manifest.

    Fully deterministic given (recipe, sorted source list). Unreadable
    sources are skipped with a warning row in the manifest.
    """
    root = Path(recipe.source_dir)
    out_root = Path(out_dir)
    rels = list_sources(root)
    manifest = DatasetManifest()

    def build(index_rel):
        index, rel = index_rel
        rows = []
        src_path = root / rel
        if recipe.lambda_range is not None:
            lam = draw_lambda(recipe.seed, index, *recipe.lambda_range)
            seed_text = str(index)
        else:
            lam = recipe.model.lam
            seed_text = ""
        model = recipe.model_for(lam)
        try:
            img = imaging.read_image(src_path)
        except imaging.ImageIOError as e:
            rows.append(ManifestEntry(str(src_path), "", "skipped"))
            return rows, f"skipped {src_path}: {e}"

        spec = WarpSpec(model, SYNTHESIZE)
        if recipe.crop_order == "crop_then_distort":
            img_in = crop(img, recipe.crop)
            result = imaging.warp(img_in, spec)
            distorted = result.image
        else:
            result = imaging.warp(img, spec)
            distorted = result.image
            if recipe.crop_order == "distort_then_crop":
                distorted = crop(distorted, recipe.crop)

        # Output paths are stored relative to the output root, so reruns into
        # different directories produce byte-identical manifests.
        out_rel = f"distorted/{rel}"
        out_path = out_root / out_rel
        out_path.parent.mkdir(parents=True, exist_ok=True)
        imaging.write_image(distorted, out_path)
        rows.append(ManifestEntry(
            str(src_path), out_rel, "distorted",
            model.descriptor(), lam, seed_text, result.fill_fraction))

        if recipe.emit_undistorted:
            u_rel = f"undistorted/{rel}"
            u_path = out_root / u_rel
            u_path.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src_path, u_path)
            rows.append(ManifestEntry(str(src_path), u_rel, "undistorted"))
        return rows, None

    tasks = list(enumerate(rels))
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(build, tasks))
    else:
        results = [build(t) for t in tasks]

    for rows, warning in results:  # source order, regardless of completion order
        manifest.entries.extend(rows)
        if warning is not None:
            manifest.warnings.append(warning)
    return manifest


def format_lambda(lam):
    return "" if lam is None else f"{lam:.6g}"


def write_manifest(manifest, path):
    """Write manifest rows as CSV (UTF-8, LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in manifest.entries:
            writer.writerow([
                e.source, e.output, e.label, e.model,
                format_lambda(e.lam), e.seed,
                f"{e.fill_fraction:.6g}" if e.label == "distorted" else "",
            ])


def read_manifest(path):
    manifest = DatasetManifest()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: bad manifest header {reader.fieldnames}")
        for row in reader:
            manifest.entries.append(ManifestEntry(
                row["source"], row["output"], row["label"], row["model"],
                float(row["lambda"]) if row["lambda"] else None,
                row["seed"],
                float(row["fill_fraction"]) if row["fill_fraction"] else 0.0,
            ))
    return manifest


def read_face_boxes(path):
    """Read external face boxes: CSV ``path,cx,cy,w,h`` in pixels."""
    boxes = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        expected = ("path", "cx", "cy", "w", "h")
        if reader.fieldnames is None or tuple(reader.fieldnames) != expected:
            raise ValueError(f"{path}: bad face-box header {reader.fieldnames}")
        for row in reader:
            boxes[row["path"]] = CropSpec(
                int(row["w"]), int(row["h"]),
                (float(row["cx"]), float(row["cy"])))
    return boxes


@dataclass
class PipelinePairResult:
    distort_then_crop: np.ndarray
    crop_then_distort: np.ndarray
    mean_disp_distort_first: float
    mean_disp_crop_first: float


def pipeline_pair(img, lam, crop_spec):
    """Apply distort-then-crop and crop-then-distort to the same image.

    The displacement statistics are mean per-pixel source displacement
    magnitudes over the final region, each computed in its own pipeline's
    normalization frame. Cropping first makes the crop's own corners the
    radius-1 points, so the same coefficient displaces its pixels
    further.
    """
    img = imaging.as_image(img)
    h, w = img.shape[:2]
    model = DistortionModel.dm(lam)
    spec = WarpSpec(model, SYNTHESIZE)

    x0, y0, cw, ch, _ = resolve_crop(crop_spec, w, h)

    full = imaging.warp(img, spec).image
    a = full[y0:y0 + ch, x0:x0 + cw].copy()
    field_full = imaging.displacement_field(spec, w, h)
    mag_a = np.hypot(field_full.dx, field_full.dy)[y0:y0 + ch, x0:x0 + cw]

    cropped = img[y0:y0 + ch, x0:x0 + cw]
    b = imaging.warp(cropped, spec).image
    field_crop = imaging.displacement_field(spec, cw, ch)
    mag_b = np.hypot(field_crop.dx, field_crop.dy)

    return PipelinePairResult(a, b, float(np.mean(mag_a)), float(np.mean(mag_b)))
