"""Command-line interface: the whole toolkit as one executable.

Subcommands cover image warping (distort/rectify), dataset generation,
the baseline detector (train-baseline/score), evaluation curves
(det/edc) and a deliberately crude toy face comparator (compare) that
stands in for a real recognition system in desk-scale experiments.

Exit codes: 0 success, 2 usage or file-schema errors, 3 I/O failures,
4 numeric domain errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import curves, dataset, imaging, quality
from .geometry import DescriptorError, DistortionModel, DomainError

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DOMAIN = 4


def toy_embedding(img):
    """64-dim embedding: standardized 8x8 block-mean luminance.

    Returns (vector, ok); constant images have no direction and map to a
    zero sentinel with ok=False.
    """
    lum = quality.luminance(img)
    means = []
    for row in np.array_split(lum, 8, axis=0):
        for block in np.array_split(row, 8, axis=1):
            means.append(block.mean() if block.size else 0.0)
    v = np.asarray(means, dtype=np.float64)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros(64), False
    return v / norm, True


def toy_similarity(img_a, img_b):
    """Cosine similarity of toy embeddings; (value, ok) with ok=False on sentinels."""
    va, ok_a = toy_embedding(img_a)
    vb, ok_b = toy_embedding(img_b)
    if not (ok_a and ok_b):
        return 0.0, False
    return float(np.dot(va, vb)), True


def _parse_fill(text):
    if text == "black":
        return 0
    if text == "clamp":
        return imaging.EDGE_CLAMP
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"bad fill value: {text!r}") from None
    if not 0 <= value <= 255:
        raise ValueError(f"fill value out of range: {value}")
    return value


def _default_jobs():
    env = os.environ.get("RADIALKIT_JOBS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_warp_args(p):
    p.add_argument("input", help="input image (PNG/PPM/PGM)")
    p.add_argument("output", help="output image path")
    p.add_argument("--model", required=True, help="model descriptor, e.g. dm:0.6 or kbs:1.5")
    p.add_argument("--interp", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--fill", default="black", help="black | clamp | <0-255>")


def cmd_warp(args, direction):
    model = DistortionModel.parse(args.model)
    spec = imaging.WarpSpec(model, direction, args.interp, _parse_fill(args.fill))
    img = imaging.read_image(args.input)
    result = imaging.warp(img, spec)
    imaging.write_image(result.image, args.output)
    print(f"{args.output} model={model.descriptor()} "
          f"fill_fraction={result.fill_fraction:.6g} "
          f"magnification_rate={imaging.magnification_rate(model):.6g}")
    return 0


_ORDER_FLAGS = {"distort-first": "distort_then_crop", "crop-first": "crop_then_distort"}


def cmd_gen_dataset(args):
    recipe = dataset.parse_recipe(args.recipe)
    if args.seed is not None or args.crop is not None or args.order is not None:
        crop = dataset.parse_crop(args.crop) if args.crop else recipe.crop
        order = _ORDER_FLAGS[args.order] if args.order else recipe.crop_order
        if args.crop and order == "none":
            order = "distort_then_crop"
        recipe = dataset.DatasetRecipe(
            name=recipe.name, source_dir=recipe.source_dir,
            model=recipe.model, model_tag=recipe.model_tag,
            lambda_range=recipe.lambda_range,
            seed=recipe.seed if args.seed is None else args.seed,
            emit_undistorted=recipe.emit_undistorted,
            crop=crop, crop_order=order)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = dataset.generate(recipe, out_dir, jobs=args.jobs)
    dataset.write_manifest(manifest, out_dir / "manifest.csv")
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    n_dist = sum(1 for e in manifest.entries if e.label == "distorted")
    n_undist = sum(1 for e in manifest.entries if e.label == "undistorted")
    print(f"{out_dir / 'manifest.csv'}: {n_dist} distorted, {n_undist} undistorted, "
          f"{len(manifest.warnings)} skipped")
    return 0


def cmd_train_baseline(args):
    root = Path(args.manifest).parent
    manifest = dataset.read_manifest(args.manifest)
    model = quality.train_baseline(
        manifest.entries, k=args.annuli, epochs=args.epochs, lr=args.lr,
        seed=args.seed, root=root)
    quality.save_model(model, args.out)
    records = quality.score_images(
        model,
        ((e.output, imaging.read_image(root / e.output)) for e in manifest.entries
         if e.label in ("distorted", "undistorted")))
    labels = {e.output: e.label for e in manifest.entries}
    labeled = [curves.LabeledScore(r.id, 1.0 - r.nqm, labels[r.id]) for r in records]
    print(f"{args.out}: final_loss={model.metadata['final_loss']:.6g} "
          f"train_auc={curves.auc(labeled):.4f}")
    return 0


def _score_items(args):
    if args.manifest:
        root = Path(args.manifest).parent
        manifest = dataset.read_manifest(args.manifest)
        for e in manifest.entries:
            if e.label in ("distorted", "undistorted"):
                yield e.output, imaging.read_image(root / e.output)
    for path in args.images:
        yield path, imaging.read_image(path)


def cmd_score(args):
    if (args.model_file is None) == (args.logits is None):
        raise ValueError("exactly one of --model-file or --logits is required")
    if not args.manifest and not args.images:
        raise ValueError("no images given: use --manifest or positional paths")
    if args.logits is not None:
        if args.logits != "a=b":
            raise ValueError(f"unknown logits stub: {args.logits!r} (only a=b)")
        records = [quality.ScoreRecord(item_id, 0.0, 0.0, 0.5)
                   for item_id, _ in _score_items(args)]
    else:
        model = quality.load_model(args.model_file)
        records = quality.score_images(model, _score_items(args))
    quality.write_scores(records, args.out)
    print(f"{args.out}: {len(records)} scores")
    return 0


def _labeled_from_args(args):
    if args.manifest:
        labels = {}
        for e in dataset.read_manifest(args.manifest).entries:
            if e.label in ("distorted", "undistorted"):
                labels[e.output] = e.label
        records = quality.read_scores(args.scores)
        missing = [r.id for r in records if r.id not in labels]
        if missing:
            raise ValueError(f"score ids missing from manifest: {missing[:3]}...")
        # Detector score convention: higher = more distorted.
        return [curves.LabeledScore(r.id, 1.0 - r.nqm, labels[r.id]) for r in records]
    return curves.read_labeled_scores(args.scores)


def cmd_det(args):
    labeled = _labeled_from_args(args)
    series = curves.det_curve(labeled)
    curves.write_curve(series, args.out)
    if args.svg:
        curves.write_curve_svg(series, args.svg)
    print(f"{args.out}: {len(series.points)} vertices eer={curves.eer(labeled):.6g}")
    return 0


def cmd_edc(args):
    comparisons = curves.read_comparisons(args.comparisons)
    qualities = {r.id: r.nqm for r in quality.read_scores(args.qualities)}
    if args.tau is not None:
        tau, start = args.tau, None
    else:
        tau, start = curves.calibrate_threshold(comparisons, args.start_fnmr)
    series = curves.edc_curve(comparisons, qualities, tau)
    curves.write_curve(series, args.out)
    if args.svg:
        curves.write_curve_svg(series, args.svg)
    start_text = "" if start is None else f" starting_fnmr={start:.6g}"
    print(f"{args.out}: tau={tau:.6g}{start_text}")
    return 0


def cmd_compare(args):
    boxes = dataset.read_face_boxes(args.boxes) if args.boxes else {}

    def load(path):
        img = imaging.read_image(path)
        if path in boxes:
            img = dataset.crop(img, boxes[path])
        elif args.crop:
            img = dataset.crop(img, dataset.parse_crop(args.crop))
        return img

    records = []
    flagged = 0
    with open(args.pairs, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        expected = ("probe", "reference", "mated")
        if reader.fieldnames is None or tuple(reader.fieldnames) != expected:
            raise ValueError(f"{args.pairs}: bad pairs header {reader.fieldnames}")
        for row in reader:
            if row["mated"] not in ("0", "1"):
                raise ValueError(f"{args.pairs}: mated must be 0 or 1")
            sim, ok = toy_similarity(load(row["probe"]), load(row["reference"]))
            if not ok:
                flagged += 1
                print(f"warning: zero-variance embedding for pair "
                      f"{row['probe']} / {row['reference']}", file=sys.stderr)
            records.append(curves.ComparisonRecord(
                row["probe"], row["reference"], sim, row["mated"] == "1"))
    curves.write_comparisons(records, args.out)
    print(f"{args.out}: {len(records)} comparisons ({flagged} flagged)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="radialkit",
        description="Radial distortion toolkit: warping, synthetic datasets, "
                    "distortion detection and DET/EDC evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distort", help="synthesize radial distortion in an image")
    _add_warp_args(p)
    p.set_defaults(func=lambda a: cmd_warp(a, imaging.SYNTHESIZE))

    p = sub.add_parser("rectify", help="remove radial distortion from an image")
    _add_warp_args(p)
    p.set_defaults(func=lambda a: cmd_warp(a, imaging.RECTIFY))

    p = sub.add_parser("gen-dataset", help="generate a synthetic distorted corpus")
    p.add_argument("recipe", help="recipe file (key = value lines)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", "-j", type=int, default=_default_jobs(),
                   help="parallel workers (env RADIALKIT_JOBS)")
    p.add_argument("--seed", type=int, help="override the recipe seed")
    p.add_argument("--crop", help="override the recipe crop: cx,cy,w,h or center:<frac>")
    p.add_argument("--order", choices=tuple(_ORDER_FLAGS),
                   help="crop ordering relative to distortion")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-baseline", help="train the baseline distortion detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--annuli", "-k", type=int, default=8)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("score", help="score images with a baseline model or a stub")
    p.add_argument("images", nargs="*", help="image paths to score")
    p.add_argument("--manifest", help="score the images listed in a manifest")
    p.add_argument("--model-file", help="trained baseline model file")
    p.add_argument("--logits", help="stub logits, e.g. a=b for constant 0.5 quality")
    p.add_argument("--out", required=True, help="score CSV to write")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("det", help="detection error tradeoff curve")
    p.add_argument("--scores", required=True,
                   help="labeled scores CSV (id,score,label), or a score CSV "
                        "when --manifest supplies the labels")
    p.add_argument("--manifest", help="manifest providing labels for score ids")
    p.add_argument("--out", required=True, help="curve CSV to write")
    p.add_argument("--svg", help="optional SVG rendering")
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("edc", help="error-versus-discard curve")
    p.add_argument("--comparisons", required=True,
                   help="comparisons CSV (probe,reference,similarity,mated)")
    p.add_argument("--qualities", required=True, help="score CSV with per-id quality")
    p.add_argument("--tau", type=float, help="decision threshold (skips calibration)")
    p.add_argument("--start-fnmr", type=float, default=0.05,
                   help="target starting FNMR for threshold calibration")
    p.add_argument("--out", required=True, help="curve CSV to write")
    p.add_argument("--svg", help="optional SVG rendering")
    p.set_defaults(func=cmd_edc)

    p = sub.add_parser("compare", help="toy-embedding similarities for listed pairs")
    p.add_argument("--pairs", required=True, help="pairs CSV (probe,reference,mated)")
    p.add_argument("--boxes", help="face boxes CSV (path,cx,cy,w,h)")
    p.add_argument("--crop", help="crop applied to all images: cx,cy,w,h or center:<frac>")
    p.add_argument("--out", required=True, help="comparisons CSV to write")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (DescriptorError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (imaging.ImageIOError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
