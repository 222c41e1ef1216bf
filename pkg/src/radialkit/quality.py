"""Native quality measure and the baseline radial-distortion detector.

The quality measure is the softmax confidence of the "undistorted" class
computed from a detector's two raw logits. Any detector that emits such
logits can feed the evaluation machinery via score files; for a
self-contained pipeline this module also provides a small baseline
detector: logistic regression on radial image statistics, trained by
full-batch gradient descent.
"""

from __future__ import annotations

import ast
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging

MODEL_MAGIC = "radialkit-baseline v1"


@dataclass(frozen=True)
class Logits:
    alpha: float  # raw score for class "distorted"
    beta: float   # raw score for class "undistorted"


@dataclass
class ScoreRecord:
    id: str
    alpha: float | None
    beta: float | None
    nqm: float


def nqm(alpha, beta):
    """Quality measure e^beta / (e^alpha + e^beta), overflow-safe.

    Monotone in beta - alpha and invariant to shifting both logits.
    """
    m = max(alpha, beta)
    ea = math.exp(alpha - m)
    eb = math.exp(beta - m)
    return eb / (ea + eb)


def luminance(img):
    """Rec.601 luma as float64; grayscale images pass through."""
    img = imaging.as_image(img)
    if img.ndim == 2:
        return img.astype(np.float64)
    return (0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2])


def radial_features(img, k):
    """Per-annulus mean luminance and mean gradient magnitude, 2k values.

    Pixels are binned into k equal-width annuli of normalized radius
    (half-diagonal convention, so the outermost bin ends at the frame
    corners). Features are invariant to 90-degree rotations up to
    discretization.
    """
    if k < 2:
        raise ValueError(f"need at least 2 annuli, got {k}")
    lum = luminance(img)
    h, w = lum.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    s = math.hypot(w - 1, h - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    r = np.hypot(xs - cx, ys - cy) / s
    bins = np.minimum((r * k).astype(np.intp), k - 1)

    gy, gx = np.gradient(lum)
    grad = np.hypot(gx, gy)

    counts = np.bincount(bins.ravel(), minlength=k).astype(np.float64)
    counts[counts == 0] = 1.0
    lum_mean = np.bincount(bins.ravel(), weights=lum.ravel(), minlength=k) / counts
    grad_mean = np.bincount(bins.ravel(), weights=grad.ravel(), minlength=k) / counts
    return np.concatenate([lum_mean, grad_mean])


@dataclass
class BaselineModel:
    k: int
    mean: np.ndarray     # (2k,) feature standardization
    std: np.ndarray      # (2k,)
    weights: np.ndarray  # (2k + 1,) with trailing bias
    metadata: dict = field(default_factory=dict)

    def score(self, features):
        x = (np.asarray(features, dtype=np.float64) - self.mean) / self.std
        return float(np.dot(self.weights[:-1], x) + self.weights[-1])


def logistic_loss_and_grad(weights, x, y):
    """Mean logistic loss and its gradient for label "distorted" = 1.

    ``x`` is (n, d) including a bias column, ``y`` in {0, 1}.
    """
    z = x @ weights
    # log(1 + e^z) - y*z, computed via logaddexp for stability
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    p = 1.0 / (1.0 + np.exp(-z))
    grad = x.T @ (p - y) / x.shape[0]
    return loss, grad


def _with_bias(features):
    features = np.asarray(features, dtype=np.float64)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def fit_logistic(features, labels, epochs=300, lr=0.5, seed=0):
    """Full-batch gradient descent on the logistic loss.

    The step size is halved whenever a step would increase the loss, so
    the recorded loss trace is non-increasing. Deterministic given the
    inputs (weights start at zero; the seed is recorded for provenance).
    """
    x = _with_bias(features)
    y = np.asarray(labels, dtype=np.float64)
    if not (np.any(y == 1.0) and np.any(y == 0.0)):
        raise ValueError("training set must contain both classes")
    w = np.zeros(x.shape[1])
    loss, grad = logistic_loss_and_grad(w, x, y)
    losses = [loss]
    step = lr
    for _ in range(epochs):
        while True:
            w_next = w - step * grad
            loss_next, grad_next = logistic_loss_and_grad(w_next, x, y)
            if loss_next <= loss or step < 1e-12:
                break
            step *= 0.5
        w, loss, grad = w_next, loss_next, grad_next
        losses.append(loss)
    return w, losses


def train_baseline(entries, k=8, epochs=300, lr=0.5, seed=0, root=None):
    """Train the baseline detector from manifest entries.

    ``entries`` carry output paths and distorted/undistorted labels;
    rows with other labels are ignored. Features are standardized with
    training-set statistics, which are stored in the model so scoring is
    independent of the scoring-set distribution.
    """
    feats, labels = [], []
    for e in entries:
        if e.label not in ("distorted", "undistorted"):
            continue
        img = imaging.read_image(_resolve(e.output, root))
        feats.append(radial_features(img, k))
        labels.append(1.0 if e.label == "distorted" else 0.0)
    if not feats:
        raise ValueError("manifest contains no labeled images")
    feats = np.asarray(feats)
    labels = np.asarray(labels)
    if not (np.any(labels == 1.0) and np.any(labels == 0.0)):
        raise ValueError("manifest must contain both distorted and undistorted rows")

    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std == 0.0] = 1.0
    standardized = (feats - mean) / std
    weights, losses = fit_logistic(standardized, labels, epochs=epochs, lr=lr, seed=seed)
    return BaselineModel(k, mean, std, weights, {
        "epochs": epochs, "lr": lr, "seed": seed,
        "final_loss": losses[-1], "samples": len(labels),
    })


def _resolve(path, root):
    return path if root is None else str(Path(root) / path)


def score_images(model, items):
    """Score (id, image) pairs; logits are (s, -s) with s the linear score.

    Positive s means "distorted", so the quality measure falls below 0.5
    for images the detector flags.
    """
    records = []
    for item_id, img in items:
        s = model.score(radial_features(img, model.k))
        records.append(ScoreRecord(item_id, s, -s, nqm(s, -s)))
    return records


def _fmt_array(a):
    return " ".join(repr(float(v)) for v in a)


def save_model(model, path):
    """Versioned flat text model file, human-diffable."""
    lines = [
        MODEL_MAGIC,
        f"k {model.k}",
        f"mean {_fmt_array(model.mean)}",
        f"std {_fmt_array(model.std)}",
        f"weights {_fmt_array(model.weights)}",
    ]
    for key in sorted(model.metadata):
        lines.append(f"meta {key} {model.metadata[key]!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a baseline model file")
    fields = {}
    metadata = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key == "meta":
            mkey, _, mval = rest.partition(" ")
            metadata[mkey] = ast.literal_eval(mval)
        else:
            fields[key] = rest
    try:
        k = int(fields["k"])
        mean = np.array([float(v) for v in fields["mean"].split()])
        std = np.array([float(v) for v in fields["std"].split()])
        weights = np.array([float(v) for v in fields["weights"].split()])
    except (KeyError, ValueError) as e:
        raise ValueError(f"{path}: malformed model file: {e}") from e
    if mean.shape != (2 * k,) or std.shape != (2 * k,) or weights.shape != (2 * k + 1,):
        raise ValueError(f"{path}: inconsistent array sizes for k={k}")
    return BaselineModel(k, mean, std, weights, metadata)


def write_scores(records, path):
    """Score CSV with header ``id,alpha,beta,nqm``."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "alpha", "beta", "nqm"])
        for r in records:
            writer.writerow([r.id,
                             "" if r.alpha is None else repr(r.alpha),
                             "" if r.beta is None else repr(r.beta),
                             repr(r.nqm)])


def read_scores(path):
    """Read a score CSV: ``id,alpha,beta[,nqm]`` or ``id,nqm``."""
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        cols = tuple(reader.fieldnames or ())
        if cols in (("id", "alpha", "beta"), ("id", "alpha", "beta", "nqm")):
            for row in reader:
                a, b = float(row["alpha"]), float(row["beta"])
                records.append(ScoreRecord(row["id"], a, b, nqm(a, b)))
        elif cols == ("id", "nqm"):
            for row in reader:
                records.append(ScoreRecord(row["id"], None, None, float(row["nqm"])))
        else:
            raise ValueError(f"{path}: bad score file header {cols}")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate ids in score file")
    return records
