"""DET curves for the detector and EDC curves for quality-based discard.

Both curves are computed over small, fully enumerable structures and are
meant to match brute-force enumeration exactly (see
:mod:`radialkit.oracles`). All sorting is stable and tie-breaks are by
id, so outputs are deterministic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

DISTORTED = "distorted"
UNDISTORTED = "undistorted"

DEFAULT_DISCARD_GRID = tuple(i * 0.02 for i in range(50))  # 0.00 .. 0.98


@dataclass(frozen=True)
class LabeledScore:
    id: str
    score: float  # higher = more distorted
    label: str

    def __post_init__(self):
        if self.label not in (DISTORTED, UNDISTORTED):
            raise ValueError(f"bad label: {self.label!r}")
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for {self.id!r}")


@dataclass(frozen=True)
class ComparisonRecord:
    probe: str
    reference: str
    similarity: float  # higher = more similar
    mated: bool

    def __post_init__(self):
        if not math.isfinite(self.similarity):
            raise ValueError(f"non-finite similarity for {self.probe!r}/{self.reference!r}")


@dataclass
class CurveSeries:
    points: list        # (x, y) pairs
    x_label: str
    y_label: str
    tau: float | None = None
    meta: dict = field(default_factory=dict)


def _split_scores(scores):
    distorted = np.array([s.score for s in scores if s.label == DISTORTED])
    undistorted = np.array([s.score for s in scores if s.label == UNDISTORTED])
    if len(distorted) == 0 or len(undistorted) == 0:
        raise ValueError("need scores for both classes")
    return distorted, undistorted


def _det_vertices(scores):
    """(FPR, FNR) at every distinct threshold, in decreasing-threshold order.

    Classification rule: distorted when score >= threshold. The sweep
    starts above the maximum score, so the vertex list begins at (0, 1)
    and ends at (1, 0).
    """
    distorted, undistorted = _split_scores(scores)
    thresholds = np.unique(np.concatenate([distorted, undistorted]))[::-1]
    points = [(0.0, 1.0)]
    for tau in thresholds:
        fpr = float(np.count_nonzero(undistorted >= tau)) / len(undistorted)
        fnr = float(np.count_nonzero(distorted < tau)) / len(distorted)
        if (fpr, fnr) != points[-1]:
            points.append((fpr, fnr))
    return points


def det_curve(scores):
    """Detection error tradeoff: FPR vs FNR over all distinct thresholds."""
    points = _det_vertices(scores)
    return CurveSeries(points, "false_positive_rate", "false_negative_rate",
                       meta={"n": len(scores)})


def eer(scores):
    """Rate where the FPR and FNR sweeps cross, linearly interpolated."""
    return _eer_from_vertices(_det_vertices(scores))


def _eer_from_vertices(points):
    prev_fpr, prev_fnr = points[0]
    for fpr, fnr in points[1:]:
        if fnr <= fpr:
            denom = (prev_fnr - prev_fpr) + (fpr - fnr)
            if denom == 0.0:
                return fpr
            t = (prev_fnr - prev_fpr) / denom
            # Intersection of the segment with the diagonal y = x.
            return prev_fpr + t * (fpr - prev_fpr)
        prev_fpr, prev_fnr = fpr, fnr
    return prev_fpr  # unreachable for well-formed sweeps


def auc(scores):
    """Probability a random distorted score exceeds a random undistorted one.

    Rank-based (Mann-Whitney) with ties counted half; summary statistic
    for detector separability.
    """
    distorted, undistorted = _split_scores(scores)
    wins = 0.0
    for d in distorted:
        wins += np.count_nonzero(undistorted < d) + 0.5 * np.count_nonzero(undistorted == d)
    return wins / (len(distorted) * len(undistorted))


def fnmr_at(similarities, tau):
    """Fraction of mated similarities below the decision threshold."""
    sims = np.asarray(similarities, dtype=np.float64)
    if sims.size == 0:
        raise ValueError("no similarities")
    return float(np.count_nonzero(sims < tau)) / sims.size


def calibrate_threshold(comparisons, target_fnmr):
    """Threshold whose achieved starting FNMR is nearest the target.

    Candidates are the distinct mated similarities; the achieved FNMR is
    a multiple of 1/n, so the result lands within 1/n of any target in
    (0, 1). Ties prefer the smaller threshold. Returns (tau, fnmr).
    """
    if not 0.0 < target_fnmr < 1.0:
        raise ValueError(f"target FNMR must be in (0, 1), got {target_fnmr}")
    sims = np.array([c.similarity for c in comparisons if c.mated])
    if sims.size == 0:
        raise ValueError("no mated comparisons")
    best = None
    for tau in np.unique(sims):
        achieved = fnmr_at(sims, tau)
        key = (abs(achieved - target_fnmr), tau)
        if best is None or key < best[0]:
            best = (key, float(tau), achieved)
    return best[1], best[2]


def pairwise_qualities(comparisons, qualities):
    """Worst-sample quality per mated comparison (min of the two samples)."""
    mated = [c for c in comparisons if c.mated]
    if not mated:
        raise ValueError("no mated comparisons")
    out = []
    for c in mated:
        try:
            q = min(qualities[c.probe], qualities[c.reference])
        except KeyError as e:
            raise ValueError(f"missing quality for id {e.args[0]!r}") from None
        out.append((c, q))
    return out


def edc_curve(comparisons, qualities, tau, grid=DEFAULT_DISCARD_GRID):
    """Error-versus-discard: FNMR at tau after dropping low-quality pairs.

    For each discard fraction d, the floor(d*n) mated comparisons with
    the lowest pairwise quality are dropped (stable tie-break by probe
    then reference id) and the FNMR of the remainder is emitted. Grid
    points whose retained set would be empty are omitted and recorded in
    the series metadata.
    """
    pairs = pairwise_qualities(comparisons, qualities)
    pairs.sort(key=lambda cq: (cq[1], cq[0].probe, cq[0].reference))
    sims = np.array([c.similarity for c, _ in pairs])
    n = len(pairs)
    points = []
    omitted = []
    for d in grid:
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"discard fraction out of range: {d}")
        drop = int(math.floor(d * n + 1e-9))
        if drop >= n:
            omitted.append(d)
            continue
        points.append((d, fnmr_at(sims[drop:], tau)))
    return CurveSeries(points, "discard_fraction", "fnmr", tau=tau,
                       meta={"mated": n, "omitted": omitted})


def write_curve(series, path):
    """Curve CSV: two-line metadata preamble, then ``x,y`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# axis: {series.x_label},{series.y_label}\n")
        f.write(f"# tau: {'' if series.tau is None else repr(series.tau)}\n")
        f.write("x,y\n")
        for x, y in series.points:
            f.write(f"{x!r},{y!r}\n")


def read_comparisons(path):
    """Comparisons CSV: ``probe,reference,similarity,mated`` with mated in {0,1}."""
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        expected = ("probe", "reference", "similarity", "mated")
        if reader.fieldnames is None or tuple(reader.fieldnames) != expected:
            raise ValueError(f"{path}: bad comparisons header {reader.fieldnames}")
        for row in reader:
            if row["mated"] not in ("0", "1"):
                raise ValueError(f"{path}: mated must be 0 or 1, got {row['mated']!r}")
            records.append(ComparisonRecord(
                row["probe"], row["reference"],
                float(row["similarity"]), row["mated"] == "1"))
    return records


def write_comparisons(records, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["probe", "reference", "similarity", "mated"])
        for c in records:
            writer.writerow([c.probe, c.reference, repr(c.similarity), int(c.mated)])


def read_labeled_scores(path):
    """Labeled detector scores: CSV ``id,score,label``."""
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ("id", "score", "label"):
            raise ValueError(f"{path}: bad labeled-score header {reader.fieldnames}")
        for row in reader:
            records.append(LabeledScore(row["id"], float(row["score"]), row["label"]))
    return records


def write_curve_svg(series, path, width=480, height=360):
    """Minimal SVG rendering: axes, labels and one polyline."""
    margin = 50
    xs = [p[0] for p in series.points]
    ys = [p[1] for p in series.points]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    def px(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return height - margin - y * plot_h  # y axis fixed to [0, 1]

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in series.points)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{series.x_label}</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.0f})">{series.y_label}</text>',
        f'<polyline fill="none" stroke="black" points="{pts}"/>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
