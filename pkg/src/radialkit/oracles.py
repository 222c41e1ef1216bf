"""Brute-force reference implementations for the curve machinery.

These enumerate every threshold / discard set explicitly with plain
Python loops and no shared code with :mod:`radialkit.curves`; tests
require exact equality between the two routes on small instances.
"""

from __future__ import annotations

import math

from .curves import DISTORTED, UNDISTORTED


def _rates_at(scores, tau):
    fp = fn = n_u = n_d = 0
    for s in scores:
        if s.label == UNDISTORTED:
            n_u += 1
            if s.score >= tau:
                fp += 1
        else:
            n_d += 1
            if s.score < tau:
                fn += 1
    return fp / n_u, fn / n_d


def det_vertices_brute(scores):
    """All distinct (FPR, FNR) pairs, decreasing-threshold order."""
    values = sorted({s.score for s in scores}, reverse=True)
    thresholds = [values[0] + 1.0] + values
    points = []
    for tau in thresholds:
        p = _rates_at(scores, tau)
        if not points or p != points[-1]:
            points.append(p)
    return points


def eer_brute(scores):
    """EER by linear interpolation between the brute-force vertices."""
    points = det_vertices_brute(scores)
    prev_fpr, prev_fnr = points[0]
    for fpr, fnr in points[1:]:
        if fnr <= fpr:
            denom = (prev_fnr - prev_fpr) + (fpr - fnr)
            if denom == 0.0:
                return fpr
            t = (prev_fnr - prev_fpr) / denom
            return prev_fpr + t * (fpr - prev_fpr)
        prev_fpr, prev_fnr = fpr, fnr
    return prev_fpr


def calibrate_brute(comparisons, target):
    """Try every distinct mated similarity as the threshold."""
    sims = [c.similarity for c in comparisons if c.mated]
    best = None
    for tau in sorted(set(sims)):
        fnmr = sum(1 for v in sims if v < tau) / len(sims)
        key = (abs(fnmr - target), tau)
        if best is None or key < best[0]:
            best = (key, tau, fnmr)
    return best[1], best[2]


def edc_points_brute(comparisons, qualities, tau, grid):
    """Enumerate the retained set explicitly at every grid point."""
    mated = [c for c in comparisons if c.mated]
    ordered = sorted(
        mated,
        key=lambda c: (min(qualities[c.probe], qualities[c.reference]),
                       c.probe, c.reference))
    n = len(ordered)
    points = []
    for d in grid:
        drop = int(math.floor(d * n + 1e-9))
        kept = ordered[drop:]
        if not kept:
            continue
        fnmr = sum(1 for c in kept if c.similarity < tau) / len(kept)
        points.append((d, fnmr))
    return points
