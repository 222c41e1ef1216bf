"""Image buffers, lossless I/O and the inverse-mapping warp engine.

Images are numpy ``uint8`` arrays, shape ``(h, w)`` for grayscale or
``(h, w, 3)`` for RGB. The warp engine iterates output pixels, maps each
through the chosen radial model to find its source sample and
interpolates; this inverse mapping is what keeps the result free of
holes. Synthesizing distortion uses the models' undistort direction as
the source lookup (output pixels live in distorted-image coordinates);
rectification uses the inverse maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import geometry
from .geometry import DistortionModel

SYNTHESIZE = "synthesize_distortion"
RECTIFY = "rectify"

EDGE_CLAMP = "edge_clamp"


class ImageIOError(Exception):
    """Image file could not be read or written."""


class UnsupportedFormatError(ImageIOError):
    """File format or sample depth outside the supported 8-bit PNG/PPM/PGM set."""


class CorruptFileError(ImageIOError):
    """File recognized but undecodable (truncated or damaged)."""


@dataclass(frozen=True)
class WarpSpec:
    """Full recipe for one warp: model, direction, sampling and fill."""

    model: DistortionModel
    direction: str = SYNTHESIZE
    interpolation: str = "bilinear"
    fill: int | str = 0  # constant sample value, or EDGE_CLAMP

    def __post_init__(self):
        if self.direction not in (SYNTHESIZE, RECTIFY):
            raise ValueError(f"unknown warp direction: {self.direction!r}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ValueError(f"unknown interpolation: {self.interpolation!r}")
        if self.fill != EDGE_CLAMP and not (
            isinstance(self.fill, (int, np.integer)) and 0 <= self.fill <= 255
        ):
            raise ValueError(f"fill must be {EDGE_CLAMP!r} or an int in [0, 255]")


@dataclass
class WarpResult:
    image: np.ndarray
    fill_fraction: float


@dataclass
class DisplacementField:
    """Per-pixel vector from each output pixel to its source sample, in pixels."""

    dx: np.ndarray
    dy: np.ndarray
    valid: np.ndarray  # False where the radial map has no value (sentinel zeros)
    source_x: np.ndarray = None
    source_y: np.ndarray = None

    def out_of_bounds(self):
        """Mask of pixels whose source sample falls outside the frame.

        Domain-error pixels count as out of bounds; this is exactly the
        set the warp engine fills under a constant fill policy.
        """
        h, w = self.dx.shape
        oob = ((self.source_x < 0) | (self.source_x > w - 1)
               | (self.source_y < 0) | (self.source_y > h - 1))
        return oob | ~self.valid


def as_image(arr):
    """Validate and return an image array (uint8, gray or RGB)."""
    a = np.asarray(arr)
    if a.dtype != np.uint8:
        raise ValueError(f"image must be uint8, got {a.dtype}")
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[2] == 3:
        return a
    raise ValueError(f"image must have shape (h, w) or (h, w, 3), got {a.shape}")


def _norm_scale(width, height):
    # Unit = half the image diagonal measured between corner pixel centers,
    # so corner pixels sit at normalized radius exactly 1.
    return math.hypot(width - 1, height - 1) / 2.0


def _source_coords(model, direction, width, height):
    """Source sample coordinates (pixels) for every output pixel.

    Returns (sx, sy, valid); invalid pixels have sentinel coordinates
    equal to their own position.
    """
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    s = _norm_scale(width, height)
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    xn = (xs - cx) / s
    yn = (ys - cy) / s
    r = np.hypot(xn, yn)
    if direction == SYNTHESIZE:
        r_src, valid = geometry.undistort_radii(model, r)
    else:
        r_src, valid = geometry.distort_radii(model, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0.0, r_src / np.where(r > 0.0, r, 1.0), 1.0)
    sx = np.where(valid, xn * scale * s + cx, xs)
    sy = np.where(valid, yn * scale * s + cy, ys)
    # Keep unmoved pixels exactly on the grid (identity maps must be exact).
    unit = valid & (scale == 1.0)
    sx = np.where(unit, xs, sx)
    sy = np.where(unit, ys, sy)
    return sx, sy, valid


def _sample_nearest(img, sx, sy):
    h, w = img.shape[:2]
    xi = np.clip(np.rint(sx).astype(np.intp), 0, w - 1)
    yi = np.clip(np.rint(sy).astype(np.intp), 0, h - 1)
    return img[yi, xi].astype(np.float64)


def _sample_bilinear(img, sx, sy):
    h, w = img.shape[:2]
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    p00 = img[y0, x0].astype(np.float64)
    p01 = img[y0, x1].astype(np.float64)
    p10 = img[y1, x0].astype(np.float64)
    p11 = img[y1, x1].astype(np.float64)
    top = p00 * (1.0 - fx) + p01 * fx
    bot = p10 * (1.0 - fx) + p11 * fx
    return top * (1.0 - fy) + bot * fy


def warp(img, spec):
    """Warp a whole image through a radial model.

    Deterministic: identical inputs give bit-identical outputs. Pixels
    whose source sample falls outside the frame (or outside the model's
    domain) follow the fill policy; the fraction of such pixels is
    reported in the result.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    sx, sy, valid = _source_coords(spec.model, spec.direction, w, h)
    oob = (sx < 0) | (sx > w - 1) | (sy < 0) | (sy > h - 1)
    filled = oob | ~valid

    if spec.fill == EDGE_CLAMP:
        # Clamping handles out-of-frame sources; only domain errors remain filled.
        filled = ~valid
    sx = np.clip(sx, 0.0, w - 1)
    sy = np.clip(sy, 0.0, h - 1)

    if spec.interpolation == "nearest":
        out = _sample_nearest(img, sx, sy)
    else:
        out = _sample_bilinear(img, sx, sy)

    fill_value = 0.0 if spec.fill == EDGE_CLAMP else float(spec.fill)
    if img.ndim == 3:
        out[filled] = fill_value
    else:
        out = np.where(filled, fill_value, out)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return WarpResult(out, float(np.count_nonzero(filled)) / (w * h))


def displacement_field(spec, width, height):
    """Vector field from output pixels to their source samples, in pixels."""
    sx, sy, valid = _source_coords(spec.model, spec.direction, width, height)
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    dx = np.where(valid, sx - xs, 0.0)
    dy = np.where(valid, sy - ys, 0.0)
    return DisplacementField(dx, dy, np.broadcast_to(valid, dx.shape).copy(), sx, sy)


def psnr(a, b, region=None):
    """Peak signal-to-noise ratio over a region, in dB (inf when identical).

    ``region`` is (left, top, width, height) in pixels; None means the
    whole frame.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if region is not None:
        x0, y0, rw, rh = region
        h, w = a.shape[:2]
        if not (0 <= x0 and 0 <= y0 and x0 + rw <= w and y0 + rh <= h and rw > 0 and rh > 0):
            raise ValueError(f"region {region} outside image bounds {(w, h)}")
        a = a[y0:y0 + rh, x0:x0 + rw]
        b = b[y0:y0 + rh, x0:x0 + rw]
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def central_region(img, frac=0.6):
    """Centered rectangle covering ``frac`` of each dimension."""
    h, w = as_image(img).shape[:2]
    rw = max(1, int(round(w * frac)))
    rh = max(1, int(round(h * frac)))
    return ((w - rw) // 2, (h - rh) // 2, rw, rh)


def magnification_rate(model):
    """Relative change of radial scale between frame center and corner.

    Defined as |1 - s(1)/s(0)| with s(r) = r_u(r)/r; s(0) is the analytic
    limit (1 for the division model, lambda/f for KB). For the division
    model this evaluates to lambda/(1+lambda). Proxy for the standards'
    magnification-distortion-rate bound, not the normative procedure.
    """
    if model.family == "dm":
        s0 = 1.0
    else:
        s0 = model.lam / model.focal
    r1, valid = geometry.undistort_radii(model, np.float64(1.0))
    if not valid:
        raise geometry.DomainError("corner radius outside the model domain")
    return abs(1.0 - float(r1) / s0)


_SUPPORTED_EXT = {".png", ".ppm", ".pgm"}


def read_image(path):
    """Read an 8-bit grayscale or RGB image (PNG, binary PPM/PGM)."""
    path = str(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise UnsupportedFormatError(f"{path}: unsupported format {im.format}")
            if im.mode not in ("L", "RGB"):
                raise UnsupportedFormatError(
                    f"{path}: unsupported mode {im.mode} (8-bit gray/RGB only)")
            im.load()
            return np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise CorruptFileError(f"{path}: not a decodable image") from e
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError, ValueError) as e:
        raise CorruptFileError(f"{path}: {e}") from e


def write_image(img, path):
    """Write an image losslessly; format chosen by extension."""
    img = as_image(img)
    path = str(path)
    ext = path[path.rfind("."):].lower() if "." in path else ""
    if ext not in _SUPPORTED_EXT:
        raise UnsupportedFormatError(f"{path}: unsupported output extension {ext!r}")
    if ext == ".pgm" and img.ndim == 3:
        raise UnsupportedFormatError(f"{path}: cannot write RGB data as PGM")
    if ext == ".ppm" and img.ndim == 2:
        raise UnsupportedFormatError(f"{path}: cannot write grayscale data as PPM")
    try:
        Image.fromarray(img).save(path)
    except OSError as e:
        raise ImageIOError(f"{path}: {e}") from e
