"""Point-level radial distortion transforms.

Two model families are supported:

* the division model (``dm``), where the undistorted radius is
  ``r_u = r_d / (1 + lambda * r_d**2)``;
* the Kannala-Brandt family (``kb*``), where ``r_u = lambda * theta(r_d)``
  and the angle formula depends on the projection variant.

All transforms work in normalized image coordinates: origin at the
principal point, unit equal to half the image diagonal, so every point
inside the frame has radius <= 1. All maps are purely radial, hence they
commute with rotations about the origin and fix the origin itself.

The radial helpers accept scalars or numpy arrays. The array variants
return a validity mask instead of raising, which is what the warp engine
needs; the scalar point API raises :class:`DomainError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

KB_VARIANTS = ("perspective", "stereographic", "equidistance", "equisolid", "orthogonal")

_KB_TAGS = {
    "p": "perspective",
    "s": "stereographic",
    "d": "equidistance",
    "e": "equisolid",
    "o": "orthogonal",
}
_KB_TAG_OF = {v: k for k, v in _KB_TAGS.items()}


class DomainError(ValueError):
    """A point lies outside the invertible domain of a transform."""


class DescriptorError(ValueError):
    """A model descriptor string could not be parsed."""


@dataclass(frozen=True)
class DistortionModel:
    """One radial distortion model: family, coefficient and focal length."""

    family: str                 # "dm" or "kb"
    lam: float
    variant: str | None = None  # KB only
    focal: float = 1.0          # KB only

    def __post_init__(self):
        if self.family == "dm":
            if self.variant is not None:
                raise ValueError("variant is only meaningful for KB models")
            if not (0.0 <= self.lam < 1.0):
                raise ValueError(f"dm lambda must be in [0, 1), got {self.lam}")
        elif self.family == "kb":
            if self.variant not in KB_VARIANTS:
                raise ValueError(f"unknown KB variant: {self.variant!r}")
            if not self.lam > 0.0:
                raise ValueError(f"kb lambda must be > 0, got {self.lam}")
            if not self.focal > 0.0:
                raise ValueError(f"kb focal must be > 0, got {self.focal}")
        else:
            raise ValueError(f"unknown model family: {self.family!r}")
        if not math.isfinite(self.lam) or not math.isfinite(self.focal):
            raise ValueError("model parameters must be finite")

    @classmethod
    def dm(cls, lam):
        return cls("dm", float(lam))

    @classmethod
    def kb(cls, variant, lam, focal=1.0):
        return cls("kb", float(lam), variant, float(focal))

    @classmethod
    def parse(cls, text):
        """Parse a descriptor like ``dm:0.6`` or ``kbs:1.5:f=2.0``."""
        parts = text.strip().split(":")
        tag = parts[0]
        if tag == "dm":
            if len(parts) != 2:
                raise DescriptorError(f"bad dm descriptor: {text!r}")
            try:
                lam = float(parts[1])
            except ValueError:
                raise DescriptorError(f"bad lambda in descriptor: {text!r}") from None
            try:
                return cls.dm(lam)
            except ValueError as e:
                raise DescriptorError(str(e)) from None
        m = re.fullmatch(r"kb([psdeo])", tag)
        if m is None:
            raise DescriptorError(f"unknown model tag in descriptor: {text!r}")
        if len(parts) not in (2, 3):
            raise DescriptorError(f"bad kb descriptor: {text!r}")
        try:
            lam = float(parts[1])
        except ValueError:
            raise DescriptorError(f"bad lambda in descriptor: {text!r}") from None
        focal = 1.0
        if len(parts) == 3:
            fm = re.fullmatch(r"f=([^=]+)", parts[2])
            if fm is None:
                raise DescriptorError(f"bad focal field in descriptor: {text!r}")
            try:
                focal = float(fm.group(1))
            except ValueError:
                raise DescriptorError(f"bad focal in descriptor: {text!r}") from None
        try:
            return cls.kb(_KB_TAGS[m.group(1)], lam, focal)
        except ValueError as e:
            raise DescriptorError(str(e)) from None

    def descriptor(self):
        """Inverse of :meth:`parse`."""
        if self.family == "dm":
            return f"dm:{self.lam:g}"
        d = f"kb{_KB_TAG_OF[self.variant]}:{self.lam:g}"
        if self.focal != 1.0:
            d += f":f={self.focal:g}"
        return d

    # Point-level maps (scalar API, raise on domain violations).

    def undistort(self, p):
        """Map a distorted-image point to its undistorted location."""
        return _apply_radial(p, lambda r: undistort_radii(self, r))

    def distort(self, p):
        """Map an undistorted point to its distorted-image location."""
        return _apply_radial(p, lambda r: distort_radii(self, r))


def radius(p):
    """Euclidean distance of a normalized point from the principal point."""
    x, y = p
    return math.hypot(x, y)


def _apply_radial(p, radial_map):
    x, y = p
    r = math.hypot(x, y)
    if r == 0.0:
        return (0.0, 0.0)
    r_out, valid = radial_map(np.float64(r))
    if not valid:
        raise DomainError(f"point with radius {r} outside the transform domain")
    s = float(r_out) / r
    return (x * s, y * s)


# Radial maps. Each takes a scalar or ndarray of radii and returns
# (mapped radii, validity mask); invalid entries hold unspecified values.


def dm_delta(r_d, lam):
    """Division-model scale factor 1 + lambda * r**2."""
    return 1.0 + lam * np.square(r_d)


def dm_undistort_radii(r_d, lam):
    return r_d / dm_delta(r_d, lam), np.ones_like(r_d, dtype=bool)


def dm_distort_radii(r_u, lam):
    """Invert r_u = r_d / (1 + lambda r_d^2) for r_d, smaller-root branch.

    The quadratic lambda*r_u*r_d^2 - r_d + r_u = 0 has two positive roots;
    the smaller one is the branch continuous with the identity at
    lambda = 0. Written as 2*r_u / (1 + sqrt(1 - 4*lambda*r_u^2)) it is
    stable at r_u = 0 and lambda = 0.
    """
    disc = 1.0 - 4.0 * lam * np.square(r_u)
    valid = disc >= 0.0
    with np.errstate(invalid="ignore"):
        r_d = 2.0 * r_u / (1.0 + np.sqrt(np.where(valid, disc, 0.0)))
    return r_d, valid


def kb_theta(variant, r_d, f):
    """Incidence angle for a given distorted radius, per KB variant."""
    a = r_d / f
    if variant == "perspective":
        return np.arctan(a), np.ones_like(a, dtype=bool)
    if variant == "stereographic":
        return 2.0 * np.arctan(0.5 * a), np.ones_like(a, dtype=bool)
    if variant == "equidistance":
        return a + 0.0, np.ones_like(a, dtype=bool)
    if variant == "equisolid":
        valid = 0.5 * a <= 1.0
        with np.errstate(invalid="ignore"):
            theta = 2.0 * np.arcsin(np.where(valid, 0.5 * a, 0.0))
        return theta, valid
    if variant == "orthogonal":
        valid = a <= 1.0
        with np.errstate(invalid="ignore"):
            theta = np.arcsin(np.where(valid, a, 0.0))
        return theta, valid
    raise ValueError(f"unknown KB variant: {variant!r}")


def kb_undistort_radii(model, r_d):
    theta, valid = kb_theta(model.variant, r_d, model.focal)
    return model.lam * theta, valid


# Largest theta for which each variant's r_d(theta) is injective.
_KB_THETA_MAX = {
    "perspective": math.pi / 2.0,
    "stereographic": math.pi,
    "equidistance": math.inf,
    "equisolid": math.pi,
    "orthogonal": math.pi / 2.0,
}


def kb_distort_radii(model, r_u):
    theta = r_u / model.lam
    f = model.focal
    if model.variant in ("perspective", "stereographic"):
        valid = theta < _KB_THETA_MAX[model.variant]
    else:
        valid = theta <= _KB_THETA_MAX[model.variant]
    theta_safe = np.where(valid, theta, 0.0)
    if model.variant == "perspective":
        r_d = f * np.tan(theta_safe)
    elif model.variant == "stereographic":
        r_d = 2.0 * f * np.tan(0.5 * theta_safe)
    elif model.variant == "equidistance":
        r_d = f * theta_safe
    elif model.variant == "equisolid":
        r_d = 2.0 * f * np.sin(0.5 * theta_safe)
    else:
        r_d = f * np.sin(theta_safe)
    return r_d, valid


def undistort_radii(model, r_d):
    """Radial map from distorted to undistorted radii, with validity mask."""
    if model.family == "dm":
        return dm_undistort_radii(r_d, model.lam)
    return kb_undistort_radii(model, r_d)


def distort_radii(model, r_u):
    """Radial map from undistorted to distorted radii, with validity mask."""
    if model.family == "dm":
        return dm_distort_radii(r_u, model.lam)
    return kb_distort_radii(model, r_u)


# Convenience per-point wrappers, one per family and direction.


def dm_undistort(p_d, lam):
    return DistortionModel.dm(lam).undistort(p_d)


def dm_distort(p_u, lam):
    return DistortionModel.dm(lam).distort(p_u)


def kb_undistort(p_d, model):
    return model.undistort(p_d)


def kb_distort(p_u, model):
    return model.distort(p_u)
