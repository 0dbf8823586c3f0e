"""Bounded rotation / shear / brightness augmentation of symbol images."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class AugmentConfig:
    max_rotation_deg: float = 9.0
    max_shear_fraction: float = 0.10
    max_brightness_fraction: float = 0.10
    copies_per_symbol: int = 15
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_rotation_deg <= 45:
            raise ValueError("max_rotation_deg must lie in [0, 45]")
        for name in ("max_shear_fraction", "max_brightness_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.copies_per_symbol < 0:
            raise ValueError("copies_per_symbol must be >= 0")


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0
    shear: float = 0.0
    brightness: float = 0.0  # multiplicative: intensity * (1 + brightness)

    def check(self, cfg: AugmentConfig) -> None:
        if (abs(self.rotation_deg) > cfg.max_rotation_deg
                or abs(self.shear) > cfg.max_shear_fraction
                or abs(self.brightness) > cfg.max_brightness_fraction):
            raise ValueError(f"{self} outside configured bounds")


def sample_params(rng: np.random.Generator, cfg: AugmentConfig) -> AugmentParams:
    return AugmentParams(
        float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)),
        float(rng.uniform(-cfg.max_shear_fraction, cfg.max_shear_fraction)),
        float(rng.uniform(-cfg.max_brightness_fraction, cfg.max_brightness_fraction)),
    )


def augment_symbol(gray: np.ndarray, params: AugmentParams, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Rotate about the centre and shear horizontally (bilinear, white fill),
    then scale intensities; identity params return the input unchanged."""
    if cfg is not None:
        params.check(cfg)
    img = np.asarray(gray, dtype=np.uint8)
    if params.rotation_deg == 0 and params.shear == 0 and params.brightness == 0:
        return img.copy()
    out = img.astype(float)
    if params.rotation_deg != 0 or params.shear != 0:
        t = math.radians(params.rotation_deg)
        # forward map on (row, col): rotation then x' = x + shear * y
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        shear = np.array([[1.0, 0.0], [params.shear, 1.0]])
        fwd = shear @ rot
        inv = np.linalg.inv(fwd)
        centre = (np.array(img.shape, dtype=float) - 1) / 2
        offset = centre - inv @ centre
        out = ndimage.affine_transform(out, inv, offset=offset, order=1, mode="constant", cval=255.0)
    if params.brightness != 0:
        out = out * (1.0 + params.brightness)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class AugmentedSymbol:
    image: np.ndarray
    label: str
    source: int  # index of the original symbol
    params: AugmentParams


def augment_dataset(images, labels, cfg: AugmentConfig) -> list[AugmentedSymbol]:
    """Originals first, then ``copies_per_symbol`` variants of each; the
    generator is split per source index so results do not depend on order."""
    images = list(images)
    labels = list(labels)
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    out = [AugmentedSymbol(np.asarray(img, dtype=np.uint8), lab, i, AugmentParams())
           for i, (img, lab) in enumerate(zip(images, labels))]
    for i, (img, lab) in enumerate(zip(images, labels)):
        rng = np.random.default_rng([cfg.seed, i])
        for _ in range(cfg.copies_per_symbol):
            p = sample_params(rng, cfg)
            out.append(AugmentedSymbol(augment_symbol(img, p), lab, i, p))
    return out
