"""Target and masked anchor views for a minibatch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import MaskSpec, apply_mask, patchify
from .config import ViewRecipe


@dataclass
class ViewBatch:
    """``anchors[m]`` is (tokens (B, n_m, P), positions (B, n_m)); row i of every
    anchor group comes from the same source image as ``target[i]``."""

    target: np.ndarray
    target_positions: np.ndarray
    anchors: list[tuple[np.ndarray, np.ndarray]]
    source: np.ndarray

    @property
    def M(self) -> int:
        return len(self.anchors)

    @property
    def B(self) -> int:
        return len(self.target)


def mask_specs(recipe: ViewRecipe) -> list[MaskSpec]:
    specs = [MaskSpec("random", recipe.keep_ratio) for _ in range(recipe.random_views)]
    specs += [MaskSpec("focal", focal_block=tuple(recipe.focal_block)) for _ in range(recipe.focal_views)]
    return specs


def augment(image: np.ndarray, recipe: ViewRecipe, rng: np.random.Generator) -> np.ndarray:
    """Random horizontal flip and pad-and-crop translation."""
    out = image
    if recipe.flip and rng.random() < 0.5:
        out = out[:, ::-1]
    p = recipe.crop_pad
    if p > 0:
        H, W = out.shape[:2]
        padded = np.pad(out, ((p, p), (p, p), (0, 0)), mode="reflect")
        i, j = rng.integers(0, 2 * p + 1, size=2)
        out = padded[i:i + H, j:j + W]
    return np.ascontiguousarray(out)


def make_views(image: np.ndarray, recipe: ViewRecipe, rng: np.random.Generator, patch_size: int):
    """Views of one image: (target patches, [(anchor patches, kept indices), ...])."""
    target = patchify(augment(image, recipe, rng), patch_size)
    anchors = []
    for spec in mask_specs(recipe):
        patches = patchify(augment(image, recipe, rng), patch_size)
        anchors.append(apply_mask(patches, spec, rng))
    return target, anchors


def make_view_batch(images: np.ndarray, recipe: ViewRecipe, rng: np.random.Generator,
                    patch_size: int, source: np.ndarray | None = None) -> ViewBatch:
    targets = []
    groups: list[list] = [[] for _ in range(recipe.random_views + recipe.focal_views)]
    for img in images:
        t, anchors = make_views(img, recipe, rng, patch_size)
        targets.append(t)
        for g, a in zip(groups, anchors):
            g.append(a)
    N = targets[0].shape[0]
    anchors = [(np.stack([a[0] for a in g]), np.stack([a[1] for a in g])) for g in groups]
    src = np.arange(len(images)) if source is None else np.asarray(source)
    return ViewBatch(np.stack(targets), np.broadcast_to(np.arange(N), (len(images), N)), anchors, src)
