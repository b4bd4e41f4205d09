"""Synthetic video tensors and toy classifiers built on them."""
from __future__ import annotations

import numpy as np

from .models import CentroidModel, LinearThresholdModel

KINDS = ("smooth", "gaussian", "rank-k")


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for item ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def smooth_video(dims, rng, components=3, offset=128.0, amplitude=40.0, noise=2.0):
    """Offset plus a few separable low-frequency cosines plus white noise."""
    out = np.full(dims, offset)
    for _ in range(components):
        vs = []
        for n in dims:
            freq = rng.uniform(0.0, 2.0)
            phase = rng.uniform(0.0, 2 * np.pi)
            vs.append(np.cos(np.pi * freq * np.arange(n) / n + phase))
        out += amplitude * rng.uniform(0.3, 1.0) * np.einsum("i,j,k,l->ijkl", *vs)
    return out + rng.normal(0.0, noise, dims)


def rank_k_video(dims, rng, k):
    return sum(np.einsum("i,j,k,l->ijkl", *(rng.standard_normal(n) for n in dims))
               for _ in range(k))


def generate_synthetic_dataset(dims, n, kind="smooth", seed=0, k=1) -> list:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or min(dims) < 1:
        raise ValueError(f"dims must be four positive extents, got {dims}")
    if n < 1:
        raise ValueError("n must be at least 1")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if kind == "rank-k" and k < 1:
        raise ValueError("rank-k datasets need k >= 1")
    out = []
    for i in range(n):
        rng = sample_rng(seed, i)
        if kind == "smooth":
            out.append(smooth_video(dims, rng))
        elif kind == "gaussian":
            out.append(rng.standard_normal(dims))
        else:
            out.append(rank_k_video(dims, rng, k))
    return out


# model streams are keyed far away from sample indices
_MODEL_KEY = 1 << 30


def linear_toy_model(dims, seed, reference=None) -> LinearThresholdModel:
    """Linear discriminant between two smooth class templates.

    With ``reference`` tensors the threshold splits them into two halves,
    placed midway between the two middle scores so no tensor sits on the
    boundary. Otherwise it lies halfway between the templates.
    """
    rng = sample_rng(seed, _MODEL_KEY)
    c0, c1 = smooth_video(dims, rng), smooth_video(dims, rng)
    w = c1 - c0
    if reference is not None and len(reference) >= 2:
        s = sorted(float(np.vdot(w, x)) for x in reference)
        k = len(s) // 2
        t = (s[k - 1] + s[k]) / 2
    else:
        t = float(np.vdot(w, (c0 + c1) / 2))
    return LinearThresholdModel(w, [t])


def centroid_toy_model(dims, seed, n_classes=3) -> CentroidModel:
    rng = sample_rng(seed, _MODEL_KEY + 1)
    return CentroidModel([smooth_video(dims, rng) for _ in range(n_classes)])
