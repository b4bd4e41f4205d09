"""Attack quality metrics: MQ, MAP, MAP*, SSIM, MSSIM, SSIM*, FR and the
multilinear rank of the perturbation.

Videos are ``(W, H, C, T)`` arrays on a 0..255 scale by default. Frame ``t``
is ``video[:, :, :, t]``. The starred metrics only look at the active set:
frames whose largest absolute perturbation exceeds ``eps_active`` and, for
MAP*, the entries of those frames above the same threshold.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .tensor import as_tensor4, multilinear_rank

K1, K2 = 0.01, 0.03
SIGMA = 1.5
EPS_ACTIVE = 1e-8


class StarValue(NamedTuple):
    value: float
    empty: bool


def _pairs(pairs):
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (clean, adversarial) pair")
    out = []
    for clean, adv in pairs:
        # fixed memory layout keeps reductions bit-identical however the
        # arrays were produced
        clean = np.ascontiguousarray(as_tensor4(clean, "clean"))
        adv = np.ascontiguousarray(as_tensor4(adv, "adversarial"))
        if clean.shape != adv.shape:
            raise ValueError(f"pair dims differ: {clean.shape} vs {adv.shape}")
        out.append((clean, adv))
    return out


def mean_absolute_perturbation(pairs) -> float:
    total = 0.0
    pairs = _pairs(pairs)
    for clean, adv in pairs:
        total += np.sum(np.abs(adv - clean)) / clean.size
    return float(total / len(pairs))


def active_frames(delta, eps_active=EPS_ACTIVE) -> np.ndarray:
    return np.max(np.abs(delta), axis=(0, 1, 2)) > eps_active


def map_star(pairs, eps_active=EPS_ACTIVE) -> StarValue:
    if not eps_active > 0:
        raise ValueError("eps_active must be positive")
    values = []
    for clean, adv in _pairs(pairs):
        delta = np.abs(adv - clean)
        frames = active_frames(delta, eps_active)
        mask = (delta > eps_active) & frames[None, None, None, :]
        if mask.any():
            values.append(np.sum(delta[mask]) / np.count_nonzero(mask))
    if not values:
        return StarValue(0.0, True)
    return StarValue(float(np.mean(values)), False)


def _gaussian_window(side, sigma=SIGMA):
    r = np.arange(side) - (side - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, win):
    # separable 'valid' correlation over the first two axes
    side = win.size
    w_out, h_out = img.shape[0] - side + 1, img.shape[1] - side + 1
    tmp = sum(win[k] * img[k:k + w_out] for k in range(side))
    return sum(win[k] * tmp[:, k:k + h_out] for k in range(side))


def ssim_frame(a, b, dynamic_range=255.0) -> float:
    """Mean SSIM of two ``(W, H, C)`` frames, averaged over windows and channels.

    Gaussian window of side ``min(11, W, H)`` with sigma 1.5, K1 = 0.01,
    K2 = 0.03, no padding.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape != b.shape or a.ndim != 3:
        raise ValueError(f"frames must share a (W, H, C) shape, got {a.shape} and {b.shape}")
    if not dynamic_range > 0:
        raise ValueError("dynamic_range must be positive")
    side = min(11, a.shape[0], a.shape[1])
    if side < 2:
        raise ValueError("frames too small for an SSIM window")
    win = _gaussian_window(side)
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a * mu_a
    sbb = _filter_valid(b * b, win) - mu_b * mu_b
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def frame_ssims(clean, adv, dynamic_range=255.0) -> np.ndarray:
    return np.array([ssim_frame(clean[..., t], adv[..., t], dynamic_range)
                     for t in range(clean.shape[3])])


def mssim(pairs, dynamic_range=255.0) -> float:
    values = [frame_ssims(c, a, dynamic_range) for c, a in _pairs(pairs)]
    return float(np.mean(np.concatenate(values)))


def ssim_star(pairs, eps_active=EPS_ACTIVE, dynamic_range=255.0) -> StarValue:
    values = []
    for clean, adv in _pairs(pairs):
        frames = active_frames(adv - clean, eps_active)
        for t in np.flatnonzero(frames):
            values.append(ssim_frame(clean[..., t], adv[..., t], dynamic_range))
    if not values:
        return StarValue(1.0, True)
    return StarValue(float(np.mean(values)), False)


def fooling_rate(results) -> float:
    results = list(results)
    if not results:
        raise ValueError("no attack results")
    return 100.0 * sum(bool(r.success) for r in results) / len(results)


def mean_queries(results) -> float | None:
    """Mean ``queries_used`` over successful attacks; None if none succeeded."""
    results = list(results)
    if not results:
        raise ValueError("no attack results")
    q = [r.queries_used for r in results if r.success]
    if not q:
        return None
    return float(sum(q) / len(q))


def queries_to_reach(trajectory, target) -> int | None:
    """Cumulative queries at the first accepted step with g <= target."""
    for g, q in trajectory:
        if g <= target:
            return q
    return None


def error_rank_report(pairs, tol=1e-8) -> tuple[list, Counter, tuple]:
    ranks = [multilinear_rank(adv - clean, tol) if np.any(adv != clean) else (0, 0, 0, 0)
             for clean, adv in _pairs(pairs)]
    hist = Counter(ranks)
    modal = min(hist, key=lambda r: (-hist[r], r))
    return ranks, hist, modal


@dataclass
class MetricsReport:
    n: int
    fr: float
    mq: float | None
    map: float
    map_star: float
    map_star_empty: bool
    mssim: float
    ssim_star: float
    ssim_star_empty: bool
    error_rank: list = field(default_factory=list)
    modal_rank: tuple = (0, 0, 0, 0)
    per_sample: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["error_rank"] = [list(r) for r in self.error_rank]
        d["modal_rank"] = list(self.modal_rank)
        return json.dumps(d, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def build_report(cleans, results, eps_active=EPS_ACTIVE, rank_tol=1e-8,
                 dynamic_range=255.0) -> MetricsReport:
    """Metrics over attack results. Perceptual metrics use every sample, as
    the adversarial tensor of a failed attack is still a perturbed video."""
    cleans, results = list(cleans), list(results)
    if len(cleans) != len(results):
        raise ValueError("one clean tensor per result required")
    pairs = [(c, r.adversarial) for c, r in zip(cleans, results)]
    ranks, _, modal = error_rank_report(pairs, rank_tol)
    ms = map_star(pairs, eps_active)
    ss = ssim_star(pairs, eps_active, dynamic_range)
    per_sample = []
    for i, ((c, a), r, rk) in enumerate(zip(pairs, results, ranks)):
        per_sample.append({
            "sample": i,
            "success": bool(r.success),
            "queries": r.queries_used,
            "g_star": r.g_star if math.isfinite(r.g_star) else None,
            "map": mean_absolute_perturbation([(c, a)]),
            "map_star": map_star([(c, a)], eps_active).value,
            "ssim": mssim([(c, a)], dynamic_range),
            "ssim_star": ssim_star([(c, a)], eps_active, dynamic_range).value,
            "rank": list(rk),
        })
    return MetricsReport(
        n=len(results),
        fr=fooling_rate(results),
        mq=mean_queries(results),
        map=mean_absolute_perturbation(pairs),
        map_star=ms.value,
        map_star_empty=ms.empty,
        mssim=mssim(pairs, dynamic_range),
        ssim_star=ss.value,
        ssim_star_empty=ss.empty,
        error_rank=ranks,
        modal_rank=modal,
        per_sample=per_sample,
    )


CSV_COLUMNS = ["attack", "sample", "MQ", "MAP", "MAP*", "SSIM", "SSIM*", "FR", "RANK", "g_star"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(name, report: MetricsReport) -> list:
    rows = []
    for s in report.per_sample:
        rows.append([name, s["sample"], s["queries"], s["map"], s["map_star"], s["ssim"],
                     s["ssim_star"], 100.0 if s["success"] else 0.0,
                     "x".join(map(str, s["rank"])), s["g_star"]])
    rows.append([name, "summary", report.mq, report.map, report.map_star, report.mssim,
                 report.ssim_star, report.fr, "x".join(map(str, report.modal_rank)), None])
    return rows


def reports_to_csv(reports: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name, rep in reports.items():
        for row in report_rows(name, rep):
            w.writerow([_fmt(v) for v in row])
    return buf.getvalue()
