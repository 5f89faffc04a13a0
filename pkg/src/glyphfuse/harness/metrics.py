"""Per-image metrics and split evaluation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ConfigurationError
from ..glyphdata import make_batch
from ..losses import corner_consistency, detect_corners
from ..numerics import no_grad

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window


def l1(a, b):
    return float(np.mean(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))))


def rmse(a, b):
    diff = np.asarray(a, np.float64) - np.asarray(b, np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


def ssim(a, b, data_range=1.0):
    """Gaussian-window SSIM averaged over the positions where the window fits."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(z):
        return gaussian_filter(z, SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA, mode="constant")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    r = SSIM_RADIUS
    valid = (num / den)[r:-r, r:-r] if min(x.shape) > 2 * r else num / den
    return float(valid.mean())


@dataclass
class MetricsReport:
    split: str
    rows: list = field(default_factory=list)  # (style, content, l1, rmse, ssim, corner)

    COLUMNS = ("style", "content", "l1", "rmse", "ssim", "corner")

    def mean(self, column):
        i = self.COLUMNS.index(column)
        return float(np.mean([row[i] for row in self.rows]))

    @property
    def summary(self):
        return {c: self.mean(c) for c in self.COLUMNS[2:]}

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow(list(row[:2]) + [repr(float(v)) for v in row[2:]])


def score_pair(output, target):
    diag = math.hypot(*target.shape[-2:])
    corners = corner_consistency(detect_corners(target), detect_corners(output), diagonal=diag)
    return l1(output, target), rmse(output, target), ssim(output, target), corners


def eval_references(corpus, split, k, seed=0):
    """Fixed reference draw per pair so evaluation never depends on split order."""
    pairs = sorted(corpus.split(split))
    if not pairs:
        raise ConfigurationError(f"split {split!r} is empty")
    batches = [make_batch(corpus, [p], k, np.random.default_rng([seed, p[0], p[1]])) for p in pairs]
    return pairs, batches


def evaluate(model, corpus, split="ufuc", k=4, seed=0, batch_size=16):
    """Generate every pair of ``split`` and score it against the ground truth."""
    from ..generator import generate

    pairs, singles = eval_references(corpus, split, k, seed)
    dtype = model.codec.codebook.dtype
    report = MetricsReport(split)
    with no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = singles[start : start + batch_size]
            content = np.concatenate([b.content for b in chunk]).astype(dtype)
            refs = np.concatenate([b.refs for b in chunk]).astype(dtype)
            out = generate(model, content, refs).data
            for (s, c), img, b in zip(pairs[start : start + batch_size], out, chunk):
                report.rows.append((s, c) + score_pair(img[0], b.target[0, 0]))
    return report


def baseline_report(corpus, split="ufuc"):
    """Copy-content baseline: the canonical render scored as if it were the output."""
    pairs = sorted(corpus.split(split))
    if not pairs:
        raise ConfigurationError(f"split {split!r} is empty")
    report = MetricsReport(split)
    for s, c in pairs:
        report.rows.append((s, c) + score_pair(corpus.render(c), corpus.render(c, s)))
    return report
