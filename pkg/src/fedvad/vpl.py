"""Video-level pseudo-labels: 2-component GMM over the [sigma, H] summaries.

The cluster whose member videos have the larger mean entropy is labeled
anomalous (1), the other normal (0). Ties go to the smaller cluster, since
anomalies are assumed to be the rarer class.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .errors import ValidationError
from .stats import VideoSummary

log = logging.getLogger(__name__)

MAX_ITER = 200
LL_TOL = 1e-6
COV_REG = 1e-6


@dataclass
class Gmm2:
    """A fitted 2-component bivariate Gaussian mixture.

    Parameters live in standardized coordinates; ``shift``/``scale`` map raw
    [sigma, H] points into that space.
    """

    means: np.ndarray          # (2, 2)
    covs: np.ndarray           # (2, 2, 2)
    weights: np.ndarray        # (2,)
    shift: np.ndarray          # (2,)
    scale: np.ndarray          # (2,)
    log_likelihood: float
    iterations: int
    degenerate: bool = False


@dataclass
class VideoLabelSet:
    """Map video_id -> pseudo-label (0 normal, 1 anomalous)."""

    labels: Dict[str, int] = field(default_factory=dict)

    def get(self, video_id: str) -> int:
        return self.labels[video_id]

    def copy(self) -> "VideoLabelSet":
        return VideoLabelSet(labels=dict(self.labels))


def _standardize(pts: np.ndarray):
    shift = pts.mean(axis=0)
    scale = pts.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (pts - shift) / scale, shift, scale


def _log_gauss2(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # 2x2 case: explicit inverse keeps this allocation-light and exact.
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    det = a * c - b * b
    diff = z - mean
    quad = (c * diff[:, 0] ** 2 - 2 * b * diff[:, 0] * diff[:, 1] + a * diff[:, 1] ** 2) / det
    return -0.5 * (quad + np.log(det) + 2 * np.log(2 * np.pi))


def _regularize(cov: np.ndarray) -> np.ndarray:
    tr = cov[0, 0] + cov[1, 1]
    bump = COV_REG * tr / 2.0 if tr > 0 else 1e-12
    return cov + bump * np.eye(2)


def _log_resp(z, means, covs, weights):
    lp = np.stack(
        [np.log(weights[k]) + _log_gauss2(z, means[k], covs[k]) for k in range(2)],
        axis=1,
    )
    norm = np.logaddexp(lp[:, 0], lp[:, 1])
    return lp - norm[:, None], norm


def fit_gmm2(points: Sequence, seed: int) -> Gmm2:
    """EM fit of two bivariate Gaussians on [sigma, H] points.

    Coordinates are standardized before fitting; centers are seeded
    k-means++-style (random first center, farthest point second). All points
    identical yields a flagged degenerate fit.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("points must be (n, 2)")
    n = pts.shape[0]
    if n < 2:
        raise ValidationError("GMM needs at least 2 points")

    if np.all(pts == pts[0]):
        log.warning("all %d points identical: degenerate GMM", n)
        z0 = np.zeros(2)
        return Gmm2(
            means=np.stack([z0, z0]),
            covs=np.stack([np.eye(2) * 1e-12] * 2),
            weights=np.array([0.5, 0.5]),
            shift=pts[0].copy(),
            scale=np.ones(2),
            log_likelihood=float("nan"),
            iterations=0,
            degenerate=True,
        )

    z, shift, scale = _standardize(pts)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    first = int(rng.integers(n))
    d2 = ((z - z[first]) ** 2).sum(axis=1)
    second = int(np.argmax(d2))
    centers = z[[first, second]]

    # Hard-assignment init from the two seeds.
    dist = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    means = np.empty((2, 2))
    covs = np.empty((2, 2, 2))
    weights = np.empty(2)
    for k in range(2):
        members = z[assign == k]
        if members.shape[0] == 0:
            members = z[[first, second][k]][None, :]
        means[k] = members.mean(axis=0)
        diff = members - means[k]
        covs[k] = _regularize(diff.T @ diff / max(members.shape[0], 1))
        weights[k] = max(members.shape[0], 1) / n
    weights /= weights.sum()

    prev_ll = -np.inf
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        log_r, norm = _log_resp(z, means, covs, weights)
        ll = float(norm.sum())
        resp = np.exp(log_r)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        for k in range(2):
            means[k] = resp[:, k] @ z / nk[k]
            diff = z - means[k]
            covs[k] = _regularize((resp[:, k] * diff.T) @ diff / nk[k])
        if abs(ll - prev_ll) < LL_TOL:
            prev_ll = ll
            break
        prev_ll = ll

    return Gmm2(
        means=means,
        covs=covs,
        weights=weights,
        shift=shift,
        scale=scale,
        log_likelihood=prev_ll,
        iterations=iterations,
        degenerate=False,
    )


def responsibilities(gmm: Gmm2, points: Sequence) -> np.ndarray:
    """Posterior component probabilities for raw [sigma, H] points."""
    pts = np.asarray(points, dtype=np.float64)
    z = (pts - gmm.shift) / gmm.scale
    log_r, _ = _log_resp(z, gmm.means, gmm.covs, gmm.weights)
    return np.exp(log_r)


def assign_video_labels(gmm: Gmm2, summaries: List[VideoSummary]) -> VideoLabelSet:
    """Label each video by its cluster; the larger-mean-entropy cluster is
    anomalous. Degenerate fits label everything normal."""
    if gmm.degenerate:
        log.warning("degenerate GMM: labeling all %d videos normal", len(summaries))
        return VideoLabelSet(labels={s.video_id: 0 for s in summaries})

    pts = np.array([[s.sigma, s.entropy] for s in summaries])
    comp = responsibilities(gmm, pts).argmax(axis=1)
    sizes = np.array([(comp == k).sum() for k in range(2)])
    if (sizes == 0).any():
        log.warning("empty GMM cluster: labeling all videos normal")
        return VideoLabelSet(labels={s.video_id: 0 for s in summaries})

    mean_h = np.array([pts[comp == k, 1].mean() for k in range(2)])
    if mean_h[0] > mean_h[1]:
        anomalous = 0
    elif mean_h[1] > mean_h[0]:
        anomalous = 1
    else:
        # Entropy tie: the smaller cluster is anomalous (rarer class);
        # a size tie as well falls back to component 0 for determinism.
        anomalous = int(np.argmin(sizes)) if sizes[0] != sizes[1] else 0

    return VideoLabelSet(
        labels={
            s.video_id: int(comp[i] == anomalous) for i, s in enumerate(summaries)
        }
    )
