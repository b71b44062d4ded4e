"""Faithfulness and distribution metrics.

Images are numpy arrays of shape ``(H, W)`` or ``(H, W, C)`` with values in
``[0, peak]``.
"""

import csv

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import cdist, pdist
from scipy.stats import wasserstein_distance

from .errors import ConfigError

PSNR_CAP = 100.0


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def psnr(x, y, peak=1.0, cap=PSNR_CAP):
    """10 log10(peak^2 / MSE) in dB; identical images give ``cap``."""
    x, y = _pair(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return float(cap)
    return float(min(cap, 10.0 * np.log10(peak**2 / mse)))


def gaussian_window(size=7, sigma=1.5):
    if size % 2 == 0:
        raise ConfigError("SSIM window size must be odd")
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _local_mean(img, w):
    win = sliding_window_view(img, w.shape)
    return np.einsum("ijkl,kl->ij", win, w)


def ssim(x, y, peak=1.0, window=7, sigma=1.5, K1=0.01, K2=0.03):
    """Mean structural similarity over all fully contained Gaussian windows.

    Channels, when present, are scored separately and averaged.
    """
    x, y = _pair(x, y)
    if x.ndim == 3:
        return float(np.mean([ssim(x[..., c], y[..., c], peak, window, sigma, K1, K2) for c in range(x.shape[2])]))
    if x.ndim != 2:
        raise ConfigError("ssim expects (H, W) or (H, W, C) images")
    if window > min(x.shape):
        raise ConfigError(f"SSIM window {window} larger than image {x.shape}")
    w = gaussian_window(window, sigma)
    C1, C2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    mx, my = _local_mean(x, w), _local_mean(y, w)
    vx = _local_mean(x * x, w) - mx**2
    vy = _local_mean(y * y, w) - my**2
    cxy = _local_mean(x * y, w) - mx * my
    num = (2 * mx * my + C1) * (2 * cxy + C2)
    den = (mx**2 + my**2 + C1) * (vx + vy + C2)
    return float(np.mean(num / den))


def median_bandwidth(X, Y):
    Z = np.concatenate([np.atleast_2d(X), np.atleast_2d(Y)])
    d = pdist(Z)
    med = np.median(d[d > 0]) if np.any(d > 0) else 1.0
    return float(med)


def _as_samples(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ConfigError("empty sample set")
    return X


def mmd2(X, Y, bandwidth=None):
    """Biased (V-statistic) squared MMD with kernel exp(-||x - y||^2 / (2 h^2)).

    ``bandwidth`` defaults to the median pairwise distance of the pooled sample.
    """
    X, Y = _as_samples(X), _as_samples(Y)
    if X.shape[1] != Y.shape[1]:
        raise ConfigError("mmd2: dimension mismatch")
    h = median_bandwidth(X, Y) if bandwidth is None else float(bandwidth)
    k = lambda A, B: np.exp(-cdist(A, B, "sqeuclidean") / (2 * h * h))  # noqa: E731
    val = k(X, X).mean() + k(Y, Y).mean() - 2 * k(X, Y).mean()
    return float(max(val, 0.0))


def random_directions(dim, n, rng):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sliced_w1(X, Y, n_projections=256, rng=None, directions=None):
    """Mean 1D Wasserstein-1 distance between projections on random unit directions."""
    X, Y = _as_samples(X), _as_samples(Y)
    if X.shape[1] != Y.shape[1]:
        raise ConfigError("sliced_w1: dimension mismatch")
    if directions is None:
        if rng is None:
            raise ConfigError("sliced_w1: pass rng or directions")
        directions = random_directions(X.shape[1], n_projections, rng)
    px, py = X @ directions.T, Y @ directions.T
    if X.shape[0] == Y.shape[0]:
        return float(np.mean(np.abs(np.sort(px, axis=0) - np.sort(py, axis=0))))
    return float(np.mean([wasserstein_distance(px[:, j], py[:, j]) for j in range(px.shape[1])]))


def write_metric_rows(path, rows):
    """CSV with header ``run_id,metric,value``; values written with full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "metric", "value"])
        for run_id, name, value in rows:
            w.writerow([run_id, name, repr(float(value))])
