"""Shared oracles and finite-difference utilities for the test suite."""

import numpy as np
import torch

LOG_FLOOR = 1.0 / 255.0


def central_difference_grad(fn, tensor, h=1e-6):
    """Gradient of a scalar function by central finite differences.

    `tensor` must share storage with whatever `fn` reads, so perturbing it
    in place re-evaluates the function at the shifted point.
    """
    grad = torch.zeros_like(tensor)
    flat = tensor.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        grad_flat[i] = (f_plus - f_minus) / (2 * h)
    return grad


def max_rel_error(analytic, numeric):
    scale = numeric.abs().max().clamp(min=1e-12)
    return float((analytic - numeric).abs().max() / scale)


def oracle_dxx(f, i, j):
    h, w = f.shape
    if j < 1 or j > w - 2:
        return 0.0
    return f[i, j + 1] - 2.0 * f[i, j] + f[i, j - 1]


def oracle_dyy(f, i, j):
    h, w = f.shape
    if i < 1 or i > h - 2:
        return 0.0
    return f[i + 1, j] - 2.0 * f[i, j] + f[i - 1, j]


def oracle_dxy(f, i, j):
    if i < 1 or j < 1:
        return 0.0
    return f[i, j] - f[i - 1, j] - f[i, j - 1] + f[i - 1, j - 1]


def brute_force_gradient_smooth(target, image, area_b, s=1.2, eps=1e-4):
    """Pixel-by-pixel reference for the second-order edge-aware band loss.

    target: (C, H, W); image: (3, H, W); area_b: (H, W) bool. Returns the
    sum over band pixels and channels of the four weighted squared second
    differences (the cross stencil counts twice).
    """
    target = np.asarray(target, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    lum = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]
    log_lum = np.log(np.clip(lum, LOG_FLOOR, 1.0))
    n_ch, h, w = target.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            if not area_b[i, j]:
                continue
            w_xx = 1.0 / (abs(oracle_dxx(log_lum, i, j)) ** s + eps)
            w_yy = 1.0 / (abs(oracle_dyy(log_lum, i, j)) ** s + eps)
            w_xy = 1.0 / (abs(oracle_dxy(log_lum, i, j)) ** s + eps)
            for c in range(n_ch):
                total += w_xx * oracle_dxx(target[c], i, j) ** 2
                total += 2.0 * w_xy * oracle_dxy(target[c], i, j) ** 2
                total += w_yy * oracle_dyy(target[c], i, j) ** 2
    return total


def brute_force_curvature(image, area_b):
    """Unweighted variant of the band curvature sum, same stencils."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    n_ch, h, w = image.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            if not area_b[i, j]:
                continue
            for c in range(n_ch):
                total += oracle_dxx(image[c], i, j) ** 2
                total += 2.0 * oracle_dxy(image[c], i, j) ** 2
                total += oracle_dyy(image[c], i, j) ** 2
    return total


def ssim_window_oracle(x, y, win=11, sigma=1.5, k1=0.01, k2=0.03):
    """Independent windowed-loop SSIM on a pair of 2D planes, range 1."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = x.shape
    off = np.arange(win) - win // 2
    g = np.exp(-(off**2) / (2.0 * sigma**2))
    g /= g.sum()
    kern = np.outer(g, g)
    c1, c2 = k1**2, k2**2
    vals = []
    for i in range(h - win + 1):
        for j in range(w - win + 1):
            px = x[i : i + win, j : j + win]
            py = y[i : i + win, j : j + win]
            mx = (kern * px).sum()
            my = (kern * py).sum()
            vx = (kern * px * px).sum() - mx**2
            vy = (kern * py * py).sum() - my**2
            cov = (kern * px * py).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx**2 + my**2 + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))
