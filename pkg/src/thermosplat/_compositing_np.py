"""Pure-numpy compositing kernels (fallback backend).

Splat-major over pixels, but the per-pixel operation sequence is identical
to the compiled pixel-major kernel: contributions below ``alpha_min`` are
skipped entirely, a pixel stops accepting contributions once its
transmittance drops below ``trans_min``, and the background always receives
the remaining transmittance.  Arithmetic is ordered so both backends agree
to the last ulp of the shared exp evaluations.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _grids(bbox, cx, cy):
    x0, x1, y0, y1 = (int(v) for v in bbox)
    xs = np.arange(x0, x1, dtype=np.float64) + 0.5
    ys = np.arange(y0, y1, dtype=np.float64) + 0.5
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    return x0, x1, y0, y1, dx, dy


def composite_forward(centers, conics, opacities, temps, bboxes, width, height,
                      t_bg, alpha_min, trans_min):
    n_splats = centers.shape[0]
    image = np.zeros((height, width), dtype=np.float64)
    alpha_map = np.zeros((height, width), dtype=np.float64)
    trans = np.ones((height, width), dtype=np.float64)
    n_contrib = np.zeros((height, width), dtype=np.int32)
    stopped = np.zeros((height, width), dtype=bool)

    for i in range(n_splats):
        x0, x1, y0, y1 = (int(v) for v in bboxes[i])
        if x0 >= x1 or y0 >= y1:
            continue
        _, _, _, _, dx, dy = _grids(bboxes[i], centers[i, 0], centers[i, 1])
        a, b, c = conics[i]
        dxx = dx * dx
        dyy = dy * dy
        dxy = dx * dy
        power = -0.5 * (a * dxx + c * dyy) - b * dxy
        alpha = opacities[i] * np.exp(power)

        sl = (slice(y0, y1), slice(x0, x1))
        include = ~stopped[sl] & (alpha >= alpha_min)
        w = alpha * trans[sl]
        image[sl] += np.where(include, temps[i] * w, 0.0)
        alpha_map[sl] += np.where(include, w, 0.0)
        trans[sl] *= np.where(include, 1.0 - alpha, 1.0)
        n_contrib[sl] += include
        stopped[sl] |= include & (trans[sl] < trans_min)

    image += t_bg * trans
    return image, alpha_map, n_contrib, trans


def composite_backward(centers, conics, opacities, temps, bboxes, width, height,
                       t_bg, alpha_min, trans_min, n_contrib, d_image):
    n_splats = centers.shape[0]
    d_temp = np.zeros(n_splats, dtype=np.float64)
    d_opac = np.zeros(n_splats, dtype=np.float64)
    d_center = np.zeros((n_splats, 2), dtype=np.float64)
    d_conic = np.zeros((n_splats, 3), dtype=np.float64)

    # Pass 1: replay the forward pass, keeping per-splat inclusion masks,
    # alphas and the transmittance seen in front of each splat.
    trans = np.ones((height, width), dtype=np.float64)
    stopped = np.zeros((height, width), dtype=bool)
    stash: list[tuple | None] = [None] * n_splats
    for i in range(n_splats):
        x0, x1, y0, y1 = (int(v) for v in bboxes[i])
        if x0 >= x1 or y0 >= y1:
            continue
        _, _, _, _, dx, dy = _grids(bboxes[i], centers[i, 0], centers[i, 1])
        a, b, c = conics[i]
        dxx = dx * dx
        dyy = dy * dy
        dxy = dx * dy
        power = -0.5 * (a * dxx + c * dyy) - b * dxy
        alpha = opacities[i] * np.exp(power)
        sl = (slice(y0, y1), slice(x0, x1))
        include = ~stopped[sl] & (alpha >= alpha_min)
        if not np.any(include):
            stash[i] = None
            continue
        stash[i] = (include, alpha, trans[sl].copy(), dx, dy)
        trans[sl] *= np.where(include, 1.0 - alpha, 1.0)
        stopped[sl] |= include & (trans[sl] < trans_min)

    # Pass 2: back to front.  R holds the composited value behind the current
    # splat (background included) with transmittance reset to one.
    r_behind = np.full((height, width), t_bg, dtype=np.float64)
    for i in range(n_splats - 1, -1, -1):
        if stash[i] is None:
            continue
        include, alpha, trans_b, dx, dy = stash[i]
        x0, x1, y0, y1 = (int(v) for v in bboxes[i])
        sl = (slice(y0, y1), slice(x0, x1))
        g = d_image[sl]
        a, b, c = conics[i]

        w = alpha * trans_b
        d_temp[i] = np.sum(np.where(include, g * w, 0.0))
        d_alpha = np.where(include, g * trans_b * (temps[i] - r_behind[sl]), 0.0)
        d_opac[i] = np.sum(d_alpha * (alpha / opacities[i]))
        d_power = d_alpha * alpha
        d_conic[i, 0] = np.sum(-0.5 * dx * dx * d_power)
        d_conic[i, 1] = np.sum(-(dx * dy) * d_power)
        d_conic[i, 2] = np.sum(-0.5 * dy * dy * d_power)
        d_center[i, 0] = np.sum(d_power * (a * dx + b * dy))
        d_center[i, 1] = np.sum(d_power * (b * dx + c * dy))

        r_behind[sl] = np.where(include, temps[i] * alpha + (1.0 - alpha) * r_behind[sl], r_behind[sl])

    return d_temp, d_opac, d_center, d_conic
