# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled compositing kernels (pixel-major, single-threaded, deterministic).

Mirrors the arithmetic of the numpy fallback exactly: same skip rule, same
early-stop rule, same per-pixel operation order, background always receives
the remaining transmittance.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND_NAME = "compiled"


def composite_forward(double[:, ::1] centers, double[:, ::1] conics,
                      double[::1] opacities, double[::1] temps,
                      int[:, ::1] bboxes, int width, int height,
                      double t_bg, double alpha_min, double trans_min):
    cdef int n_splats = centers.shape[0]
    image_np = np.zeros((height, width), dtype=np.float64)
    alpha_np = np.zeros((height, width), dtype=np.float64)
    ncon_np = np.zeros((height, width), dtype=np.int32)
    ftrans_np = np.ones((height, width), dtype=np.float64)
    cdef double[:, ::1] image = image_np
    cdef double[:, ::1] alpha_map = alpha_np
    cdef int[:, ::1] n_contrib = ncon_np
    cdef double[:, ::1] final_trans = ftrans_np

    cdef int px, py, i, n
    cdef double fx, fy, dx, dy, dxx, dyy, dxy, power, gval, alpha, w
    cdef double acc, aacc, trans, a, b, c

    for py in range(height):
        fy = py + 0.5
        for px in range(width):
            fx = px + 0.5
            acc = 0.0
            aacc = 0.0
            trans = 1.0
            n = 0
            for i in range(n_splats):
                if px < bboxes[i, 0] or px >= bboxes[i, 1]:
                    continue
                if py < bboxes[i, 2] or py >= bboxes[i, 3]:
                    continue
                dx = fx - centers[i, 0]
                dy = fy - centers[i, 1]
                a = conics[i, 0]
                b = conics[i, 1]
                c = conics[i, 2]
                dxx = dx * dx
                dyy = dy * dy
                dxy = dx * dy
                power = -0.5 * (a * dxx + c * dyy) - b * dxy
                gval = exp(power)
                alpha = opacities[i] * gval
                if alpha < alpha_min:
                    continue
                w = alpha * trans
                acc = acc + temps[i] * w
                aacc = aacc + w
                trans = trans * (1.0 - alpha)
                n = n + 1
                if trans < trans_min:
                    break
            acc = acc + t_bg * trans
            image[py, px] = acc
            alpha_map[py, px] = aacc
            n_contrib[py, px] = n
            final_trans[py, px] = trans

    return image_np, alpha_np, ncon_np, ftrans_np


def composite_backward(double[:, ::1] centers, double[:, ::1] conics,
                       double[::1] opacities, double[::1] temps,
                       int[:, ::1] bboxes, int width, int height,
                       double t_bg, double alpha_min, double trans_min,
                       int[:, ::1] n_contrib, double[:, ::1] d_image):
    cdef int n_splats = centers.shape[0]
    dtemp_np = np.zeros(n_splats, dtype=np.float64)
    dopac_np = np.zeros(n_splats, dtype=np.float64)
    dcen_np = np.zeros((n_splats, 2), dtype=np.float64)
    dcon_np = np.zeros((n_splats, 3), dtype=np.float64)
    cdef double[::1] d_temp = dtemp_np
    cdef double[::1] d_opac = dopac_np
    cdef double[:, ::1] d_center = dcen_np
    cdef double[:, ::1] d_conic = dcon_np

    # Per-pixel scratch for the replayed front-to-back state.
    idx_np = np.empty(max(n_splats, 1), dtype=np.int64)
    alp_np = np.empty(max(n_splats, 1), dtype=np.float64)
    trb_np = np.empty(max(n_splats, 1), dtype=np.float64)
    cdef long[::1] s_idx = idx_np
    cdef double[::1] s_alpha = alp_np
    cdef double[::1] s_trans = trb_np

    cdef int px, py, i, n, k, target
    cdef double fx, fy, dx, dy, dxx, dyy, dxy, power, gval, alpha, w
    cdef double trans, a, b, c, g, r_behind, d_alpha, d_power

    for py in range(height):
        fy = py + 0.5
        for px in range(width):
            fx = px + 0.5
            target = n_contrib[py, px]
            if target == 0:
                continue
            g = d_image[py, px]
            # Replay forward inclusion for this pixel.
            trans = 1.0
            n = 0
            for i in range(n_splats):
                if n == target:
                    break
                if px < bboxes[i, 0] or px >= bboxes[i, 1]:
                    continue
                if py < bboxes[i, 2] or py >= bboxes[i, 3]:
                    continue
                dx = fx - centers[i, 0]
                dy = fy - centers[i, 1]
                a = conics[i, 0]
                b = conics[i, 1]
                c = conics[i, 2]
                dxx = dx * dx
                dyy = dy * dy
                dxy = dx * dy
                power = -0.5 * (a * dxx + c * dyy) - b * dxy
                gval = exp(power)
                alpha = opacities[i] * gval
                if alpha < alpha_min:
                    continue
                s_idx[n] = i
                s_alpha[n] = alpha
                s_trans[n] = trans
                trans = trans * (1.0 - alpha)
                n = n + 1
            # Back-to-front accumulation; background sits behind everything.
            r_behind = t_bg
            for k in range(n - 1, -1, -1):
                i = s_idx[k]
                alpha = s_alpha[k]
                w = alpha * s_trans[k]
                d_temp[i] += g * w
                d_alpha = g * s_trans[k] * (temps[i] - r_behind)
                d_opac[i] += d_alpha * (alpha / opacities[i])
                d_power = d_alpha * alpha
                dx = fx - centers[i, 0]
                dy = fy - centers[i, 1]
                a = conics[i, 0]
                b = conics[i, 1]
                c = conics[i, 2]
                d_conic[i, 0] += -0.5 * dx * dx * d_power
                d_conic[i, 1] += -(dx * dy) * d_power
                d_conic[i, 2] += -0.5 * dy * dy * d_power
                d_center[i, 0] += d_power * (a * dx + b * dy)
                d_center[i, 1] += d_power * (b * dx + c * dy)
                r_behind = temps[i] * alpha + (1.0 - alpha) * r_behind

    return dtemp_np, dopac_np, dcen_np, dcon_np
