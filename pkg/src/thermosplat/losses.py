"""Differentiable image losses, the trajectory smoothness penalty, and the
evaluation metrics.

Images enter the losses normalized to [0, 1] via the scene temperature
range.  SSIM uses the usual 11x11 Gaussian window (sigma 1.5) over valid
positions only, so its adjoint is an exact full-mode convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.signal import convolve2d

from .errors import ValidationError
from .scene import KELVIN_OFFSET
from .thermo import TempCurve

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.8  # pixelwise L1
    lambda2: float = 0.2  # structural term (1 - SSIM)
    lambda3: float = 10.0  # trajectory smoothness

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ValidationError("loss weights must be >= 0")

    @classmethod
    def from_config(cls, cfg: dict) -> "LossWeights":
        ls = cfg["loss"]
        return cls(lambda1=float(ls["lambda1"]), lambda2=float(ls["lambda2"]), lambda3=float(ls["lambda3"]))


@dataclass
class NormalizedImage:
    """H x W values clamped to [0, 1] plus the Celsius range that produced them."""

    values: NDArray[np.float64]
    lo_c: float
    hi_c: float
    inside: NDArray[np.bool_]  # True where the raw value was not clamped

    @property
    def span(self) -> float:
        return self.hi_c - self.lo_c


def normalize_image(kelvin: NDArray[np.float64], temp_range_c: tuple[float, float]) -> NormalizedImage:
    """Map a kelvin raster into [0, 1] using the scene normalization range."""
    lo_c, hi_c = float(temp_range_c[0]), float(temp_range_c[1])
    if not hi_c > lo_c:
        raise ValidationError(f"temp_range must satisfy t_min < t_max, got ({lo_c}, {hi_c})")
    raw = (np.asarray(kelvin, dtype=np.float64) - (lo_c + KELVIN_OFFSET)) / (hi_c - lo_c)
    inside = (raw >= 0.0) & (raw <= 1.0)
    return NormalizedImage(values=np.clip(raw, 0.0, 1.0), lo_c=lo_c, hi_c=hi_c, inside=inside)


def normalized_grad_to_kelvin(img: NormalizedImage, d_values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Chain a gradient on normalized values back to the kelvin raster."""
    return np.where(img.inside, d_values, 0.0) / img.span


def _values(img) -> NDArray[np.float64]:
    return img.values if isinstance(img, NormalizedImage) else np.asarray(img, dtype=np.float64)


def _check_same_dims(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"image shape mismatch: {a.shape} vs {b.shape}")


def l1_loss(pred, gt) -> tuple[float, NDArray[np.float64]]:
    """Mean absolute difference; subgradient zero at exact ties."""
    p, g = _values(pred), _values(gt)
    _check_same_dims(p, g)
    diff = p - g
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return value, grad


def _gaussian_window() -> NDArray[np.float64]:
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - half
    g = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def ssim(pred, gt) -> tuple[float, NDArray[np.float64]]:
    """Mean local SSIM over valid 11x11 windows, with its gradient w.r.t. pred.

    Identical inputs give exactly 1.0.
    """
    p, g = _values(pred), _values(gt)
    _check_same_dims(p, g)
    if p.shape[0] < SSIM_WINDOW or p.shape[1] < SSIM_WINDOW:
        raise ValidationError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {p.shape}")
    w = _WINDOW

    mu_p = convolve2d(p, w, mode="valid")
    mu_g = convolve2d(g, w, mode="valid")
    var_p = convolve2d(p * p, w, mode="valid") - mu_p * mu_p
    var_g = convolve2d(g * g, w, mode="valid") - mu_g * mu_g
    cov = convolve2d(p * g, w, mode="valid") - mu_p * mu_g

    a1 = 2.0 * (mu_p * mu_g) + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_p * mu_p + mu_g * mu_g + SSIM_C1
    b2 = var_p + var_g + SSIM_C2
    s_map = (a1 * a2) / (b1 * b2)
    value = float(np.mean(s_map))

    n_win = s_map.size
    # Partials of the mean map w.r.t. the window statistics of pred.
    d_mu = (2.0 * mu_g * a2 / (b1 * b2) - s_map * 2.0 * mu_p / b1) / n_win
    d_var = (-s_map / b2) / n_win
    d_cov = (2.0 * a1 / (b1 * b2)) / n_win

    # mu_p, var_p, cov are valid-mode correlations; the adjoint scatters each
    # window-center term back over the window with full-mode convolution.
    t1 = convolve2d(d_mu, w, mode="full")
    t2 = convolve2d(d_var, w, mode="full")
    t2mu = convolve2d(d_var * mu_p, w, mode="full")
    t3 = convolve2d(d_cov, w, mode="full")
    t3mu = convolve2d(d_cov * mu_g, w, mode="full")
    grad = t1 + 2.0 * (p * t2 - t2mu) + (g * t3 - t3mu)
    return value, grad


def smoothness_loss(curve: TempCurve) -> tuple[float, NDArray[np.float64]]:
    """Second-difference penalty on per-step temperature changes.

    Mean over Gaussians and interior steps of (delta[n+1] - delta[n])^2,
    in K^2.  Returns the gradient w.r.t. the deltas.
    """
    deltas = np.asarray(curve.deltas, dtype=np.float64) if isinstance(curve, TempCurve) else np.asarray(curve)
    if deltas.shape[0] < 2:
        raise ValidationError("smoothness loss needs at least 2 deltas per curve")
    d2 = deltas[1:] - deltas[:-1]  # (N-1, ...)
    count = d2.size
    value = float(np.sum(d2 * d2) / count)
    grad = np.zeros_like(deltas)
    scaled = 2.0 * d2 / count
    grad[1:] += scaled
    grad[:-1] -= scaled
    return value, grad


def stage1_loss(pred, gt, weights: LossWeights) -> tuple[float, NDArray[np.float64]]:
    """lambda1 * L1 + lambda2 * (1 - SSIM) on normalized images."""
    l1_val, l1_grad = l1_loss(pred, gt)
    s_val, s_grad = ssim(pred, gt)
    value = weights.lambda1 * l1_val + weights.lambda2 * (1.0 - s_val)
    grad = weights.lambda1 * l1_grad - weights.lambda2 * s_grad
    return value, grad


@dataclass
class Stage2Loss:
    value: float
    d_direct: NDArray[np.float64]  # grad on the directly rendered image
    d_integral: NDArray[np.float64]  # grad on the integral-rendered image
    d_deltas: NDArray[np.float64] | None  # grad on the trajectory deltas
    d_temp_direct: NDArray[np.float64] | None  # set when the explicit tie is on
    d_temp_integral: NDArray[np.float64] | None
    parts: dict


def stage2_loss(
    pred_direct,
    pred_integral,
    gt,
    curve: TempCurve | None,
    weights: LossWeights,
    combine: str = "sum",
    temps_direct: NDArray[np.float64] | None = None,
    temps_integral: NDArray[np.float64] | None = None,
    consistency_weight: float = 0.0,
    temp_span_k: float = 1.0,
) -> Stage2Loss:
    """Both rendered images against the shared ground truth, plus smoothness.

    Consistency of the direct and integrated temperatures is enforced through
    the shared target; an explicit squared tie (normalized by the scene
    temperature span) can be added with ``consistency_weight > 0``.
    """
    if combine not in ("sum", "mean"):
        raise ValidationError(f"stage2 combine must be sum|mean, got '{combine}'")
    half = 0.5 if combine == "mean" else 1.0
    v_dir, g_dir = stage1_loss(pred_direct, gt, weights)
    v_int, g_int = stage1_loss(pred_integral, gt, weights)
    value = half * (v_dir + v_int)
    parts = {"direct": v_dir, "integral": v_int}

    d_deltas = None
    if curve is not None and weights.lambda3 > 0.0:
        s_val, s_grad = smoothness_loss(curve)
        value += weights.lambda3 * s_val
        d_deltas = weights.lambda3 * s_grad
        parts["smooth"] = s_val
    elif curve is not None:
        parts["smooth"] = 0.0

    d_temp_direct = d_temp_integral = None
    if consistency_weight > 0.0 and temps_direct is not None and temps_integral is not None:
        diff = (temps_direct - temps_integral) / temp_span_k
        c_val = float(np.mean(diff * diff))
        value += consistency_weight * c_val
        scale = consistency_weight * 2.0 / (diff.size * temp_span_k)
        d_temp_direct = scale * diff
        d_temp_integral = -scale * diff
        parts["consistency"] = c_val

    return Stage2Loss(
        value=value,
        d_direct=half * g_dir,
        d_integral=half * g_int,
        d_deltas=d_deltas,
        d_temp_direct=d_temp_direct,
        d_temp_integral=d_temp_integral,
        parts=parts,
    )


def psnr(pred, gt) -> float:
    """Peak signal-to-noise ratio in dB on normalized images, capped at 100."""
    p, g = _values(pred), _values(gt)
    _check_same_dims(p, g)
    mse = float(np.mean((p - g) ** 2))
    if mse < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / mse))


def mae_celsius(pred_k, gt_k) -> float:
    """Mean absolute error on raw rasters; kelvin and Celsius differences agree."""
    p = np.asarray(pred_k, dtype=np.float64)
    g = np.asarray(gt_k, dtype=np.float64)
    _check_same_dims(p, g)
    return float(np.mean(np.abs(p - g)))
