"""Differentiable splatting of Gaussians into a scalar temperature raster.

Projection is the standard first-order transform: a world covariance is
pushed through the world-to-camera rotation and the perspective Jacobian,
with a small isotropic floor so footprints never collapse below a pixel.
Compositing runs front to back per pixel and keeps enough state to replay
itself exactly in the backward pass.

Two interchangeable kernel backends exist: a compiled extension and a pure
numpy fallback.  Selection happens at import; set THERMOSPLAT_BACKEND to
``python`` or ``compiled`` to force one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _compositing_np
from .errors import ValidationError
from .scene import Camera

_FORCE = os.environ.get("THERMOSPLAT_BACKEND", "auto").lower()
if _FORCE not in ("auto", "python", "compiled"):
    raise ValidationError(f"THERMOSPLAT_BACKEND must be auto|python|compiled, got '{_FORCE}'")

_compiled = None
if _FORCE in ("auto", "compiled"):
    try:
        from . import _compositing as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
        if _FORCE == "compiled":
            raise ValidationError(
                "THERMOSPLAT_BACKEND=compiled but the extension is not built; "
                "run pip install -e . --no-build-isolation"
            )

_kernels = _compiled if _compiled is not None else _compositing_np


def backend_name() -> str:
    """Name of the active compositing backend: 'compiled' or 'python'."""
    return _kernels.BACKEND_NAME


COV2D_FLOOR = 0.3  # px^2, low-pass floor added to the projected covariance


@dataclass
class RasterSettings:
    # sigma_cutoff 3.5 makes the bounding box a pure optimization: alpha at
    # the 3.5-sigma boundary is below alpha_min for any opacity <= 1.
    alpha_min: float = 1.0 / 255.0
    transmittance_min: float = 1e-4
    near_plane: float = 0.01
    guard_band: float = 1.3
    sigma_cutoff: float = 3.5

    @classmethod
    def from_config(cls, cfg: dict) -> "RasterSettings":
        r = cfg["raster"]
        return cls(
            alpha_min=float(r["alpha_min"]),
            transmittance_min=float(r["transmittance_min"]),
            near_plane=float(r["near_plane"]),
            guard_band=float(r["guard_band"]),
            sigma_cutoff=float(r["sigma_cutoff"]),
        )


@dataclass
class Splat2D:
    """One projected Gaussian: pixel-space footprint plus depth."""

    center: NDArray[np.float64]
    cov2d: NDArray[np.float64]  # (2, 2)
    depth: float
    parent: int


@dataclass
class PackedSplats:
    """Depth-sorted projected Gaussians for one camera, SoA layout."""

    centers: NDArray[np.float64]  # (S, 2)
    cov2d: NDArray[np.float64]  # (S, 3): m00, m01, m11
    conics: NDArray[np.float64]  # (S, 3): inverse covariance a, b, c
    depths: NDArray[np.float64]  # (S,)
    parents: NDArray[np.int64]  # (S,) index into the scene gaussians
    bboxes: NDArray[np.int32]  # (S, 4): x0, x1, y0, y1 half-open pixel bounds
    proj: NDArray[np.float64]  # (S, 2, 3): J @ R, for the covariance pullback
    n_gaussians: int
    n_culled: int
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.parents)

    def __getitem__(self, i: int) -> Splat2D:
        m00, m01, m11 = self.cov2d[i]
        return Splat2D(
            center=self.centers[i].copy(),
            cov2d=np.array([[m00, m01], [m01, m11]]),
            depth=float(self.depths[i]),
            parent=int(self.parents[i]),
        )


def project_gaussians(
    positions: NDArray[np.float64],
    covariances: NDArray[np.float64],
    camera: Camera,
    settings: RasterSettings | None = None,
) -> PackedSplats:
    """Project world Gaussians to depth-sorted 2D splats for one camera.

    Culls Gaussians behind the near plane or whose center lands outside the
    guard band; the cull count is recorded on the result.
    """
    settings = settings or RasterSettings()
    camera.validate()
    pos = np.asarray(positions, dtype=np.float64)
    cov = np.asarray(covariances, dtype=np.float64)
    n = pos.shape[0]

    p_cam = camera.world_to_camera(pos)
    z = p_cam[:, 2]
    keep = z > settings.near_plane

    cx_img, cy_img = camera.width / 2.0, camera.height / 2.0
    half_w = 0.5 * settings.guard_band * camera.width
    half_h = 0.5 * settings.guard_band * camera.height
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * p_cam[:, 0] / z + camera.cx
        v = camera.fy * p_cam[:, 1] / z + camera.cy
    keep &= np.abs(u - cx_img) <= half_w
    keep &= np.abs(v - cy_img) <= half_h

    idx = np.nonzero(keep)[0]
    x, y, zz = p_cam[idx, 0], p_cam[idx, 1], p_cam[idx, 2]
    inv_z = 1.0 / zz
    jac = np.zeros((len(idx), 2, 3), dtype=np.float64)
    jac[:, 0, 0] = camera.fx * inv_z
    jac[:, 0, 2] = -camera.fx * x * inv_z * inv_z
    jac[:, 1, 1] = camera.fy * inv_z
    jac[:, 1, 2] = -camera.fy * y * inv_z * inv_z
    proj = jac @ camera.rotation  # (S, 2, 3)

    cov2d_full = proj @ cov[idx] @ np.swapaxes(proj, 1, 2)
    m00 = cov2d_full[:, 0, 0] + COV2D_FLOOR
    m01 = 0.5 * (cov2d_full[:, 0, 1] + cov2d_full[:, 1, 0])
    m11 = cov2d_full[:, 1, 1] + COV2D_FLOOR

    det = m00 * m11 - m01 * m01
    conic_a = m11 / det
    conic_b = -m01 / det
    conic_c = m00 / det

    # 3-sigma bounding boxes from the dominant eigenvalue.
    mid = 0.5 * (m00 + m11)
    disc = np.sqrt(np.maximum(mid * mid - det, 0.0))
    lam_max = mid + disc
    radius = np.ceil(settings.sigma_cutoff * np.sqrt(lam_max))
    centers = np.stack([u[idx], v[idx]], axis=1)
    x0 = np.clip(np.floor(centers[:, 0] - radius), 0, camera.width).astype(np.int32)
    x1 = np.clip(np.ceil(centers[:, 0] + radius) + 1, 0, camera.width).astype(np.int32)
    y0 = np.clip(np.floor(centers[:, 1] - radius), 0, camera.height).astype(np.int32)
    y1 = np.clip(np.ceil(centers[:, 1] + radius) + 1, 0, camera.height).astype(np.int32)
    bboxes = np.stack([x0, x1, y0, y1], axis=1)

    nonempty = (bboxes[:, 0] < bboxes[:, 1]) & (bboxes[:, 2] < bboxes[:, 3])
    idx = idx[nonempty]

    order = np.argsort(zz[nonempty], kind="stable")  # ties stay in gaussian order
    sel = np.nonzero(nonempty)[0][order]

    return PackedSplats(
        centers=np.ascontiguousarray(centers[sel]),
        cov2d=np.ascontiguousarray(np.stack([m00, m01, m11], axis=1)[sel]),
        conics=np.ascontiguousarray(np.stack([conic_a, conic_b, conic_c], axis=1)[sel]),
        depths=np.ascontiguousarray(zz[sel]),
        parents=idx[order].astype(np.int64),
        bboxes=np.ascontiguousarray(bboxes[sel]),
        proj=np.ascontiguousarray(proj[sel]),
        n_gaussians=n,
        n_culled=int(n - len(idx)),
        width=camera.width,
        height=camera.height,
    )


@dataclass
class CompositeTape:
    """Everything needed to replay compositing exactly in backward."""

    splats: PackedSplats
    opacities_splat: NDArray[np.float64]
    temps_splat: NDArray[np.float64]
    t_bg: float
    alpha_min: float
    trans_min: float
    n_contrib: NDArray[np.int32]
    backend: str


@dataclass
class RenderOutput:
    image: NDArray[np.float64]  # (H, W) kelvin
    alpha_map: NDArray[np.float64]  # (H, W) accumulated coverage in [0, 1]
    final_trans: NDArray[np.float64]
    tape: CompositeTape


@dataclass
class CompositeGrads:
    d_temp: NDArray[np.float64]  # (G,)
    d_opacity: NDArray[np.float64]  # (G,)
    d_center: NDArray[np.float64]  # (G, 2)
    d_cov2d: NDArray[np.float64]  # (G, 3): m00, m01, m11


def composite(
    splats: PackedSplats,
    temps: NDArray[np.float64],
    opacities: NDArray[np.float64],
    t_bg: float,
    settings: RasterSettings | None = None,
) -> RenderOutput:
    """Front-to-back alpha compositing of per-Gaussian temperatures.

    ``temps`` and ``opacities`` are per scene Gaussian; the splats carry the
    parent indices.  The pixel value is the weighted
    sum of contributor temperatures plus the background at the remaining
    transmittance, so every pixel is a convex combination.
    """
    settings = settings or RasterSettings()
    assert np.all(np.diff(splats.depths) >= 0.0), "splats must be depth-sorted ascending"
    temps = np.asarray(temps, dtype=np.float64)
    opacities = np.asarray(opacities, dtype=np.float64)
    if temps.shape[0] != splats.n_gaussians or opacities.shape[0] != splats.n_gaussians:
        raise ValidationError("temps/opacities must have one entry per scene gaussian")

    temps_splat = np.ascontiguousarray(temps[splats.parents])
    opac_splat = np.ascontiguousarray(opacities[splats.parents])
    image, alpha_map, n_contrib, final_trans = _kernels.composite_forward(
        splats.centers, splats.conics, opac_splat, temps_splat, splats.bboxes,
        splats.width, splats.height, float(t_bg), settings.alpha_min, settings.transmittance_min,
    )
    tape = CompositeTape(
        splats=splats,
        opacities_splat=opac_splat,
        temps_splat=temps_splat,
        t_bg=float(t_bg),
        alpha_min=settings.alpha_min,
        trans_min=settings.transmittance_min,
        n_contrib=n_contrib,
        backend=backend_name(),
    )
    return RenderOutput(image=image, alpha_map=alpha_map, final_trans=final_trans, tape=tape)


def composite_backward(tape: CompositeTape, d_image: NDArray[np.float64]) -> CompositeGrads:
    """Exact gradients of the compositing formula; scattered per Gaussian."""
    if tape.backend != backend_name():
        raise ValidationError("stale tape: produced by a different backend")
    splats = tape.splats
    d_image = np.ascontiguousarray(np.asarray(d_image, dtype=np.float64))
    if d_image.shape != (splats.height, splats.width):
        raise ValidationError(
            f"d_image shape {d_image.shape} != render shape {(splats.height, splats.width)}"
        )
    d_temp_s, d_opac_s, d_center_s, d_conic_s = _kernels.composite_backward(
        splats.centers, splats.conics, tape.opacities_splat, tape.temps_splat,
        splats.bboxes, splats.width, splats.height, tape.t_bg, tape.alpha_min,
        tape.trans_min, tape.n_contrib, d_image,
    )

    # conic = inv(cov2d): pull the conic cotangent back through the inverse.
    a, b, c = d_conic_s[:, 0], d_conic_s[:, 1], d_conic_s[:, 2]
    g_full = np.empty((len(splats), 2, 2), dtype=np.float64)
    g_full[:, 0, 0] = a
    g_full[:, 0, 1] = 0.5 * b
    g_full[:, 1, 0] = 0.5 * b
    g_full[:, 1, 1] = c
    conic_m = np.empty_like(g_full)
    conic_m[:, 0, 0] = splats.conics[:, 0]
    conic_m[:, 0, 1] = splats.conics[:, 1]
    conic_m[:, 1, 0] = splats.conics[:, 1]
    conic_m[:, 1, 1] = splats.conics[:, 2]
    d_cov_full = -conic_m @ g_full @ conic_m
    d_cov_s = np.stack(
        [
            d_cov_full[:, 0, 0],
            d_cov_full[:, 0, 1] + d_cov_full[:, 1, 0],
            d_cov_full[:, 1, 1],
        ],
        axis=1,
    )

    n = splats.n_gaussians
    grads = CompositeGrads(
        d_temp=np.zeros(n), d_opacity=np.zeros(n),
        d_center=np.zeros((n, 2)), d_cov2d=np.zeros((n, 3)),
    )
    np.add.at(grads.d_temp, splats.parents, d_temp_s)
    np.add.at(grads.d_opacity, splats.parents, d_opac_s)
    np.add.at(grads.d_center, splats.parents, d_center_s)
    np.add.at(grads.d_cov2d, splats.parents, d_cov_s)
    return grads


def cov2d_grads_to_world(splats: PackedSplats, d_cov2d: NDArray[np.float64]) -> NDArray[np.float64]:
    """Pull per-Gaussian 2D covariance gradients back to world covariances.

    ``d_cov2d`` is (G, 3) in (m00, m01, m11); returns (G, 3, 3) symmetric
    cotangents on the world covariance (zero for culled Gaussians).
    """
    n = splats.n_gaussians
    d_sigma = np.zeros((n, 3, 3), dtype=np.float64)
    if len(splats) == 0:
        return d_sigma
    g2 = np.empty((len(splats), 2, 2), dtype=np.float64)
    dc = d_cov2d[splats.parents]
    g2[:, 0, 0] = dc[:, 0]
    g2[:, 0, 1] = 0.5 * dc[:, 1]
    g2[:, 1, 0] = 0.5 * dc[:, 1]
    g2[:, 1, 1] = dc[:, 2]
    m = splats.proj  # (S, 2, 3)
    d_sig_s = np.swapaxes(m, 1, 2) @ g2 @ m  # (S, 3, 3)
    np.add.at(d_sigma, splats.parents, d_sig_s)
    return 0.5 * (d_sigma + np.swapaxes(d_sigma, 1, 2))
