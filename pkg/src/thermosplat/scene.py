"""Explicit Gaussian scene: primitives, cameras, ambient profile, scene files.

Conventions
-----------
* Quaternions are (w, x, y, z), unit norm within 1e-6.
* Temperatures are kelvin everywhere in memory; scene files and rasters use
  degrees Celsius.  For kelvin values inside the validated range the C <-> K
  conversion is exact in float64 (Sterbenz subtraction), so scene files
  round-trip bit-for-bit.
* World frame is right-handed, z up.  Camera frame: x right, y down,
  z forward; a point projects to pixel (fx*x/z + cx, fy*y/z + cy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import NumericError, ValidationError

KELVIN_OFFSET = 273.15
# Kelvin range accepted for any temperature-valued scene field.  Chosen so the
# Celsius round-trip in files is exact and out-of-range data is caught early.
TEMP_K_MIN = 150.0
TEMP_K_MAX = 450.0

QUAT_NORM_TOL = 1e-6


def celsius_to_kelvin(c):
    return np.asarray(c, dtype=np.float64) + KELVIN_OFFSET


def kelvin_to_celsius(k):
    return np.asarray(k, dtype=np.float64) - KELVIN_OFFSET


def _as_f64(x, shape, path: str) -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != shape:
        raise ValidationError(f"{path}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path}: non-finite value")
    return arr


# ---------------------------------------------------------------------------
# Quaternion / covariance math


def rotation_matrix_from_quat(q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotation matrices for unit quaternions, shape (..., 4) -> (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def rotation_matrix_vjp(q: NDArray[np.float64], d_rot: NDArray[np.float64]) -> NDArray[np.float64]:
    """Pull a cotangent on the rotation matrix back to the quaternion.

    ``q`` is (..., 4) unit quaternions, ``d_rot`` is (..., 3, 3); returns
    (..., 4).  Partials of R with respect to each quaternion component are
    linear in q, written out explicitly.
    """
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(d_rot, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)

    def pack(rows):
        m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
        for i in range(3):
            for j in range(3):
                m[..., i, j] = rows[i][j]
        return m

    dr_dw = pack([[zero, -z, y], [z, zero, -x], [-y, x, zero]]) * 2.0
    dr_dx = pack([[zero, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]]) * 2.0
    dr_dy = pack([[-2.0 * y, x, w], [x, zero, z], [-w, z, -2.0 * y]]) * 2.0
    dr_dz = pack([[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, zero]]) * 2.0

    out = np.stack(
        [
            np.sum(g * dr_dw, axis=(-2, -1)),
            np.sum(g * dr_dx, axis=(-2, -1)),
            np.sum(g * dr_dy, axis=(-2, -1)),
            np.sum(g * dr_dz, axis=(-2, -1)),
        ],
        axis=-1,
    )
    return out


def _check_unit_quat(rot: NDArray[np.float64], path: str = "rot") -> None:
    norm = np.linalg.norm(rot, axis=-1)
    if np.any(np.abs(norm - 1.0) > QUAT_NORM_TOL):
        worst = float(np.max(np.abs(norm - 1.0)))
        raise ValidationError(f"{path}: quaternion norm off unit by {worst:.3e} (tol {QUAT_NORM_TOL})")


def covariance_from_rotation_scale(rot, scale) -> NDArray[np.float64]:
    """Covariance of an anisotropic Gaussian from quaternion + per-axis sigmas.

    Accepts (..., 4) quaternions and (..., 3) scales; returns (..., 3, 3)
    symmetric positive-definite matrices R diag(s^2) R^T.
    """
    rot = np.asarray(rot, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    _check_unit_quat(rot)
    if np.any(scale <= 0.0):
        raise ValidationError("scale: components must be strictly positive")
    r = rotation_matrix_from_quat(rot)
    d = scale[..., None, :] ** 2  # broadcast diag(s^2)
    sigma = (r * d) @ np.swapaxes(r, -1, -2)
    # Symmetrize away the last-ulp asymmetry from the matmul.
    return 0.5 * (sigma + np.swapaxes(sigma, -1, -2))


def covariance_vjp(rot, scale, d_sigma):
    """Gradients of covariance_from_rotation_scale w.r.t. quaternion and scale.

    ``d_sigma`` is the cotangent on the (..., 3, 3) covariance; returns
    (d_rot (..., 4), d_scale (..., 3)).
    """
    rot = np.asarray(rot, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    g = np.asarray(d_sigma, dtype=np.float64)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    r = rotation_matrix_from_quat(rot)
    d = scale**2
    # dL/dR = 2 G R D for symmetric G, with D = diag(s^2)
    d_r = 2.0 * g @ (r * d[..., None, :])
    d_rot = rotation_matrix_vjp(rot, d_r)
    # dL/ds_i = 2 s_i (R^T G R)_ii
    rtgr = np.swapaxes(r, -1, -2) @ g @ r
    diag = np.diagonal(rtgr, axis1=-2, axis2=-1)
    d_scale = 2.0 * scale * diag
    return d_rot, d_scale


def gaussian_density(x, mu, sigma) -> float:
    """Normalized 3D Gaussian density at ``x``; peaks at ``mu``."""
    x = _as_f64(x, (3,), "x")
    mu = _as_f64(mu, (3,), "mu")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (3, 3):
        raise ValidationError(f"sigma: expected shape (3, 3), got {sigma.shape}")
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0 or not np.isfinite(logdet):
        raise NumericError("sigma is singular or not positive definite")
    try:
        solve = np.linalg.solve(sigma, x - mu)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"sigma is numerically singular: {exc}") from exc
    maha = float((x - mu) @ solve)
    norm = (2.0 * np.pi) ** (-1.5) * np.exp(-0.5 * logdet)
    return float(norm * np.exp(-0.5 * maha))


# ---------------------------------------------------------------------------
# Domain types


@dataclass
class GaussianPrimitive:
    """One explicit scene atom: ellipsoidal footprint plus semantic feature."""

    mu: NDArray[np.float64]
    rot: NDArray[np.float64]
    scale: NDArray[np.float64]
    opacity: float
    feature: NDArray[np.float64]
    material_id: int | None = None

    def validate(self, path: str = "gaussian") -> None:
        self.mu = _as_f64(self.mu, (3,), f"{path}.mu")
        self.rot = _as_f64(self.rot, (4,), f"{path}.rot")
        _check_unit_quat(self.rot, f"{path}.rot")
        self.scale = _as_f64(self.scale, (3,), f"{path}.scale")
        for i, s in enumerate(self.scale):
            if s <= 0.0:
                raise ValidationError(f"{path}.scale[{i}]: must be > 0, got {s}")
        if not np.isfinite(self.opacity) or not 0.0 <= self.opacity <= 1.0:
            raise ValidationError(f"{path}.opacity: must lie in [0, 1], got {self.opacity}")
        self.feature = np.asarray(self.feature, dtype=np.float64)
        if self.feature.ndim != 1 or self.feature.size < 1:
            raise ValidationError(f"{path}.feature: must be a non-empty vector")
        if not np.all(np.isfinite(self.feature)):
            raise ValidationError(f"{path}.feature: non-finite value")

    def covariance(self) -> NDArray[np.float64]:
        return covariance_from_rotation_scale(self.rot, self.scale)


@dataclass
class Camera:
    """Pinhole camera with a world-to-camera rigid transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: NDArray[np.float64]  # (3, 3) world -> camera
    translation: NDArray[np.float64]  # (3,)

    def validate(self, path: str = "camera") -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"{path}: focal lengths must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"{path}: resolution must be >= 1 pixel")
        self.rotation = _as_f64(self.rotation, (3, 3), f"{path}.rotation")
        self.translation = _as_f64(self.translation, (3,), f"{path}.translation")
        err = np.max(np.abs(self.rotation @ self.rotation.T - np.eye(3)))
        if err > 1e-6:
            raise ValidationError(f"{path}.rotation: not orthonormal (deviation {err:.3e})")

    def world_to_camera(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return points @ self.rotation.T + self.translation

    @classmethod
    def look_at(cls, eye, target, up, fx, fy, cx, cy, width, height) -> "Camera":
        """Camera at ``eye`` looking toward ``target``; x right, y down, z forward."""
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        forward = target - eye
        fn = np.linalg.norm(forward)
        if fn < 1e-12:
            raise ValidationError("camera look_at: eye and target coincide")
        forward = forward / fn
        right = np.cross(forward, up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ValidationError("camera look_at: up direction parallel to view direction")
        right = right / rn
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward], axis=0)
        trans = -rot @ eye
        cam = cls(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height, rotation=rot, translation=trans)
        cam.validate()
        return cam

    def to_json(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, path: str = "camera") -> "Camera":
        try:
            cam = cls(
                fx=float(obj["fx"]),
                fy=float(obj["fy"]),
                cx=float(obj["cx"]),
                cy=float(obj["cy"]),
                width=int(obj["width"]),
                height=int(obj["height"]),
                rotation=np.asarray(obj["rotation"], dtype=np.float64),
                translation=np.asarray(obj["translation"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed camera object ({exc})") from exc
        cam.validate(path)
        return cam


@dataclass
class AmbientProfile:
    """Piecewise-linear air temperature over the night, kelvin inside."""

    knots: NDArray[np.float64]  # (K, 2): time_s, temp_k

    def validate(self, path: str = "ambient") -> None:
        self.knots = np.asarray(self.knots, dtype=np.float64)
        if self.knots.ndim != 2 or self.knots.shape[1] != 2 or self.knots.shape[0] < 1:
            raise ValidationError(f"{path}.knots: expected (K, 2) with K >= 1")
        if not np.all(np.isfinite(self.knots)):
            raise ValidationError(f"{path}.knots: non-finite value")
        times = self.knots[:, 0]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise ValidationError(
                    f"{path}.knots[{i}]: time {times[i]} not greater than previous {times[i - 1]}"
                )
        temps = self.knots[:, 1]
        if np.any(temps < TEMP_K_MIN) or np.any(temps > TEMP_K_MAX):
            bad = int(np.argmax((temps < TEMP_K_MIN) | (temps > TEMP_K_MAX)))
            raise ValidationError(
                f"{path}.knots[{bad}]: temperature {temps[bad]} K outside [{TEMP_K_MIN}, {TEMP_K_MAX}]"
            )

    def __call__(self, t):
        """Ambient temperature in kelvin; clamps outside the knot range."""
        return np.interp(t, self.knots[:, 0], self.knots[:, 1])

    @classmethod
    def from_celsius_knots(cls, knots_c) -> "AmbientProfile":
        arr = np.asarray(knots_c, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("ambient.knots: expected (K, 2) [time_s, temp_c] pairs")
        knots = arr.copy()
        knots[:, 1] = knots[:, 1] + KELVIN_OFFSET
        prof = cls(knots=knots)
        prof.validate()
        return prof


@dataclass
class Scene:
    """Gaussian set plus the ambient profile and normalization range."""

    gaussians: list[GaussianPrimitive]
    ambient: AmbientProfile
    temp_range: tuple[float, float]  # degrees C, used for image normalization
    time_origin: float = 0.0

    def validate(self) -> None:
        if len(self.gaussians) < 1:
            raise ValidationError("gaussians: scene must contain at least one gaussian")
        fdim = None
        for i, g in enumerate(self.gaussians):
            g.validate(f"gaussians[{i}]")
            if fdim is None:
                fdim = g.feature.size
            elif g.feature.size != fdim:
                raise ValidationError(
                    f"gaussians[{i}].feature: dimension {g.feature.size} != {fdim} of gaussians[0]"
                )
        self.ambient.validate()
        lo, hi = self.temp_range
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValidationError(f"temp_range: need t_min < t_max, got ({lo}, {hi})")
        if not np.isfinite(self.time_origin):
            raise ValidationError("time_origin: non-finite")

    # -- packed array views -------------------------------------------------

    def positions(self) -> NDArray[np.float64]:
        return np.stack([g.mu for g in self.gaussians], axis=0)

    def rotations(self) -> NDArray[np.float64]:
        return np.stack([g.rot for g in self.gaussians], axis=0)

    def scales(self) -> NDArray[np.float64]:
        return np.stack([g.scale for g in self.gaussians], axis=0)

    def opacities(self) -> NDArray[np.float64]:
        return np.array([g.opacity for g in self.gaussians], dtype=np.float64)

    def features(self) -> NDArray[np.float64]:
        return np.stack([g.feature for g in self.gaussians], axis=0)

    def material_ids(self) -> NDArray[np.int64]:
        return np.array(
            [-1 if g.material_id is None else g.material_id for g in self.gaussians], dtype=np.int64
        )

    def covariances(self) -> NDArray[np.float64]:
        return covariance_from_rotation_scale(self.rotations(), self.scales())

    def temp_range_kelvin(self) -> tuple[float, float]:
        lo, hi = self.temp_range
        return lo + KELVIN_OFFSET, hi + KELVIN_OFFSET

    def bounding_box(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        pos = self.positions()
        return pos.min(axis=0), pos.max(axis=0)

    def geometry_bytes(self) -> bytes:
        """Canonical byte serialization of all geometry; used by freeze checks."""
        parts = [
            self.positions().astype("<f8").tobytes(),
            self.rotations().astype("<f8").tobytes(),
            self.scales().astype("<f8").tobytes(),
            self.opacities().astype("<f8").tobytes(),
        ]
        return b"".join(parts)

    def copy(self) -> "Scene":
        return Scene(
            gaussians=[
                GaussianPrimitive(
                    mu=g.mu.copy(),
                    rot=g.rot.copy(),
                    scale=g.scale.copy(),
                    opacity=float(g.opacity),
                    feature=g.feature.copy(),
                    material_id=g.material_id,
                )
                for g in self.gaussians
            ],
            ambient=AmbientProfile(knots=self.ambient.knots.copy()),
            temp_range=(float(self.temp_range[0]), float(self.temp_range[1])),
            time_origin=float(self.time_origin),
        )

    @classmethod
    def from_arrays(
        cls, mu, rot, scale, opacity, feature, material_id, ambient, temp_range, time_origin
    ) -> "Scene":
        n = len(mu)
        gaussians = []
        for i in range(n):
            mid = None if material_id is None else int(material_id[i])
            if mid is not None and mid < 0:
                mid = None
            gaussians.append(
                GaussianPrimitive(
                    mu=np.asarray(mu[i], dtype=np.float64),
                    rot=np.asarray(rot[i], dtype=np.float64),
                    scale=np.asarray(scale[i], dtype=np.float64),
                    opacity=float(opacity[i]),
                    feature=np.asarray(feature[i], dtype=np.float64),
                    material_id=mid,
                )
            )
        scene = cls(
            gaussians=gaussians,
            ambient=ambient,
            temp_range=(float(temp_range[0]), float(temp_range[1])),
            time_origin=float(time_origin),
        )
        scene.validate()
        return scene


# ---------------------------------------------------------------------------
# Scene files


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene as JSON; ambient knots stored in degrees C."""
    scene.validate()
    knots = scene.ambient.knots
    obj = {
        "version": 1,
        "gaussians": [
            {
                "mu": g.mu.tolist(),
                "rot": g.rot.tolist(),
                "scale": g.scale.tolist(),
                "opacity": g.opacity,
                "feature": g.feature.tolist(),
                **({"material_id": g.material_id} if g.material_id is not None else {}),
            }
            for g in scene.gaussians
        ],
        "ambient": {"knots": [[float(t), float(k - KELVIN_OFFSET)] for t, k in knots]},
        "temp_range": [scene.temp_range[0], scene.temp_range[1]],
        "time_origin": scene.time_origin,
    }
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ValidationError(f"{path}: missing required field '{key}'")
    return obj[key]


def load_scene(path: str | Path) -> Scene:
    """Load and validate a scene file; errors carry the offending field path."""
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"scene file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scene file {p} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("scene: root must be a JSON object")

    raw_gaussians = _require(obj, "gaussians", "scene")
    if not isinstance(raw_gaussians, list):
        raise ValidationError("scene.gaussians: must be a list")
    gaussians = []
    for i, rg in enumerate(raw_gaussians):
        gp = f"gaussians[{i}]"
        if not isinstance(rg, dict):
            raise ValidationError(f"{gp}: must be an object")
        g = GaussianPrimitive(
            mu=np.asarray(_require(rg, "mu", gp), dtype=np.float64),
            rot=np.asarray(_require(rg, "rot", gp), dtype=np.float64),
            scale=np.asarray(_require(rg, "scale", gp), dtype=np.float64),
            opacity=float(_require(rg, "opacity", gp)),
            feature=np.asarray(_require(rg, "feature", gp), dtype=np.float64),
            material_id=int(rg["material_id"]) if "material_id" in rg else None,
        )
        gaussians.append(g)

    raw_ambient = _require(obj, "ambient", "scene")
    knots_c = _require(raw_ambient, "knots", "scene.ambient")
    ambient = AmbientProfile.from_celsius_knots(knots_c)

    temp_range = _require(obj, "temp_range", "scene")
    if not isinstance(temp_range, list) or len(temp_range) != 2:
        raise ValidationError("scene.temp_range: expected [t_min_c, t_max_c]")

    scene = Scene(
        gaussians=gaussians,
        ambient=ambient,
        temp_range=(float(temp_range[0]), float(temp_range[1])),
        time_origin=float(_require(obj, "time_origin", "scene")),
    )
    scene.validate()
    return scene
