"""Task networks: the direct time-to-temperature field and the three
thermodynamic-parameter heads.

TempNet maps (time encoding, position encoding) to a kelvin temperature
bounded inside [t_lo, t_hi] by a scaled logistic.  ThermalNet holds three
heads: emissivity and convective-coefficient heads see (normalized
temperature, time encoding, feature); the heat-capacity head additionally
sees the position encoding, since capacity tracks where an object is.
Each head output passes through a range map that keeps the physical
invariants satisfied for any real pre-activation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .encoding import EncodingConfig, fourier_encode
from .errors import ValidationError
from .nn import MlpNet, sigmoid, softplus
from .thermo import ThermoParams


@dataclass(frozen=True)
class AxisNorm:
    """Affine map of a raw coordinate into [-1, 1] for encoding."""

    center: NDArray[np.float64] | float
    half_span: NDArray[np.float64] | float

    def apply(self, raw, clamp_warn: str | None = None):
        x = (np.asarray(raw, dtype=np.float64) - self.center) / self.half_span
        if clamp_warn is not None and np.any(np.abs(x) > 1.0 + 1e-12):
            warnings.warn(
                f"{clamp_warn}: input outside the encoded span, clamping", RuntimeWarning, stacklevel=3
            )
            x = np.clip(x, -1.0, 1.0)
        return x


def _time_axis(t_first: float, t_last: float) -> AxisNorm:
    span = t_last - t_first
    if span <= 0:
        raise ValidationError("time span must be positive")
    return AxisNorm(center=0.5 * (t_first + t_last), half_span=0.5 * span)


def _pos_axis(bbox_lo, bbox_hi) -> AxisNorm:
    lo = np.asarray(bbox_lo, dtype=np.float64)
    hi = np.asarray(bbox_hi, dtype=np.float64)
    half = 0.5 * np.max(hi - lo)
    if half <= 0:
        half = 1.0
    return AxisNorm(center=0.5 * (lo + hi), half_span=half)


@dataclass
class TempNetTape:
    mlp_tape: object
    z: NDArray[np.float64]  # pre-activation (G, 1)
    batch: int


@dataclass
class TempNet:
    """Direct mapping from (time, position) to bounded kelvin temperature."""

    mlp: MlpNet
    time_cfg: EncodingConfig
    pos_cfg: EncodingConfig
    time_axis: AxisNorm
    pos_axis: AxisNorm
    t_lo: float
    t_hi: float

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        hidden: list[int],
        time_levels: int,
        pos_levels: int,
        include_input: bool,
        t_first: float,
        t_last: float,
        bbox_lo,
        bbox_hi,
        temp_range_k: tuple[float, float],
        margin_k: float,
    ) -> "TempNet":
        time_cfg = EncodingConfig(levels=time_levels, include_input=include_input)
        pos_cfg = EncodingConfig(levels=pos_levels, include_input=include_input)
        d_in = time_cfg.output_dim(1) + pos_cfg.output_dim(3)
        mlp = MlpNet.create([d_in] + list(hidden) + [1], rng)
        return cls(
            mlp=mlp,
            time_cfg=time_cfg,
            pos_cfg=pos_cfg,
            time_axis=_time_axis(t_first, t_last),
            pos_axis=_pos_axis(bbox_lo, bbox_hi),
            t_lo=float(temp_range_k[0] - margin_k),
            t_hi=float(temp_range_k[1] + margin_k),
        )

    def encode_positions(self, positions: NDArray[np.float64]) -> NDArray[np.float64]:
        x = self.pos_axis.apply(positions)
        return fourier_encode(x, self.pos_cfg)

    def encode_time(self, t: float, clamp_warn: bool = True) -> NDArray[np.float64]:
        x = self.time_axis.apply(t, clamp_warn="time encoding" if clamp_warn else None)
        return fourier_encode(np.atleast_1d(x), self.time_cfg)

    def evaluate(
        self,
        t: float,
        positions: NDArray[np.float64] | None = None,
        pos_encoding: NDArray[np.float64] | None = None,
    ) -> tuple[NDArray[np.float64], TempNetTape]:
        """Per-Gaussian kelvin temperatures at time ``t``; batched over rows."""
        if pos_encoding is None:
            if positions is None:
                raise ValidationError("evaluate needs positions or a cached position encoding")
            pos_encoding = self.encode_positions(np.asarray(positions, dtype=np.float64))
        g = pos_encoding.shape[0]
        tenc = np.broadcast_to(self.encode_time(t), (g, self.time_cfg.output_dim(1)))
        x = np.concatenate([tenc, pos_encoding], axis=1)
        z, tape = self.mlp.forward(x)
        temps = self.t_lo + (self.t_hi - self.t_lo) * sigmoid(z[:, 0])
        return temps, TempNetTape(mlp_tape=tape, z=z, batch=g)

    def backward(self, tape: TempNetTape, d_temps: NDArray[np.float64]):
        """Parameter gradients from a cotangent on the kelvin outputs."""
        s = sigmoid(tape.z[:, 0])
        dz = d_temps * (self.t_hi - self.t_lo) * s * (1.0 - s)
        grads, _ = self.mlp.backward(tape.mlp_tape, dz[:, None])
        return grads

    def state_arrays(self) -> dict[str, NDArray[np.float64]]:
        return self.mlp.state_arrays("temp_net")

    def meta(self) -> dict:
        return {
            "time_levels": self.time_cfg.levels,
            "pos_levels": self.pos_cfg.levels,
            "include_input": self.time_cfg.include_input,
            "time_center": float(np.asarray(self.time_axis.center)),
            "time_half_span": float(np.asarray(self.time_axis.half_span)),
            "pos_center": np.asarray(self.pos_axis.center).tolist(),
            "pos_half_span": float(np.asarray(self.pos_axis.half_span)),
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
        }

    @classmethod
    def from_state(cls, arrays: dict, meta: dict) -> "TempNet":
        return cls(
            mlp=MlpNet.from_state_arrays("temp_net", arrays),
            time_cfg=EncodingConfig(levels=int(meta["time_levels"]), include_input=bool(meta["include_input"])),
            pos_cfg=EncodingConfig(levels=int(meta["pos_levels"]), include_input=bool(meta["include_input"])),
            time_axis=AxisNorm(center=float(meta["time_center"]), half_span=float(meta["time_half_span"])),
            pos_axis=AxisNorm(
                center=np.asarray(meta["pos_center"], dtype=np.float64),
                half_span=float(meta["pos_half_span"]),
            ),
            t_lo=float(meta["t_lo"]),
            t_hi=float(meta["t_hi"]),
        )


@dataclass(frozen=True)
class HeadRanges:
    """Output range maps for the three thermodynamic heads."""

    e_eps: float = 1e-6
    c_max: float = 50.0
    c_scale: float = 10.0
    h_min: float = 1000.0
    h_scale: float = 200000.0

    @classmethod
    def from_config(cls, cfg: dict) -> "HeadRanges":
        n = cfg["net"]
        return cls(
            e_eps=float(n["e_eps"]),
            c_max=float(n["c_max"]),
            c_scale=float(n["c_scale"]),
            h_min=float(n["h_min"]),
            h_scale=float(n["h_scale"]),
        )


@dataclass
class ThermalNetTape:
    tapes: tuple  # (e, c, h) mlp tapes
    zs: tuple  # raw head outputs (G,) each
    clip_masks: tuple  # gradient gates for the clipped range maps


@dataclass
class ThermalNet:
    """Three heads predicting emissivity, convective coefficient, capacity."""

    e_net: MlpNet
    c_net: MlpNet
    h_net: MlpNet
    ranges: HeadRanges
    temp_axis: AxisNorm  # normalizes the kelvin input feature

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        hidden: list[int],
        time_dim: int,
        pos_dim: int,
        feature_dim: int,
        temp_range_k: tuple[float, float],
        margin_k: float,
        ranges: HeadRanges,
    ) -> "ThermalNet":
        d_ec = 1 + time_dim + feature_dim
        d_h = 1 + time_dim + feature_dim + pos_dim
        return cls(
            e_net=MlpNet.create([d_ec] + list(hidden) + [1], rng),
            c_net=MlpNet.create([d_ec] + list(hidden) + [1], rng),
            h_net=MlpNet.create([d_h] + list(hidden) + [1], rng),
            ranges=ranges,
            temp_axis=_time_axis(temp_range_k[0] - margin_k, temp_range_k[1] + margin_k),
        )

    def evaluate(
        self,
        temps_k: NDArray[np.float64],
        time_encoding: NDArray[np.float64],
        features: NDArray[np.float64],
        pos_encoding: NDArray[np.float64],
    ) -> tuple[ThermoParams, ThermalNetTape]:
        """Range-bounded (E, C, H) per Gaussian.

        ``time_encoding`` is a single encoded time vector shared by the batch.
        """
        g = features.shape[0]
        t_hat = self.temp_axis.apply(np.asarray(temps_k, dtype=np.float64))[:, None]
        tenc = np.broadcast_to(time_encoding, (g, time_encoding.shape[-1]))
        x_ec = np.concatenate([t_hat, tenc, features], axis=1)
        x_h = np.concatenate([t_hat, tenc, features, pos_encoding], axis=1)

        ze, tape_e = self.e_net.forward(x_ec)
        zc, tape_c = self.c_net.forward(x_ec)
        zh, tape_h = self.h_net.forward(x_h)
        ze, zc, zh = ze[:, 0], zc[:, 0], zh[:, 0]

        r = self.ranges
        e_raw = sigmoid(ze)
        emissivity = np.clip(e_raw, r.e_eps, 1.0 - r.e_eps)
        c_raw = r.c_scale * softplus(zc)
        conv = np.clip(c_raw, 1e-9, r.c_max)
        heat = r.h_min + r.h_scale * softplus(zh)

        params = ThermoParams(emissivity=emissivity, convective_coeff=conv, heat_capacity=heat)
        masks = (
            (e_raw > r.e_eps) & (e_raw < 1.0 - r.e_eps),
            (c_raw > 1e-9) & (c_raw < r.c_max),
        )
        return params, ThermalNetTape(tapes=(tape_e, tape_c, tape_h), zs=(ze, zc, zh), clip_masks=masks)

    def backward(
        self,
        tape: ThermalNetTape,
        d_e: NDArray[np.float64],
        d_c: NDArray[np.float64],
        d_h: NDArray[np.float64],
    ):
        """Head parameter gradients plus the gradient w.r.t. the kelvin input."""
        ze, zc, zh = tape.zs
        mask_e, mask_c = tape.clip_masks
        r = self.ranges

        se = sigmoid(ze)
        dze = d_e * mask_e * se * (1.0 - se)
        dzc = d_c * mask_c * r.c_scale * sigmoid(zc)
        dzh = d_h * r.h_scale * sigmoid(zh)

        grads_e, dx_e = self.e_net.backward(tape.tapes[0], dze[:, None])
        grads_c, dx_c = self.c_net.backward(tape.tapes[1], dzc[:, None])
        grads_h, dx_h = self.h_net.backward(tape.tapes[2], dzh[:, None])

        d_t_hat = dx_e[:, 0] + dx_c[:, 0] + dx_h[:, 0]
        d_temps = d_t_hat / float(np.asarray(self.temp_axis.half_span))
        return (grads_e, grads_c, grads_h), d_temps

    def mark_updated(self):
        self.e_net.mark_updated()
        self.c_net.mark_updated()
        self.h_net.mark_updated()

    def parameters(self):
        return self.e_net.parameters() + self.c_net.parameters() + self.h_net.parameters()

    def state_arrays(self) -> dict[str, NDArray[np.float64]]:
        out = {}
        out.update(self.e_net.state_arrays("e_net"))
        out.update(self.c_net.state_arrays("c_net"))
        out.update(self.h_net.state_arrays("h_net"))
        return out

    def meta(self) -> dict:
        return {
            "e_eps": self.ranges.e_eps,
            "c_max": self.ranges.c_max,
            "c_scale": self.ranges.c_scale,
            "h_min": self.ranges.h_min,
            "h_scale": self.ranges.h_scale,
            "temp_center": float(np.asarray(self.temp_axis.center)),
            "temp_half_span": float(np.asarray(self.temp_axis.half_span)),
        }

    @classmethod
    def from_state(cls, arrays: dict, meta: dict) -> "ThermalNet":
        return cls(
            e_net=MlpNet.from_state_arrays("e_net", arrays),
            c_net=MlpNet.from_state_arrays("c_net", arrays),
            h_net=MlpNet.from_state_arrays("h_net", arrays),
            ranges=HeadRanges(
                e_eps=float(meta["e_eps"]),
                c_max=float(meta["c_max"]),
                c_scale=float(meta["c_scale"]),
                h_min=float(meta["h_min"]),
                h_scale=float(meta["h_scale"]),
            ),
            temp_axis=AxisNorm(center=float(meta["temp_center"]), half_span=float(meta["temp_half_span"])),
        )
