"""Seeded synthetic infrared sequences with exact ground-truth boxes.

Noise is drawn from a counter-based splitmix64 stream, so any language can
reproduce the uniform draws exactly; the Gaussian values then depend only on
the platform's ``log``/``cos``/``sqrt``, which agree to the last bit or so:

* ``z = seed + (counter + 1) * 0x9E3779B97F4A7C15`` (mod 2**64), then the
  splitmix64 finalizer ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
  z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31``.
* For pixel ``i`` (row-major) of zero-based frame ``t`` in an ``H x W``
  sequence the two counters are ``2 * (t * H * W + i)`` and that plus one.
* A draw ``u = (z >> 11) * 2**-53``; Box-Muller uses ``u1 = 1 - u_a`` (in
  (0, 1]) and ``u2 = u_b``: ``n = sqrt(-2 ln u1) * cos(2 pi u2)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import GenerationError, ParameterError
from .metrics import BBox

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(counters: np.ndarray, seed: int) -> np.ndarray:
    """Vectorized splitmix64 output for each counter value."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (counters.astype(np.uint64) + np.uint64(1)) * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
        return z ^ (z >> np.uint64(31))


def uniform01(counters: np.ndarray, seed: int) -> np.ndarray:
    """Doubles in [0, 1) from the top 53 bits of each splitmix64 output."""
    return (splitmix64(counters, seed) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def gaussian_noise(seed: int, frame: int, height: int, width: int) -> np.ndarray:
    base = np.uint64(frame) * np.uint64(height * width)
    idx = base + np.arange(height * width, dtype=np.uint64)
    ua = uniform01(idx * np.uint64(2), seed)
    ub = uniform01(idx * np.uint64(2) + np.uint64(1), seed)
    n = np.sqrt(-2.0 * np.log(1.0 - ua)) * np.cos(2.0 * np.pi * ub)
    return n.reshape(height, width)


@dataclass(frozen=True)
class TargetSpec:
    start: Tuple[float, float]
    velocity: Tuple[float, float]
    sigma: float = 2.0
    amplitude: float = 0.6

    def center(self, t: int) -> Tuple[float, float]:
        return (self.start[0] + t * self.velocity[0], self.start[1] + t * self.velocity[1])


@dataclass(frozen=True)
class BackgroundSpec:
    """Base level plus an optional sinusoidal texture that drifts over time."""

    level: float = 0.2
    drift: Tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 0.0
    texture_amplitude: float = 0.0
    texture_period: float = 32.0


@dataclass(frozen=True)
class SynthConfig:
    height: int = 256
    width: int = 256
    num_frames: int = 50
    seed: int = 7
    targets: Tuple[TargetSpec, ...] = ()
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    box_half_width: float = 2.0  # in units of target sigma

    def validate(self) -> None:
        if self.height < 32 or self.width < 32:
            raise ParameterError(f"synthetic frames must be at least 32x32, got {self.height}x{self.width}")
        if self.num_frames < 1:
            raise ParameterError("num_frames must be >= 1")
        if not 0.0 <= self.background.level <= 1.0:
            raise ParameterError("background level must lie in [0, 1]")
        if self.background.noise_sigma < 0:
            raise ParameterError("noise sigma must be >= 0")
        for k, tg in enumerate(self.targets):
            if not tg.sigma > 0:
                raise ParameterError(f"target {k}: sigma must be > 0")
            if not 0.0 < tg.amplitude <= 1.0:
                raise ParameterError(f"target {k}: amplitude must lie in (0, 1]")
            for t in (0, self.num_frames - 1):
                cx, cy = tg.center(t)
                if not (0.0 <= cx <= self.width - 1 and 0.0 <= cy <= self.height - 1):
                    raise GenerationError(
                        f"target {k} leaves the frame at t={t} (center {cx:.2f}, {cy:.2f})")


PRESETS = {
    "moving-blob": SynthConfig(
        height=256, width=256, num_frames=50, seed=7,
        targets=(TargetSpec(start=(60.0, 128.0), velocity=(2.0, 0.0), sigma=2.0, amplitude=0.6),),
        background=BackgroundSpec(level=0.2, noise_sigma=0.05),
    ),
}


def preset(name: str, **overrides) -> SynthConfig:
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dataclasses.replace(PRESETS[name], **overrides)


def background(config: SynthConfig, t: int) -> np.ndarray:
    bg = config.background
    out = np.full((config.height, config.width), bg.level, dtype=np.float64)
    if bg.texture_amplitude:
        ys, xs = np.mgrid[0:config.height, 0:config.width].astype(np.float64)
        k = 2.0 * np.pi / bg.texture_period
        u = xs - t * bg.drift[0]
        v = ys - t * bg.drift[1]
        out += bg.texture_amplitude * 0.5 * (np.sin(k * u) + np.sin(k * v))
    return out


def gt_box(config: SynthConfig, target: TargetSpec, t: int) -> BBox:
    cx, cy = target.center(t)
    hw = config.box_half_width * target.sigma
    return BBox(max(0.0, cx - hw), max(0.0, cy - hw),
                min(float(config.width), cx + hw), min(float(config.height), cy + hw))


def generate(config: SynthConfig):
    """Return ``(frames, boxes)``: a list of [0, 1] grids and per-frame box lists."""
    config.validate()
    ys, xs = np.mgrid[0:config.height, 0:config.width].astype(np.float64)
    frames: List[np.ndarray] = []
    boxes: List[List[BBox]] = []
    for t in range(config.num_frames):
        f = background(config, t)
        for tg in config.targets:
            cx, cy = tg.center(t)
            f += tg.amplitude * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * tg.sigma ** 2))
        if config.background.noise_sigma > 0:
            f += config.background.noise_sigma * gaussian_noise(config.seed, t, config.height, config.width)
        frames.append(np.clip(f, 0.0, 1.0))
        boxes.append([gt_box(config, tg, t) for tg in config.targets])
    return frames, boxes
