"""Grid carrier, RCA parameter set and per-sequence automaton state.

A grid is a plain 2-D ``float64`` numpy array indexed ``[row, col]`` with the
origin at the top-left pixel. Every layer state, kernel input and motion map
in the toolkit is one of these.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionError, FormatError, ParameterError

# Refuse allocations above this many cells (about 2 GiB of float64).
MAX_CELLS = 1 << 28


def grid_new(height: int, width: int, fill: float = 0.0) -> np.ndarray:
    """Return a ``height x width`` float64 grid with every cell set to ``fill``."""
    if int(height) != height or int(width) != width:
        raise DimensionError(f"grid dimensions must be integers, got {height}x{width}")
    height, width = int(height), int(width)
    if height < 1 or width < 1:
        raise DimensionError(f"grid dimensions must be >= 1, got {height}x{width}")
    if height * width > MAX_CELLS:
        raise DimensionError(f"grid {height}x{width} exceeds {MAX_CELLS} cells")
    if not np.isfinite(fill):
        raise ParameterError(f"fill value must be finite, got {fill!r}")
    return np.full((height, width), float(fill), dtype=np.float64)


def as_grid(values) -> np.ndarray:
    """Coerce array-like input to a finite, non-empty float64 grid."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("grid contains non-finite values")
    return arr


@dataclass(frozen=True)
class RcaParams:
    """Constants of the five-layer retinal automaton.

    Defaults are the published values. ``dog_size_param`` of 4 gives a 5x5
    Mexican-hat support (offsets -2..2).
    """

    # photoreceptors
    theta_p: float = 0.1
    g_p: float = 1.5
    # horizontal cells
    kh_size: int = 3
    kh_sigma: float = 1.0
    sigma_h: float = 0.3
    # bipolar cells
    theta_b: float = 0.2
    g_b: float = 2.0
    # amacrine cells
    alpha: float = 0.8
    beta: float = 1.2
    # magnocellular ganglion cells
    gamma_a: float = 0.5
    gamma_tau: float = 0.7
    g_m: float = 2.5
    theta_m: float = 0.3
    eta_m: float = 0.7
    # output enhancement
    gamma_p: float = 0.8
    dog_size_param: int = 4
    dog_sigma1: float = 1.0
    dog_sigma2: float = 2.0
    dog_w_surr: float = 0.5
    bilateral_d: int = 5
    bilateral_sigma_color: float = 0.1
    bilateral_sigma_space: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and (isinstance(v, bool) or int(v) != v):
                raise ParameterError(f"{f.name} must be an integer, got {v!r}")
            if not np.isfinite(v):
                raise ParameterError(f"{f.name} must be finite, got {v!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 <= self.eta_m <= 1.0:
            raise ParameterError(f"eta_m must lie in [0, 1], got {self.eta_m}")
        positive = ("g_p", "kh_sigma", "sigma_h", "g_b", "beta", "g_m", "gamma_p",
                    "dog_sigma1", "dog_sigma2", "bilateral_sigma_color",
                    "bilateral_sigma_space", "kh_size", "dog_size_param", "bilateral_d")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.kh_size % 2 != 1:
            raise ParameterError(f"kh_size must be odd, got {self.kh_size}")
        if self.bilateral_d % 2 != 1:
            raise ParameterError(f"bilateral_d must be odd, got {self.bilateral_d}")

    def replace(self, **changes) -> "RcaParams":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"


def params_default() -> RcaParams:
    return RcaParams()


def parse_params(text: str, base: Optional[RcaParams] = None, source: str = "<params>") -> RcaParams:
    """Parse ``key=value`` lines over ``base`` (defaults if omitted).

    ``#`` starts a comment; blank lines are skipped; unknown keys are rejected.
    """
    base = base or RcaParams()
    types = {f.name: f.type for f in fields(RcaParams)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise FormatError(f"{source}:{lineno}: unknown parameter {key!r}")
        try:
            if types[key] == "int":
                num = float(value)
                if num != int(num):
                    raise ValueError(value)
                changes[key] = int(num)
            else:
                changes[key] = float(value)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: bad value for {key}: {value!r}") from None
    return dataclasses.replace(base, **changes)


def load_params(path, base: Optional[RcaParams] = None) -> RcaParams:
    path = Path(path)
    return parse_params(path.read_text(encoding="utf-8"), base=base, source=str(path))


def save_params(params: RcaParams, path) -> None:
    Path(path).write_text(params.to_text(), encoding="utf-8")


_STATE_GRIDS = ("s_p", "s_h", "s_a", "s_m", "s_prev_b", "s_prev_a")


@dataclass
class RcaState:
    """Mutable per-sequence state: layer maps, temporal memory, frame counter."""

    s_p: Optional[np.ndarray] = None
    s_h: Optional[np.ndarray] = None
    s_a: Optional[np.ndarray] = None
    s_m: Optional[np.ndarray] = None
    s_prev_b: Optional[np.ndarray] = None
    s_prev_a: Optional[np.ndarray] = None
    t: int = 0

    @classmethod
    def zeros(cls, height: int, width: int) -> "RcaState":
        state = cls()
        state.allocate(height, width)
        return state

    @property
    def shape(self):
        return None if self.s_p is None else self.s_p.shape

    def allocate(self, height: int, width: int) -> None:
        for name in _STATE_GRIDS:
            setattr(self, name, grid_new(height, width, 0.0))
        self.t = 0

    def grids(self) -> dict:
        return {name: getattr(self, name) for name in _STATE_GRIDS}


def state_reset(state: RcaState) -> RcaState:
    """Zero every state grid in place and rewind the frame counter."""
    for name in _STATE_GRIDS:
        g = getattr(state, name)
        if g is not None:
            g[...] = 0.0
    state.t = 0
    return state


TRACE_FIELDS = ("s_p", "s_h", "s_b_on", "s_b_off", "c_t", "r_t", "s_a",
                "i_t", "m_s", "m_tau", "s_m", "m_t")


@dataclass
class LayerTrace:
    """Copies of every intermediate map from a single RCA step."""

    t: int = 0
    layers: dict = field(default_factory=dict)

    def __getattr__(self, name):
        layers = self.__dict__.get("layers", {})
        if name in layers:
            return layers[name]
        raise AttributeError(name)
