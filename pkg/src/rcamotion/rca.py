"""Five-layer retinal cellular automaton producing per-frame motion maps.

Each call to :meth:`RcaEngine.step` consumes one frame in [0, 1] and the
state left behind by earlier frames, runs photoreceptors, horizontal cells,
ON/OFF bipolar cells, amacrine cells and magnocellular ganglion cells in
that order, and returns a motion map in [0, 255] on the frame's pixel grid.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, InvariantError, ParameterError, SequenceError
from .grid import LayerTrace, RcaParams, RcaState, as_grid, state_reset
from .kernels import (bilateral_filter, convolve, gaussian_kernel, mexican_hat_kernel,
                      sobel_gradient_magnitude)

# Below this maximum the enhanced map is treated as blank.
ENHANCE_EPS = 1e-12


def photoreceptor_adapt(frame: np.ndarray, theta_p: float, g_p: float) -> np.ndarray:
    out = np.subtract(frame, theta_p)
    np.tanh(out, out=out)
    out *= g_p
    low = frame <= theta_p
    out[low] = 0.1 * frame[low]
    return out


def horizontal_inhibit(s_p: np.ndarray, k_h: np.ndarray, sigma_h: float) -> np.ndarray:
    return np.maximum(s_p - sigma_h * convolve(s_p, k_h), 0.0)


def bipolar_onoff(s_h: np.ndarray, theta_b: float, g_b: float):
    """Return ``(on, off, contrast)`` with ``contrast = on + off``."""
    on = np.subtract(s_h, theta_b)
    on *= g_b
    np.maximum(on, 0.0, out=on)
    off = np.negative(s_h)
    off -= theta_b
    off *= g_b
    np.maximum(off, 0.0, out=off)
    return on, off, on + off


def temporal_response(c_t: np.ndarray, state: RcaState, beta: float) -> np.ndarray:
    """Spatial gradient on the first frame of a sequence, frame difference after."""
    if state.t == 0:
        return beta * sobel_gradient_magnitude(c_t)
    if state.s_prev_b is None or state.s_prev_b.shape != c_t.shape:
        raise DimensionError("contrast map does not match stored temporal memory")
    return beta * np.abs(c_t - state.s_prev_b)


def amacrine_update(c_t: np.ndarray, state: RcaState, alpha: float, beta: float,
                    response: Optional[np.ndarray] = None) -> np.ndarray:
    """Exponential moving average of the temporal response.

    ``state.t`` counts frames already committed, so ``t == 0`` here means the
    current frame is the first of its sequence. Memory is left untouched.
    """
    if response is None:
        response = temporal_response(c_t, state, beta)
    prev = state.s_prev_a
    if prev is None:
        prev = np.zeros_like(c_t)
    elif prev.shape != c_t.shape:
        raise DimensionError("contrast map does not match stored amacrine memory")
    return alpha * prev + (1.0 - alpha) * response


def magno_integrate(c_t: np.ndarray, s_a: np.ndarray, k_m: np.ndarray, params: RcaParams,
                    parts: Optional[dict] = None) -> np.ndarray:
    i_t = params.gamma_a * s_a
    i_t += c_t
    m_s = convolve(i_t, k_m)
    m_tau = params.gamma_tau * s_a
    s_m = m_s + m_tau
    s_m -= params.theta_m
    np.tanh(s_m, out=s_m)
    np.maximum(s_m, 0.0, out=s_m)
    s_m *= params.g_m
    if parts is not None:
        parts.update(i_t=i_t, m_s=m_s, m_tau=m_tau)
    return s_m


def enhance(raw: np.ndarray, params: RcaParams) -> np.ndarray:
    """Rectified power law, bilateral smoothing, then scale the maximum to 255."""
    y = np.power(np.maximum(raw, 0.0), params.gamma_p)
    z = bilateral_filter(y, params.bilateral_d, params.bilateral_sigma_color,
                         params.bilateral_sigma_space)
    peak = z.max()
    if not peak > ENHANCE_EPS:
        return np.zeros_like(z)
    # z / peak <= 1 exactly, so the result never exceeds 255
    return 255.0 * (z / peak)


class RcaEngine:
    """Stateful driver for one sequence at a time."""

    def __init__(self, params: Optional[RcaParams] = None, trace: bool = False):
        self.params = params or RcaParams()
        p = self.params
        self.k_h = gaussian_kernel(p.kh_size, p.kh_sigma)
        self.k_m = mexican_hat_kernel(p.dog_size_param, p.dog_sigma1, p.dog_sigma2, p.dog_w_surr)
        self.state = RcaState()
        self.trace_enabled = trace
        self.last_trace: Optional[LayerTrace] = None

    def reset(self) -> None:
        state_reset(self.state)

    def step(self, frame) -> np.ndarray:
        """Advance the automaton by one frame and return its motion map.

        When tracing is enabled the intermediates land in ``self.last_trace``.
        """
        frame = as_grid(frame)
        st, p = self.state, self.params
        if st.shape is None or (st.t == 0 and st.shape != frame.shape):
            st.allocate(*frame.shape)
        elif st.shape != frame.shape:
            raise SequenceError(
                f"frame {st.t + 1} has shape {frame.shape}, sequence started with {st.shape}")

        s_p = photoreceptor_adapt(frame, p.theta_p, p.g_p)
        s_h = horizontal_inhibit(s_p, self.k_h, p.sigma_h)
        on, off, c_t = bipolar_onoff(s_h, p.theta_b, p.g_b)
        r_t = temporal_response(c_t, st, p.beta)
        s_a = amacrine_update(c_t, st, p.alpha, p.beta, response=r_t)
        parts = {} if self.trace_enabled else None
        s_m = magno_integrate(c_t, s_a, self.k_m, p, parts=parts)
        m_t = enhance(p.eta_m * s_m + (1.0 - p.eta_m) * s_a, p)

        if not np.all(np.isfinite(m_t)):
            raise InvariantError(f"non-finite motion map at frame {st.t + 1}")

        st.s_p, st.s_h, st.s_a, st.s_m = s_p, s_h, s_a, s_m
        st.s_prev_b, st.s_prev_a = c_t, s_a
        st.t += 1

        if self.trace_enabled:
            layers = dict(s_p=s_p, s_h=s_h, s_b_on=on, s_b_off=off, c_t=c_t, r_t=r_t,
                          s_a=s_a, s_m=s_m, m_t=m_t, **parts)
            self.last_trace = LayerTrace(t=st.t, layers={k: v.copy() for k, v in layers.items()})
        return m_t

    def process_sequence(self, frames: Sequence) -> list:
        """Reset, then step through ``frames`` in order."""
        frames = list(frames)
        if not frames:
            raise ParameterError("cannot process an empty frame sequence")
        shape = np.shape(frames[0])
        for k, f in enumerate(frames, start=1):
            if np.shape(f) != shape:
                raise SequenceError(f"frame {k} has shape {np.shape(f)}, expected {shape}")
        self.reset()
        return [self.step(f) for f in frames]


def step(engine: RcaEngine, frame) -> np.ndarray:
    return engine.step(frame)


def process_sequence(engine: RcaEngine, frames: Sequence) -> list:
    return engine.process_sequence(frames)
