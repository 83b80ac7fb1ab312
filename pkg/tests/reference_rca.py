"""Straight-line reference for the five-layer automaton.

Self-contained: no imports from the package. Every linear filter is an
explicit loop over kernel taps in row-major order, accumulating into zeros,
on an edge-replicated padding; Sobel responses are differences of two
weighted edge sums. Elementwise transcendentals use numpy ufuncs.
Those are the canonical arithmetic choices, so the package output should
match this file bit for bit.
"""

import numpy as np

DEFAULTS = dict(
    theta_p=0.1, g_p=1.5, kh_size=3, kh_sigma=1.0, sigma_h=0.3,
    theta_b=0.2, g_b=2.0, alpha=0.8, beta=1.2, gamma_a=0.5, gamma_tau=0.7,
    g_m=2.5, theta_m=0.3, eta_m=0.7, gamma_p=0.8, dog_half=2,
    dog_sigma1=1.0, dog_sigma2=2.0, dog_w_surr=0.5,
    bil_d=5, bil_sc=0.1, bil_ss=0.1,
)


def gauss(size, sigma):
    r = size // 2
    k = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            k[i, j] = float(-((i - r) ** 2 + (j - r) ** 2)) / (2.0 * sigma * sigma)
    k = np.exp(k)
    return k / k.sum()


def dog(half, s1, s2, w):
    n = 2 * half + 1
    r2 = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            r2[i, j] = float((i - half) ** 2 + (j - half) ** 2)
    k = np.exp(-r2 / (2.0 * s1 * s1)) - w * np.exp(-r2 / (2.0 * s2 * s2))
    return k / np.abs(k).sum()


def corr(x, k):
    r = k.shape[0] // 2
    h, w = x.shape
    xp = np.pad(x, r, mode="edge")
    acc = np.zeros((h, w))
    for i in range(k.shape[0]):
        for j in range(k.shape[1]):
            acc = acc + k[i, j] * xp[i:i + h, j:j + w]
    return acc


def sobel_mag(x):
    # (a + 2b + c) - (d + 2e + f) on clamped neighbours
    h, w = x.shape
    rr = np.clip(np.arange(h)[:, None] + np.array([-1, 0, 1])[None, :], 0, h - 1)
    cc = np.clip(np.arange(w)[:, None] + np.array([-1, 0, 1])[None, :], 0, w - 1)

    def at(dr, dc):
        return x[rr[:, dr + 1]][:, cc[:, dc + 1]]

    gx = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1))
    gy = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1))
    return np.sqrt(gx * gx + gy * gy)


def bilateral(x, d, sc, ss):
    r = d // 2
    h, w = x.shape
    xp = np.pad(x, r, mode="edge")
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for i in range(d):
        for j in range(d):
            q = xp[i:i + h, j:j + w]
            dy, dx = i - r, j - r
            spatial = np.exp(-float(dy * dy + dx * dx) * (1.0 / (2.0 * ss * ss)))
            diff = q - x
            wt = spatial * np.exp((diff * diff) * (-1.0 / (2.0 * sc * sc)))
            num = num + wt * q
            den = den + wt
    return num / den


def run(frames, p=None):
    """Return the motion maps of one sequence processed from a blank state."""
    p = dict(DEFAULTS, **(p or {}))
    kh = gauss(p["kh_size"], p["kh_sigma"])
    km = dog(p["dog_half"], p["dog_sigma1"], p["dog_sigma2"], p["dog_w_surr"])
    prev_b = prev_a = None
    maps = []
    for t, frame in enumerate(frames, start=1):
        x = np.asarray(frame, dtype=np.float64)
        if prev_b is None:
            prev_b = np.zeros_like(x)
            prev_a = np.zeros_like(x)
        # photoreceptors
        sp = np.where(x > p["theta_p"], p["g_p"] * np.tanh(x - p["theta_p"]), 0.1 * x)
        # horizontal cells
        sh = np.maximum(sp - p["sigma_h"] * corr(sp, kh), 0.0)
        # bipolar ON / OFF
        on = np.maximum(p["g_b"] * (sh - p["theta_b"]), 0.0)
        off = np.maximum(p["g_b"] * (-sh - p["theta_b"]), 0.0)
        c = on + off
        # amacrine
        if t == 1:
            resp = p["beta"] * sobel_mag(c)
        else:
            resp = p["beta"] * np.abs(c - prev_b)
        sa = p["alpha"] * prev_a + (1.0 - p["alpha"]) * resp
        # magnocellular
        i_t = c + p["gamma_a"] * sa
        ms = corr(i_t, km)
        mt = p["gamma_tau"] * sa
        sm = p["g_m"] * np.maximum(0.0, np.tanh(ms + mt - p["theta_m"]))
        # enhance
        raw = p["eta_m"] * sm + (1.0 - p["eta_m"]) * sa
        y = np.power(np.maximum(raw, 0.0), p["gamma_p"])
        z = bilateral(y, p["bil_d"], p["bil_sc"], p["bil_ss"])
        peak = z.max()
        maps.append(255.0 * (z / peak) if peak > 1e-12 else np.zeros_like(z))
        prev_b, prev_a = c, sa
    return maps
