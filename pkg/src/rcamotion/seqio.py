"""Frame sequence I/O: PGM/PNG frames, manifests, motion map output."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError, SequenceError
from .grid import RcaParams, as_grid, save_params

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    frame_paths: tuple

    def __len__(self):
        return len(self.frame_paths)


@dataclass(frozen=True)
class PairedSample:
    """Appearance and motion images as ``(H, W, 3)`` uint8 arrays."""

    appearance: np.ndarray
    motion: np.ndarray


# --- PGM -------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Return the raw integer samples of a P2 or P5 PGM and its maxval."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a grayscale PGM (magic {magic!r})")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if w < 1 or h < 1:
        raise FormatError(f"{path}: zero-dimension image {w}x{h}")
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raw = data[pos:pos + need]
        if len(raw) < need:
            raise FormatError(f"{path}: truncated PGM raster")
        values = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        body = b"\n".join(ln.split(b"#", 1)[0] for ln in data[pos:].splitlines())
        try:
            values = np.array(body.split(), dtype=np.int64)
        except ValueError:
            raise FormatError(f"{path}: non-numeric sample in plain PGM") from None
        if values.size < w * h:
            raise FormatError(f"{path}: truncated PGM raster")
        values = values[:w * h]
    if values.max(initial=0) > maxval:
        raise FormatError(f"{path}: sample exceeds maxval {maxval}")
    return values.reshape(h, w), maxval


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    h, w = pixels.shape
    if pixels.dtype == np.uint16:
        header = f"P5\n{w} {h}\n65535\n".encode("ascii")
        body = pixels.astype(">u2").tobytes()
    else:
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        body = pixels.astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)


# --- frames ----------------------------------------------------------------

def _png_to_unit(path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from None
    if img.width < 1 or img.height < 1:
        raise FormatError(f"{path}: zero-dimension image")
    mode = img.mode
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / 65535.0
    if mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if mode in ("1", "LA"):
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if mode in ("RGB", "RGBA", "P"):
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        lum = LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]
        return lum / 255.0
    raise FormatError(f"{path}: unsupported PNG mode {mode}")


def load_frame(path) -> np.ndarray:
    """Load a grayscale frame scaled to [0, 1].

    8-bit samples are divided by 255 and 16-bit samples by 65535; RGB PNGs
    are reduced to luminance first.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such frame file: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:2] in (b"P2", b"P5"):
        values, maxval = read_pgm(path)
        frame = values / (65535.0 if maxval > 255 else 255.0)
    elif magic == b"\x89PNG\r\n\x1a\n":
        frame = _png_to_unit(path)
    else:
        raise FormatError(f"{path}: unsupported image format")
    return as_grid(np.clip(frame, 0.0, 1.0))


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half away from zero into uint8, clamping to [0, 255]."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.sign(v) * np.floor(np.abs(v) + 0.5), 0, 255).astype(np.uint8)


def save_image(pixels: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)
    else:
        write_pgm(path, pixels)


def save_motion_map(motion: np.ndarray, path) -> np.ndarray:
    """Quantize a [0, 255] map to bytes and write it as PGM (or PNG by suffix).

    Returns the bytes that were written.
    """
    motion = np.asarray(motion, dtype=np.float64)
    if motion.ndim != 2:
        raise DimensionError(f"motion map must be 2-D, got shape {motion.shape}")
    if not np.all(np.isfinite(motion)) or motion.min() < 0.0 or motion.max() > 255.0:
        raise FormatError(f"motion map values outside [0, 255] for {path}")
    q = quantize(motion)
    save_image(q, path)
    return q


def save_frame(frame: np.ndarray, path, bits: int = 8) -> None:
    """Write a [0, 1] frame at 8 or 16 bits (16-bit requires PGM or PNG)."""
    frame = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        save_image(quantize(frame * 255.0), path)
        return
    if bits != 16:
        raise FormatError(f"unsupported bit depth {bits}")
    q = np.floor(frame * 65535.0 + 0.5).astype(np.uint16)
    if Path(path).suffix.lower() == ".png":
        Image.fromarray(q.astype(np.uint16)).save(path)
    else:
        write_pgm(path, q)


# --- manifests -------------------------------------------------------------

def load_manifest(path) -> SequenceManifest:
    """Parse a manifest: one frame path per line, relative to the manifest."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    base = path.parent
    frames: List[Path] = []
    seen = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        p = Path(line)
        if not p.is_absolute():
            p = base / p
        key = os.path.normpath(str(p))
        if key in seen:
            raise FormatError(f"{path}:{lineno}: duplicate frame path {line!r}")
        seen.add(key)
        frames.append(p)
    if not frames:
        raise FormatError(f"{path}: manifest lists no frames")
    return SequenceManifest(sequence_id=path.stem, frame_paths=tuple(frames))


def write_manifest(path, frame_names) -> None:
    Path(path).write_text("".join(f"{name}\n" for name in frame_names), encoding="utf-8")


def motion_output_path(frame_path, manifest_dir, out_dir) -> Path:
    """Mirror ``frame_path`` under ``out_dir`` as ``<stem>_motion<suffix>``."""
    frame_path = Path(frame_path)
    try:
        rel = frame_path.resolve().relative_to(Path(manifest_dir).resolve())
    except ValueError:
        rel = Path(frame_path.name)
    suffix = frame_path.suffix if frame_path.suffix.lower() in (".pgm", ".png") else ".pgm"
    return Path(out_dir) / rel.parent / f"{frame_path.stem}_motion{suffix}"


def make_paired(appearance: np.ndarray, motion: np.ndarray) -> PairedSample:
    """Pair a [0, 1] frame with its [0, 255] motion map as 3-channel bytes."""
    appearance = np.asarray(appearance, dtype=np.float64)
    motion = np.asarray(motion, dtype=np.float64)
    if appearance.shape != motion.shape or appearance.ndim != 2:
        raise DimensionError(
            f"appearance {appearance.shape} and motion {motion.shape} must share one 2-D shape")
    a = quantize(appearance * 255.0)
    m = quantize(motion)
    return PairedSample(appearance=np.repeat(a[..., None], 3, axis=2),
                        motion=np.repeat(m[..., None], 3, axis=2))


def precompute(manifest: SequenceManifest, out_dir, params: Optional[RcaParams] = None,
               manifest_dir=None, trace_frame: Optional[int] = None):
    """Run one sequence through a fresh engine and write its motion maps.

    Returns ``(output_paths, trace)`` where ``trace`` is the LayerTrace of the
    1-based ``trace_frame`` if one was requested.
    """
    from .rca import RcaEngine

    params = params or RcaParams()
    out_dir = Path(out_dir)
    manifest_dir = Path(manifest_dir) if manifest_dir is not None else Path(manifest.frame_paths[0]).parent
    engine = RcaEngine(params)
    engine.reset()
    outputs, trace, shape = [], None, None
    for k, fp in enumerate(manifest.frame_paths, start=1):
        frame = load_frame(fp)
        if shape is None:
            shape = frame.shape
        elif frame.shape != shape:
            raise SequenceError(f"{fp}: frame shape {frame.shape} differs from {shape}")
        engine.trace_enabled = trace_frame == k
        m = engine.step(frame)
        target = motion_output_path(fp, manifest_dir, out_dir)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_motion_map(m, target)
        outputs.append(target)
        if trace_frame == k:
            trace = engine.last_trace
    save_params(params, out_dir / "params.txt")
    return outputs, trace
