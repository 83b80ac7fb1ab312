"""Command-line entry point.

Exit codes: 0 success, 1 user/input error, 2 internal invariant violation.
Diagnostics are one line: ``error: <code>: <detail>``.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics, seqio, synth
from .errors import InvariantError, RcaError
from .grid import TRACE_FIELDS, RcaParams, load_params, save_params

PARAMS_ENV = "RETINA_PARAMS"


class CliError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(code, detail)
        self.code = code
        self.detail = detail

    def __str__(self):
        return self.detail


def _fail(code, detail):
    raise CliError(code, detail)


@contextlib.contextmanager
def staged_dir(out: Path, overwrite: bool = False):
    """Yield a temporary sibling of ``out`` and move it into place on success."""
    out = Path(out)
    if out.exists() and not out.is_dir():
        _fail("io", f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not overwrite:
        _fail("io", f"output directory {out} is not empty (use --overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)


def resolve_params(path) -> RcaParams:
    path = path or os.environ.get(PARAMS_ENV)
    if not path:
        return RcaParams()
    if not Path(path).is_file():
        _fail("io", f"no such params file: {path}")
    return load_params(path)


def normalize_to_bytes(grid: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(grid)))
    if peak <= 0:
        return np.zeros(grid.shape, dtype=np.uint8)
    return seqio.quantize(255.0 * np.abs(grid) / peak)


def dump_trace(trace, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name in TRACE_FIELDS:
        grid = trace.layers[name]
        seqio.save_image(normalize_to_bytes(grid), out / f"{name}.pgm")
        np.savetxt(out / f"{name}.txt", grid, fmt="%.17g")


# --- precompute --------------------------------------------------------------

def _precompute_one(args):
    manifest_path, out_dir, params, trace_frame = args
    manifest = seqio.load_manifest(manifest_path)
    if trace_frame is not None and not 1 <= trace_frame <= len(manifest):
        raise CliError("range", f"--trace-frame {trace_frame} outside 1..{len(manifest)}")
    for fp in manifest.frame_paths:
        if not Path(fp).is_file():
            raise CliError("io", f"missing frame file: {fp}")
    outputs, trace = seqio.precompute(manifest, out_dir, params,
                                      manifest_dir=Path(manifest_path).parent,
                                      trace_frame=trace_frame)
    return manifest.sequence_id, len(outputs), trace


def cmd_precompute(ns) -> int:
    params = resolve_params(ns.params)
    manifests = ns.manifest
    multi = len(manifests) > 1
    ids = [Path(m).stem for m in manifests]
    if len(set(ids)) != len(ids):
        _fail("argument", "manifests must have distinct file stems")
    with staged_dir(Path(ns.out), ns.overwrite) as tmp:
        jobs = [(m, tmp / sid if multi else tmp, params, ns.trace_frame if ns.trace else None)
                for m, sid in zip(manifests, ids)]
        if ns.jobs > 1 and multi:
            with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
                results = list(pool.map(_precompute_one, jobs))
        else:
            results = [_precompute_one(j) for j in jobs]
        if multi:
            save_params(params, tmp / "params.txt")
    for sid, count, trace in results:
        print(f"sequence={sid} frames={count}")
        if trace is not None:
            dump_trace(trace, Path(ns.trace) / sid if multi else Path(ns.trace))
    return 0


# --- synth -----------------------------------------------------------------

def build_synth_config(ns) -> synth.SynthConfig:
    cfg = synth.preset(ns.preset) if ns.preset else synth.SynthConfig(
        targets=(synth.TargetSpec(start=(60.0, 128.0), velocity=(2.0, 0.0)),))
    bg = cfg.background
    bg = synth.BackgroundSpec(
        level=bg.level if ns.background is None else ns.background,
        drift=(bg.drift[0] if ns.drift_x is None else ns.drift_x,
               bg.drift[1] if ns.drift_y is None else ns.drift_y),
        noise_sigma=bg.noise_sigma if ns.noise is None else ns.noise,
        texture_amplitude=bg.texture_amplitude if ns.texture is None else ns.texture,
        texture_period=bg.texture_period,
    )
    targets = list(cfg.targets)
    if targets:
        t0 = targets[0]
        targets[0] = synth.TargetSpec(
            start=(t0.start[0] if ns.start_x is None else ns.start_x,
                   t0.start[1] if ns.start_y is None else ns.start_y),
            velocity=(t0.velocity[0] if ns.vx is None else ns.vx,
                      t0.velocity[1] if ns.vy is None else ns.vy),
            sigma=t0.sigma if ns.sigma is None else ns.sigma,
            amplitude=t0.amplitude if ns.amplitude is None else ns.amplitude,
        )
    changes = dict(targets=tuple(targets), background=bg)
    for key in ("height", "width", "seed"):
        if getattr(ns, key) is not None:
            changes[key] = getattr(ns, key)
    if ns.frames is not None:
        changes["num_frames"] = ns.frames
    return dataclasses.replace(cfg, **changes)


def write_synth(cfg: synth.SynthConfig, out: Path, name: str = "sequence", bits: int = 8) -> None:
    frames, boxes = synth.generate(cfg)
    names, gts = [], []
    for t, (f, bxs) in enumerate(zip(frames, boxes)):
        fname = f"frame_{t:04d}.pgm"
        seqio.save_frame(f, out / fname, bits=bits)
        names.append(fname)
        gts.extend(metrics.GtBox(Path(fname).stem, b) for b in bxs)
    seqio.write_manifest(out / f"{name}.txt", names)
    (out / "gt.txt").write_text(metrics.format_boxes(gts), encoding="utf-8")


def cmd_synth(ns) -> int:
    cfg = build_synth_config(ns)
    cfg.validate()
    with staged_dir(Path(ns.out), ns.overwrite) as tmp:
        write_synth(cfg, tmp, ns.name, ns.bits)
    print(f"frames={cfg.num_frames} size={cfg.height}x{cfg.width} seed={cfg.seed}")
    return 0


# --- eval ------------------------------------------------------------------

def cmd_eval(ns) -> int:
    for p in (ns.pred, ns.gt):
        if not Path(p).is_file():
            _fail("io", f"no such file: {p}")
    dets = metrics.load_detections(ns.pred)
    gts = metrics.load_gt(ns.gt)
    if not gts:
        _fail("evaluation", f"{ns.gt}: no ground-truth boxes; AP@50 is undefined")
    nms_thresh = None if ns.nms is not None and ns.nms < 0 else ns.nms
    summary, sw = metrics.evaluate(dets, gts, iou_thresh=ns.iou, nms_thresh=nms_thresh,
                                   conf_floor=ns.conf, method=ns.ap_method)
    sys.stdout.write(summary.to_text())
    if ns.pr_out:
        metrics.export_pr_curve(sw, ns.pr_out)
    return 0


# --- inspect ---------------------------------------------------------------

def cmd_inspect(ns) -> int:
    from .rca import RcaEngine

    params = resolve_params(ns.params)
    manifest = seqio.load_manifest(ns.manifest)
    if not 1 <= ns.frame <= len(manifest):
        _fail("range", f"--frame {ns.frame} outside 1..{len(manifest)}")
    engine = RcaEngine(params)
    engine.reset()
    for k, fp in enumerate(manifest.frame_paths[:ns.frame], start=1):
        engine.trace_enabled = k == ns.frame
        engine.step(seqio.load_frame(fp))
    with staged_dir(Path(ns.out), ns.overwrite) as tmp:
        dump_trace(engine.last_trace, tmp)
    print(f"sequence={manifest.sequence_id} frame={ns.frame} layers={len(TRACE_FIELDS)}")
    return 0


# --- pmi-demo --------------------------------------------------------------

def cmd_pmi_demo(ns) -> int:
    from . import pmi

    cfg = pmi.PmiConfig(channels=ns.channels, heads=ns.heads, pooled=(ns.pooled, ns.pooled),
                        w_pool=ns.w_pool, seed=ns.seed, upsample=ns.upsample)
    rng = np.random.default_rng(ns.seed + 1)
    f_p = rng.standard_normal((cfg.channels, ns.size, ns.size))
    f_m = rng.standard_normal((cfg.channels, ns.size, ns.size))
    weights = pmi.PmiWeights.generate(cfg)
    out = pmi.pmi_forward(f_p, f_m, weights, cfg)
    again = pmi.pmi_forward(f_p, f_m, pmi.PmiWeights.generate(cfg), cfg)
    zero_phi = pmi.pmi_forward(f_p, f_m, weights.with_zero_phi(), cfg)
    row_err = max(float(np.abs(a.sum(axis=-1) - 1.0).max()) for a in (out.attn_p, out.attn_m))
    residual = bool(np.array_equal(zero_phi.f_p, f_p) and np.array_equal(zero_phi.f_m, f_m))
    deterministic = all(np.array_equal(a, b) for a, b in
                        ((out.f_p, again.f_p), (out.f_m, again.f_m), (out.fused, again.fused)))
    finite = all(np.all(np.isfinite(a)) for a in (out.f_p, out.f_m, out.fused))
    ok = row_err <= 1e-6 and residual and deterministic and finite
    lines = [
        f"channels={cfg.channels}", f"heads={cfg.heads}", f"head_dim={cfg.head_dim}",
        f"pooled={cfg.pooled[0]}x{cfg.pooled[1]}", f"tokens={cfg.pooled[0] * cfg.pooled[1]}",
        f"f_p_out_shape={'x'.join(map(str, out.f_p.shape))}",
        f"f_m_out_shape={'x'.join(map(str, out.f_m.shape))}",
        f"fused_shape={'x'.join(map(str, out.fused.shape))}",
        f"softmax_row_sum_max_error={row_err!r}",
        f"residual_identity_exact={str(residual).lower()}",
        f"deterministic={str(deterministic).lower()}",
        f"finite={str(finite).lower()}",
        f"ok={str(ok).lower()}",
    ]
    print("\n".join(lines))
    if not ok:
        raise InvariantError("PMI invariant check failed")
    return 0


# --- parser ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage mistakes are input errors: one diagnostic line, exit status 1."""

    def error(self, message):
        self.exit(1, f"error: argument: {message}\n")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show ``(default: X)`` only for defaults that mean something."""

    def _get_help_string(self, action):
        if action.default is None or isinstance(action.default, bool):
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="rcamotion", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="write one motion map per manifest frame", formatter_class=fmt)
    p.add_argument("--manifest", action="append", required=True,
                   help="sequence manifest; repeat for several sequences")
    p.add_argument("--out", required=True, help="output directory (mirrors the input layout)")
    p.add_argument("--params", default=None,
                   help=f"key=value parameter file (default: ${PARAMS_ENV} or built-in values)")
    p.add_argument("--trace", default=None, help="directory for per-layer dumps of --trace-frame")
    p.add_argument("--trace-frame", type=int, default=1, help="1-based frame index to trace")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across manifests")
    p.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("synth", help="generate a seeded synthetic sequence", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", default=None, choices=sorted(synth.PRESETS), help="named scenario")
    p.add_argument("--frames", type=int, default=None, help="number of frames (default: 50)")
    p.add_argument("--seed", type=int, default=None, help="noise seed (default: 7)")
    p.add_argument("--height", type=int, default=None, help="frame height (default: 256)")
    p.add_argument("--width", type=int, default=None, help="frame width (default: 256)")
    p.add_argument("--start-x", type=float, default=None, help="target start x (default: 60)")
    p.add_argument("--start-y", type=float, default=None, help="target start y (default: 128)")
    p.add_argument("--vx", type=float, default=None, help="target x velocity px/frame (default: 2)")
    p.add_argument("--vy", type=float, default=None, help="target y velocity px/frame (default: 0)")
    p.add_argument("--sigma", type=float, default=None, help="target blob sigma px (default: 2)")
    p.add_argument("--amplitude", type=float, default=None, help="target amplitude (default: 0.6)")
    p.add_argument("--background", type=float, default=None, help="background level (default: 0.2)")
    p.add_argument("--noise", type=float, default=None, help="noise sigma (default: 0; moving-blob preset: 0.05)")
    p.add_argument("--drift-x", type=float, default=None, help="texture drift x px/frame (default: 0)")
    p.add_argument("--drift-y", type=float, default=None, help="texture drift y px/frame (default: 0)")
    p.add_argument("--texture", type=float, default=None, help="texture amplitude (default: 0)")
    p.add_argument("--bits", type=int, default=8, choices=(8, 16), help="frame bit depth")
    p.add_argument("--name", default="sequence", help="manifest file stem")
    p.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against ground truth", formatter_class=fmt)
    p.add_argument("--pred", required=True, help="prediction file (frame x0 y0 x1 y1 score)")
    p.add_argument("--gt", required=True, help="ground-truth file (frame x0 y0 x1 y1)")
    p.add_argument("--iou", type=float, default=metrics.IOU_THRESH, help="match IoU threshold")
    p.add_argument("--nms", type=float, default=metrics.NMS_THRESH,
                   help="NMS IoU threshold; negative disables NMS")
    p.add_argument("--conf", type=float, default=metrics.CONF_FLOOR,
                   help="keep detections with score strictly above this")
    p.add_argument("--ap-method", default="101", choices=("101", "all"), help="AP interpolation")
    p.add_argument("--pr-out", default=None, help="write the PR curve as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="dump every RCA layer for one frame", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="sequence manifest")
    p.add_argument("--frame", type=int, required=True, help="1-based frame index")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", default=None,
                   help=f"key=value parameter file (default: ${PARAMS_ENV} or built-in values)")
    p.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("pmi-demo", help="run PMI forward-pass invariant checks", formatter_class=fmt)
    p.add_argument("--channels", type=int, default=128, help="feature channels C")
    p.add_argument("--heads", type=int, default=8, help="attention heads")
    p.add_argument("--pooled", type=int, default=20, help="pooled token grid side")
    p.add_argument("--size", type=int, default=64, help="feature map side H = W")
    p.add_argument("--w-pool", type=float, default=0.5, help="average-pool weight in the blend")
    p.add_argument("--upsample", default="bilinear", choices=("bilinear", "nearest"),
                   help="token upsampling mode")
    p.add_argument("--seed", type=int, default=0, help="weight seed")
    p.set_defaults(func=cmd_pmi_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except CliError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except RcaError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename if getattr(exc, "filename", None) else ""
        detail = f"{exc.strerror or exc}: {name}" if name else str(exc)
        print(f"error: io: {detail}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"error: invariant: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
