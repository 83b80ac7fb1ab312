"""Synthesize a sequence, compute motion maps, detect blobs, and score them.

The detector is deliberately naive: smooth each motion map, keep the
connected region around its peak above a fraction of that peak, and report
the region's box scored by the peak. The motion response includes a fading
trail behind the target, so these boxes are longer than the ground truth and
many fall under IoU 0.5; the point is the plumbing, not the score.

    python3 scripts/demo_pipeline.py --workdir /tmp/rca_demo
"""

import argparse
import shutil
from pathlib import Path

import numpy as np
from scipy import ndimage

from rcamotion.cli import main as cli
from rcamotion.seqio import load_frame


def detect(motion_dir, out_file, fraction, smooth):
    lines = []
    for path in sorted(Path(motion_dir).glob("*_motion.pgm")):
        m = ndimage.gaussian_filter(load_frame(path), smooth)
        peak = np.unravel_index(np.argmax(m), m.shape)
        labels, _ = ndimage.label(m >= fraction * m[peak])
        ys, xs = ndimage.find_objects(labels)[labels[peak] - 1]
        frame_id = path.stem.replace("_motion", "")
        lines.append(f"{frame_id} {xs.start} {ys.start} {xs.stop} {ys.stop} {m[peak]:.6f}")
    Path(out_file).write_text("\n".join(lines) + "\n")
    return len(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="rca_demo")
    ap.add_argument("--frames", type=int, default=50)
    ap.add_argument("--fraction", type=float, default=0.5, help="region cut as a fraction of the peak")
    ap.add_argument("--smooth", type=float, default=2.0, help="Gaussian smoothing sigma in pixels")
    args = ap.parse_args()
    work = Path(args.workdir)
    if work.exists():
        shutil.rmtree(work)
    seq, maps = work / "seq", work / "motion"
    cli(["synth", "--out", str(seq), "--preset", "moving-blob", "--frames", str(args.frames)])
    cli(["precompute", "--manifest", str(seq / "sequence.txt"), "--out", str(maps)])
    n = detect(maps, work / "pred.txt", args.fraction, args.smooth)
    print(f"detections={n}")
    return cli(["eval", "--pred", str(work / "pred.txt"), "--gt", str(seq / "gt.txt")])


if __name__ == "__main__":
    raise SystemExit(main())
