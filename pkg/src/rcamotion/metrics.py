"""Detection evaluation: IoU/GIoU, NMS, greedy matching, P/R/F1 and AP@50.

Boxes are ``(x_min, y_min, x_max, y_max)`` in pixels. There is a single
target class; detections and ground truth are grouped by frame id.
"""

from __future__ import annotations

import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import EvaluationError, FormatError, ParameterError

IOU_THRESH = 0.5
NMS_THRESH = 0.65
CONF_FLOOR = 0.001
LETTERBOX_SIZE = 512


class BBox(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def area(self) -> float:
        return max(0.0, self.x_max - self.x_min) * max(0.0, self.y_max - self.y_min)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


def make_box(x_min, y_min, x_max, y_max) -> BBox:
    box = BBox(float(x_min), float(y_min), float(x_max), float(y_max))
    if not all(np.isfinite(box)):
        raise ParameterError(f"non-finite box {box}")
    if box.x_min > box.x_max or box.y_min > box.y_max:
        raise ParameterError(f"box corners out of order: {box}")
    return box


@dataclass(frozen=True)
class Detection:
    frame_id: str
    box: BBox
    score: float = 1.0


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    # (detection index, gt index, iou) in the order matches were made
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    # per-detection flag in the matcher's processing order
    det_is_tp: List[bool] = field(default_factory=list)


def _intersection(a: BBox, b: BBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    return w * h if w > 0 and h > 0 else 0.0


def iou(a: BBox, b: BBox) -> float:
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU; 0 when the enclosing box has zero area."""
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    enclose = (max(a.x_max, b.x_max) - min(a.x_min, b.x_min)) * \
        (max(a.y_max, b.y_max) - min(a.y_min, b.y_min))
    if enclose <= 0:
        return 0.0
    iou_ab = inter / union if union > 0 else 0.0
    return iou_ab - (enclose - union) / enclose


def _rank_key(det: Detection):
    return (-det.score, det.box.x_min, det.box.y_min)


def nms(dets: Sequence[Detection], iou_thresh: float = NMS_THRESH) -> List[Detection]:
    """Greedy non-maximum suppression within one frame.

    Order is score descending, then ``x_min``, then ``y_min`` ascending.
    """
    order = sorted(dets, key=_rank_key)
    kept: List[Detection] = []
    for d in order:
        if all(iou(d.box, k.box) <= iou_thresh for k in kept):
            kept.append(d)
    return kept


def nms_per_frame(dets: Iterable[Detection], iou_thresh: float = NMS_THRESH) -> List[Detection]:
    out = []
    for fid, group in group_by_frame(dets).items():
        out.extend(nms(group, iou_thresh))
    return out


def match_frame(dets: Sequence[Detection], gts: Sequence[BBox],
                iou_thresh: float = IOU_THRESH) -> MatchResult:
    """Greedy one-to-one matching of one frame's detections to its GT boxes.

    Detections are visited by descending score; each takes the still
    unmatched GT with the highest IoU, provided that IoU is at least
    ``iou_thresh``. Ties in IoU go to the lower GT index.
    """
    order = sorted(range(len(dets)), key=lambda i: _rank_key(dets[i]))
    taken = [False] * len(gts)
    res = MatchResult()
    for i in order:
        best, best_j = -1.0, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(dets[i].box, g)
            if v >= iou_thresh and v > best:
                best, best_j = v, j
        if best_j >= 0:
            taken[best_j] = True
            res.pairs.append((i, best_j, best))
            res.det_is_tp.append(True)
        else:
            res.det_is_tp.append(False)
    res.tp = len(res.pairs)
    res.fp = len(dets) - res.tp
    res.fn = len(gts) - res.tp
    return res


def prf1(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def f1_score(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def group_by_frame(items) -> Dict[str, list]:
    groups: Dict[str, list] = defaultdict(list)
    for it in items:
        groups[it.frame_id].append(it)
    return dict(groups)


@dataclass(frozen=True)
class GtBox:
    frame_id: str
    box: BBox


class PrPoint(NamedTuple):
    threshold: float
    precision: float
    recall: float


@dataclass
class Sweep:
    """Cumulative TP/FP at every distinct score threshold (descending)."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    num_gt: int

    @property
    def precision(self) -> np.ndarray:
        denom = self.tp + self.fp
        return np.divide(self.tp, denom, out=np.zeros(len(denom)), where=denom > 0)

    @property
    def recall(self) -> np.ndarray:
        return self.tp / self.num_gt

    def points(self) -> List[PrPoint]:
        return [PrPoint(float(t), float(p), float(r))
                for t, p, r in zip(self.thresholds, self.precision, self.recall)]


def filter_conf(dets: Iterable[Detection], conf_floor: float = CONF_FLOOR) -> List[Detection]:
    """Keep detections strictly above the confidence floor."""
    return [d for d in dets if d.score > conf_floor]


def sweep(dets: Sequence[Detection], gts: Sequence[GtBox],
          iou_thresh: float = IOU_THRESH) -> Sweep:
    """Score-threshold sweep built from one greedy matching pass per frame.

    Greedy matching in score order never revisits earlier decisions, so the
    TP/FP status each detection gets in the full run is the status it has at
    every threshold that keeps it.
    """
    num_gt = len(gts)
    gt_by_frame = defaultdict(list)
    for g in gts:
        gt_by_frame[g.frame_id].append(g.box)
    scored = []
    for fid, group in group_by_frame(dets).items():
        order = sorted(range(len(group)), key=lambda i: _rank_key(group[i]))
        res = match_frame(group, gt_by_frame.get(fid, []), iou_thresh)
        for rank, i in enumerate(order):
            scored.append((group[i].score, res.det_is_tp[rank]))
    if not scored:
        return Sweep(np.zeros(0), np.zeros(0), np.zeros(0), num_gt)
    scores = np.array([s for s, _ in scored])
    is_tp = np.array([t for _, t in scored], dtype=bool)
    order = np.argsort(-scores, kind="stable")
    scores, is_tp = scores[order], is_tp[order]
    ctp = np.cumsum(is_tp)
    cfp = np.cumsum(~is_tp)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(scores[1:] != scores[:-1])[0], len(scores) - 1]
    return Sweep(scores[last], ctp[last].astype(float), cfp[last].astype(float), num_gt)


def _envelope(precision: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(precision[::-1])[::-1]


def ap_from_sweep(sw: Sweep, method: str = "101") -> float:
    """Area under the monotone precision envelope.

    ``"101"`` samples the envelope at recall 0.00, 0.01, ..., 1.00;
    ``"all"`` integrates it exactly over the recall steps.
    """
    if sw.num_gt == 0:
        raise EvaluationError("average precision is undefined without ground-truth boxes")
    if len(sw.thresholds) == 0:
        return 0.0
    rec = np.r_[0.0, sw.recall]
    prec = np.r_[sw.precision[0], sw.precision]
    env = _envelope(prec)
    if method == "all":
        steps = np.nonzero(rec[1:] != rec[:-1])[0] + 1
        return float(np.sum((rec[steps] - rec[steps - 1]) * env[steps]))
    if method != "101":
        raise ParameterError(f"unknown AP method {method!r}")
    grid = np.linspace(0.0, 1.0, 101)
    total = 0.0
    for r in grid:
        hit = np.nonzero(rec[1:] >= r - 1e-12)[0]
        total += float(env[1:][hit[0]]) if hit.size else 0.0
    return total / 101.0


def average_precision_50(dets: Sequence[Detection], gts: Sequence[GtBox],
                         conf_floor: float = CONF_FLOOR, method: str = "101",
                         iou_thresh: float = IOU_THRESH) -> float:
    if not gts:
        raise EvaluationError("average precision is undefined without ground-truth boxes")
    return ap_from_sweep(sweep(filter_conf(dets, conf_floor), gts, iou_thresh), method)


def export_pr_curve(sw: Sweep, path=None) -> str:
    """CSV of ``threshold,precision,recall``, thresholds ascending."""
    buf = io.StringIO()
    buf.write("threshold,precision,recall\n")
    for pt in reversed(sw.points()):
        buf.write(f"{pt.threshold!r},{pt.precision!r},{pt.recall!r}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass
class EvalSummary:
    precision: float
    recall: float
    f1: float
    ap50: float
    tp: int
    fp: int
    fn: int

    def to_text(self) -> str:
        return (f"precision={self.precision!r}\nrecall={self.recall!r}\nf1={self.f1!r}\n"
                f"ap50={self.ap50!r}\ntp={self.tp}\nfp={self.fp}\nfn={self.fn}\n")


def evaluate(dets: Sequence[Detection], gts: Sequence[GtBox], iou_thresh: float = IOU_THRESH,
             nms_thresh: Optional[float] = NMS_THRESH, conf_floor: float = CONF_FLOOR,
             method: str = "101"):
    """Inference-protocol evaluation: confidence floor, per-frame NMS, then metrics.

    P, R and F1 count every detection that survives the floor and NMS.
    Returns ``(summary, sweep)``.
    """
    if not gts:
        raise EvaluationError("no ground-truth boxes; AP@50 is undefined")
    kept = filter_conf(dets, conf_floor)
    if nms_thresh is not None:
        kept = nms_per_frame(kept, nms_thresh)
    sw = sweep(kept, gts, iou_thresh)
    tp = int(sw.tp[-1]) if len(sw.tp) else 0
    fp = int(sw.fp[-1]) if len(sw.fp) else 0
    fn = len(gts) - tp
    p, r, f1 = prf1(tp, fp, fn)
    return EvalSummary(float(p), float(r), float(f1), float(ap_from_sweep(sw, method)), tp, fp, fn), sw


# --- text format -----------------------------------------------------------

def parse_boxes(text: str, with_score: bool, source: str = "<boxes>"):
    """Parse ``frame_id x_min y_min x_max y_max [score]`` records."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise FormatError(f"{source}:{lineno}: expected 5 or 6 fields, got {len(parts)}")
        try:
            box = make_box(*parts[1:5])
            score = float(parts[5]) if len(parts) == 6 else 1.0
        except (ValueError, ParameterError) as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from None
        if with_score:
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"{source}:{lineno}: score {score} outside [0, 1]")
            out.append(Detection(parts[0], box, score))
        else:
            out.append(GtBox(parts[0], box))
    return out


def load_detections(path) -> List[Detection]:
    path = Path(path)
    return parse_boxes(path.read_text(encoding="utf-8"), True, str(path))


def load_gt(path) -> List[GtBox]:
    path = Path(path)
    return parse_boxes(path.read_text(encoding="utf-8"), False, str(path))


def format_boxes(records) -> str:
    lines = []
    for r in records:
        b = r.box
        fields_ = [r.frame_id, repr(b.x_min), repr(b.y_min), repr(b.x_max), repr(b.y_max)]
        if isinstance(r, Detection):
            fields_.append(repr(r.score))
        lines.append(" ".join(fields_))
    return "".join(line + "\n" for line in lines)


# --- letterbox -------------------------------------------------------------

class Letterbox(NamedTuple):
    scale: float
    pad_x: float
    pad_y: float
    size: int


def letterbox_params(height: int, width: int, size: int = LETTERBOX_SIZE) -> Letterbox:
    """Aspect-preserving fit into a ``size x size`` canvas, centred."""
    scale = min(size / height, size / width)
    new_w, new_h = round(width * scale), round(height * scale)
    return Letterbox(scale, float((size - new_w) // 2), float((size - new_h) // 2), size)


def letterbox(grid: np.ndarray, size: int = LETTERBOX_SIZE):
    """Resize ``grid`` bilinearly into a zero-padded square canvas."""
    from PIL import Image

    h, w = grid.shape
    lb = letterbox_params(h, w, size)
    new_w, new_h = round(w * lb.scale), round(h * lb.scale)
    img = Image.fromarray(np.asarray(grid, dtype=np.float32), mode="F")
    resized = np.asarray(img.resize((new_w, new_h), Image.BILINEAR), dtype=np.float64)
    canvas = np.zeros((size, size), dtype=np.float64)
    x0, y0 = int(lb.pad_x), int(lb.pad_y)
    canvas[y0:y0 + new_h, x0:x0 + new_w] = resized
    return canvas, lb


def box_to_letterbox(box: BBox, lb: Letterbox) -> BBox:
    s = lb.scale
    return BBox(box.x_min * s + lb.pad_x, box.y_min * s + lb.pad_y,
                box.x_max * s + lb.pad_x, box.y_max * s + lb.pad_y)


def box_from_letterbox(box: BBox, lb: Letterbox) -> BBox:
    s = lb.scale
    return BBox((box.x_min - lb.pad_x) / s, (box.y_min - lb.pad_y) / s,
                (box.x_max - lb.pad_x) / s, (box.y_max - lb.pad_y) / s)
