"""Independent oracles used by the test suite.

Everything here deliberately avoids the code paths under test: overlap is
decided by raw coordinate comparisons, areas by counting rasterized unit
pixels, and the matching oracle is an optimal bipartite matcher rather than
the greedy assignment the evaluator uses.
"""

from itertools import combinations

import numpy as np

from sgsynth.evaluate import GroundedTriplet
from sgsynth.core import BBox


# --- pixel-counting oracle for integer boxes ----------------------------------


def raster_area(box, size):
    grid = np.zeros((size, size), dtype=bool)
    x1, y1, x2, y2 = (int(v) for v in box)
    grid[x1:x2, y1:y2] = True
    return int(grid.sum())


def raster_metrics(box_a, box_b, size):
    """(area_a, area_b, intersection, iou) by counting unit pixels."""
    ga = np.zeros((size, size), dtype=bool)
    gb = np.zeros((size, size), dtype=bool)
    ax1, ay1, ax2, ay2 = (int(v) for v in box_a)
    bx1, by1, bx2, by2 = (int(v) for v in box_b)
    ga[ax1:ax2, ay1:ay2] = True
    gb[bx1:bx2, by1:by2] = True
    inter = int((ga & gb).sum())
    union = int((ga | gb).sum())
    return int(ga.sum()), int(gb.sum()), inter, inter / union


# --- pair-enumeration oracle ---------------------------------------------------


def coords_overlap(box_a, box_b):
    """Strictly positive overlap, by direct coordinate comparison."""
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    return min(ax2, bx2) > max(ax1, bx1) and min(ay2, by2) > max(ay1, by1)


def brute_force_pairs(objects):
    """Set of overlapping unordered pairs as ('cat.idx', 'cat.idx') tuples."""
    pairs = set()
    for a, b in combinations(objects, 2):
        if coords_overlap(a.box.as_tuple(), b.box.as_tuple()):
            pairs.add((f"{a.category}.{a.index}", f"{b.category}.{b.index}"))
    return pairs


def random_objects(rng, max_objects=20, size=64):
    categories = ("person", "tie", "book", "cup", "dog")
    from sgsynth.core import ObjectInstance

    count = rng.randint(0, max_objects)
    objects = []
    for i in range(count):
        x1 = rng.randint(0, size - 2)
        y1 = rng.randint(0, size - 2)
        x2 = rng.randint(x1 + 1, size)
        y2 = rng.randint(y1 + 1, size)
        objects.append(ObjectInstance(rng.choice(categories), i + 1, BBox(x1, y1, x2, y2)))
    return objects


# --- optimal matching oracle ----------------------------------------------------


def _hull(box_a, box_b):
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    return (min(ax1, bx1), min(ay1, by1), max(ax2, bx2), max(ay2, by2))


def _iou_raw(box_a, box_b):
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    w = min(ax2, bx2) - max(ax1, bx1)
    h = min(ay2, by2) - max(ay1, by1)
    inter = w * h if w > 0 and h > 0 else 0.0
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def compatible(pred, gt, iou_threshold, match_mode):
    if (pred.source_label, pred.relation, pred.target_label) != (
        gt.source_label,
        gt.relation,
        gt.target_label,
    ):
        return False
    if match_mode == "union":
        return (
            _iou_raw(
                _hull(pred.source_box.as_tuple(), pred.target_box.as_tuple()),
                _hull(gt.source_box.as_tuple(), gt.target_box.as_tuple()),
            )
            > iou_threshold
        )
    return (
        _iou_raw(pred.source_box.as_tuple(), gt.source_box.as_tuple()) > iou_threshold
        and _iou_raw(pred.target_box.as_tuple(), gt.target_box.as_tuple()) > iou_threshold
    )


def optimal_match_count(preds, gts, iou_threshold=0.5, match_mode="union"):
    """Maximum bipartite matching size via augmenting paths (Kuhn's algorithm)."""
    feasible = [
        [g for g in range(len(gts)) if compatible(pred, gts[g], iou_threshold, match_mode)]
        for pred in preds
    ]
    match_of_gt = [None] * len(gts)

    def try_assign(p, visited):
        for g in feasible[p]:
            if g in visited:
                continue
            visited.add(g)
            if match_of_gt[g] is None or try_assign(match_of_gt[g], visited):
                match_of_gt[g] = p
                return True
        return False

    return sum(1 for p in range(len(preds)) if try_assign(p, set()))


# --- random evaluation instances -------------------------------------------------


LABELS = ("person", "dog", "cup", "tree", "car", "boat")
RELATIONS = ("near", "on", "holding", "behind", "wearing")


def random_box(rng, size=100):
    x1 = rng.randint(0, size - 10)
    y1 = rng.randint(0, size - 10)
    return BBox(x1, y1, x1 + rng.randint(5, 10), y1 + rng.randint(5, 10))


def random_grounded(rng, confidence=None, size=100):
    return GroundedTriplet(
        rng.choice(LABELS),
        random_box(rng, size),
        rng.choice(LABELS),
        random_box(rng, size),
        rng.choice(RELATIONS),
        confidence,
    )


def jitter(box, rng, amount=2):
    dx = rng.randint(-amount, amount)
    dy = rng.randint(-amount, amount)
    x1, y1, x2, y2 = box.as_tuple()
    return BBox(max(0, x1 + dx), max(0, y1 + dy), max(0, x1 + dx) + (x2 - x1), max(0, y1 + dy) + (y2 - y1))


def make_random_instance(rng, max_gt=8, max_extra=6):
    """A GT list plus predictions: some jittered copies of GT, some noise, with
    distinct confidences."""
    gts = [random_grounded(rng) for _ in range(rng.randint(1, max_gt))]
    preds = []
    for gt in gts:
        if rng.random() < 0.7:
            preds.append(
                GroundedTriplet(
                    gt.source_label,
                    jitter(gt.source_box, rng),
                    gt.target_label,
                    jitter(gt.target_box, rng),
                    gt.relation,
                    0.0,
                )
            )
    preds.extend(random_grounded(rng, 0.0) for _ in range(rng.randint(0, max_extra)))
    rng.shuffle(preds)
    confidences = sorted((rng.randrange(1, 1024) / 1024.0 for _ in preds), reverse=True)
    preds = [
        GroundedTriplet(p.source_label, p.source_box, p.target_label, p.target_box, p.relation, c)
        for p, c in zip(preds, confidences)
    ]
    return preds, gts


def make_unambiguous_instance(rng, max_gt=8):
    """Label triples are unique across GT, so every prediction is feasible for
    at most one ground truth and greedy equals optimal."""
    combos = [(s, r, t) for s in LABELS for r in RELATIONS for t in LABELS]
    rng.shuffle(combos)
    gts = []
    for s, r, t in combos[: rng.randint(1, max_gt)]:
        gts.append(GroundedTriplet(s, random_box(rng), t, random_box(rng), r))
    preds = []
    for gt in gts:
        for _ in range(rng.randint(0, 2)):
            preds.append(
                GroundedTriplet(
                    gt.source_label,
                    jitter(gt.source_box, rng, amount=1),
                    gt.target_label,
                    jitter(gt.target_box, rng, amount=1),
                    gt.relation,
                    0.0,
                )
            )
    rng.shuffle(preds)
    confidences = sorted({rng.randrange(1, 4096) for _ in range(len(preds))}, reverse=True)
    while len(confidences) < len(preds):
        confidences.append(confidences[-1] - 1 if confidences else 4096)
    preds = [
        GroundedTriplet(p.source_label, p.source_box, p.target_label, p.target_box, p.relation, c / 8192.0)
        for p, c in zip(preds, confidences)
    ]
    return preds, gts
