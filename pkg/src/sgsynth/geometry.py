"""Axis-aligned box arithmetic. Pure functions, exact on integer boxes.

Boxes that touch only along an edge have zero intersection and therefore
IoU 0; they do not count as overlapping anywhere IoU > 0 is required.
"""

from sgsynth.core import BBox


def area(box):
    return (box.x2 - box.x1) * (box.y2 - box.y1)


def intersection(a, b):
    overlap_w = min(a.x2, b.x2) - max(a.x1, b.x1)
    overlap_h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if overlap_w <= 0 or overlap_h <= 0:
        return 0.0
    return overlap_w * overlap_h


def iou(a, b):
    inter = intersection(a, b)
    return inter / (area(a) + area(b) - inter)


def union_box(a, b):
    """Bounding hull of two boxes (not the set union)."""
    return BBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))
