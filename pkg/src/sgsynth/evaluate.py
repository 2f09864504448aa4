"""Recall@K scoring for grounded relationship predictions.

A prediction matches a ground-truth triplet when the two label triples
(source category, predicate, target category) are identical and the boxes
agree: in 'union' mode (the default) the bounding hull of the prediction's
two boxes must overlap the hull of the ground truth's with IoU strictly
above the threshold; 'per_box' mode instead requires the source and target
boxes to clear the threshold individually, which is the stricter
community-standard test. Matching is greedy in descending confidence order
and one-to-one.
"""

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from sgsynth.core import BBox, PipelineError, normalize_predicate
from sgsynth.geometry import iou, union_box

DEFAULT_KS = (20, 50, 100)
DEFAULT_IOU_THRESHOLD = 0.5
MATCH_MODES = ("union", "per_box")


class EmptyGroundTruth(PipelineError):
    """Recall is undefined: the ground truth has zero triplets corpus-wide."""


@dataclass(frozen=True)
class GroundedTriplet:
    """A relationship with both endpoints localized; predictions also carry a
    confidence in [0, 1], ground truth does not need one."""

    source_label: str
    source_box: BBox
    target_label: str
    target_box: BBox
    relation: str
    confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "source_label", self.source_label.strip().lower())
        object.__setattr__(self, "target_label", self.target_label.strip().lower())
        object.__setattr__(self, "relation", normalize_predicate(self.relation))
        if not self.source_label or not self.target_label or not self.relation:
            raise ValueError("labels and relation must be non-empty")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence!r}")

    def labels(self):
        return (self.source_label, self.relation, self.target_label)


def _boxes_match(pred, gt, iou_threshold, match_mode):
    if match_mode == "union":
        pred_hull = union_box(pred.source_box, pred.target_box)
        gt_hull = union_box(gt.source_box, gt.target_box)
        return iou(pred_hull, gt_hull) > iou_threshold
    return (
        iou(pred.source_box, gt.source_box) > iou_threshold
        and iou(pred.target_box, gt.target_box) > iou_threshold
    )


def match_triplets(preds, gts, iou_threshold=DEFAULT_IOU_THRESHOLD, match_mode="union"):
    """Greedy one-to-one matching; callers pass preds already sorted by
    descending confidence. Returns (pred index, gt index) pairs."""
    if match_mode not in MATCH_MODES:
        raise ValueError(f"match_mode must be one of {MATCH_MODES}, got {match_mode!r}")
    taken = [False] * len(gts)
    matches = []
    for pred_index, pred in enumerate(preds):
        for gt_index, gt in enumerate(gts):
            if taken[gt_index] or pred.labels() != gt.labels():
                continue
            if _boxes_match(pred, gt, iou_threshold, match_mode):
                taken[gt_index] = True
                matches.append((pred_index, gt_index))
                break
    return matches


@dataclass
class RecallReport:
    per_k: dict  # K -> recall over all GT triplets
    mean_per_k: dict  # K -> unweighted mean of per-predicate recalls
    per_predicate: dict  # predicate -> {K: (matched, total, recall)}
    num_images: int
    total_gt: int

    def summary(self):
        flat = {"num_images": self.num_images, "total_gt": self.total_gt}
        for k in sorted(self.per_k):
            flat[f"R@{k}"] = self.per_k[k]
        for k in sorted(self.mean_per_k):
            flat[f"mR@{k}"] = self.mean_per_k[k]
        return flat

    def to_dict(self):
        return {
            "num_images": self.num_images,
            "total_gt": self.total_gt,
            "recall": {str(k): self.per_k[k] for k in sorted(self.per_k)},
            "mean_recall": {str(k): self.mean_per_k[k] for k in sorted(self.mean_per_k)},
            "per_predicate": {
                predicate: {
                    str(k): {"matched": m, "total": t, "recall": r}
                    for k, (m, t, r) in sorted(stats.items())
                }
                for predicate, stats in sorted(self.per_predicate.items())
            },
        }

    def render_table(self):
        ks = sorted(self.per_k)
        header = [f"R@{k}" for k in ks] + [f"mR@{k}" for k in ks]
        values = [f"{self.per_k[k]:.4f}" for k in ks] + [f"{self.mean_per_k[k]:.4f}" for k in ks]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        return (
            "  ".join(h.rjust(w) for h, w in zip(header, widths))
            + "\n"
            + "  ".join(v.rjust(w) for v, w in zip(values, widths))
        )


def _confidence_order(preds):
    return sorted(preds, key=lambda t: -(t.confidence if t.confidence is not None else 1.0))


def recall_at_k(
    preds_per_image,
    gts_per_image,
    ks=DEFAULT_KS,
    iou_threshold=DEFAULT_IOU_THRESHOLD,
    match_mode="union",
):
    """Per image: keep the top-K predictions by confidence, match greedily,
    accumulate over all ground truth. R@K is the matched fraction of GT
    triplets; mR@K averages per-predicate recalls over predicates that occur
    in the ground truth."""
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive integers, got {ks}")
    total_gt = sum(len(triplets) for triplets in gts_per_image.values())
    if total_gt == 0:
        raise EmptyGroundTruth("no ground-truth triplets in the corpus")
    gt_totals = Counter()
    for triplets in gts_per_image.values():
        for gt in triplets:
            gt_totals[gt.relation] += 1
    matched_at_k = {k: 0 for k in ks}
    matched_per_predicate = {k: Counter() for k in ks}
    image_ids = sorted(set(gts_per_image) | set(preds_per_image))
    for image_id in image_ids:
        gts = list(gts_per_image.get(image_id, ()))
        preds = _confidence_order(preds_per_image.get(image_id, ()))
        for k in ks:
            matches = match_triplets(preds[:k], gts, iou_threshold, match_mode)
            matched_at_k[k] += len(matches)
            for _, gt_index in matches:
                matched_per_predicate[k][gts[gt_index].relation] += 1
    per_k = {k: matched_at_k[k] / total_gt for k in ks}
    per_predicate = {}
    for predicate, total in sorted(gt_totals.items()):
        per_predicate[predicate] = {
            k: (matched_per_predicate[k][predicate], total, matched_per_predicate[k][predicate] / total)
            for k in ks
        }
    mean_per_k = {
        k: sum(stats[k][2] for stats in per_predicate.values()) / len(per_predicate) for k in ks
    }
    return RecallReport(per_k, mean_per_k, per_predicate, len(image_ids), total_gt)


# --- grounded-triplet files ----------------------------------------------------


def _triplet_from_json(data, line):
    try:
        return GroundedTriplet(
            data["source_label"],
            BBox(*data["source_box"]),
            data["target_label"],
            BBox(*data["target_box"]),
            data["relation"],
            data.get("confidence"),
        )
    except (TypeError, KeyError, ValueError) as error:
        from sgsynth.dataset import SchemaError

        raise SchemaError(f"bad grounded triplet: {error}", line=line) from error


def read_grounded_file(path):
    """Line-delimited JSON, one image per line:
    {"image_id": ..., "triplets": [{source_label, source_box, target_label,
    target_box, relation, confidence?}, ...]}."""
    from sgsynth.dataset import SchemaError

    per_image = {}
    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                image_id = str(data["image_id"])
                triplets = data["triplets"]
            except (ValueError, KeyError, TypeError) as error:
                raise SchemaError(f"bad grounded-triplet line: {error}", line=number) from error
            if image_id in per_image:
                raise SchemaError(f"duplicate image_id {image_id}", line=number)
            per_image[image_id] = [_triplet_from_json(item, number) for item in triplets]
    return per_image


def write_grounded_file(per_image, path):
    with Path(path).open("w", encoding="utf-8") as handle:
        for image_id in sorted(per_image):
            triplets = []
            for t in per_image[image_id]:
                data = {
                    "source_label": t.source_label,
                    "source_box": list(t.source_box.as_tuple()),
                    "target_label": t.target_label,
                    "target_box": list(t.target_box.as_tuple()),
                    "relation": t.relation,
                }
                if t.confidence is not None:
                    data["confidence"] = t.confidence
                triplets.append(data)
            handle.write(json.dumps({"image_id": image_id, "triplets": triplets}, ensure_ascii=False) + "\n")
    return len(per_image)
