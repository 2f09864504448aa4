"""COCO-style annotation ingestion, corpus persistence, instruction-pair
export and predicate statistics.

All corpus files are line-delimited JSON (UTF-8, '\\n' terminators), chosen
because synthesis over large image sets is incremental: append-friendly and
resumable. write -> read -> write is byte-identical for every format here.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from sgsynth.core import (
    GLOBAL_REGION,
    BBox,
    CaptionKey,
    CaptionSet,
    ImageRecord,
    ObjectInstance,
    PipelineError,
    RelationshipTriplet,
    SceneGraph,
    parse_object_key,
)
from sgsynth.graph import serialize_scene_graph
from sgsynth.prompt import load_template, render_caption_key, render_object_entry

logger = logging.getLogger(__name__)


class SchemaError(PipelineError):
    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class DanglingCategoryId(SchemaError):
    """An annotation references a category id that the file never defines."""


def ingest_coco(path):
    """COCO detection JSON -> list of ImageRecord, in the file's image order.

    Boxes convert xywh -> xyxy and clamp to the image bounds; boxes left with
    zero area are dropped with a logged warning. Object ordinals run 1..k per
    image in annotation order. Images with fewer than two objects are kept
    but flagged in the log; corpus synthesis skips them later.
    """
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except ValueError as error:
        raise SchemaError(f"annotation file is not valid JSON: {error}") from error
    if not isinstance(raw, dict):
        raise SchemaError("annotation file must be a JSON object")
    for section in ("images", "annotations", "categories"):
        if not isinstance(raw.get(section), list):
            raise SchemaError(f"annotation file lacks a list section {section!r}")

    categories = {}
    for cat in raw["categories"]:
        try:
            categories[cat["id"]] = str(cat["name"]).strip().lower()
        except (TypeError, KeyError) as error:
            raise SchemaError(f"bad category entry {cat!r}") from error

    images = {}
    order = []
    for img in raw["images"]:
        try:
            image_id = str(img["id"])
            width = int(img["width"])
            height = int(img["height"])
        except (TypeError, KeyError, ValueError) as error:
            raise SchemaError(f"bad image entry {img!r}") from error
        if image_id in images:
            raise SchemaError(f"duplicate image id {image_id}")
        images[image_id] = {"width": width, "height": height, "objects": []}
        order.append(image_id)

    for ann in raw["annotations"]:
        try:
            image_id = str(ann["image_id"])
            category_id = ann["category_id"]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (TypeError, KeyError, ValueError) as error:
            raise SchemaError(f"bad annotation entry {ann!r}") from error
        if category_id not in categories:
            raise DanglingCategoryId(f"annotation references unknown category_id {category_id!r}")
        if image_id not in images:
            raise SchemaError(f"annotation references unknown image {image_id!r}")
        entry = images[image_id]
        x1, y1 = max(0.0, x), max(0.0, y)
        x2 = min(float(entry["width"]), x + w)
        y2 = min(float(entry["height"]), y + h)
        if x2 <= x1 or y2 <= y1:
            logger.warning("dropping zero-area box after clamping: image=%s bbox=%s", image_id, ann["bbox"])
            continue
        score = ann.get("score")
        entry["objects"].append(
            ObjectInstance(
                categories[category_id],
                len(entry["objects"]) + 1,
                BBox(x1, y1, x2, y2),
                float(score) if score is not None else None,
            )
        )

    records = []
    flagged = 0
    for image_id in order:
        entry = images[image_id]
        if len(entry["objects"]) < 2:
            flagged += 1
            logger.info("image %s has %d object(s); corpus synthesis will skip it", image_id, len(entry["objects"]))
        records.append(ImageRecord(image_id, entry["width"], entry["height"], tuple(entry["objects"])))
    if flagged:
        logger.info("%d image(s) have fewer than two objects", flagged)
    return records


# --- image-record files (intermediate pipeline artifacts) -------------------


def _region_to_json(region):
    if region == GLOBAL_REGION:
        return GLOBAL_REGION
    first, second = region
    return [f"{first.category}.{first.index}", f"{second.category}.{second.index}"]


def record_to_dict(record):
    objects = []
    for obj in record.objects:
        data = {"category": obj.category, "index": obj.index, "box": list(obj.box.as_tuple())}
        if obj.score is not None:
            data["score"] = obj.score
        objects.append(data)
    captions = [
        {"regions": [_region_to_json(region) for region in key.regions], "text": text}
        for key, text in record.captions
    ]
    return {
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "objects": objects,
        "captions": captions,
    }


def record_from_dict(data, line=None):
    try:
        objects = tuple(
            ObjectInstance(o["category"], o["index"], BBox(*o["box"]), o.get("score"))
            for o in data["objects"]
        )
        entries = []
        for item in data["captions"]:
            regions = []
            for region in item["regions"]:
                if region == GLOBAL_REGION:
                    regions.append(GLOBAL_REGION)
                else:
                    first, second = region
                    regions.append((parse_object_key(first, objects), parse_object_key(second, objects)))
            entries.append((CaptionKey(tuple(regions)), item["text"]))
        return ImageRecord(
            str(data["image_id"]), data["width"], data["height"], objects, CaptionSet(tuple(entries))
        )
    except (TypeError, KeyError, ValueError, PipelineError) as error:
        raise SchemaError(f"bad image record: {error}", line=line) from error


def write_records(records, path):
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
    return len(records)


def read_records(path):
    records = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except ValueError as error:
                raise SchemaError(f"invalid JSON: {error}", line=number) from error
            records.append(record_from_dict(data, line=number))
    return records


# --- pseudo-label corpus -----------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    template_id: str
    template_checksum: str
    model_name: str
    timestamp: str
    rejected_count: int


@dataclass(frozen=True)
class PseudoLabelEntry:
    """One synthesized image: rendered inputs plus the accepted triplets.

    `relationships` are expected to have passed graph.validate against the
    source record; the writer does not re-check.
    """

    image_id: str
    width: int
    height: int
    objects: tuple  # rendered object entries ("category.index:[x1, y1, x2, y2]")
    captions: tuple  # ordered (rendered caption key, text) pairs
    relationships: tuple  # RelationshipTriplet
    provenance: Provenance


def build_entry(record, accepted_graph, template, model_name, timestamp, rejected_count):
    objects = tuple(render_object_entry(obj) for obj in record.objects)
    captions = tuple((render_caption_key(key), text) for key, text in record.captions)
    return PseudoLabelEntry(
        record.image_id,
        record.width,
        record.height,
        objects,
        captions,
        accepted_graph.triplets,
        Provenance(template.template_id, template.checksum, model_name, timestamp, rejected_count),
    )


def _triplet_to_json(triplet):
    rel = {"source": triplet.source, "target": triplet.target, "relation": triplet.relation}
    if triplet.confidence is not None:
        rel["confidence"] = triplet.confidence
    return rel


def entry_to_dict(entry):
    return {
        "image_id": entry.image_id,
        "width": entry.width,
        "height": entry.height,
        "objects": list(entry.objects),
        "captions": dict(entry.captions),
        "relationships": [_triplet_to_json(t) for t in entry.relationships],
        "provenance": {
            "template_id": entry.provenance.template_id,
            "template_checksum": entry.provenance.template_checksum,
            "model_name": entry.provenance.model_name,
            "timestamp": entry.provenance.timestamp,
            "rejected_count": entry.provenance.rejected_count,
        },
    }


def entry_from_dict(data, line=None):
    try:
        triplets = tuple(
            RelationshipTriplet(r["source"], r["target"], r["relation"], r.get("confidence"))
            for r in data["relationships"]
        )
        prov = data["provenance"]
        return PseudoLabelEntry(
            str(data["image_id"]),
            data["width"],
            data["height"],
            tuple(data["objects"]),
            tuple((key, text) for key, text in data["captions"].items()),
            triplets,
            Provenance(
                prov["template_id"],
                prov["template_checksum"],
                prov["model_name"],
                prov["timestamp"],
                prov["rejected_count"],
            ),
        )
    except (TypeError, KeyError, ValueError, AttributeError) as error:
        raise SchemaError(f"bad pseudo-label entry: {error}", line=line) from error


def pseudo_label_line(entry):
    return json.dumps(entry_to_dict(entry), ensure_ascii=False)


def write_pseudo_labels(entries, path):
    with Path(path).open("w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(pseudo_label_line(entry) + "\n")
    return len(entries)


def read_pseudo_labels(path):
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except ValueError as error:
                raise SchemaError(f"invalid JSON: {error}", line=number) from error
            entries.append(entry_from_dict(data, line=number))
    return entries


# --- instruction-tuning pairs ------------------------------------------------


@dataclass(frozen=True)
class InstructionPair:
    """Three-field fine-tuning sample: full task text in `instruction`,
    `input` left empty, the accepted-graph JSON in `output`."""

    instruction: str
    input: str
    output: str


def entry_input_json(entry):
    payload = {
        "image_id": entry.image_id,
        "width": entry.width,
        "height": entry.height,
        "objects": list(entry.objects),
        "captions": dict(entry.captions),
    }
    return json.dumps(payload, ensure_ascii=False)


def entry_response_json(entry):
    return serialize_scene_graph(SceneGraph(entry.image_id, entry.relationships))


def instruction_pair_for(entry, template=None):
    template = template or load_template(entry.provenance.template_id)
    if template.checksum != entry.provenance.template_checksum:
        raise SchemaError(
            f"template {template.template_id!r} checksum {template.checksum} does not match "
            f"entry provenance {entry.provenance.template_checksum}"
        )
    instruction = template.user_template.replace("{Input}", entry_input_json(entry))
    return InstructionPair(instruction, "", entry_response_json(entry))


def export_instruction_pairs(entries, path):
    count = 0
    templates = {}
    with Path(path).open("w", encoding="utf-8") as handle:
        for entry in entries:
            template_id = entry.provenance.template_id
            if template_id not in templates:
                templates[template_id] = load_template(template_id)
            pair = instruction_pair_for(entry, templates[template_id])
            handle.write(
                json.dumps(
                    {"instruction": pair.instruction, "input": pair.input, "output": pair.output},
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def read_instruction_pairs(path):
    pairs = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                pairs.append(InstructionPair(data["instruction"], data["input"], data["output"]))
            except (ValueError, KeyError, TypeError) as error:
                raise SchemaError(f"bad instruction pair: {error}", line=number) from error
    return pairs


def write_instruction_pairs(pairs, path):
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {"instruction": pair.instruction, "input": pair.input, "output": pair.output},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(pairs)


# --- predicate statistics ----------------------------------------------------


@dataclass
class PredicateHistogram:
    counts: dict  # predicate -> occurrences
    total: int


def predicate_stats(entries):
    """Exact multiset count of relation strings across accepted triplets."""
    counts = Counter()
    for entry in entries:
        for triplet in entry.relationships:
            counts[triplet.relation] += 1
    return PredicateHistogram(dict(counts), sum(counts.values()))


def head_predicates(hist, k=10):
    return sorted(hist.counts.items(), key=lambda item: (-item[1], item[0]))[:k]


def tail_predicates(hist, k=10):
    return sorted(hist.counts.items(), key=lambda item: (item[1], item[0]))[:k]


def stats_to_dict(hist, k=10):
    return {
        "total": hist.total,
        "num_predicates": len(hist.counts),
        "head": [[predicate, count] for predicate, count in head_predicates(hist, k)],
        "tail": [[predicate, count] for predicate, count in tail_predicates(hist, k)],
    }


def render_stats_table(hist, k=10):
    lines = []
    for title, rows in (("head", head_predicates(hist, k)), ("tail", tail_predicates(hist, k))):
        lines.append(f"{title}-{k} predicates")
        width = max([len(p) for p, _ in rows] + [len("predicate")])
        lines.append(f"{'predicate'.ljust(width)}  count")
        for predicate, count in rows:
            lines.append(f"{predicate.ljust(width)}  {count}")
        lines.append("")
    lines.append(f"total triplets: {hist.total} over {len(hist.counts)} predicates")
    return "\n".join(lines)
