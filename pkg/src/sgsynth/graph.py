"""Parse LLM completions into scene graphs and enforce the output contract:
resolvable object keys, no self-loops or duplicates, non-blank predicates,
and the cardinality rules behind the prompt's logical-consistency
requirement.

JSON extraction is deliberately lenient (code fences, surrounding prose and
trailing commas are tolerated); the schema applied after extraction is
strict.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from sgsynth.core import (
    PipelineError,
    RelationshipTriplet,
    SceneGraph,
    UnknownObjectKey,
    normalize_predicate,
    parse_object_key,
    render_object_key,
)


class MalformedJson(PipelineError):
    """No parseable JSON object or array anywhere in the completion."""


class SchemaMismatch(PipelineError):
    """JSON parsed but does not match the expected response schema."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ImageIdMismatch(PipelineError):
    """A scene graph was validated against the wrong image record."""


class RejectReason(str, Enum):
    UNKNOWN_OBJECT = "UnknownObject"
    SELF_LOOP = "SelfLoop"
    DUPLICATE = "Duplicate"
    EXCLUSIVITY_VIOLATION = "ExclusivityViolation"
    EMPTY_RELATION = "EmptyRelation"


@dataclass(frozen=True)
class ExclusivityRule:
    """At most max_partners accepted <predicate> edges may share one value of
    the bound role, e.g. ('wearing', 'target', 1): one wearer per garment."""

    predicate: str
    bound_role: str
    max_partners: int = 1

    def __post_init__(self):
        if self.bound_role not in ("source", "target"):
            raise ValueError(f"bound_role must be 'source' or 'target', got {self.bound_role!r}")
        if not self.predicate or self.predicate != normalize_predicate(self.predicate):
            raise ValueError(f"predicate must be a normalized lowercase phrase, got {self.predicate!r}")
        if self.max_partners < 1:
            raise ValueError(f"max_partners must be at least 1, got {self.max_partners}")


# Exactly the two impossibilities the prompt names; anything further is
# operator-supplied configuration, not invented here.
DEFAULT_RULES = (
    ExclusivityRule("riding", "source", 1),
    ExclusivityRule("wearing", "target", 1),
)


@dataclass(frozen=True)
class ValidationReport:
    """Partition of one parsed graph into accepted triplets and rejects."""

    accepted: SceneGraph
    rejected: tuple  # of (RelationshipTriplet, RejectReason)


_MAX_SCAN_CANDIDATES = 64


def _strip_trailing_commas(text):
    # LLMs emit ",]" / ",}" routinely and strict JSON refuses them. The pass
    # tracks string literals so commas inside captions survive.
    out = []
    in_string = False
    escaped = False
    length = len(text)
    i = 0
    while i < length:
        ch = text[i]
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            out.append(ch)
            in_string = True
        elif ch == ",":
            j = i + 1
            while j < length and text[j] in " \t\r\n":
                j += 1
            if not (j < length and text[j] in "]}"):
                out.append(ch)
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _scan_candidates(text, limit):
    count = 0
    for match in re.finditer(r"[\[{]", text):
        if count >= limit:
            return
        count += 1
        yield match.start()


def extract_first_json(text):
    """First JSON object or array embedded in `text`.

    Tolerates code fences, surrounding prose and trailing commas; scalar JSON
    values do not count. Raises MalformedJson when nothing parses.
    """
    decoder = json.JSONDecoder()
    stripped = _strip_trailing_commas(text)
    for start in _scan_candidates(stripped, _MAX_SCAN_CANDIDATES):
        try:
            value, _ = decoder.raw_decode(stripped, start)
        except (ValueError, RecursionError):
            continue
        return value
    # Prose with unbalanced quotes can desync the comma pass above; retry with
    # per-candidate stripping on a short prefix of candidates.
    for start in _scan_candidates(text, 16):
        try:
            value, _ = decoder.raw_decode(_strip_trailing_commas(text[start:]))
        except (ValueError, RecursionError):
            continue
        return value
    raise MalformedJson("no JSON object or array found in completion")


def _require(condition, path, message):
    if not condition:
        raise SchemaMismatch(path, message)


def _parse_graph(item, path):
    _require(isinstance(item, dict), path, f"expected an object, got {type(item).__name__}")
    _require("image_id" in item, path, "missing 'image_id'")
    image_id = item["image_id"]
    _require(isinstance(image_id, str) and image_id.strip(), f"{path}.image_id", "must be a non-empty string")
    _require("relationships" in item, path, "missing 'relationships'")
    relationships = item["relationships"]
    _require(isinstance(relationships, list), f"{path}.relationships", "must be a list")
    triplets = []
    for i, rel in enumerate(relationships):
        rel_path = f"{path}.relationships[{i}]"
        _require(isinstance(rel, dict), rel_path, f"expected an object, got {type(rel).__name__}")
        values = {}
        for field in ("source", "target", "relation"):
            _require(field in rel, rel_path, f"missing {field!r}")
            _require(isinstance(rel[field], str), f"{rel_path}.{field}", "must be a string")
            values[field] = rel[field]
        confidence = rel.get("confidence")
        if confidence is not None:
            _require(
                isinstance(confidence, (int, float))
                and not isinstance(confidence, bool)
                and 0 <= confidence <= 1,
                f"{rel_path}.confidence",
                "must be a number in [0, 1]",
            )
            confidence = float(confidence)
        triplets.append(
            RelationshipTriplet(values["source"], values["target"], values["relation"], confidence)
        )
    return SceneGraph(image_id.strip(), tuple(triplets))


def parse_response(text):
    """Parse a raw completion into one SceneGraph per image object found.

    Accepts a bare per-image object or a list of them; each must carry
    'image_id' and a 'relationships' list of {source, target, relation}.
    """
    value = extract_first_json(text)
    if isinstance(value, list):
        return [_parse_graph(item, f"[{i}]") for i, item in enumerate(value)]
    return [_parse_graph(value, "$")]


def validate(graph, record, rules=DEFAULT_RULES):
    """Classify triplets in listed order into accepted and rejected.

    Earlier accepted triplets win exclusivity conflicts (the model output
    carries no confidence to arbitrate with); accepted triplets are rewritten
    with canonical object keys.
    """
    if graph.image_id != record.image_id:
        raise ImageIdMismatch(f"graph is for {graph.image_id!r}, record is {record.image_id!r}")
    accepted = []
    rejected = []
    accepted_ids = set()
    bound_counts = Counter()
    for triplet in graph.triplets:
        try:
            source = parse_object_key(triplet.source, record.objects)
            target = parse_object_key(triplet.target, record.objects)
        except UnknownObjectKey:
            rejected.append((triplet, RejectReason.UNKNOWN_OBJECT))
            continue
        source_key = render_object_key(source)
        target_key = render_object_key(target)
        if source_key == target_key:
            rejected.append((triplet, RejectReason.SELF_LOOP))
            continue
        identity = (source_key, target_key, triplet.relation)
        if identity in accepted_ids:
            rejected.append((triplet, RejectReason.DUPLICATE))
            continue
        if not triplet.relation:
            rejected.append((triplet, RejectReason.EMPTY_RELATION))
            continue
        over_limit = False
        for rule in rules:
            if rule.predicate != triplet.relation:
                continue
            bound = source_key if rule.bound_role == "source" else target_key
            if bound_counts[(rule.predicate, rule.bound_role, bound)] >= rule.max_partners:
                over_limit = True
                break
        if over_limit:
            rejected.append((triplet, RejectReason.EXCLUSIVITY_VIOLATION))
            continue
        accepted.append(RelationshipTriplet(source_key, target_key, triplet.relation, triplet.confidence))
        accepted_ids.add(identity)
        for rule in rules:
            if rule.predicate == triplet.relation:
                bound = source_key if rule.bound_role == "source" else target_key
                bound_counts[(rule.predicate, rule.bound_role, bound)] += 1
    return ValidationReport(SceneGraph(record.image_id, tuple(accepted)), tuple(rejected))


def serialize_scene_graph(graph):
    """Canonical response-shaped JSON for one graph; parse_response inverts it."""
    relationships = []
    for triplet in graph.triplets:
        rel = {"source": triplet.source, "target": triplet.target, "relation": triplet.relation}
        if triplet.confidence is not None:
            rel["confidence"] = triplet.confidence
        relationships.append(rel)
    return json.dumps({"image_id": graph.image_id, "relationships": relationships}, ensure_ascii=False)
