"""Domain types shared across the pipeline: boxes, objects, captions, graphs.

All values are immutable after construction and safe to share between threads.
"""

import math
from dataclasses import dataclass

GLOBAL_REGION = "global"

_BANNED_CATEGORY_CHARS = ".:[]"


class PipelineError(Exception):
    """Base class for every error this package raises on purpose."""


class UnknownObjectKey(PipelineError, KeyError):
    """An object key does not resolve against an image's object list."""


class AmbiguousKey(PipelineError):
    """An object key resolves to more than one object; only possible when the
    object list violates the per-image (category, index) uniqueness rule."""


def round_half_up(value):
    """Integer rendering rule for coordinates: 1.4 -> 1, 1.5 -> 2, 2.5 -> 3."""
    return int(math.floor(value + 0.5))


def normalize_predicate(relation):
    """Lowercase and collapse whitespace runs; no synonym folding."""
    return " ".join(relation.lower().split())


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box, corners (x1, y1, x2, y2) with x1 < x2, y1 < y2.

    Coordinates are kept at full precision; they are rendered as integers only
    at prompt-encoding time. Zero-area boxes are rejected outright because
    they break IoU downstream.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite numbers, got {coords!r}")
        if min(coords) < 0:
            raise ValueError(f"box coordinates must be non-negative, got {coords!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box must have positive width and height, got {coords!r}")

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def as_int_tuple(self):
        return tuple(round_half_up(c) for c in self.as_tuple())


@dataclass(frozen=True)
class ObjectInstance:
    """One annotated object; (category, index) is unique within an image."""

    category: str
    index: int
    box: BBox
    score: float | None = None  # optional detector confidence; carried, never used

    def __post_init__(self):
        if not self.category or self.category != self.category.strip().lower():
            raise ValueError(f"category must be a non-empty lowercase token, got {self.category!r}")
        if any(ch in self.category for ch in _BANNED_CATEGORY_CHARS):
            raise ValueError(f"category may not contain any of {_BANNED_CATEGORY_CHARS!r}: {self.category!r}")
        if isinstance(self.index, bool) or not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"object index must be a positive integer ordinal, got {self.index!r}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")


def render_object_key(obj):
    """The key scheme used wherever an object is named in text: '<category>.<index>'."""
    return f"{obj.category}.{obj.index}"


def parse_object_key(key, objects):
    """Resolve a key against one image's objects; lowercases and trims first."""
    wanted = key.strip().lower()
    matches = [obj for obj in objects if render_object_key(obj) == wanted]
    if not matches:
        raise UnknownObjectKey(wanted)
    if len(matches) > 1:
        raise AmbiguousKey(wanted)
    return matches[0]


def _is_pair_region(region):
    return (
        isinstance(region, tuple)
        and len(region) == 2
        and all(isinstance(obj, ObjectInstance) for obj in region)
        and region[0] != region[1]
    )


@dataclass(frozen=True)
class CaptionKey:
    """Caption addressee: one or more regions sharing a single caption text.

    A region is either the literal 'global' (the whole image) or an ordered
    pair of objects whose union box was captioned.
    """

    regions: tuple

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not self.regions:
            raise ValueError("caption key must name at least one region")
        if sum(1 for r in self.regions if r == GLOBAL_REGION) > 1:
            raise ValueError("'global' may appear at most once in a caption key")
        for region in self.regions:
            if region != GLOBAL_REGION and not _is_pair_region(region):
                raise ValueError(f"region must be 'global' or a pair of distinct objects, got {region!r}")


@dataclass(frozen=True)
class CaptionSet:
    """Ordered (CaptionKey, text) entries; keys unique, texts non-blank."""

    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((key, text) for key, text in self.entries))
        seen = set()
        for key, text in self.entries:
            if not isinstance(key, CaptionKey):
                raise ValueError(f"caption entries are keyed by CaptionKey, got {key!r}")
            if key in seen:
                raise ValueError(f"duplicate caption key: {key!r}")
            seen.add(key)
            if not text or not text.strip():
                raise ValueError("caption text must be non-empty")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __bool__(self):
        return bool(self.entries)


@dataclass(frozen=True)
class ImageRecord:
    """An image's textual stand-in: identity, size, objects and captions."""

    image_id: str
    width: int
    height: int
    objects: tuple = ()
    captions: CaptionSet = CaptionSet()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        for side, name in ((self.width, "width"), (self.height, "height")):
            if isinstance(side, bool) or not isinstance(side, int) or side < 1:
                raise ValueError(f"{name} must be a positive integer, got {side!r}")
        seen = set()
        for obj in self.objects:
            if obj.box.x2 > self.width or obj.box.y2 > self.height:
                raise ValueError(
                    f"object {render_object_key(obj)} box {obj.box.as_tuple()} exceeds "
                    f"image bounds {self.width}x{self.height}"
                )
            pair = (obj.category, obj.index)
            if pair in seen:
                raise ValueError(f"duplicate object key {render_object_key(obj)} in image {self.image_id}")
            seen.add(pair)


@dataclass(frozen=True)
class RelationshipTriplet:
    """A '<source> <relation> <target>' edge between two object keys.

    Construction normalizes the strings but deliberately tolerates self-loops,
    blank relations and duplicates: those are classified and rejected by
    graph.validate with a reason code, not hidden behind constructor errors.
    """

    source: str
    target: str
    relation: str
    confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", self.source.strip().lower())
        object.__setattr__(self, "target", self.target.strip().lower())
        object.__setattr__(self, "relation", normalize_predicate(self.relation))
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence!r}")


@dataclass(frozen=True)
class SceneGraph:
    """Relationship triplets attributed to one image.

    Graphs returned by graph.validate are duplicate-free with every key
    resolvable; freshly parsed graphs may not be.
    """

    image_id: str
    triplets: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "triplets", tuple(self.triplets))
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
