"""Scene-graph pseudo-label synthesis and evaluation toolkit.

Builds LLM prompts from object annotations plus global and region-specific
captions, parses and validates the returned relationship triplets, persists
them as a line-delimited training corpus, and scores grounded predictions
with recall@K under a union-box match criterion.
"""

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
    render_object_key,
)

__version__ = "0.1.0"

__all__ = [
    "GLOBAL_REGION",
    "BBox",
    "CaptionKey",
    "CaptionSet",
    "ImageRecord",
    "ObjectInstance",
    "PipelineError",
    "RelationshipTriplet",
    "SceneGraph",
    "parse_object_key",
    "render_object_key",
    "__version__",
]
