"""Prompt construction: the exact textual encoding of image records and the
two-message chat bundle sent to the language model.

The instruction template is a versioned on-disk asset
(templates/<id>.system.txt plus templates/<id>.user.txt, checksummed
together) so synthesized corpora carry an auditable prompt provenance.
Rendering is pure: byte-identical records produce byte-identical prompts.
"""

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from sgsynth.core import GLOBAL_REGION, PipelineError, render_object_key

DEFAULT_TEMPLATE_ID = "sg_extract_v1"
DEFAULT_BATCH_CAP = 4

INPUT_PLACEHOLDER = "{Input}"


class MissingCaptions(PipelineError):
    """A record reached prompt rendering with an empty caption set."""


class BatchTooLarge(PipelineError):
    """More records packed into one prompt than the configured cap."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user"):
            raise ValueError(f"role must be 'system' or 'user', got {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple
    image_ids: tuple
    template_id: str
    template_checksum: str
    rendered_input: str

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "image_ids", tuple(self.image_ids))
        roles = [message.role for message in self.messages]
        if roles != ["system", "user"]:
            raise ValueError(f"bundle needs exactly one system and one user message, got {roles}")
        if not self.image_ids or len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("image_ids must be non-empty and duplicate-free")

    @property
    def system(self):
        return self.messages[0].content

    @property
    def user(self):
        return self.messages[1].content


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    system_text: str
    user_template: str
    checksum: str


@lru_cache(maxsize=8)
def load_template(template_id=DEFAULT_TEMPLATE_ID):
    root = resources.files("sgsynth") / "templates"
    system_bytes = (root / f"{template_id}.system.txt").read_bytes()
    user_bytes = (root / f"{template_id}.user.txt").read_bytes()
    user_text = user_bytes.decode("utf-8")
    if INPUT_PLACEHOLDER not in user_text:
        raise PipelineError(f"template {template_id!r} lacks the {INPUT_PLACEHOLDER} placeholder")
    checksum = "sha256:" + hashlib.sha256(system_bytes + b"\x00" + user_bytes).hexdigest()
    return PromptTemplate(template_id, system_bytes.decode("utf-8"), user_text, checksum)


def format_box(box):
    """'[x1, y1, x2, y2]' with round-half-up integer coordinates."""
    x1, y1, x2, y2 = box.as_int_tuple()
    return f"[{x1}, {y1}, {x2}, {y2}]"


def render_object_entry(obj):
    """'<category>.<index>:[x1, y1, x2, y2]' — no space after the colon."""
    return f"{render_object_key(obj)}:{format_box(obj.box)}"


def render_region(region):
    if region == GLOBAL_REGION:
        return GLOBAL_REGION
    first, second = region
    return f"Union({render_object_entry(first)}, {render_object_entry(second)})"


def render_caption_key(key):
    return " ; ".join(render_region(region) for region in key.regions)


def render_record(record):
    """Per-record JSON object with fixed key order for byte-stable output."""
    if not record.captions:
        raise MissingCaptions(record.image_id)
    captions = {}
    for key, text in record.captions:
        captions[render_caption_key(key)] = text
    return {
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "objects": [render_object_entry(obj) for obj in record.objects],
        "captions": captions,
    }


def render_input(records):
    """JSON text for one or more records; a single record is emitted bare."""
    rendered = [render_record(record) for record in records]
    payload = rendered[0] if len(rendered) == 1 else rendered
    return json.dumps(payload, ensure_ascii=False)


def build_prompt(records, template_id=DEFAULT_TEMPLATE_ID, batch_cap=DEFAULT_BATCH_CAP):
    if not 1 <= len(records) <= batch_cap:
        raise BatchTooLarge(f"{len(records)} records in one prompt (cap {batch_cap})")
    template = load_template(template_id)
    rendered = render_input(records)
    user = template.user_template.replace(INPUT_PLACEHOLDER, rendered)
    messages = (ChatMessage("system", template.system_text), ChatMessage("user", user))
    image_ids = tuple(record.image_id for record in records)
    return PromptBundle(messages, image_ids, template.template_id, template.checksum, rendered)
