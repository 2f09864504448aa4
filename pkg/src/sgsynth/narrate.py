"""Caption acquisition: one global caption plus one per union region.

Captions come from an external HTTP service (see CaptionerEndpoint for the
wire contract) or from the deterministic offline MockCaptioner. Entries whose
texts are byte-identical after trimming are merged into multi-region caption
keys by group_by_caption.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx

from sgsynth.core import (
    GLOBAL_REGION,
    BBox,
    CaptionKey,
    CaptionSet,
    PipelineError,
    render_object_key,
)
from sgsynth.geometry import union_box

logger = logging.getLogger(__name__)


class CaptionServiceUnavailable(PipelineError):
    """The captioning service failed for a region, retries included."""


class EmptyCaption(PipelineError):
    """The captioning service returned a blank caption."""


@dataclass(frozen=True)
class CaptionRequest:
    """One captioning call: the whole image when crop is None, else the crop."""

    image_uri: str
    crop: BBox | None = None


@dataclass(frozen=True)
class CaptionerEndpoint:
    base_url: str
    timeout: float = 30.0
    max_concurrency: int = 4
    auth_token: str | None = None

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError(f"max_concurrency must be at least 1, got {self.max_concurrency}")


def _region_name(region):
    if region == GLOBAL_REGION:
        return GLOBAL_REGION
    first, second = region
    return f"{render_object_key(first)}+{render_object_key(second)}"


def build_caption_request(record, region, uri_template="{image_id}"):
    """Request for one region. Pair crops are the tight union box, clamped to
    the image; a crop degenerating to zero area fails here (BBox rejects it).
    """
    uri = uri_template.replace("{image_id}", record.image_id)
    if region == GLOBAL_REGION:
        return CaptionRequest(uri, None)
    first, second = region
    hull = union_box(first.box, second.box)
    crop = BBox(
        max(0.0, hull.x1),
        max(0.0, hull.y1),
        min(float(record.width), hull.x2),
        min(float(record.height), hull.y2),
    )
    return CaptionRequest(uri, crop)


class HttpCaptioner:
    """POSTs {base_url}/caption with {"image_uri", "crop"}; expects {"caption"}.

    Transport failures and 5xx responses are retried a fixed number of times;
    other failures surface as CaptionServiceUnavailable immediately.
    """

    def __init__(self, endpoint, transport=None, retries=2, sleep=time.sleep):
        self.endpoint = endpoint
        self.max_concurrency = endpoint.max_concurrency
        self._retries = retries
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=endpoint.timeout)

    def close(self):
        self._client.close()

    def caption(self, request):
        url = self.endpoint.base_url.rstrip("/") + "/caption"
        body = {
            "image_uri": request.image_uri,
            "crop": list(request.crop.as_tuple()) if request.crop else None,
        }
        headers = {}
        if self.endpoint.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoint.auth_token}"
        last_error = None
        for attempt in range(self._retries + 1):
            try:
                response = self._client.post(url, json=body, headers=headers)
            except httpx.HTTPError as error:
                last_error = error
            else:
                if response.status_code == 200:
                    try:
                        text = response.json().get("caption", "")
                    except ValueError as error:
                        raise CaptionServiceUnavailable("captioner returned unparseable JSON") from error
                    if not isinstance(text, str) or not text.strip():
                        raise EmptyCaption(request.image_uri)
                    return text
                if response.status_code < 500:
                    raise CaptionServiceUnavailable(f"captioner rejected request: HTTP {response.status_code}")
                last_error = RuntimeError(f"HTTP {response.status_code}")
            if attempt < self._retries:
                self._sleep(min(2.0, 0.2 * 2**attempt))
        raise CaptionServiceUnavailable(
            f"captioner unreachable after {self._retries + 1} attempts"
        ) from last_error


class MockCaptioner:
    """Deterministic offline captioner for tests and dry runs.

    Texts follow 'caption of <image_uri>/<region>' where region is 'global'
    or the integer crop box, so distinct crops get distinct captions.
    """

    max_concurrency = 1

    def caption(self, request):
        if request.crop is None:
            region = GLOBAL_REGION
        else:
            region = "[{}, {}, {}, {}]".format(*request.crop.as_int_tuple())
        return f"caption of {request.image_uri}/{region}"


def generate_narratives(record, pairs, captioner, uri_template="{image_id}", global_caption=None):
    """Caption the whole image and every pair's union region, then merge
    identical texts into grouped keys.

    `global_caption`, when given, replaces the service call for the global
    region (caption source 'dataset'). Regions with blank captions are dropped
    with a logged warning, never silently replaced; service failures propagate.
    """
    regions = [GLOBAL_REGION] + [(pair.first, pair.second) for pair in pairs]
    requests = {region: build_caption_request(record, region, uri_template) for region in regions}

    def fetch(region):
        if region == GLOBAL_REGION and global_caption is not None:
            return global_caption
        return captioner.caption(requests[region])

    workers = max(1, getattr(captioner, "max_concurrency", 1))
    entries = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(region, pool.submit(fetch, region)) for region in regions]
        for region, future in futures:
            try:
                text = future.result().strip()
            except EmptyCaption:
                text = ""
            if not text:
                logger.warning(
                    "dropping region with blank caption: image=%s region=%s",
                    record.image_id,
                    _region_name(region),
                )
                continue
            entries.append((region, text))
    return group_by_caption(entries)


def group_by_caption(entries):
    """Merge entries whose trimmed texts are byte-identical.

    Single-region keys come first, in entry order; multi-region keys follow in
    first-appearance order. Inside a merged key the regions keep entry order
    except 'global', which moves to the front.
    """
    seen = set()
    for region, _ in entries:
        if region in seen:
            raise ValueError(f"duplicate region designator: {_region_name(region)}")
        seen.add(region)
    groups = {}
    for region, text in entries:
        groups.setdefault(text.strip(), []).append(region)
    singles, merged = [], []
    for text, regions in groups.items():
        if len(regions) == 1:
            singles.append((CaptionKey(tuple(regions)), text))
        else:
            ordered = [r for r in regions if r == GLOBAL_REGION] + [r for r in regions if r != GLOBAL_REGION]
            merged.append((CaptionKey(tuple(ordered)), text))
    return CaptionSet(tuple(singles + merged))
