"""Region-of-interest selection over annotated objects.

Candidates are all unordered object pairs with IoU strictly greater than
zero, enumerated in input-list (canonical) order. Selection shuffles the
candidates and keeps the first n_max. The shuffle is an explicit
Fisher-Yates pass driven by SplitMix64, pinned here so that identical
(objects, n_max, seed) inputs reproduce bit-identical selections on any
platform and Python version. Per-image seeds come from derive_image_seed —
the first eight bytes of SHA-256("<seed>:<image_id>") — which makes parallel
corpus runs independent of image processing order.
"""

import hashlib
from dataclasses import dataclass
from itertools import combinations

from sgsynth.core import BBox, ObjectInstance
from sgsynth.geometry import iou, union_box

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit splitmix generator: tiny, seedable and portable."""

    def __init__(self, seed):
        self._state = seed & _MASK64

    def next_uint64(self):
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound):
        """Uniform integer in [0, bound), unbiased via rejection sampling."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            value = self.next_uint64()
            if value < limit:
                return value % bound


def derive_image_seed(global_seed, image_id):
    digest = hashlib.sha256(f"{global_seed}:{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def fisher_yates(items, rng):
    """Classic in-place shuffle, high index down."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.below(i + 1)
        items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class ObjectPair:
    """Two overlapping objects plus the bounding hull of their boxes.

    `first` precedes `second` in the image's object order.
    """

    first: ObjectInstance
    second: ObjectInstance
    union: BBox


def _make_pair(first, second):
    return ObjectPair(first, second, union_box(first.box, second.box))


def iter_valid_pairs(objects):
    """All unordered pairs with IoU > 0, in canonical (input list) order."""
    for a, b in combinations(objects, 2):
        if iou(a.box, b.box) > 0:
            yield _make_pair(a, b)


def valid_pair_count(objects):
    return sum(1 for _ in iter_valid_pairs(objects))


def select_rois(objects, n_max, seed):
    """Shuffle the valid pairs with `seed` and keep at most n_max of them."""
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    pairs = list(iter_valid_pairs(objects))
    fisher_yates(pairs, SplitMix64(seed))
    return pairs[:n_max]
