import random

import pytest
from hypothesis import given
import hypothesis.strategies as st

from sgsynth.core import BBox, ObjectInstance
from sgsynth.geometry import iou, union_box
from sgsynth.roi import SplitMix64, derive_image_seed, select_rois, valid_pair_count
from conftest import PAIRS_395890
from helpers import brute_force_pairs, random_objects
from strategies import object_lists


def keys(pair):
    return (
        f"{pair.first.category}.{pair.first.index}",
        f"{pair.second.category}.{pair.second.index}",
    )


def test_fixture_yields_exactly_nine_pairs(objects_395890):
    pairs = select_rois(objects_395890, 15, seed=0)
    assert {keys(p) for p in pairs} == PAIRS_395890
    assert valid_pair_count(objects_395890) == 9


def test_single_object_has_no_pairs():
    one = [ObjectInstance("tie", 1, BBox(0, 0, 5, 5))]
    assert select_rois(one, 10, seed=1) == []
    assert valid_pair_count(one) == 0
    assert valid_pair_count([]) == 0


def test_disjoint_objects_filtered():
    objs = [
        ObjectInstance("tie", 1, BBox(0, 0, 5, 5)),
        ObjectInstance("cup", 2, BBox(10, 10, 20, 20)),
    ]
    assert select_rois(objs, 10, seed=1) == []


def test_identical_boxes_count_as_one_pair():
    objs = [
        ObjectInstance("tie", 1, BBox(0, 0, 5, 5)),
        ObjectInstance("cup", 2, BBox(0, 0, 5, 5)),
    ]
    assert valid_pair_count(objs) == 1


def test_pairs_carry_union_and_canonical_order(objects_395890):
    order = {(obj.category, obj.index): i for i, obj in enumerate(objects_395890)}
    for pair in select_rois(objects_395890, 15, seed=9):
        assert order[(pair.first.category, pair.first.index)] < order[(pair.second.category, pair.second.index)]
        assert pair.union == union_box(pair.first.box, pair.second.box)
        assert iou(pair.first.box, pair.second.box) > 0


def test_truncation(objects_395890):
    assert len(select_rois(objects_395890, 4, seed=3)) == 4
    assert len(select_rois(objects_395890, 9, seed=3)) == 9
    assert len(select_rois(objects_395890, 100, seed=3)) == 9


def test_n_max_must_be_positive(objects_395890):
    with pytest.raises(ValueError):
        select_rois(objects_395890, 0, seed=1)


def test_deterministic_for_same_inputs(objects_395890):
    first = [keys(p) for p in select_rois(objects_395890, 5, seed=1234)]
    second = [keys(p) for p in select_rois(objects_395890, 5, seed=1234)]
    assert first == second


def test_pinned_shuffle_order(objects_395890):
    # regression pin: the SplitMix64-driven shuffle must never drift
    got = [keys(p) for p in select_rois(objects_395890, 9, seed=42)]
    expected = [
        ("book.4", "person.6"),
        ("book.3", "book.4"),
        ("book.5", "person.6"),
        ("person.2", "book.4"),
        ("book.3", "book.5"),
        ("book.4", "book.5"),
        ("tie.1", "person.2"),
        ("person.2", "person.6"),
        ("person.2", "book.3"),
    ]
    assert got == expected


def test_splitmix64_reference_values():
    # first outputs for seed 1234567, cross-checked against the published
    # splitmix64 reference implementation
    rng = SplitMix64(1234567)
    got = [rng.next_uint64() for _ in range(3)]
    assert all(0 <= v < 2**64 for v in got)
    assert got == [6457827717110365317, 3203168211198807973, 9817491932198370423]


def test_derive_image_seed_is_stable_and_distinct():
    assert derive_image_seed(0, "395890") == derive_image_seed(0, "395890")
    assert derive_image_seed(0, "395890") != derive_image_seed(1, "395890")
    assert derive_image_seed(0, "395890") != derive_image_seed(0, "395891")


def test_matches_brute_force_on_random_images():
    rng = random.Random(777)
    for _ in range(100):
        objects = random_objects(rng, max_objects=12)
        oracle = brute_force_pairs(objects)
        full = select_rois(objects, max(1, len(oracle) + 5), seed=rng.randrange(2**64))
        assert {keys(p) for p in full} == oracle
        truncated = select_rois(objects, 3, seed=rng.randrange(2**64))
        assert {keys(p) for p in truncated} <= oracle


@given(object_lists(max_objects=8), st.integers(0, 2**64 - 1))
def test_reordering_objects_never_admits_bad_pairs(objects, seed):
    shuffled = list(objects)
    random.Random(seed & 0xFFFF).shuffle(shuffled)
    oracle = brute_force_pairs(objects)

    def unordered(pairs):
        return {frozenset(keys(p)) for p in pairs}

    assert unordered(select_rois(shuffled, 50, seed)) == {frozenset(p) for p in oracle}
