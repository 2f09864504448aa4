import pytest
from hypothesis import given

from sgsynth.core import (
    GLOBAL_REGION,
    AmbiguousKey,
    BBox,
    CaptionKey,
    CaptionSet,
    ImageRecord,
    ObjectInstance,
    RelationshipTriplet,
    UnknownObjectKey,
    normalize_predicate,
    parse_object_key,
    render_object_key,
    round_half_up,
)
from strategies import object_lists


@pytest.mark.parametrize(
    "value, expected",
    [(1.4, 1), (1.5, 2), (2.5, 3), (0.0, 0), (0.49999, 0), (10.0, 10)],
)
def test_round_half_up(value, expected):
    assert round_half_up(value) == expected


@pytest.mark.parametrize(
    "coords",
    [(0, 0, 0, 10), (0, 0, 10, 0), (5, 5, 5, 5), (10, 0, 5, 5), (-1, 0, 5, 5), (0, 0, float("inf"), 5)],
)
def test_bbox_rejects_degenerate(coords):
    with pytest.raises(ValueError):
        BBox(*coords)


def test_bbox_keeps_full_precision():
    box = BBox(1.4, 2.5, 10.0, 20.25)
    assert box.as_tuple() == (1.4, 2.5, 10.0, 20.25)
    assert box.as_int_tuple() == (1, 3, 10, 20)


@pytest.mark.parametrize("category", ["", "Tie", "tie.1", "a:b", "x[", "y]", " tie"])
def test_object_rejects_bad_category(category):
    with pytest.raises(ValueError):
        ObjectInstance(category, 1, BBox(0, 0, 1, 1))


def test_object_allows_spaces_inside_category():
    obj = ObjectInstance("traffic light", 2, BBox(0, 0, 1, 1))
    assert render_object_key(obj) == "traffic light.2"


@pytest.mark.parametrize("index", [0, -1, 1.5, True])
def test_object_rejects_bad_index(index):
    with pytest.raises(ValueError):
        ObjectInstance("tie", index, BBox(0, 0, 1, 1))


def test_render_object_key_examples():
    assert render_object_key(ObjectInstance("tie", 1, BBox(0, 0, 1, 1))) == "tie.1"
    assert render_object_key(ObjectInstance("person", 6, BBox(0, 0, 1, 1))) == "person.6"
    assert render_object_key(ObjectInstance("book", 3, BBox(0, 0, 1, 1))) == "book.3"


def test_parse_object_key_resolves(objects_395890):
    found = parse_object_key("person.2", objects_395890)
    assert found.category == "person" and found.index == 2
    assert found.box.as_tuple() == (224, 60, 480, 483)


def test_parse_object_key_normalizes(objects_395890):
    assert parse_object_key("Person.2 ", objects_395890) is parse_object_key("person.2", objects_395890)


def test_parse_object_key_unknown(objects_395890):
    with pytest.raises(UnknownObjectKey):
        parse_object_key("dog.1", objects_395890)


def test_parse_object_key_ambiguous_on_bad_list():
    dup = [ObjectInstance("tie", 1, BBox(0, 0, 1, 1)), ObjectInstance("tie", 1, BBox(1, 1, 2, 2))]
    with pytest.raises(AmbiguousKey):
        parse_object_key("tie.1", dup)


@given(object_lists(max_objects=8))
def test_key_round_trip(objects):
    for obj in objects:
        assert parse_object_key(render_object_key(obj), objects) == obj


@given(object_lists(max_objects=8))
def test_rendering_injective(objects):
    keys = [render_object_key(obj) for obj in objects]
    assert len(keys) == len(set(keys))


def test_image_record_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        ImageRecord("1", 10, 10, (ObjectInstance("tie", 1, BBox(0, 0, 11, 5)),))


def test_image_record_rejects_duplicate_keys():
    objects = (
        ObjectInstance("tie", 1, BBox(0, 0, 5, 5)),
        ObjectInstance("tie", 1, BBox(1, 1, 6, 6)),
    )
    with pytest.raises(ValueError):
        ImageRecord("1", 10, 10, objects)


def test_caption_key_invariants(objects_395890):
    tie1, p2 = objects_395890[0], objects_395890[1]
    with pytest.raises(ValueError):
        CaptionKey(())
    with pytest.raises(ValueError):
        CaptionKey((GLOBAL_REGION, GLOBAL_REGION))
    with pytest.raises(ValueError):
        CaptionKey(((tie1, tie1),))
    assert CaptionKey((GLOBAL_REGION, (tie1, p2))).regions[0] == GLOBAL_REGION


def test_caption_set_rejects_duplicates_and_blank(objects_395890):
    tie1, p2 = objects_395890[0], objects_395890[1]
    key = CaptionKey(((tie1, p2),))
    with pytest.raises(ValueError):
        CaptionSet(((key, "a"), (key, "b")))
    with pytest.raises(ValueError):
        CaptionSet(((key, "  "),))


def test_triplet_normalizes_strings():
    t = RelationshipTriplet(" Person.2", "TIE.1 ", "  Standing  Next   To ")
    assert (t.source, t.target, t.relation) == ("person.2", "tie.1", "standing next to")


def test_triplet_tolerates_self_loop_and_blank_relation():
    t = RelationshipTriplet("a.1", "a.1", "  ")
    assert t.source == t.target and t.relation == ""


def test_triplet_rejects_bad_confidence():
    with pytest.raises(ValueError):
        RelationshipTriplet("a.1", "b.1", "near", 1.5)


def test_normalize_predicate():
    assert normalize_predicate("  Standing\tNext  to ") == "standing next to"
