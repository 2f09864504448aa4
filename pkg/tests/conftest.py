from pathlib import Path

import pytest
from hypothesis import settings

from sgsynth.core import GLOBAL_REGION, BBox, CaptionKey, CaptionSet, ImageRecord, ObjectInstance

settings.register_profile("default", deadline=None)
settings.load_profile("default")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


def obj(category, index, box):
    return ObjectInstance(category, index, BBox(*box))


# --- worked example: two ties and a person -----------------------------------


def build_objects_227884():
    return (
        obj("tie", 1, (217, 409, 233, 436)),
        obj("tie", 2, (212, 409, 233, 507)),
        obj("person", 3, (119, 289, 300, 523)),
    )


def build_record_227884():
    tie1, tie2, person3 = build_objects_227884()
    captions = CaptionSet(
        (
            (CaptionKey((GLOBAL_REGION,)), "a man wearing a suit"),
            (CaptionKey(((tie1, tie2),)), "a purple and black cat sitting on a window ledge"),
            (
                CaptionKey(((tie2, person3), (tie1, person3))),
                "a man in a suit and tie sitting at a table with a laptop",
            ),
        )
    )
    return ImageRecord("227884", 444, 640, build_objects_227884(), captions)


# raw (region, text) entries in the order the captioner produced them
def build_entries_227884():
    tie1, tie2, person3 = build_objects_227884()
    laptop = "a man in a suit and tie sitting at a table with a laptop"
    return [
        (GLOBAL_REGION, "a man wearing a suit"),
        ((tie1, tie2), "a purple and black cat sitting on a window ledge"),
        ((tie2, person3), laptop),
        ((tie1, person3), laptop),
    ]


# --- worked example: couple with a cake made of books -------------------------


def build_objects_395890():
    return (
        obj("tie", 1, (269, 189, 293, 234)),
        obj("person", 2, (224, 60, 480, 483)),
        obj("book", 3, (257, 416, 368, 492)),
        obj("book", 4, (246, 455, 375, 534)),
        obj("book", 5, (228, 485, 391, 583)),
        obj("person", 6, (57, 143, 254, 638)),
    )


def build_record_395890():
    tie1, p2, b3, b4, b5, p6 = build_objects_395890()
    shared = "a man and woman standing next to a cake"
    captions = CaptionSet(
        (
            (CaptionKey(((p2, b3),)), "a man and a woman standing next to a cake"),
            (CaptionKey(((b3, b4),)), "a cake made of books"),
            (CaptionKey(((b3, b5),)), "a man standing next to a cake that is made of books"),
            (CaptionKey(((b4, b5),)), "a cake made out of books"),
            (CaptionKey(((b5, p6),)), "a man and a woman"),
            (CaptionKey(((b4, p6),)), "a man and a woman standing in front of a cake"),
            (CaptionKey((GLOBAL_REGION, (p2, p6), (tie1, p2), (p2, b4))), shared),
        )
    )
    return ImageRecord("395890", 480, 640, build_objects_395890(), captions)


def build_entries_395890():
    tie1, p2, b3, b4, b5, p6 = build_objects_395890()
    shared = "a man and woman standing next to a cake"
    return [
        (GLOBAL_REGION, shared),
        ((p2, b3), "a man and a woman standing next to a cake"),
        ((b3, b4), "a cake made of books"),
        ((b3, b5), "a man standing next to a cake that is made of books"),
        ((b4, b5), "a cake made out of books"),
        ((b5, p6), "a man and a woman"),
        ((b4, p6), "a man and a woman standing in front of a cake"),
        ((p2, p6), shared),
        ((tie1, p2), shared),
        ((p2, b4), shared),
    ]


# the nine overlapping pairs of the cake image, as canonical key pairs
PAIRS_395890 = {
    ("tie.1", "person.2"),
    ("person.2", "book.3"),
    ("person.2", "book.4"),
    ("person.2", "person.6"),
    ("book.3", "book.4"),
    ("book.3", "book.5"),
    ("book.4", "book.5"),
    ("book.4", "person.6"),
    ("book.5", "person.6"),
}


@pytest.fixture
def objects_227884():
    return build_objects_227884()


@pytest.fixture
def record_227884():
    return build_record_227884()


@pytest.fixture
def entries_227884():
    return build_entries_227884()


@pytest.fixture
def objects_395890():
    return build_objects_395890()


@pytest.fixture
def record_395890():
    return build_record_395890()


@pytest.fixture
def entries_395890():
    return build_entries_395890()
