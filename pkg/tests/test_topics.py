import itertools

import pytest

from mqttg.errors import InvalidTopic
from mqttg.sim.oracle import oracle_topic_matches
from mqttg.topics import is_valid_filter, topic_matches, validate_filter, validate_topic_name


@pytest.mark.parametrize(
    "flt,topic,expected",
    [
        ("a/+", "a/b", True),
        ("a/#", "a/b/c", True),
        ("a/+", "a/b/c", False),
        ("a/#", "a", True),
        ("#", "a/b", True),
        ("+/+", "a/b", True),
        ("+", "a/b", False),
        ("a/b", "a/b", True),
        ("a/b", "a/c", False),
        ("+/b", "/b", True),
        ("a//b", "a//b", True),
        ("a/+/c", "a//c", True),
        ("#", "$SYSg/geofence/set", False),
        ("+/geofence/set", "$SYSg/geofence/set", False),
        ("$SYSg/#", "$SYSg/geofence/set", True),
        ("A/b", "a/b", False),
    ],
)
def test_matches(flt, topic, expected):
    assert topic_matches(flt, topic) is expected


@pytest.mark.parametrize("bad", ["", "a/#/b", "a#", "a/b+", "++", "#/a"])
def test_invalid_filters(bad):
    assert not is_valid_filter(bad)
    with pytest.raises(InvalidTopic):
        validate_filter(bad)


@pytest.mark.parametrize("bad", ["", "a/+", "#", "a\x00"])
def test_invalid_topic_names(bad):
    with pytest.raises(InvalidTopic):
        validate_topic_name(bad)


def test_exhaustive_against_regex_oracle():
    names = ["a", "b", "", "$x"]
    topics = ["/".join(p) for n in (1, 2, 3) for p in itertools.product(names, repeat=n)]
    topics = [t for t in topics if t]
    parts = ["a", "+", "", "$x"]
    filters = ["/".join(p) for n in (1, 2, 3) for p in itertools.product(parts, repeat=n)]
    filters += [f + "/#" for f in filters] + ["#"]
    filters = [f for f in filters if f and is_valid_filter(f)]
    for f in filters:
        for t in topics:
            assert topic_matches(f, t) == oracle_topic_matches(f, t), (f, t)
