"""MQTT 3.1.1 topic names, topic filters and wildcard matching."""

from __future__ import annotations

from .errors import InvalidTopic


def validate_filter(topic_filter: str) -> None:
    if not topic_filter:
        raise InvalidTopic("topic filter must not be empty")
    if "\x00" in topic_filter:
        raise InvalidTopic("topic filter contains U+0000")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level and (level != "#" or i != len(levels) - 1):
            raise InvalidTopic(f"'#' must be the whole last level: {topic_filter!r}")
        if "+" in level and level != "+":
            raise InvalidTopic(f"'+' must occupy a whole level: {topic_filter!r}")


def is_valid_filter(topic_filter: str) -> bool:
    try:
        validate_filter(topic_filter)
    except InvalidTopic:
        return False
    return True


def validate_topic_name(topic: str) -> None:
    if not topic:
        raise InvalidTopic("topic name must not be empty")
    if "+" in topic or "#" in topic:
        raise InvalidTopic(f"wildcards are not allowed in topic names: {topic!r}")
    if "\x00" in topic:
        raise InvalidTopic("topic name contains U+0000")


def topic_matches(topic_filter: str, topic: str) -> bool:
    """True if *topic* is selected by *topic_filter*.

    Topics starting with ``$`` are never matched by a wildcard in the first level.
    """
    if topic.startswith("$") and topic_filter[:1] in ("+", "#"):
        return False
    f_levels = topic_filter.split("/")
    t_levels = topic.split("/")
    for i, f in enumerate(f_levels):
        if f == "#":
            return True
        if i >= len(t_levels):
            return False
        if f != "+" and f != t_levels[i]:
            return False
    return len(f_levels) == len(t_levels)
