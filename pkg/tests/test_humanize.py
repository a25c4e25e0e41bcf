"""Formatting tests, checked against an independent reference implementation."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melt.humanize import HumanizeError, humanize, parse_human

KI, MI, GI = 1024, 1024 ** 2, 1024 ** 3


def ref_mantissa(m: float) -> str:
    """Reference mantissa rule, written independently of the implementation."""
    if m >= 100:
        return str(round(m))
    digits = 1 if m >= 1 or m == 0 else 2
    rounded = round(m, digits)
    if rounded == int(rounded):
        return str(int(rounded))
    text = f"{rounded:.{digits}f}"
    return text.rstrip("0") if "." in text else text


def ref_bytes_compact(value: float, rate: bool) -> str:
    per = "/s" if rate else ""
    if value == 0:
        return "0B" + per
    for suffix, mult in (("T", KI ** 4), ("G", GI), ("M", MI), ("K", KI)):
        if value >= mult:
            m = ref_mantissa(value / mult)
            if m == "1024":
                nxt = {"K": "M", "M": "G", "G": "T"}.get(suffix)
                return (f"1{nxt}" if nxt else "1024T") + per
            return f"{m}{suffix}{per}"
    m = ref_mantissa(value)
    if m == "1024":
        return "1K" + per
    return f"{m}B{per}"


@pytest.mark.parametrize(
    "value,unit,style,expected",
    [
        (0, "bytes_per_sec", "compact", "0B/s"),
        (0, "bytes", "compact", "0B"),
        (794624, "bytes", "compact", "776K"),
        (20 * MI, "bytes_per_sec", "compact", "20M/s"),
        (476 * MI, "bytes_per_sec", "compact", "476M/s"),
        (int(4.3 * GI), "bytes", "compact", "4.3G"),
        (12 * GI, "bytes_per_sec", "human", "12 GB/s"),
        (127 * MI, "bytes", "human", "127 MB"),
        (int(31.9 * MI), "bytes", "human", "31.9 MB"),
        (780 * MI, "bytes_per_sec", "human", "780 MB/s"),
        (0, "bytes_per_sec", "human", "0 B/s"),
        (692 * MI, "bytes_per_sec", "human", "692 MB/s"),
        (0.0639, "seconds", "human", "63.9 ms"),
        (0.283, "seconds", "human", "283 ms"),
        (2.5, "seconds", "compact", "2.5s"),
        (64, "ops_per_sec", "human", "64 op/s"),
        (64, "ops_per_sec", "compact", "64op/s"),
        (1500, "ops_per_sec", "compact", "1.5Kop/s"),
        (0, "ops_per_sec", "compact", "0op/s"),
        (256, "count", "compact", "256"),
        (1024, "count", "compact", "1024"),
        (37.5, "percent", "compact", "37.5%"),
        (5.5, "percent", "compact", "5.5%"),
    ],
)
def test_pinned_examples(value, unit, style, expected):
    assert humanize(value, unit, style) == expected


@pytest.mark.parametrize(
    "text,expected",
    [
        ("12 GB/s", 12 * GI),
        ("776K", 794624),
        ("0B/s", 0),
        ("0 B/s", 0),
        ("20M/s", 20 * MI),
        ("63.9 ms", 0.0639),
        ("64 op/s", 64),
        ("1.5Kop/s", 1500),
        ("256", 256),
        ("38%", 38),
        ("500 B", 500),
        ("2.5s", 2.5),
    ],
)
def test_parse_pinned(text, expected):
    assert parse_human(text) == pytest.approx(expected)


def test_compact_bytes_matches_reference():
    values = [0, 1, 9, 10, 999, 1023, 1024, 1025, 794624, 1048300, 20 * MI,
              int(4.3 * GI), 12 * GI, 1023.9, 10239.4, 3.7, 0.5]
    for v in values:
        assert humanize(v, "bytes", "compact") == ref_bytes_compact(v, False)
        assert humanize(v, "bytes_per_sec", "compact") == ref_bytes_compact(v, True)


@given(st.floats(min_value=1.0, max_value=1e15, allow_nan=False))
@settings(max_examples=300)
def test_bytes_roundtrip_quantization(value):
    for unit in ("bytes", "bytes_per_sec"):
        for style in ("compact", "human"):
            text = humanize(value, unit, style)
            back = parse_human(text)
            assert math.isclose(back, value, rel_tol=0.051)
            # strings emitted by humanize are fixed points of the round trip
            assert humanize(back, unit, style) == text


@given(st.floats(min_value=1e-4, max_value=1e4, allow_nan=False))
@settings(max_examples=200)
def test_seconds_roundtrip(value):
    for style in ("compact", "human"):
        text = humanize(value, "seconds", style)
        back = parse_human(text)
        assert math.isclose(back, value, rel_tol=0.051)
        assert humanize(back, "seconds", style) == text


@given(st.integers(min_value=0, max_value=10 ** 9))
def test_count_exact(value):
    text = humanize(float(value), "count")
    assert parse_human(text) == value


def test_integral_mantissas_exact():
    for v in (794624, 20 * MI, 127 * MI, 12 * GI, 256):
        for unit in ("bytes", "count") if v == 256 else ("bytes",):
            assert parse_human(humanize(v, unit, "compact")) == v


def test_errors():
    with pytest.raises(HumanizeError):
        parse_human("12 XB/s")
    with pytest.raises(HumanizeError):
        parse_human("")
    with pytest.raises(HumanizeError):
        parse_human("1.2.3K")
    with pytest.raises(HumanizeError):
        humanize(-1, "bytes")
    with pytest.raises(HumanizeError):
        humanize(1, "furlongs")
