"""Value formatting in the two text styles used across the toolkit.

Compact style is what log and kv output use ("20M/s", "776K", "0B/s");
human style is what the interactive tables use ("12 GB/s", "63.9 ms").
Byte quantities use binary (1024) multiples, operation rates use decimal
multiples, and plain counts are never abbreviated. ``parse_human`` inverts
both styles.
"""

from __future__ import annotations

UNITS = ("bytes_per_sec", "bytes", "ops_per_sec", "seconds", "percent", "count")

_BYTE_STEPS = (("T", 1024 ** 4), ("G", 1024 ** 3), ("M", 1024 ** 2), ("K", 1024))
_OP_STEPS = (("G", 10 ** 9), ("M", 10 ** 6), ("K", 10 ** 3))


class HumanizeError(ValueError):
    """Raised when a value or text cannot be formatted or parsed."""


def _mantissa(m: float) -> str:
    # One decimal below 100, two below 1, integer otherwise; no trailing zeros.
    if m >= 100:
        return f"{m:.0f}"
    if m >= 1 or m == 0:
        text = f"{m:.1f}"
    else:
        text = f"{m:.2f}"
        if text.endswith("0"):
            text = text[:-1]
    if text.endswith(".0"):
        text = text[:-2]
    return text


def _scaled(value: float, steps) -> tuple[str, str]:
    """Return (mantissa text, step suffix), bumping up on round-to-boundary."""
    for suffix, mult in steps:
        if value >= mult:
            text = _mantissa(value / mult)
            if text == "1024" and suffix != steps[0][0]:
                bigger = steps[[s for s, _ in steps].index(suffix) - 1][0]
                return "1", bigger
            if text == "1000" and suffix != steps[0][0]:
                bigger = steps[[s for s, _ in steps].index(suffix) - 1][0]
                return "1", bigger
            return text, suffix
    text = _mantissa(value)
    if text == "1024" and steps is _BYTE_STEPS:
        return "1", "K"
    if text == "1000" and steps is _OP_STEPS:
        return "1", "K"
    return text, ""


def humanize(value: float, unit: str, style: str = "compact") -> str:
    """Format ``value`` (in the unit's base) as compact or human text."""
    if unit not in UNITS:
        raise HumanizeError(f"unknown unit {unit!r}")
    if style not in ("compact", "human"):
        raise HumanizeError(f"unknown style {style!r}")
    if value < 0:
        raise HumanizeError(f"negative value {value!r}")
    sep = " " if style == "human" else ""

    if unit in ("bytes", "bytes_per_sec"):
        per = "/s" if unit == "bytes_per_sec" else ""
        if value == 0:
            return f"0{sep}B{per}"
        m, suf = _scaled(value, _BYTE_STEPS)
        if style == "human":
            return f"{m} {suf}B{per}"
        return f"{m}{suf or 'B'}{per}"

    if unit == "ops_per_sec":
        if value == 0:
            return f"0{sep}op/s"
        m, suf = _scaled(value, _OP_STEPS)
        return f"{m}{sep}{suf}op/s"

    if unit == "seconds":
        if value == 0:
            return f"0{sep}s"
        if value < 1:
            text = _mantissa(value * 1000)
            if float(text) < 1000:
                return f"{text}{sep}ms"
        return f"{_mantissa(value)}{sep}s"

    if unit == "percent":
        return f"{_mantissa(value)}%"

    # count: plain integral text, never abbreviated
    if value == int(value):
        return str(int(value))
    return _mantissa(value)


_BYTE_MULT = {"B": 1, "K": 1024, "M": 1024 ** 2, "G": 1024 ** 3, "T": 1024 ** 4}
_OP_MULT = {"": 1, "K": 10 ** 3, "M": 10 ** 6, "G": 10 ** 9}


def parse_human(text: str) -> float:
    """Parse a string emitted by :func:`humanize` back to its base-unit value."""
    raw = text.strip()
    if not raw:
        raise HumanizeError("empty value text")
    idx = 0
    while idx < len(raw) and (raw[idx].isdigit() or raw[idx] == "."):
        idx += 1
    num_text, suffix = raw[:idx], raw[idx:].strip()
    if not num_text or num_text.count(".") > 1:
        raise HumanizeError(f"bad number in {text!r}")
    number = float(num_text)

    if suffix == "":
        return number
    if suffix == "%":
        return number
    if suffix == "ms":
        return number / 1000.0
    if suffix == "s":
        return number
    if suffix.endswith("op/s"):
        mult = suffix[:-4].strip()
        if mult not in _OP_MULT:
            raise HumanizeError(f"bad suffix in {text!r}")
        return number * _OP_MULT[mult]

    rate = suffix.endswith("/s")
    if rate:
        suffix = suffix[:-2]
    if suffix.endswith("B"):
        suffix = suffix[:-1] or "B"
        if suffix == "B":
            return number
    if suffix in _BYTE_MULT:
        return number * _BYTE_MULT[suffix]
    raise HumanizeError(f"bad suffix in {text!r}")
