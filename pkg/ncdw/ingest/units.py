import re
from datetime import datetime

from ncdw.core.errors import RecordRejected
from ncdw.core.text import normalize_text

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+))\s*([^\d\s].*?)?\s*$")

_POSITIVE = frozenset(("positive", "pos", "+ve", "+", "1", "true", "yes", "reactive", "detected"))
_NEGATIVE = frozenset(("negative", "neg", "-ve", "-", "0", "false", "no", "non-reactive", "nonreactive",
                       "not detected"))

_FALLBACK_FORMATS = ("%d/%m/%Y %H:%M:%S", "%d/%m/%Y %H:%M", "%d/%m/%Y", "%Y/%m/%d %H:%M", "%Y/%m/%d")

# US EPA PM2.5 breakpoints: (conc_lo, conc_hi, index_lo, index_hi)
_PM25_BREAKPOINTS = (
    (0.0, 12.0, 0, 50),
    (12.1, 35.4, 51, 100),
    (35.5, 55.4, 101, 150),
    (55.5, 150.4, 151, 200),
    (150.5, 250.4, 201, 300),
    (250.5, 350.4, 301, 400),
    (350.5, 500.4, 401, 500),
)


def parse_quantity(text):
    """
    Split a measurement such as '86 F' or '12.5mm' into value and unit.

    Returns:
        tuple: (float value, normalized unit text, possibly empty)
    """
    match = _QUANTITY.match(text or "")
    if not match:
        raise RecordRejected("type", f"not a number: {text!r}")
    unit = normalize_text(match.group(2) or "").replace("°", "").replace(" ", "")
    return float(match.group(1)), unit


def parse_timestamp(text):
    """Parse an ISO or day-first timestamp; the result may be naive or aware"""
    value = (text or "").strip()
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        pass
    for fmt in _FALLBACK_FORMATS:
        try:
            return datetime.strptime(value, fmt)
        except ValueError:
            continue
    raise RecordRejected("type", f"unparseable timestamp: {text!r}")


def parse_result(text):
    """Map a free-text test outcome onto positive/negative"""
    value = normalize_text(text)
    if value in _POSITIVE:
        return True
    if value in _NEGATIVE:
        return False
    raise RecordRejected("type", f"unrecognized test result: {text!r}")


def to_celsius(value, unit):
    if unit in ("c", "celsius", "degc", ""):
        return value
    if unit in ("f", "fahrenheit", "degf"):
        return (value - 32.0) * 5.0 / 9.0
    if unit in ("k", "kelvin"):
        return value - 273.15
    raise RecordRejected("type", f"unknown temperature unit {unit!r}")


def to_millimetres(value, unit):
    if unit in ("mm", ""):
        return value
    if unit == "cm":
        return value * 10.0
    if unit in ("in", "inch", "inches"):
        return value * 25.4
    raise RecordRejected("type", f"unknown rainfall unit {unit!r}")


def to_percent(value, unit):
    if unit in ("%", "percent", "pct", ""):
        percent = value
    elif unit == "fraction":
        percent = value * 100.0
    else:
        raise RecordRejected("type", f"unknown humidity unit {unit!r}")
    if not 0.0 <= percent <= 100.0:
        raise RecordRejected("range", f"humidity {percent} outside [0, 100]")
    return percent


def pm25_index(concentration):
    """AQI-like index for a 24-hour PM2.5 concentration in ug/m3"""
    if concentration < 0:
        raise RecordRejected("range", f"negative PM2.5 concentration {concentration}")
    truncated = int(concentration * 10) / 10.0
    for conc_lo, conc_hi, index_lo, index_hi in _PM25_BREAKPOINTS:
        if truncated <= conc_hi:
            if truncated < conc_lo:
                truncated = conc_lo
            return round((index_hi - index_lo) / (conc_hi - conc_lo) * (truncated - conc_lo) + index_lo)
    return 500
