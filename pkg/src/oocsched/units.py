"""Byte-size parsing for CLI arguments and config files."""
from __future__ import annotations

import re

_SUFFIXES = {
    "": 1,
    "B": 1,
    "KIB": 1 << 10,
    "MIB": 1 << 20,
    "GIB": 1 << 30,
    "TIB": 1 << 40,
    "KB": 1000,
    "MB": 1000**2,
    "GB": 1000**3,
    "TB": 1000**4,
}

_SIZE_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([A-Za-z]*)\s*$")

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30


def parse_size(value: str | int) -> int:
    """Parse ``"40MiB"``, ``"2GiB"``, ``"1048576"`` etc. into an integer byte count."""
    if isinstance(value, bool):
        raise ValueError(f"not a size: {value!r}")
    if isinstance(value, int):
        if value < 0:
            raise ValueError(f"negative size: {value}")
        return value
    m = _SIZE_RE.match(str(value))
    if not m:
        raise ValueError(f"not a size: {value!r}")
    number, suffix = m.groups()
    mult = _SUFFIXES.get(suffix.upper())
    if mult is None:
        raise ValueError(f"unknown size suffix {suffix!r} in {value!r}")
    nbytes = float(number) * mult if "." in number else int(number) * mult
    if nbytes != int(nbytes):
        raise ValueError(f"size {value!r} is not a whole number of bytes")
    return int(nbytes)


def format_size(nbytes: int) -> str:
    for unit, mult in (("GiB", GiB), ("MiB", MiB), ("KiB", KiB)):
        if nbytes >= mult and nbytes % mult == 0:
            return f"{nbytes // mult}{unit}"
    return str(nbytes)
