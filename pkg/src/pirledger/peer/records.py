"""Deterministic synthetic CTI-style records and record-file ingestion."""

from __future__ import annotations

import hashlib
import json
import random

from ..codec import TemplateSpec

_TYPES = ("md5", "url", "ip", "domain", "file")
_SEVERITY = ("low", "medium", "high", "critical")
_FILLER = "abcdefghijklmnopqrstuvwxyz0123456789"


def _compact(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _fields(i: int, template: TemplateSpec, rnd: random.Random) -> list[tuple[str, str | int]]:
    fields: list[tuple[str, str | int]] = [
        ("id", f"ioc-{i:04d}"),
        ("md5", f"{rnd.getrandbits(128):032x}"),
        ("type", rnd.choice(_TYPES)),
        ("sev", rnd.choice(_SEVERITY)),
        ("src", f"org{rnd.randint(1, 9)}"),
        ("ts", 1735689600 + rnd.randrange(0, 31_536_000)),
    ]
    if template.name == "mid":
        fields.append(("sha256s", f"{rnd.getrandbits(64):016x}"))
    elif template.name == "rich":
        fields.append(("sha256", f"{rnd.getrandbits(256):064x}"))
        fields.append(("tlp", rnd.choice(("white", "green", "amber"))))
    return fields


def _filler(rnd: random.Random, k: int) -> str:
    return "".join(rnd.choice(_FILLER) for _ in range(k))


def _fit(fields, target: int, rnd: random.Random) -> bytes:
    """Drop trailing fields until the record fits, then pad a note field up to target bytes."""
    fields = list(fields)
    while len(fields) > 1 and len(_compact(dict(fields))) > target:
        fields.pop()
    rec = _compact(dict(fields))
    if len(rec) > target:
        # bound below the smallest object: a bare JSON string (or raw bytes)
        return _compact(_filler(rnd, target - 2)) if target >= 3 else _filler(rnd, target).encode()
    room = target - len(rec) - len(',"note":""')
    if room >= 0:
        return _compact(dict(fields + [("note", _filler(rnd, room))]))
    # too tight for a note field: lengthen the last string value instead
    for k in range(len(fields) - 1, -1, -1):
        key, value = fields[k]
        if isinstance(value, str):
            fields[k] = (key, value + _filler(rnd, target - len(rec)))
            break
    return _compact(dict(fields))


def synthesize_records(n: int, max_bytes: int, template: TemplateSpec, seed: int) -> list[bytes]:
    """n JSON records of at most max_bytes each (record 0 is exactly max_bytes when it fits).

    Output depends only on the arguments, so every peer executing the same
    initialization derives the same database.
    """
    rnd = random.Random(seed)
    out = []
    for i in range(n):
        target = max_bytes if i == 0 else max_bytes - rnd.randrange(0, min(4, max_bytes))
        out.append(_fit(_fields(i, template, rnd), target, rnd))
    return out


def record_seed(channel: str, n: int, max_bytes: int) -> int:
    digest = hashlib.sha256(f"{channel}|{n}|{max_bytes}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def parse_records(text: str) -> list[bytes]:
    """Records from a JSON array; strings are taken verbatim, other values are
    serialized compactly."""
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("records document must be a JSON array")
    return [item.encode("utf-8") if isinstance(item, str) else _compact(item) for item in data]
