"""Packing key-value records into BGV plaintext slots and back.

Each record occupies a fixed window of ``record_s`` consecutive slots, one byte
per slot, zero padded. A query is the encryption of a binary vector with ones
exactly on the wanted window; multiplying it into the packed database leaves only
that window's bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bgv
from .bgv import BgvParams, Plaintext, PublicKey, SecretKey

ALLOWED_SLOT_SIZES = (64, 128, 224, 256, 384, 512)
LOG_N_CANDIDATES = (13, 14, 15)
SLOT_BUCKET = 8
# t = 65537 could hold two bytes per slot; the published channel layouts
# (record_s = 128 for ~128-byte records at N = 2^13) only work with one.
BYTES_PER_SLOT = 1


class PirError(ValueError):
    """A request the protocol answers with bottom (out-of-range index, infeasible layout...)."""


@dataclass(frozen=True)
class TemplateSpec:
    name: str
    base_bytes: int
    field_lengths: tuple[int, ...]
    overhead: int
    log_n: int

    @property
    def minimum(self) -> int:
        return template_min(self)


TEMPLATES = {
    "mini": TemplateSpec("mini", 81, (32,), 15, 13),
    "mid": TemplateSpec("mid", 161, (32, 16), 15, 14),
    "rich": TemplateSpec("rich", 145, (32, 64), 15, 15),
}
TEMPLATE_BY_LOG_N = {spec.log_n: spec for spec in TEMPLATES.values()}


def template_min(spec: TemplateSpec) -> int:
    """Minimum bytes a record of this template needs: base + mandatory fields + overhead."""
    return spec.base_bytes + sum(spec.field_lengths) + spec.overhead


def compute_record_s(record_b: int, t: int | None = None) -> int:
    """Round a byte length up to a whole number of 8-slot buckets.

    ``t`` is accepted for signature compatibility; slots always carry one byte.
    """
    if record_b < 1:
        raise PirError("record length must be at least one byte")
    return SLOT_BUCKET * math.ceil(record_b / (SLOT_BUCKET * BYTES_PER_SLOT))


def capacity(log_n: int, record_s: int) -> int:
    """Largest n with n * record_s <= 2**log_n."""
    return (1 << log_n) // record_s


@dataclass(frozen=True)
class FeasibilityReport:
    c_ok: bool
    m_ok: bool
    d_ok: bool
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return self.c_ok and self.m_ok and self.d_ok


def check_feasibility(log_n: int, record_s: int, n: int, template: TemplateSpec) -> FeasibilityReport:
    n_ring = 1 << log_n
    c_ok = n * record_s <= n_ring
    m_ok = record_s >= template.minimum
    d_ok = record_s in ALLOWED_SLOT_SIZES
    if not c_ok:
        detail = f"C (ring capacity) fails: {n}*{record_s}={n * record_s} > N={n_ring}"
    elif not m_ok:
        detail = f"M (template minimum) fails: record_s={record_s} < {template.minimum} ({template.name})"
    elif not d_ok:
        detail = f"D (discrete allocation) fails: record_s={record_s} not in {list(ALLOWED_SLOT_SIZES)}"
    else:
        detail = ""
    return FeasibilityReport(c_ok, m_ok, d_ok, detail)


def select_min_logn(n: int, record_s: int, candidates=LOG_N_CANDIDATES) -> int | None:
    for log_n in sorted(candidates):
        if n * record_s <= 1 << log_n:
            return log_n
    return None


@dataclass(frozen=True)
class RecordSet:
    records: tuple[bytes, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(bytes(r) for r in self.records))
        if not self.records:
            raise PirError("record set is empty")
        for i, rec in enumerate(self.records):
            if 0 in rec:
                raise PirError(f"record {i} contains a zero byte")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def max_len(self) -> int:
        return max(len(r) for r in self.records)


@dataclass(frozen=True)
class SlotLayout:
    n: int
    record_s: int
    n_ring: int

    def __post_init__(self):
        if self.n < 1 or self.record_s < 1:
            raise PirError("layout needs n >= 1 and record_s >= 1")
        if self.n * self.record_s > self.n_ring:
            raise PirError(f"capacity violation: {self.n}*{self.record_s} > N={self.n_ring}")

    def window(self, i: int) -> range:
        return range(i * self.record_s, (i + 1) * self.record_s)

    @property
    def windows(self) -> list[range]:
        return [self.window(i) for i in range(self.n)]


def _check_query(i: int, n: int, record_s: int, n_ring: int) -> None:
    if i < 0 or i >= n:
        raise PirError(f"index {i} out of range [0, {n})")
    if n * record_s > n_ring:
        raise PirError(f"capacity violation: {n}*{record_s} > N={n_ring}")


def pack_records(records: RecordSet, layout: SlotLayout) -> np.ndarray:
    if records.n != layout.n:
        raise PirError(f"layout expects {layout.n} records, got {records.n}")
    c = np.zeros(layout.n_ring, dtype=np.uint64)
    for i, rec in enumerate(records.records):
        if len(rec) > layout.record_s:
            raise PirError(f"record {i} is {len(rec)} bytes, window holds {layout.record_s}")
        start = i * layout.record_s
        c[start : start + len(rec)] = np.frombuffer(rec, dtype=np.uint8)
    return c


def encode_db(c, params: BgvParams) -> Plaintext:
    c = np.asarray(c)
    if len(c) != params.n_ring:
        raise PirError(f"coefficient vector has length {len(c)}, expected N={params.n_ring}")
    return bgv.encode_slots(c, params)


def selection_vector(i: int, layout: SlotLayout) -> np.ndarray:
    """Binary vector with ones exactly on window i."""
    _check_query(i, layout.n, layout.record_s, layout.n_ring)
    v = np.zeros(layout.n_ring, dtype=np.uint64)
    v[i * layout.record_s : (i + 1) * layout.record_s] = 1
    return v


def build_selector(i: int, layout: SlotLayout, pk: PublicKey, rng: np.random.Generator) -> str:
    """Encrypt the windowed selector for record i; returns Base64 of the serialized ciphertext."""
    if layout.n_ring != pk.params.n_ring:
        raise PirError("layout ring dimension differs from the key's")
    v = selection_vector(i, layout)
    ct = bgv.encrypt(pk, bgv.encode_slots(v, pk.params), rng)
    return bgv.to_base64(ct)


def read_window(u, i: int, record_s: int) -> bytes:
    out = bytearray()
    for value in u[i * record_s : (i + 1) * record_s]:
        if value == 0:
            break
        out.append(int(value) & 0xFF)
    return bytes(out)


def decrypt_result(ct_r_b64: str, sk: SecretKey, i: int, layout: SlotLayout) -> str | int:
    """Decrypt a PIR response and read record i out of its window.

    Returns the decoded record text, or the single raw slot value when
    record_s == 1.
    """
    _check_query(i, layout.n, layout.record_s, layout.n_ring)
    try:
        ct = bgv.from_base64(ct_r_b64, sk.params, expect=bgv.KIND_CT)
    except (bgv.SerializationError, bgv.ParamsError) as exc:
        raise PirError(f"malformed response ciphertext: {exc}") from None
    u = bgv.decrypt(sk, ct).slots
    if layout.record_s == 1:
        return int(u[i])
    raw = read_window(u, i, layout.record_s)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PirError(f"record {i} is not valid UTF-8: {exc}") from None
