"""Restricted BGV: key generation, slot encoding, encryption, ciphertext-plaintext
multiplication and decryption over a single-prime modulus, plus the binary wire
format for every artifact.

Messages sit in the low digits (``c0 + c1*s = m + t*e mod q``). Plaintext values
live in the NTT slots of R_t, so multiplying a ciphertext by a plaintext
multiplies the underlying slot vectors componentwise.
"""

from __future__ import annotations

import base64
import binascii
import functools
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import ring
from .ring import Domain, RingElement, ntt_forward, ntt_inverse

DEFAULT_T = 65537
DEFAULT_LOG_Q = (54,)
DEFAULT_LOG_P = (54,)
SUPPORTED_LOG_N = (13, 14, 15)

MAGIC = b"BGV1"
HEADER = struct.Struct("<4sBBHQQQ")
KIND_PK, KIND_SK, KIND_CT, KIND_PT = 1, 2, 3, 4
_KIND_NAMES = {KIND_PK: "public key", KIND_SK: "secret key", KIND_CT: "ciphertext", KIND_PT: "plaintext"}


class ParamsError(ValueError):
    pass


class SerializationError(ValueError):
    pass


@dataclass(frozen=True)
class BgvParams:
    """One BGV parameter set. ``q`` and ``p`` are derived from the bit-lengths
    unless given explicitly (toy parameters)."""

    log_n: int
    t: int = DEFAULT_T
    log_q: tuple[int, ...] = DEFAULT_LOG_Q
    log_p: tuple[int, ...] = DEFAULT_LOG_P
    q: int = 0
    p: int = 0
    security_level: int = field(default=128, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "log_q", tuple(int(b) for b in self.log_q))
        object.__setattr__(self, "log_p", tuple(int(b) for b in self.log_p))
        if len(self.log_q) != 1 or len(self.log_p) != 1:
            raise ParamsError("only single-prime modulus chains are supported")
        if not 1 <= self.log_n <= 16:
            raise ParamsError(f"log_n={self.log_n} out of range")
        if not self.q or not self.p:
            primes = ring.ntt_primes(self.log_q[0], 2)
            if self.log_p[0] == self.log_q[0]:
                q, p = primes
            else:
                q, p = primes[0], ring.ntt_primes(self.log_p[0], 1)[0]
            object.__setattr__(self, "q", self.q or q)
            object.__setattr__(self, "p", self.p or p)
        two_n = 2 * self.n_ring
        for name, value in (("t", self.t), ("q", self.q), ("p", self.p)):
            if not ring.is_prime(value):
                raise ParamsError(f"{name}={value} is not prime")
        if (self.t - 1) % two_n:
            raise ParamsError(f"t={self.t} is not 1 mod 2N={two_n}; slot encoding impossible")
        if (self.q - 1) % two_n:
            raise ParamsError(f"q={self.q} is not 1 mod 2N={two_n}")
        if self.t >= self.q or self.q == self.p:
            raise ParamsError("need t < q and q != p")

    @property
    def n_ring(self) -> int:
        return 1 << self.log_n

    @property
    def qp(self) -> int:
        return self.q * self.p

    @classmethod
    def preset(cls, log_n: int) -> "BgvParams":
        if log_n not in SUPPORTED_LOG_N:
            raise ParamsError(f"no preset for log_n={log_n}")
        return cls(log_n=log_n)

    def meta(self) -> dict:
        """The (log N, N, log Q_i, log P_i, T) tuple published through metadata."""
        return {
            "log_n": self.log_n,
            "n": self.n_ring,
            "log_q": list(self.log_q),
            "log_p": list(self.log_p),
            "t": self.t,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "BgvParams":
        params = cls(
            log_n=int(meta["log_n"]),
            t=int(meta["t"]),
            log_q=tuple(int(b) for b in meta["log_q"]),
            log_p=tuple(int(b) for b in meta["log_p"]),
        )
        if "n" in meta and int(meta["n"]) != params.n_ring:
            raise ParamsError(f"N={meta['n']} inconsistent with log_n={params.log_n}")
        return params

    @property
    def fingerprint(self) -> str:
        canonical = json.dumps(
            {"log_n": self.log_n, "t": self.t, "q": self.q, "p": self.p,
             "log_q": list(self.log_q), "log_p": list(self.log_p)},
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# N=16, t=193 for brute-force oracles. q stays at 54 bits: a 14-bit q leaves no
# room for t * noise after one plaintext multiplication.
TOY_PARAMS = BgvParams(log_n=4, t=193)


@dataclass(frozen=True, eq=False)
class Plaintext:
    """Slot vector over Z_t. The polynomial in R_t is derived on demand."""

    slots: np.ndarray
    params: BgvParams
    level: int = 0

    def __post_init__(self):
        if self.slots.dtype != np.uint64 or len(self.slots) != self.params.n_ring:
            raise ParamsError("plaintext must hold N uint64 slots")
        if int(self.slots.max()) >= self.params.t:
            raise ParamsError("slot value >= t")

    @functools.cached_property
    def poly(self) -> RingElement:
        return ntt_inverse(RingElement(self.slots, Domain.EVALUATION, self.params.t))

    def lifted(self) -> RingElement:
        """The plaintext polynomial with centered coefficients, as an element of R_q."""
        return RingElement.from_ints(self.poly.centered(), self.params.q)

    def __eq__(self, other):
        if not isinstance(other, Plaintext):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.slots, other.slots)


@dataclass(frozen=True, eq=False)
class SecretKey:
    s: RingElement
    params: BgvParams

    @functools.cached_property
    def s_eval(self) -> RingElement:
        return ntt_forward(self.s)


@dataclass(frozen=True, eq=False)
class PublicKey:
    b: RingElement
    a: RingElement
    params: BgvParams

    @functools.cached_property
    def eval_form(self) -> tuple[RingElement, RingElement]:
        return ntt_forward(self.b), ntt_forward(self.a)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    c0: RingElement
    c1: RingElement
    params: BgvParams
    is_fresh: bool = True

    def __post_init__(self):
        if self.c0.n != self.c1.n or self.c0.q != self.c1.q:
            raise ParamsError("ciphertext components disagree on (N, q)")


Artifact = Union[PublicKey, SecretKey, Ciphertext, Plaintext]


def keygen(params: BgvParams, rng: np.random.Generator) -> tuple[PublicKey, SecretKey]:
    n, q = params.n_ring, params.q
    s = ring.sample_ternary(rng, n, q)
    a = ring.sample_uniform(rng, n, q)
    e = ring.sample_error(rng, n, q)
    sk = SecretKey(s, params)
    b = e.scale(params.t) - ntt_inverse(ntt_forward(a).pointwise(sk.s_eval))
    return PublicKey(b, a, params), sk


def encode_slots(values, params: BgvParams) -> Plaintext:
    arr = np.asarray(values).ravel()
    if len(arr) > params.n_ring:
        raise ParamsError(f"{len(arr)} values exceed N={params.n_ring} slots")
    if arr.dtype.kind not in "iu":
        arr = np.array([int(v) for v in arr], dtype=object)
    slots = np.zeros(params.n_ring, dtype=np.uint64)
    if len(arr):
        if arr.min() < 0 or arr.max() >= params.t:
            raise ParamsError(f"slot values must lie in [0, t={params.t})")
        slots[: len(arr)] = arr.astype(np.uint64)
    return Plaintext(slots, params)


def decode_slots(pt: Plaintext) -> np.ndarray:
    return pt.slots.copy()


def _check_params(expected: BgvParams, got: BgvParams, what: str) -> None:
    if expected != got:
        raise ParamsError(f"{what} was produced under different parameters")


def encrypt(pk: PublicKey, pt: Plaintext, rng: np.random.Generator) -> Ciphertext:
    params = pk.params
    _check_params(params, pt.params, "plaintext")
    if pt.level != 0:
        raise ParamsError("plaintext level does not match the single-level chain")
    n, q, t = params.n_ring, params.q, params.t
    b_hat, a_hat = pk.eval_form
    u_hat = ntt_forward(ring.sample_ternary(rng, n, q))
    e0 = ring.sample_error(rng, n, q)
    e1 = ring.sample_error(rng, n, q)
    c0 = ntt_inverse(b_hat.pointwise(u_hat)) + e0.scale(t) + pt.lifted()
    c1 = ntt_inverse(a_hat.pointwise(u_hat)) + e1.scale(t)
    return Ciphertext(c0, c1, params, is_fresh=True)


def prepare_plaintext(pt: Plaintext) -> RingElement:
    """Lift a plaintext into R_q and transform it once, for repeated evaluation."""
    return ntt_forward(pt.lifted())


def eval_ct_pt(ct: Ciphertext, db: Plaintext | RingElement) -> Ciphertext:
    """Multiply a ciphertext by a plaintext (raw, or already prepared).

    The sequence of ring operations is fixed by the parameters alone.
    """
    params = ct.params
    if isinstance(db, Plaintext):
        _check_params(params, db.params, "plaintext")
        db = prepare_plaintext(db)
    if db.domain is not Domain.EVALUATION or db.n != params.n_ring or db.q != params.q:
        raise ParamsError("prepared plaintext does not match ciphertext parameters")
    c0 = ntt_inverse(ntt_forward(ct.c0).pointwise(db))
    c1 = ntt_inverse(ntt_forward(ct.c1).pointwise(db))
    return Ciphertext(c0, c1, params, is_fresh=False)


def decrypt(sk: SecretKey, ct: Ciphertext) -> Plaintext:
    params = sk.params
    _check_params(params, ct.params, "ciphertext")
    noisy = ct.c0 + ntt_inverse(ntt_forward(ct.c1).pointwise(sk.s_eval))
    coeffs = np.remainder(noisy.centered(), np.int64(params.t)).astype(np.uint64)
    slots = ntt_forward(RingElement(coeffs, Domain.COEFFICIENT, params.t)).coeffs
    return Plaintext(slots, params)


# Wire format --------------------------------------------------------------------


def _header(kind: int, params: BgvParams, payload_len: int) -> bytes:
    return HEADER.pack(MAGIC, kind, params.log_n, 0, params.t, params.q, payload_len)


def _wide_encode(x: RingElement, qp: int) -> np.ndarray:
    """Centered residues mod q rewritten as 128-bit integers mod Q*P (lo, hi limbs)."""
    c = x.centered()
    qp_lo, qp_hi = np.uint64(qp & 0xFFFFFFFFFFFFFFFF), np.uint64(qp >> 64)
    neg = c < 0
    mag = np.abs(c).astype(np.uint64)
    out = np.empty((len(c), 2), dtype="<u8")
    out[:, 0] = np.where(neg, qp_lo - mag, mag)
    borrow = (neg & (mag > qp_lo)).astype(np.uint64)
    out[:, 1] = np.where(neg, qp_hi - borrow, np.uint64(0))
    return out


def _wide_decode(raw: np.ndarray, q: int, qp: int) -> np.ndarray:
    lo, hi = raw[:, 0], raw[:, 1]
    qp_lo, qp_hi = np.uint64(qp & 0xFFFFFFFFFFFFFFFF), np.uint64(qp >> 64)
    half = np.uint64(q // 2)
    pos = (hi == 0) & (lo <= half)
    mag = qp_lo - lo
    borrow = (lo > qp_lo).astype(np.uint64)
    neg = ~pos & (hi == qp_hi - borrow) & (mag > 0) & (mag <= half)
    if not np.all(pos | neg):
        raise SerializationError("key coefficient is not a valid residue mod Q*P")
    return np.where(pos, lo, np.uint64(q) - mag)


def serialize(artifact: Artifact) -> bytes:
    params = artifact.params
    if isinstance(artifact, Ciphertext):
        kind, payload = KIND_CT, artifact.c0.coeffs.astype("<u8").tobytes() + artifact.c1.coeffs.astype("<u8").tobytes()
    elif isinstance(artifact, PublicKey):
        kind = KIND_PK
        payload = _wide_encode(artifact.b, params.qp).tobytes() + _wide_encode(artifact.a, params.qp).tobytes()
    elif isinstance(artifact, SecretKey):
        kind, payload = KIND_SK, _wide_encode(artifact.s, params.qp).tobytes()
    elif isinstance(artifact, Plaintext):
        kind, payload = KIND_PT, artifact.slots.astype("<u8").tobytes()
    else:
        raise TypeError(f"cannot serialize {type(artifact).__name__}")
    return _header(kind, params, len(payload)) + payload


def payload_length(kind: int, params: BgvParams) -> int:
    n = params.n_ring
    return {KIND_PK: 2 * n * 16, KIND_SK: n * 16, KIND_CT: 2 * n * 8, KIND_PT: n * 8}[kind]


def serialized_size(kind: int, params: BgvParams) -> int:
    return HEADER.size + payload_length(kind, params)


def read_header(data: bytes) -> tuple[int, int, int, int, int]:
    """Return (kind, log_n, t, q, payload_len) from a serialized artifact."""
    if len(data) < HEADER.size:
        raise SerializationError(f"truncated header: {len(data)} < {HEADER.size} bytes")
    magic, kind, log_n, _reserved, t, q, plen = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SerializationError(f"bad magic {magic!r}")
    if kind not in _KIND_NAMES:
        raise SerializationError(f"unknown artifact kind {kind}")
    return kind, log_n, t, q, plen


def deserialize(data: bytes, params: BgvParams, expect: int | None = None) -> Artifact:
    kind, log_n, t, q, plen = read_header(data)
    if expect is not None and kind != expect:
        raise SerializationError(f"expected {_KIND_NAMES[expect]}, got {_KIND_NAMES[kind]}")
    if (log_n, t, q) != (params.log_n, params.t, params.q):
        raise SerializationError(
            f"header parameters (log_n={log_n}, t={t}, q={q}) do not match "
            f"(log_n={params.log_n}, t={params.t}, q={params.q})"
        )
    want = payload_length(kind, params)
    if plen != want or len(data) - HEADER.size != want:
        raise SerializationError(
            f"{_KIND_NAMES[kind]} payload length {len(data) - HEADER.size} (declared {plen}), expected {want}"
        )
    body = np.frombuffer(data, dtype="<u8", offset=HEADER.size).astype(np.uint64)
    n = params.n_ring
    if kind == KIND_CT:
        if int(body.max()) >= params.q:
            raise SerializationError("ciphertext coefficient >= q")
        return Ciphertext(
            RingElement(body[:n].copy(), Domain.COEFFICIENT, q),
            RingElement(body[n:].copy(), Domain.COEFFICIENT, q),
            params,
            is_fresh=False,
        )
    if kind == KIND_PT:
        if int(body.max()) >= params.t:
            raise SerializationError("plaintext slot >= t")
        return Plaintext(body.copy(), params)
    wide = _wide_decode(body.reshape(-1, 2), params.q, params.qp)
    if kind == KIND_SK:
        return SecretKey(RingElement(wide, Domain.COEFFICIENT, q), params)
    return PublicKey(
        RingElement(wide[:n].copy(), Domain.COEFFICIENT, q),
        RingElement(wide[n:].copy(), Domain.COEFFICIENT, q),
        params,
    )


def to_base64(artifact: Artifact) -> str:
    return base64.b64encode(serialize(artifact)).decode("ascii")


def from_base64(text: str, params: BgvParams, expect: int | None = None) -> Artifact:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise SerializationError(f"malformed Base64: {exc}") from None
    return deserialize(raw, params, expect)
