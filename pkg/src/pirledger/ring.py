"""Arithmetic in R_q = Z_q[X]/(X^N + 1) for power-of-two N and NTT-friendly primes.

Coefficients are held in numpy ``uint64`` arrays. Products of two residues are
reduced with a floating-point quotient estimate followed by an exact wrapping
correction, which is valid for every modulus below 2**57; larger moduli fall
back to Python integers.

The evaluation domain uses the merged negacyclic Cooley-Tukey transform, so
slot ``k`` holds the evaluation at ``psi**(2*bitrev(k) + 1)`` where ``psi`` is
the primitive 2N-th root of unity of the table.
"""

from __future__ import annotations

import contextlib
import contextvars
import enum
import functools
from dataclasses import dataclass, field

import numpy as np

ERROR_SIGMA = 3.2
ERROR_BOUND = int(6 * ERROR_SIGMA)

_FLOAT_SAFE_BITS = 57
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class RingError(ValueError):
    pass


class Domain(enum.Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@functools.lru_cache(maxsize=None)
def ntt_primes(bits: int, count: int, congruence: int = 1 << 16) -> tuple[int, ...]:
    """The ``count`` smallest ``bits``-bit primes that are 1 mod ``congruence``."""
    found = []
    k = -(-(1 << (bits - 1)) // congruence)
    while len(found) < count:
        c = k * congruence + 1
        if c >= 1 << bits:
            raise RingError(f"fewer than {count} {bits}-bit primes = 1 mod {congruence}")
        if is_prime(c):
            found.append(c)
        k += 1
    return tuple(found)


def _bitrev_permutation(bits: int) -> np.ndarray:
    idx = np.arange(1 << bits)
    rev = np.zeros_like(idx)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _powers(base: int, count: int, q: int) -> np.ndarray:
    out = [1] * count
    for i in range(1, count):
        out[i] = out[i - 1] * base % q
    return np.array(out, dtype=np.uint64)


@dataclass(frozen=True)
class PrimeModulus:
    """A prime q together with a primitive 2*n_max-th root of unity."""

    q: int
    n_max: int
    root: int = field(compare=False)

    def __post_init__(self):
        if not 1 < self.q < 1 << 62:
            raise RingError("modulus must lie in (1, 2**62)")
        if self.n_max < 1 or self.n_max & (self.n_max - 1):
            raise RingError("n_max must be a power of two")
        if (self.q - 1) % (2 * self.n_max):
            raise RingError(f"q={self.q} is not 1 mod {2 * self.n_max}")
        if pow(self.root, self.n_max, self.q) != self.q - 1:
            raise RingError("root is not a primitive 2*n_max-th root of unity")

    @classmethod
    def create(cls, q: int, n_max: int | None = None) -> "PrimeModulus":
        """Build from q alone, taking n_max as large as q - 1 allows."""
        if not is_prime(q):
            raise RingError(f"{q} is not prime")
        if n_max is None:
            two_adic = ((q - 1) & -(q - 1)).bit_length() - 1
            n_max = 1 << (two_adic - 1)
        return cls(q, n_max, _find_root(q, n_max))

    def psi(self, n: int) -> int:
        """Primitive 2n-th root of unity for ring dimension n."""
        if n > self.n_max or self.n_max % n:
            raise RingError(f"ring dimension {n} unsupported by q={self.q}")
        return pow(self.root, self.n_max // n, self.q)

    @property
    def uses_float_reduction(self) -> bool:
        return self.q.bit_length() <= _FLOAT_SAFE_BITS

    # Vectorized residue arithmetic. Inputs are uint64 arrays with entries in [0, q).

    def add(self, a, b):
        s = a + b
        return np.minimum(s, s - np.uint64(self.q))

    def sub(self, a, b):
        d = a - b
        return np.minimum(d, d + np.uint64(self.q))

    def neg(self, a):
        return self.sub(np.zeros_like(a), a)

    def mul(self, a, b):
        q = self.q
        if q < 1 << 31:
            return (a * b) % np.uint64(q)
        if not self.uses_float_reduction:
            prod = np.asarray(a, dtype=object) * np.asarray(b, dtype=object) % q
            return prod.astype(np.uint64)
        quot = np.floor(a.astype(np.float64) * b.astype(np.float64) / float(q))
        rem = (a * b - quot.astype(np.uint64) * np.uint64(q)).view(np.int64)
        return (rem % np.int64(q)).view(np.uint64)

    def reduce(self, values) -> np.ndarray:
        """Map arbitrary (possibly negative) integers into [0, q)."""
        arr = np.asarray(values)
        if arr.dtype == object or np.any(np.abs(arr.astype(np.float64)) >= 2.0**62):
            return np.array([int(v) % self.q for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
        return (arr.astype(np.int64) % np.int64(self.q)).astype(np.uint64)

    def center(self, a) -> np.ndarray:
        """Signed representatives in (-q/2, q/2]."""
        signed = a.astype(np.int64)
        return np.where(signed > self.q // 2, signed - np.int64(self.q), signed)


def _find_root(q: int, n_max: int) -> int:
    exp = (q - 1) // (2 * n_max)
    for g in range(2, q):
        r = pow(g, exp, q)
        if pow(r, n_max, q) == q - 1:
            return r
    raise RingError(f"no primitive {2 * n_max}-th root modulo {q}")


@functools.lru_cache(maxsize=None)
def modulus(q: int) -> PrimeModulus:
    return PrimeModulus.create(q)


class NttTables:
    """Twiddle factors for the negacyclic NTT of dimension n over a prime modulus.

    Tables are immutable after construction and shared freely between threads.
    """

    def __init__(self, n: int, mod: PrimeModulus):
        if n < 2 or n & (n - 1):
            raise RingError("ring dimension must be a power of two >= 2")
        self.n = n
        self.mod = mod
        self.log_n = n.bit_length() - 1
        q = mod.q
        psi = mod.psi(n)
        psi_inv = pow(psi, -1, q)
        rev = _bitrev_permutation(self.log_n)
        self.forward_twiddles = _powers(psi, n, q)[rev]
        self.inverse_twiddles = _powers(psi_inv, n, q)[rev]
        self.n_inverse = pow(n, -1, q)
        for arr in (self.forward_twiddles, self.inverse_twiddles):
            arr.setflags(write=False)

    def forward(self, coeffs: np.ndarray) -> np.ndarray:
        mod, n = self.mod, self.n
        a = np.array(coeffs, dtype=np.uint64)
        m, t = 1, n
        while m < n:
            t //= 2
            blocks = a.reshape(m, 2, t)
            u = blocks[:, 0, :].copy()
            v = mod.mul(blocks[:, 1, :], self.forward_twiddles[m : 2 * m, None])
            blocks[:, 0, :] = mod.add(u, v)
            blocks[:, 1, :] = mod.sub(u, v)
            m *= 2
        return a

    def inverse(self, values: np.ndarray) -> np.ndarray:
        mod, n = self.mod, self.n
        a = np.array(values, dtype=np.uint64)
        m, t = n, 1
        while m > 1:
            h = m // 2
            blocks = a.reshape(h, 2, t)
            u = blocks[:, 0, :].copy()
            v = blocks[:, 1, :].copy()
            blocks[:, 0, :] = mod.add(u, v)
            blocks[:, 1, :] = mod.mul(mod.sub(u, v), self.inverse_twiddles[h:m, None])
            t *= 2
            m = h
        return mod.mul(a, np.full(n, self.n_inverse, dtype=np.uint64))


@functools.lru_cache(maxsize=None)
def ntt_tables(n: int, q: int) -> NttTables:
    return NttTables(n, modulus(q))


# Instrumentation: counts ring operations performed inside a ``count_ops`` block
# of the current thread/context.

_op_counter: contextvars.ContextVar["OpCounter | None"] = contextvars.ContextVar("op_counter", default=None)


@dataclass
class OpCounter:
    ntt_forward: int = 0
    ntt_inverse: int = 0
    pointwise: int = 0
    additions: int = 0

    @property
    def total(self) -> int:
        return self.ntt_forward + self.ntt_inverse + self.pointwise + self.additions

    def as_dict(self) -> dict[str, int]:
        return {
            "ntt_forward": self.ntt_forward,
            "ntt_inverse": self.ntt_inverse,
            "pointwise": self.pointwise,
            "additions": self.additions,
        }


@contextlib.contextmanager
def count_ops():
    counter = OpCounter()
    token = _op_counter.set(counter)
    try:
        yield counter
    finally:
        _op_counter.reset(token)


def _tick(kind: str) -> None:
    counter = _op_counter.get()
    if counter is not None:
        setattr(counter, kind, getattr(counter, kind) + 1)


@dataclass(frozen=True, eq=False)
class RingElement:
    """An element of Z_q[X]/(X^N+1), in coefficient or evaluation representation."""

    coeffs: np.ndarray
    domain: Domain
    q: int

    def __post_init__(self):
        n = len(self.coeffs)
        if n < 1 or n & (n - 1):
            raise RingError(f"length {n} is not a power of two")
        if self.coeffs.dtype != np.uint64:
            raise RingError("coefficients must be uint64")
        if n and int(self.coeffs.max()) >= self.q:
            raise RingError("coefficient out of range [0, q)")

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @property
    def modulus(self) -> PrimeModulus:
        return modulus(self.q)

    @property
    def tables(self) -> NttTables:
        return ntt_tables(self.n, self.q)

    @classmethod
    def from_ints(cls, values, q: int, domain: Domain = Domain.COEFFICIENT) -> "RingElement":
        return cls(modulus(q).reduce(values), domain, q)

    @classmethod
    def zero(cls, n: int, q: int, domain: Domain = Domain.COEFFICIENT) -> "RingElement":
        return cls(np.zeros(n, dtype=np.uint64), domain, q)

    def to_list(self) -> list[int]:
        return [int(c) for c in self.coeffs]

    def centered(self) -> np.ndarray:
        return self.modulus.center(self.coeffs)

    def _check_compatible(self, other: "RingElement") -> None:
        if self.n != other.n or self.q != other.q:
            raise RingError(f"ring mismatch: (N={self.n}, q={self.q}) vs (N={other.n}, q={other.q})")

    def __add__(self, other: "RingElement") -> "RingElement":
        self._check_compatible(other)
        if self.domain is not other.domain:
            raise RingError("cannot add elements in different domains")
        _tick("additions")
        return RingElement(self.modulus.add(self.coeffs, other.coeffs), self.domain, self.q)

    def __sub__(self, other: "RingElement") -> "RingElement":
        self._check_compatible(other)
        if self.domain is not other.domain:
            raise RingError("cannot subtract elements in different domains")
        _tick("additions")
        return RingElement(self.modulus.sub(self.coeffs, other.coeffs), self.domain, self.q)

    def __neg__(self) -> "RingElement":
        return RingElement(self.modulus.neg(self.coeffs), self.domain, self.q)

    def scale(self, k: int) -> "RingElement":
        kk = np.full(self.n, k % self.q, dtype=np.uint64)
        return RingElement(self.modulus.mul(self.coeffs, kk), self.domain, self.q)

    def pointwise(self, other: "RingElement") -> "RingElement":
        """Slot-wise product of two evaluation-domain elements."""
        self._check_compatible(other)
        if self.domain is not Domain.EVALUATION or other.domain is not Domain.EVALUATION:
            raise RingError("pointwise product needs both operands in the evaluation domain")
        _tick("pointwise")
        return RingElement(self.modulus.mul(self.coeffs, other.coeffs), Domain.EVALUATION, self.q)

    def __mul__(self, other: "RingElement") -> "RingElement":
        return negacyclic_mul(self, other)


def ntt_forward(x: RingElement) -> RingElement:
    if x.domain is not Domain.COEFFICIENT:
        raise RingError("ntt_forward expects a coefficient-domain element")
    _tick("ntt_forward")
    return RingElement(x.tables.forward(x.coeffs), Domain.EVALUATION, x.q)


def ntt_inverse(x: RingElement) -> RingElement:
    if x.domain is not Domain.EVALUATION:
        raise RingError("ntt_inverse expects an evaluation-domain element")
    _tick("ntt_inverse")
    return RingElement(x.tables.inverse(x.coeffs), Domain.COEFFICIENT, x.q)


def to_evaluation(x: RingElement) -> RingElement:
    return x if x.domain is Domain.EVALUATION else ntt_forward(x)


def to_coefficient(x: RingElement) -> RingElement:
    return x if x.domain is Domain.COEFFICIENT else ntt_inverse(x)


def negacyclic_mul(a: RingElement, b: RingElement) -> RingElement:
    """a*b mod (X^N+1, q), returned in the coefficient domain."""
    a._check_compatible(b)
    return ntt_inverse(to_evaluation(a).pointwise(to_evaluation(b)))


# Sampling. All randomness comes from an explicit numpy Generator so that a
# fixed seed reproduces every artifact.


def sample_uniform(rng: np.random.Generator, n: int, q: int) -> RingElement:
    return RingElement(rng.integers(0, q, size=n, dtype=np.uint64), Domain.COEFFICIENT, q)


def sample_ternary(rng: np.random.Generator, n: int, q: int) -> RingElement:
    return RingElement.from_ints(rng.integers(-1, 2, size=n, dtype=np.int64), q)


def sample_error_values(rng: np.random.Generator, n: int, sigma: float = ERROR_SIGMA) -> np.ndarray:
    """Rounded Gaussian, resampled outside +-6 sigma."""
    bound = int(6 * sigma)
    out = np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = np.rint(rng.normal(0.0, sigma, size=int(bad.sum()))).astype(np.int64)
        bad = np.abs(out) > bound
    return out


def sample_error(rng: np.random.Generator, n: int, q: int, sigma: float = ERROR_SIGMA) -> RingElement:
    return RingElement.from_ints(sample_error_values(rng, n, sigma), q)


def clear_table_caches() -> None:
    """Forget every cached modulus and NTT table (cold-start measurements)."""
    ntt_tables.cache_clear()
    modulus.cache_clear()
