"""Finite probability objects, information measures in nats, method of types.

Conventions
-----------
* All information quantities are in nats (natural logarithms), matching the
  rest of the package and the CSV outputs.
* ``0 * log 0 := 0`` everywhere.
* Probabilities are stored in linear scale (float64); sequence probabilities
  are evaluated in log space so long blocks do not underflow.
* A distribution must sum to 1 within ``SUM_TOL``; renormalization happens
  only when explicitly requested at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUM_TOL = 1e-12

# Largest q**n table the package will materialize; beyond this everything
# must stay in streaming / per-type form.
MATERIALIZE_CAP = 2**24

__all__ = [
    "Pmf",
    "ChannelMatrix",
    "JointPmf",
    "ProductDistribution",
    "TypeClass",
    "entropy",
    "conditional_entropy",
    "mutual_information",
    "kl_divergence",
    "product_distribution",
    "enumerate_types",
    "type_of",
    "multinomial",
    "sample",
    "spawn_seeds",
    "all_sequences",
    "joint_from_channel",
    "pmf_from_json",
    "channel_from_json",
]


def _as_prob_array(p) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.probs
    if isinstance(p, JointPmf):
        return p.table
    return np.asarray(p, dtype=np.float64)


def _validate_probs(a: np.ndarray, renormalize: bool, what: str) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError(f"{what} is empty")
    if a.min() < 0:
        raise ValueError(f"{what} has negative entries")
    s = a.sum()
    if abs(s - 1.0) > SUM_TOL:
        if not renormalize:
            raise ValueError(f"{what} sums to {s!r}, not 1 within {SUM_TOL}")
        if s <= 0:
            raise ValueError(f"{what} has zero total mass")
        a = a / s
    a.setflags(write=False)
    return a


class Pmf:
    """Probability mass function on the alphabet {0, ..., q-1}."""

    def __init__(self, probs, *, renormalize: bool = False):
        a = np.asarray(probs, dtype=np.float64)
        if a.ndim != 1:
            raise ValueError(f"pmf must be 1-D, got shape {a.shape}")
        self.probs = _validate_probs(a, renormalize, "pmf")

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, i) -> float:
        return float(self.probs[i])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    @classmethod
    def uniform(cls, q: int) -> "Pmf":
        return cls(np.full(q, 1.0 / q))

    @classmethod
    def bernoulli(cls, p: float) -> "Pmf":
        """Binary pmf with P(1) = p."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli parameter {p} outside [0, 1]")
        return cls(np.array([1.0 - p, p]))

    def to_json(self) -> dict:
        return {"alphabet": self.size, "probs": self.probs.tolist()}

    def __repr__(self):
        return f"Pmf({self.probs.tolist()})"


class ChannelMatrix:
    """Row-stochastic matrix: one output pmf per input letter."""

    def __init__(self, rows, *, renormalize: bool = False):
        a = np.array(rows, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"channel must be 2-D, got shape {a.shape}")
        for i in range(a.shape[0]):
            a[i] = _validate_probs(a[i], renormalize, f"channel row {i}")
        a.setflags(write=False)
        self.rows = a

    @property
    def in_size(self) -> int:
        return self.rows.shape[0]

    @property
    def out_size(self) -> int:
        return self.rows.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.rows[i]

    @classmethod
    def identity(cls, q: int) -> "ChannelMatrix":
        return cls(np.eye(q))

    @classmethod
    def bsc(cls, p: float) -> "ChannelMatrix":
        """Binary symmetric channel with crossover probability p."""
        return cls([[1.0 - p, p], [p, 1.0 - p]])

    def to_json(self) -> dict:
        return {"rows": self.rows.tolist()}

    def __repr__(self):
        return f"ChannelMatrix({self.rows.tolist()})"


class JointPmf:
    """Joint distribution over a product alphabet, stored as an ndarray."""

    def __init__(self, table, *, renormalize: bool = False):
        a = np.array(table, dtype=np.float64)
        if a.ndim < 1:
            raise ValueError("joint table must have at least one axis")
        flat = _validate_probs(a.reshape(-1), renormalize, "joint pmf")
        a = flat.reshape(a.shape)
        a.setflags(write=False)
        self.table = a

    @property
    def shape(self):
        return self.table.shape

    def marginal(self, axis) -> np.ndarray:
        """Marginal onto the given axis (or tuple of axes)."""
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        drop = tuple(i for i in range(self.table.ndim) if i not in axes)
        return self.table.sum(axis=drop)


def joint_from_channel(p_in, channel) -> np.ndarray:
    """Joint table p(k, z) = p_in(k) * W(z | k)."""
    p = _as_prob_array(p_in)
    W = channel.rows if isinstance(channel, ChannelMatrix) else np.asarray(channel)
    if W.shape[0] != p.shape[0]:
        raise ValueError("channel input size does not match input pmf")
    return p[:, None] * W


# ---------------------------------------------------------------------------
# Information measures (nats)
# ---------------------------------------------------------------------------


def _xlogx(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    mask = a > 0
    out[mask] = a[mask] * np.log(a[mask])
    return out


def entropy(p) -> float:
    """Shannon entropy in nats; multi-axis tables are flattened."""
    a = _as_prob_array(p).reshape(-1)
    return float(-_xlogx(a).sum())


def conditional_entropy(joint, given=1) -> float:
    """H(rest | axes in ``given``) for a joint table, in nats."""
    a = _as_prob_array(joint)
    axes = (given,) if isinstance(given, int) else tuple(given)
    axes = tuple(ax % a.ndim for ax in axes)
    drop = tuple(i for i in range(a.ndim) if i not in axes)
    marg = a.sum(axis=drop) if drop else a
    return entropy(a) - entropy(marg)


def mutual_information(joint) -> float:
    """I between the two axes of a 2-D joint table, in nats."""
    a = _as_prob_array(joint)
    if a.ndim != 2:
        raise ValueError("mutual_information expects a 2-D joint table")
    return entropy(a.sum(axis=1)) + entropy(a.sum(axis=0)) - entropy(a)


def kl_divergence(p, q) -> float:
    """D(p || q) in nats; +inf when support(p) is not inside support(q)."""
    a = _as_prob_array(p).reshape(-1)
    b = _as_prob_array(q).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("kl_divergence needs equal-length distributions")
    if a is b or np.array_equal(a, b):
        return 0.0
    mask = a > 0
    if np.any(b[mask] <= 0):
        return math.inf
    return float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask]))))


# ---------------------------------------------------------------------------
# Sequences and the i.i.d. product view
# ---------------------------------------------------------------------------


class ProductDistribution:
    """The n-fold i.i.d. extension of a base pmf, evaluated lazily.

    Never materializes the q**n table unless asked to and the table fits
    under ``MATERIALIZE_CAP``.
    """

    def __init__(self, base: Pmf, n: int):
        if n < 1:
            raise ValueError(f"block length must be >= 1, got {n}")
        self.base = base if isinstance(base, Pmf) else Pmf(base)
        self.n = int(n)
        with np.errstate(divide="ignore"):
            self._log_probs = np.log(self.base.probs)

    @property
    def q(self) -> int:
        return self.base.size

    def log_prob(self, seq) -> float:
        seq = np.asarray(seq, dtype=np.int64)
        if seq.shape != (self.n,):
            raise ValueError(f"sequence shape {seq.shape} != ({self.n},)")
        return float(self._log_probs[seq].sum())

    def prob(self, seq) -> float:
        return float(np.exp(self.log_prob(seq)))

    def materialize(self, cap: int = MATERIALIZE_CAP) -> np.ndarray:
        """Probabilities of all q**n sequences in lexicographic order."""
        total = self.q**self.n
        if total > cap:
            raise ValueError(
                f"q**n = {total} exceeds the materialization cap {cap}"
            )
        out = np.array([1.0])
        for _ in range(self.n):
            out = np.multiply.outer(out, self.base.probs).reshape(-1)
        return out


def product_distribution(p: Pmf, n: int) -> ProductDistribution:
    return ProductDistribution(p, n)


def all_sequences(n: int, q: int, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """All sequences of X^n in lexicographic order, shape (q**n, n)."""
    total = q**n
    if total * n > cap:
        raise ValueError(f"q**n * n = {total * n} exceeds cap {cap}")
    idx = np.arange(total)
    out = np.empty((total, n), dtype=np.int64)
    for t in range(n - 1, -1, -1):
        out[:, t] = idx % q
        idx //= q
    return out


# ---------------------------------------------------------------------------
# Method of types
# ---------------------------------------------------------------------------


def multinomial(n: int, counts) -> int:
    """Exact multinomial coefficient n! / prod(counts!)."""
    if sum(counts) != n:
        raise ValueError("counts must sum to n")
    out = 1
    rem = n
    for c in counts:
        out *= math.comb(rem, c)
        rem -= c
    return out


@dataclass(frozen=True)
class TypeClass:
    """All sequences of length n sharing the occupation numbers ``counts``."""

    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("negative occupation number")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def alphabet(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return multinomial(self.n, self.counts)

    def entropy(self) -> float:
        """Per-symbol entropy of the empirical distribution, in nats.

        Summed over descending counts so permuted types get bitwise-equal
        keys (exact ties resolve by the lexicographic tiebreak, not float
        noise).
        """
        n = self.n
        h = 0.0
        for c in sorted(self.counts, reverse=True):
            if c > 0:
                h += (c / n) * math.log(n / c)
        return h

    def log_prob_each(self, p) -> float:
        """log p^n(x) shared by every sequence x in this class."""
        probs = _as_prob_array(p)
        if probs.shape[0] != self.alphabet:
            raise ValueError("pmf alphabet does not match type alphabet")
        out = 0.0
        for c, pi in zip(self.counts, probs):
            if c == 0:
                continue
            if pi <= 0:
                return -math.inf
            out += c * math.log(pi)
        return out

    def rank(self, seq) -> int:
        """Lexicographic rank of ``seq`` within this class (exact int)."""
        seq = np.asarray(seq, dtype=np.int64)
        if seq.shape != (self.n,):
            raise ValueError("sequence length does not match type")
        remaining = list(self.counts)
        r = 0
        for t, x in enumerate(seq):
            x = int(x)
            if x >= self.alphabet or remaining[x] <= 0:
                raise ValueError("sequence does not belong to this type class")
            left = self.n - t - 1
            for y in range(x):
                if remaining[y] > 0:
                    remaining[y] -= 1
                    r += multinomial(left, remaining)
                    remaining[y] += 1
            remaining[x] -= 1
        return r

    def unrank(self, r: int) -> np.ndarray:
        """Inverse of :meth:`rank`."""
        if not 0 <= r < self.size:
            raise ValueError(f"rank {r} outside [0, {self.size})")
        remaining = list(self.counts)
        seq = np.empty(self.n, dtype=np.int64)
        for t in range(self.n):
            left = self.n - t - 1
            for y in range(self.alphabet):
                if remaining[y] <= 0:
                    continue
                remaining[y] -= 1
                block = multinomial(left, remaining)
                if r < block:
                    seq[t] = y
                    break
                r -= block
                remaining[y] += 1
        return seq


@lru_cache(maxsize=None)
def _compositions(n: int, parts: int) -> tuple:
    if parts == 1:
        return ((n,),)
    out = []
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            out.append((first,) + rest)
    return tuple(out)


def enumerate_types(n: int, alphabet_size: int) -> list:
    """All type classes of X^n in lexicographic counts order."""
    if n < 1 or alphabet_size < 1:
        raise ValueError("need n >= 1 and alphabet_size >= 1")
    return [TypeClass(c) for c in _compositions(n, alphabet_size)]


def type_of(seq, alphabet_size: int) -> TypeClass:
    seq = np.asarray(seq, dtype=np.int64)
    counts = np.bincount(seq, minlength=alphabet_size)
    return TypeClass(tuple(int(c) for c in counts))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def spawn_seeds(root_seed, count: int) -> list:
    """Independent child seed sequences for parallel tasks."""
    return np.random.SeedSequence(root_seed).spawn(count)


def sample(obj, *, seed, size: int | None = None, given=None) -> np.ndarray:
    """Draw from a Pmf (i.i.d. letters) or a ChannelMatrix (per-symbol).

    For a channel, ``given`` is the input sequence and the output has the
    same length.  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    if isinstance(obj, Pmf):
        k = 1 if size is None else int(size)
        out = rng.choice(obj.size, size=k, p=obj.probs)
        return out if size is not None else out[0]
    if isinstance(obj, ChannelMatrix):
        if given is None:
            raise ValueError("channel sampling needs an input sequence")
        inputs = np.asarray(given, dtype=np.int64)
        cum = np.cumsum(obj.rows, axis=1)
        u = rng.random(inputs.shape[0])
        return (cum[inputs] < u[:, None]).sum(axis=1)
    raise TypeError(f"cannot sample from {type(obj).__name__}")


# ---------------------------------------------------------------------------
# JSON interfaces
# ---------------------------------------------------------------------------


def pmf_from_json(doc: dict) -> Pmf:
    """Parse ``{"alphabet": q, "probs": [...]}``."""
    probs = doc["probs"]
    q = doc.get("alphabet", len(probs))
    if len(probs) != q:
        raise ValueError(f"declared alphabet {q} != len(probs) {len(probs)}")
    return Pmf(probs)


def channel_from_json(doc: dict) -> ChannelMatrix:
    """Parse ``{"rows": [[...], ...]}``."""
    return ChannelMatrix(doc["rows"])
