"""Side channel and rate-limited helper encoders for the eavesdropper.

The side channel is a memoryless noisy map from the key alphabet to an
observation alphabet Z; the adversary compresses the n-symbol observation
into a message of rate at most R_A nats per symbol.

Two encoder families are supported at desk scale:

* scalar quantizers (one map f: Z -> cells applied per symbol), which keep
  the exact product-form analysis H(K^n | M_A) = n * H(K | f(Z)) available
  at any block length;
* explicit tables Z^n -> messages, exact by enumeration for small n.

A scalar quantizer of rate ln|cells| is a valid rate-R_A helper whenever
ln|cells| <= R_A, but it need not attain the information-theoretic optimum
I(Z;U); the gap is reported alongside results wherever budgets appear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .probability import (
    ChannelMatrix,
    Pmf,
    all_sequences,
    conditional_entropy,
    joint_from_channel,
)

__all__ = [
    "SideChannel",
    "ScalarQuantizerEncoder",
    "TableEncoder",
    "sample_side_channel",
    "scalar_quantizer_encoder",
    "best_scalar_quantizer",
    "key_equivocation",
    "set_partitions",
]


@dataclass(frozen=True)
class SideChannel:
    """Memoryless channel W from the key alphabet to observations Z."""

    W: ChannelMatrix

    @property
    def key_size(self) -> int:
        return self.W.in_size

    @property
    def obs_size(self) -> int:
        return self.W.out_size

    def joint_with(self, p_K) -> np.ndarray:
        """Single-symbol joint p(k, z)."""
        return joint_from_channel(p_K, self.W)


def sample_side_channel(sc: SideChannel, k_seq, seed) -> np.ndarray:
    """One memoryless use of W per key symbol; deterministic given seed."""
    k_seq = np.asarray(k_seq, dtype=np.int64)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(sc.W.rows, axis=1)
    u = rng.random(k_seq.shape[0])
    return (cum[k_seq] < u[:, None]).sum(axis=1)


@dataclass(frozen=True)
class ScalarQuantizerEncoder:
    """Per-symbol map f: Z -> {0..cells-1}; the message is the n-tuple."""

    cells: tuple
    n: int

    kind = "scalar"

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        if min(cells) != 0 or max(cells) + 1 != len(set(cells)):
            raise ValueError("cell labels must be 0..C-1 with every cell used")
        if self.n < 1:
            raise ValueError("block length must be >= 1")
        object.__setattr__(self, "cells", cells)

    @property
    def num_cells(self) -> int:
        return max(self.cells) + 1

    @property
    def message_count(self) -> int:
        return self.num_cells**self.n

    @property
    def rate(self) -> float:
        """(1/n) ln |messages| = ln(number of cells), in nats per symbol."""
        return math.log(self.num_cells)

    def apply(self, z_seq) -> int:
        z_seq = np.asarray(z_seq, dtype=np.int64)
        out = 0
        for z in z_seq:
            out = out * self.num_cells + self.cells[int(z)]
        return out

    def symbol_channel(self, W: ChannelMatrix) -> np.ndarray:
        """Per-symbol transition p(cell | k) induced through W."""
        out = np.zeros((W.in_size, self.num_cells))
        for z, c in enumerate(self.cells):
            out[:, c] += W.rows[:, z]
        return out


@dataclass(frozen=True)
class TableEncoder:
    """Explicit encoder over Z^n: table[lex index of z-seq] = message id."""

    table: np.ndarray
    n: int
    obs_size: int

    kind = "table"

    def __post_init__(self):
        t = np.array(self.table, dtype=np.int64)
        if t.shape != (self.obs_size**self.n,):
            raise ValueError(
                f"table length {t.shape} != |Z|^n = {self.obs_size ** self.n}"
            )
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def message_count(self) -> int:
        return int(self.table.max()) + 1

    @property
    def rate(self) -> float:
        return math.log(self.message_count) / self.n

    def apply(self, z_seq) -> int:
        z_seq = np.asarray(z_seq, dtype=np.int64)
        idx = 0
        for z in z_seq:
            idx = idx * self.obs_size + int(z)
        return int(self.table[idx])


def scalar_quantizer_encoder(f, n: int) -> ScalarQuantizerEncoder:
    """Wrap a per-symbol map given as a sequence of cell labels over Z.

    Labels are renumbered by first appearance so that equal partitions get
    equal encodings.
    """
    f = list(int(c) for c in f)
    seen = {}
    canon = []
    for c in f:
        if c not in seen:
            seen[c] = len(seen)
        canon.append(seen[c])
    return ScalarQuantizerEncoder(tuple(canon), n)


def set_partitions(n_items: int, max_blocks: int):
    """Restricted-growth strings over n items with at most max_blocks cells."""

    def rec(prefix, used):
        if len(prefix) == n_items:
            yield tuple(prefix)
            return
        for c in range(min(used + 1, max_blocks)):
            prefix.append(c)
            yield from rec(prefix, max(used, c + 1))
            prefix.pop()

    yield from rec([], 0)


def best_scalar_quantizer(
    sc: SideChannel, p_K, R_A: float, n: int, *, max_obs: int = 12
) -> ScalarQuantizerEncoder:
    """Exhaustive search for the partition of Z minimizing H(K | f(Z)).

    The budget allows at most floor(exp(R_A)) cells.  Ties break toward
    the lexicographically smallest restricted-growth encoding.  Refuses
    |Z| beyond ``max_obs`` (the partition count explodes).
    """
    z = sc.obs_size
    if z > max_obs:
        raise ValueError(f"|Z| = {z} exceeds exhaustive-search cap {max_obs}")
    budget = max(1, int(math.floor(math.exp(R_A) + 1e-9)))
    joint = sc.joint_with(p_K)  # p(k, z)
    best = None
    best_h = math.inf
    for part in set_partitions(z, budget):
        cells = max(part) + 1
        grouped = np.zeros((joint.shape[0], cells))
        for zi, c in enumerate(part):
            grouped[:, c] += joint[:, zi]
        h = conditional_entropy(grouped, given=1)
        if h < best_h - 1e-15:
            best_h = h
            best = part
    return ScalarQuantizerEncoder(best, n)


def key_equivocation(enc, p_K, sc: SideChannel) -> float:
    """Exact H(K^n | M_A) in nats.

    Scalar encoders factor per symbol; table encoders are enumerated over
    (k-sequence, z-sequence) space, so keep n small there.
    """
    p = p_K if isinstance(p_K, Pmf) else Pmf(p_K)
    if enc.kind == "scalar":
        V = enc.symbol_channel(sc.W)
        joint = p.probs[:, None] * V
        return enc.n * conditional_entropy(joint, given=1)
    if enc.kind == "table":
        n = enc.n
        q = p.size
        zsize = sc.obs_size
        kseqs = all_sequences(n, q)
        zseqs = all_sequences(n, zsize)
        pk = np.ones(kseqs.shape[0])
        for t in range(n):
            pk *= p.probs[kseqs[:, t]]
        pz_given_k = np.ones((kseqs.shape[0], zseqs.shape[0]))
        for t in range(n):
            pz_given_k *= sc.W.rows[kseqs[:, t][:, None], zseqs[None, :, t]]
        msgs = enc.table
        joint_km = np.zeros((kseqs.shape[0], enc.message_count))
        np.add.at(joint_km.T, msgs, (pk[:, None] * pz_given_k).T)
        return conditional_entropy(joint_km, given=1)
    raise TypeError(f"unknown encoder kind {enc.kind!r}")
