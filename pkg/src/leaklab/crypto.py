"""The composed cryptosystem: affine key encoder plus universal source code.

Encryption adds the two encodings over GF(q)^m:

    encrypt(k, x) = keymap(k) + encode(x)   (componentwise, mod q)
    decrypt(k, c) = decode(c - keymap(k))

so decrypt(k, encrypt(k, x)) = decode(encode(x)) for every key, which is the
structural condition tying the cryptosystem to its underlying source code.
Construction verifies that condition exhaustively at desk scale and by
sampling above it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import UniversalCode
from .galois import AffineMap, affine_apply
from .probability import all_sequences

__all__ = [
    "Cryptosystem",
    "encrypt",
    "decrypt",
    "check_structural_properties",
    "StructuralReport",
]

# Exhaustive (key, plaintext) verification is the default up to this many
# pairs; larger systems get a sampled spot check instead.
EXHAUSTIVE_PAIR_CAP = 2**20


class Cryptosystem:
    """Additive cipher built from a universal code and an affine key map."""

    def __init__(
        self,
        code: UniversalCode,
        keymap: AffineMap,
        *,
        validation: str = "auto",
        sample_pairs: int = 10**4,
        seed: int = 0,
    ):
        if keymap.n != code.n or keymap.m != code.m:
            raise ValueError(
                f"keymap is {keymap.n}x{keymap.m}, code needs {code.n}x{code.m}"
            )
        if keymap.spec.q != code.q:
            raise ValueError("keymap and code live over different fields")
        self.code = code
        self.keymap = keymap
        self.n = code.n
        self.m = code.m
        self.q = code.q
        if validation == "auto":
            pairs = self.q ** (2 * self.n)
            validation = "exhaustive" if pairs <= EXHAUSTIVE_PAIR_CAP else "sampled"
        if validation not in ("exhaustive", "sampled", "none"):
            raise ValueError(f"unknown validation level {validation!r}")
        self.validation = validation
        if validation != "none":
            ok, witness = _condition_check(self, validation, sample_pairs, seed)
            if not ok:
                raise AssertionError(
                    f"structural condition violated at (k, x) = {witness}"
                )

    def encrypt(self, k, x) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        if k.shape != (self.n,) or x.shape != (self.n,):
            raise ValueError("key and plaintext must both have length n")
        return (affine_apply(self.keymap, k) + self.code.encode(x)) % self.q

    def decrypt(self, k, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.int64)
        if c.shape != (self.m,):
            raise ValueError(f"ciphertext shape {c.shape} != ({self.m},)")
        return self.code.decode((c - affine_apply(self.keymap, k)) % self.q)

    def key_image(self, k) -> np.ndarray:
        """keymap(k), the m-symbol masked key."""
        return affine_apply(self.keymap, k)

    def to_json(self) -> dict:
        return {"code": self.code.to_json(), "keymap": self.keymap.to_json()}

    @classmethod
    def from_json(cls, doc: dict, *, validation: str = "auto") -> "Cryptosystem":
        return cls(
            UniversalCode.from_json(doc["code"]),
            AffineMap.from_json(doc["keymap"]),
            validation=validation,
        )


def encrypt(sys: Cryptosystem, k, x) -> np.ndarray:
    return sys.encrypt(k, x)


def decrypt(sys: Cryptosystem, k, c) -> np.ndarray:
    return sys.decrypt(k, c)


def _index_digits(value: int, width: int, q: int) -> np.ndarray:
    out = np.empty(width, dtype=np.int64)
    for i in range(width - 1, -1, -1):
        out[i] = value % q
        value //= q
    return out


def _condition_check(sys, level, sample_pairs, seed):
    """Verify decrypt(k, encrypt(k, x)) == decode(encode(x)) over (k, x).

    A seeded sample always goes through the public encrypt/decrypt methods;
    the exhaustive sweep then covers every pair with the same arithmetic
    tabulated through encode/decode (method calls on q^{2n} pairs would not
    finish at desk scale).
    """
    n, m, q = sys.n, sys.m, sys.q
    rng = np.random.default_rng(seed)
    n_probe = min(sample_pairs, 256) if level == "exhaustive" else sample_pairs
    keys = rng.integers(0, q, size=(n_probe, n))
    xs = rng.integers(0, q, size=(n_probe, n))
    for k, x in zip(keys, xs):
        want = sys.code.decode(sys.code.encode(x))
        got = sys.decrypt(k, sys.encrypt(k, x))
        if not np.array_equal(want, got):
            return False, (k.tolist(), x.tolist())
    if level == "sampled":
        return True, None

    seqs = all_sequences(n, q)
    radix_m = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    radix_n = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    enc_digits = np.stack([sys.code.encode(x) for x in seqs])
    dec_lex = np.array(
        [int(sys.code.decode(_index_digits(c, m, q)) @ radix_n) for c in range(q**m)],
        dtype=np.int64,
    )
    want = dec_lex[enc_digits @ radix_m]
    for k in seqs:
        kdig = affine_apply(sys.keymap, k)
        got = dec_lex[(((enc_digits + kdig) % q - kdig) % q) @ radix_m]
        bad = np.flatnonzero(got != want)
        if bad.size:
            return False, (k.tolist(), seqs[bad[0]].tolist())
    return True, None


@dataclass
class StructuralReport:
    """Outcome of the executable structural property suite."""

    passed: bool = True
    mode: str = "exhaustive"
    failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def record(self, name: str, ok: bool, witness=None):
        self.checks[name] = {"ok": ok, "witness": witness}
        if not ok:
            self.passed = False
            self.failures.append((name, witness))


def check_structural_properties(
    sys: Cryptosystem,
    *,
    max_exhaustive_pairs: int = EXHAUSTIVE_PAIR_CAP,
    sample_keys: int = 64,
    seed: int = 0,
) -> StructuralReport:
    """Run the decoding-set and per-key injectivity/surjectivity checks.

    Checks, each with a named witness on failure:

    * ``decoding_set_size`` — the enumerated set {x : decode(encode(x)) = x}
      has exactly q**m elements.
    * ``injective_on_D`` — for every (checked) key, encrypt(k, .) is
      injective on that set.
    * ``surjective`` — for every (checked) key, encrypt(k, .) covers X^m.
    * ``key_independent_D`` — {x : decrypt(k, encrypt(k, x)) = x} is the
      same set for every checked key.

    All keys are checked when q**(2n) fits under ``max_exhaustive_pairs``;
    otherwise a seeded sample of keys is used and the report says so.
    """
    n, m, q = sys.n, sys.m, sys.q
    report = StructuralReport()
    total_x = q**n

    # Tabulate encode over X^n and decode over X^m through the public
    # methods once; per-key checks below are vectorized on these tables.
    seqs = all_sequences(n, q)
    radix_m = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    radix_n = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    enc_digits = np.stack([sys.code.encode(x) for x in seqs])
    dec_lex = np.array(
        [int(sys.code.decode(_index_digits(c, m, q)) @ radix_n) for c in range(q**m)],
        dtype=np.int64,
    )
    in_d = dec_lex[enc_digits @ radix_m] == np.arange(total_x)

    d_count = int(in_d.sum())
    report.record(
        "decoding_set_size",
        d_count == q**m,
        None if d_count == q**m else {"enumerated": d_count, "expected": q**m},
    )

    exhaustive = q ** (2 * n) <= max_exhaustive_pairs
    report.mode = "exhaustive" if exhaustive else "sampled"
    if exhaustive:
        keys = seqs
    else:
        rng = np.random.default_rng(seed)
        keys = rng.integers(0, q, size=(sample_keys, n))

    d_indices = np.flatnonzero(in_d)
    inj_ok, inj_witness = True, None
    surj_ok, surj_witness = True, None
    dset_ok, dset_witness = True, None
    base_mask = in_d
    for k in keys:
        kdig = sys.key_image(k)
        cipher_digits = (enc_digits + kdig) % q
        cipher_idx = cipher_digits @ radix_m
        if inj_ok:
            on_d = cipher_idx[d_indices]
            uniq, first = np.unique(on_d, return_index=True)
            if uniq.size != d_indices.size:
                inj_ok = False
                dup = np.flatnonzero(np.bincount(on_d, minlength=q**m) > 1)[0]
                pair = d_indices[np.flatnonzero(on_d == dup)[:2]]
                inj_witness = {
                    "key": k.tolist(),
                    "x": seqs[pair[0]].tolist(),
                    "y": seqs[pair[1]].tolist(),
                }
        if surj_ok and np.unique(cipher_idx).size != q**m:
            surj_ok = False
            missing = sorted(set(range(q**m)) - set(cipher_idx.tolist()))
            surj_witness = {"key": k.tolist(), "missing_codewords": missing[:4]}
        # decrypt(k, .) applied to each ciphertext, as decode-table lookups
        back_idx = ((cipher_digits - kdig) % q) @ radix_m
        ok_mask = dec_lex[back_idx] == np.arange(total_x)
        if dset_ok and not np.array_equal(ok_mask, base_mask):
            diff = int(np.flatnonzero(ok_mask != base_mask)[0])
            dset_ok = False
            dset_witness = {"key": k.tolist(), "x": seqs[diff].tolist()}
    report.record("injective_on_D", inj_ok, inj_witness)
    report.record("surjective", surj_ok, surj_witness)
    report.record("key_independent_D", dset_ok, dset_witness)
    return report
