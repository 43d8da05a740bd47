"""Exact plaintext-leakage quantities for the additive cryptosystem.

Everything is computed from one object: the family of stochastic kernels

    gamma[x](c | a) = Pr[ciphertext = c | side message = a, plaintext = x]

indexed by plaintexts x.  Because the key and the side message are jointly
independent of the plaintext, the kernel does not depend on the plaintext
distribution, and for the additive construction it collapses to a single
posterior table over masked keys:

    gamma[x](c | a) = Pr[keymap(K^n) = c - encode(x) | M_A = a].

The leakage criteria follow:

* ``delta_mi``       -- I(C; X | M_A) for a given plaintext law, exactly;
* ``delta_max_mi``   -- the worst case over all plaintext laws, which equals
  the capacity of the channel x -> (C, M_A) and is solved by the alternating
  capacity iteration with a duality-gap stopping rule;
* closed-form lower / upper bounds through the key equivocations
  H(K^n | M_A) and H(keymap(K^n) | M_A).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import SideChannel, key_equivocation
from .crypto import Cryptosystem
from .probability import (
    ChannelMatrix,
    Pmf,
    ProductDistribution,
    all_sequences,
    entropy,
)

__all__ = [
    "GammaKernel",
    "LeakageReport",
    "CapacityResult",
    "DeltaMaxResult",
    "KernelCheckReport",
    "build_gamma_kernel",
    "delta_mi",
    "delta_max_mi",
    "delta_max_lower_bound",
    "delta_max_upper_bound",
    "channel_capacity",
    "structural_checks",
    "leakage_report",
]

# Hard ceiling on any dense table built here (entries, not bytes).
DEFAULT_TABLE_CAP = 2**26

_TINY = np.finfo(np.float64).tiny


@dataclass
class GammaKernel:
    """Ciphertext kernels of one (cryptosystem, adversary, key-source) triple.

    ``key_image_posterior[a, t] = Pr[keymap(K^n) = t | M_A = a]`` carries all
    randomness; ``gamma(x)`` materializes the per-plaintext stochastic matrix
    on demand.  Messages of probability zero are dropped (their original
    indices remain in ``message_ids``).
    """

    q: int
    n: int
    m: int
    p_message: np.ndarray
    key_image_posterior: np.ndarray
    image_of: np.ndarray
    in_decoding_set: np.ndarray
    message_ids: np.ndarray
    _sub: np.ndarray | None = field(default=None, repr=False)

    @property
    def message_count(self) -> int:
        return self.p_message.shape[0]

    @property
    def image_count(self) -> int:
        return self.q**self.m

    def sub_index(self) -> np.ndarray:
        """sub[c, t] = index of the digitwise difference c - t (mod q)."""
        if self._sub is None:
            digits = all_sequences(self.m, self.q)
            radix = self.q ** np.arange(self.m - 1, -1, -1, dtype=np.int64)
            diff = (digits[:, None, :] - digits[None, :, :]) % self.q
            self._sub = diff @ radix
        return self._sub

    def gamma(self, x_index: int) -> np.ndarray:
        """The stochastic matrix gamma[x](c | a), shape (q**m, messages)."""
        t = int(self.image_of[x_index])
        return self.key_image_posterior[:, self.sub_index()[:, t]].T

    def channel_rows(self, inputs=None) -> np.ndarray:
        """Rows of the plaintext-image -> (ciphertext, message) channel.

        Row t is the joint law p(c, a | image = t) flattened over (c, a).
        """
        if inputs is None:
            inputs = np.arange(self.image_count)
        sub = self.sub_index()
        # posterior[a, sub[c, t]] for selected t: -> (t, c, a)
        block = self.key_image_posterior[:, sub[:, inputs]]
        rows = np.transpose(block, (2, 1, 0)) * self.p_message
        return rows.reshape(len(inputs), -1)

    def lex_of_image(self) -> np.ndarray:
        """Lexicographic index of the decoding-set member of each image."""
        out = np.full(self.image_count, -1, dtype=np.int64)
        d = np.flatnonzero(self.in_decoding_set)
        out[self.image_of[d]] = d
        return out


def _source_tables(sys: Cryptosystem, cap: int):
    images, in_d, _ = sys.code.full_tables(cap=cap)
    return images, in_d


def _key_image_message_joint(sys: Cryptosystem, encoder, p_kz, cap: int):
    """Joint table over (masked key image, adversary message)."""
    p_kz = np.asarray(p_kz, dtype=np.float64)
    q, n, m = sys.q, sys.n, sys.m
    if p_kz.shape[0] != q:
        raise ValueError("p_KZ key alphabet does not match the system")
    if abs(p_kz.sum() - 1.0) > 1e-9:
        raise ValueError("p_KZ does not sum to 1")
    if encoder.n != n:
        raise ValueError(f"adversary block length {encoder.n} != system n {n}")

    if encoder.kind == "scalar":
        # the (masked key, message) joint factorizes per coordinate: fold
        # the per-symbol joint into a running table over (image, prefix)
        zsym = p_kz.shape[1]
        per_symbol = np.zeros((q, encoder.num_cells))
        for z in range(zsym):
            per_symbol[:, encoder.cells[z]] += p_kz[:, z]
        n_msgs = encoder.message_count
        if q**m * n_msgs > cap or q**n > cap:
            raise ValueError(
                f"q^m * |M_A| = {q ** m * n_msgs} exceeds table cap {cap}; "
                "use a smaller block or coarser quantizer"
            )
        digits = all_sequences(m, q)
        radix_m = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
        state = np.zeros((q**m, 1))
        state[int(sys.keymap.offset @ radix_m)] = 1.0
        for t in range(n):
            shifts = (np.arange(q)[:, None] * sys.keymap.matrix[t][None, :]) % q
            perm = ((digits[None, :, :] - shifts[:, None, :]) % q) @ radix_m
            gathered = state[perm]  # (q, q^m, prefix)
            state = np.einsum("ksp,ka->spa", gathered, per_symbol).reshape(
                q**m, -1
            )
        return state

    kseqs = all_sequences(n, q)
    if encoder.kind == "table":
        zsym = p_kz.shape[1]
        if q**n * zsym**n > cap:
            raise ValueError(
                f"q^n * |Z|^n = {q ** n * zsym ** n} exceeds table cap {cap}"
            )
        zseqs = all_sequences(n, zsym)
        joint_kz = np.ones((kseqs.shape[0], zseqs.shape[0]))
        for t in range(n):
            joint_kz *= p_kz[kseqs[:, t][:, None], zseqs[None, :, t]]
        n_msgs = encoder.message_count
        joint_km = np.zeros((kseqs.shape[0], n_msgs))
        np.add.at(joint_km.T, encoder.table, joint_kz.T)
    else:
        raise TypeError(f"unknown encoder kind {encoder.kind!r}")

    radix_m = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    kimg = (kseqs @ sys.keymap.matrix + sys.keymap.offset) % q
    kimg_idx = kimg @ radix_m
    g_joint = np.zeros((q**m, joint_km.shape[1]))
    np.add.at(g_joint, kimg_idx, joint_km)
    return g_joint


def build_gamma_kernel(
    sys: Cryptosystem, encoder, p_kz, *, table_cap: int = DEFAULT_TABLE_CAP
) -> GammaKernel:
    """Exact kernel construction by joint enumeration (product-form for
    scalar adversaries, full (k, z) enumeration for table adversaries)."""
    q, n, m = sys.q, sys.n, sys.m
    if q**n * q**m > table_cap:
        raise ValueError("q^n * q^m exceeds the table cap; reduce n")
    g_joint = _key_image_message_joint(sys, encoder, p_kz, table_cap)
    p_message = g_joint.sum(axis=0)
    keep = np.flatnonzero(p_message > 0)
    posterior = (g_joint[:, keep] / p_message[keep]).T
    images, in_d = _source_tables(sys, table_cap)
    return GammaKernel(
        q=q,
        n=n,
        m=m,
        p_message=p_message[keep],
        key_image_posterior=posterior,
        image_of=images,
        in_decoding_set=in_d,
        message_ids=keep,
    )


def _plaintext_vector(kernel: GammaKernel, p_x) -> np.ndarray:
    """Coerce a plaintext law to a vector over X^n in lexicographic order."""
    total = kernel.q**kernel.n
    if isinstance(p_x, ProductDistribution):
        if p_x.q != kernel.q or p_x.n != kernel.n:
            raise ValueError("plaintext law does not match the kernel")
        return p_x.materialize()
    if isinstance(p_x, Pmf):
        return ProductDistribution(p_x, kernel.n).materialize()
    v = np.asarray(p_x, dtype=np.float64)
    if v.shape != (total,):
        raise ValueError(f"plaintext vector must have length q^n = {total}")
    if v.min() < 0 or abs(v.sum() - 1.0) > 1e-9:
        raise ValueError("plaintext vector is not a distribution")
    return v


def delta_mi(kernel: GammaKernel, p_x, method: str = "kl") -> float:
    """I(C; X | M_A) in nats for the given plaintext law, exactly.

    ``method="kl"`` averages per-plaintext divergences from the mixture
    kernel; ``method="entropy"`` uses H(C|M) - H(C|X,M).  The two agree to
    float precision and are cross-checked in the tests.
    """
    px = _plaintext_vector(kernel, p_x)
    p_img = np.bincount(kernel.image_of, weights=px, minlength=kernel.image_count)
    sub = kernel.sub_index()
    total = 0.0
    for a in range(kernel.message_count):
        pa = kernel.p_message[a]
        table = kernel.key_image_posterior[a][sub]  # [c, t]
        if np.all(table == table[:, :1]):
            continue  # kernel is plaintext-independent given this message
        mix = table @ p_img
        if method == "kl":
            logt = np.where(table > 0, np.log(np.maximum(table, _TINY)), 0.0)
            logm = np.log(np.maximum(mix, _TINY))
            kl_t = np.sum(np.where(table > 0, table * (logt - logm[:, None]), 0.0), axis=0)
            total += pa * float(kl_t @ p_img)
        elif method == "entropy":
            # every column of `table` is a permutation of the posterior row
            total += pa * (entropy(mix) - entropy(kernel.key_image_posterior[a]))
        else:
            raise ValueError(f"unknown method {method!r}")
    return total


@dataclass
class CapacityResult:
    """Outcome of the alternating capacity iteration."""

    value: float
    lower: float
    upper: float
    iterations: int
    converged: bool
    input_distribution: np.ndarray


def channel_capacity(
    rows: np.ndarray, *, tol: float = 1e-7, max_iter: int = 10**5
) -> CapacityResult:
    """Capacity (nats) of a discrete memoryless channel given as row laws.

    Alternating (Blahut-Arimoto style) iteration; stops when the standard
    duality bracket max_i D(P_i || r) - I(p) falls below ``tol``.  The
    reported value is the achievable side I(p) of the bracket.
    """
    P = np.asarray(rows, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValueError("channel must be a 2-D row-stochastic array")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("channel rows must sum to 1")
    mask = P > 0
    logP = np.where(mask, np.log(np.maximum(P, _TINY)), 0.0)
    k = P.shape[0]
    p = np.full(k, 1.0 / k)
    lower = upper = 0.0
    iters = 0
    converged = False
    for iters in range(1, max_iter + 1):
        r = p @ P
        logr = np.log(np.maximum(r, _TINY))
        D = np.sum(np.where(mask, P * (logP - logr), 0.0), axis=1)
        lower = float(p @ D)
        upper = float(D.max())
        if upper - lower <= tol:
            converged = True
            break
        p = p * np.exp(D - D.max())
        p /= p.sum()
    return CapacityResult(
        value=max(lower, 0.0),
        lower=max(lower, 0.0),
        upper=upper,
        iterations=iters,
        converged=converged,
        input_distribution=p,
    )


@dataclass
class DeltaMaxResult:
    """Worst-case leakage with its achieving plaintext distribution."""

    value: float
    lower: float
    upper: float
    iterations: int
    converged: bool
    input_distribution: np.ndarray  # over X^n, lexicographic
    image_distribution: np.ndarray  # over X^m images


def delta_max_mi(
    kernel: GammaKernel,
    tol: float = 1e-7,
    *,
    max_iter: int = 10**5,
    restrict_to_decoding_set: bool = False,
) -> DeltaMaxResult:
    """max over plaintext laws of I(C; X | M_A), in nats.

    Since the plaintext is independent of (key, side message), the target
    equals I(X; C, M_A): the capacity of the channel x -> (c, a).  The
    channel row depends on x only through encode(x), so the iteration runs
    over the (surjective) image alphabet X^m; the returned plaintext
    optimizer is supported on the decoding set.  With
    ``restrict_to_decoding_set`` the input set is the images reachable from
    D only (identical for every valid system, by surjectivity on D).
    """
    source = kernel.in_decoding_set if restrict_to_decoding_set else None
    if source is None:
        inputs = np.unique(kernel.image_of)
    else:
        inputs = np.unique(kernel.image_of[source])
    rows = kernel.channel_rows(inputs)
    cap = channel_capacity(rows, tol=tol, max_iter=max_iter)
    img_dist = np.zeros(kernel.image_count)
    img_dist[inputs] = cap.input_distribution
    x_dist = np.zeros(kernel.q**kernel.n)
    lex = kernel.lex_of_image()
    ok = lex >= 0
    x_dist[lex[ok]] = img_dist[ok]
    # images unreachable from D (none for valid systems) keep zero mass
    x_dist /= x_dist.sum()
    return DeltaMaxResult(
        value=cap.value,
        lower=cap.lower,
        upper=cap.upper,
        iterations=cap.iterations,
        converged=cap.converged,
        input_distribution=x_dist,
        image_distribution=img_dist,
    )


def _side_channel_from_joint(p_kz) -> tuple:
    p_kz = np.asarray(p_kz, dtype=np.float64)
    p_k = p_kz.sum(axis=1)
    rows = np.empty_like(p_kz)
    for k in range(p_kz.shape[0]):
        if p_k[k] > 0:
            rows[k] = p_kz[k] / p_k[k]
        else:
            rows[k] = 1.0 / p_kz.shape[1]
    return Pmf(p_k, renormalize=True), SideChannel(ChannelMatrix(rows))


def delta_max_lower_bound(sys: Cryptosystem, encoder, p_kz) -> float:
    """m ln q - H(K^n | M_A), floored at zero (always <= delta_max_mi)."""
    p_k, sc = _side_channel_from_joint(p_kz)
    h = key_equivocation(encoder, p_k, sc)
    return max(0.0, sys.m * math.log(sys.q) - h)


def delta_max_upper_bound(
    sys: Cryptosystem, encoder, p_kz, *, kernel: GammaKernel | None = None
) -> float:
    """m ln q - H(keymap(K^n) | M_A), valid for the additive construction."""
    if kernel is None:
        kernel = build_gamma_kernel(sys, encoder, p_kz)
    h_img = float(
        np.dot(
            kernel.p_message,
            [entropy(row) for row in kernel.key_image_posterior],
        )
    )
    return sys.m * math.log(sys.q) - h_img


@dataclass
class KernelCheckReport:
    """Row-sum and uniformity checks of the kernel family."""

    passed: bool
    row_sums_ok: bool
    row_sum_max_error: float
    row_sum_witness: tuple | None
    uniform_ok: bool
    uniform_max_error: float
    uniform_witness: tuple | None


def structural_checks(
    kernel: GammaKernel, in_decoding_set=None, tol: float = 1e-10
) -> KernelCheckReport:
    """Verify the two exact identities every valid kernel family satisfies.

    (a) For each (ciphertext, message), the kernel values summed over the
        decoding set equal 1.
    (b) A uniform plaintext on the decoding set makes the ciphertext uniform
        on X^m and independent of the message.

    Witnesses are (ciphertext index, message position) of the worst entry.
    """
    in_d = kernel.in_decoding_set if in_decoding_set is None else in_decoding_set
    img_counts = np.bincount(
        kernel.image_of[np.flatnonzero(in_d)], minlength=kernel.image_count
    ).astype(np.float64)
    d_size = img_counts.sum()
    sub = kernel.sub_index()
    worst_a = worst_u = 0.0
    wit_a = wit_u = None
    target = 1.0 / kernel.image_count
    for a in range(kernel.message_count):
        table = kernel.key_image_posterior[a][sub]  # [c, t]
        sums = table @ img_counts
        err = np.abs(sums - 1.0)
        c = int(err.argmax())
        if err[c] > worst_a:
            worst_a, wit_a = float(err[c]), (c, a)
        dist = sums / d_size
        err_u = np.abs(dist - target)
        c = int(err_u.argmax())
        if err_u[c] > worst_u:
            worst_u, wit_u = float(err_u[c]), (c, a)
    rows_ok = worst_a <= tol
    unif_ok = worst_u <= tol
    return KernelCheckReport(
        passed=rows_ok and unif_ok,
        row_sums_ok=rows_ok,
        row_sum_max_error=worst_a,
        row_sum_witness=None if rows_ok else wit_a,
        uniform_ok=unif_ok,
        uniform_max_error=worst_u,
        uniform_witness=None if unif_ok else wit_u,
    )


@dataclass
class LeakageReport:
    """One experiment row: exact leakage plus both closed-form bounds."""

    n: int
    m: int
    q: int
    R_A: float
    R: float
    delta_mi: float
    delta_max: float
    lower_bound: float
    upper_bound: float
    iterations: int
    tol: float
    diagnostics: dict = field(default_factory=dict)

    CSV_HEADER = "n,m,q,RA,R,delta_mi,delta_max,lb,ub,iters,tol"

    def csv_row(self) -> str:
        vals = [
            self.n,
            self.m,
            self.q,
            self.R_A,
            self.R,
            self.delta_mi,
            self.delta_max,
            self.lower_bound,
            self.upper_bound,
            self.iterations,
            self.tol,
        ]
        return ",".join(_fmt(v) for v in vals)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def leakage_report(
    sys: Cryptosystem,
    encoder,
    p_kz,
    p_x,
    *,
    R_A: float,
    R: float,
    tol: float = 1e-7,
) -> LeakageReport:
    """Assemble the full leakage picture for one configuration."""
    kernel = build_gamma_kernel(sys, encoder, p_kz)
    dmi = delta_mi(kernel, p_x)
    dmax = delta_max_mi(kernel, tol)
    dmax_d = delta_max_mi(kernel, tol, restrict_to_decoding_set=True)
    lb = delta_max_lower_bound(sys, encoder, p_kz)
    ub = delta_max_upper_bound(sys, encoder, p_kz, kernel=kernel)
    return LeakageReport(
        n=sys.n,
        m=sys.m,
        q=sys.q,
        R_A=R_A,
        R=R,
        delta_mi=dmi,
        delta_max=dmax.value,
        lower_bound=lb,
        upper_bound=ub,
        iterations=dmax.iterations,
        tol=tol,
        diagnostics={
            "delta_max_bracket": (dmax.lower, dmax.upper),
            "delta_max_on_decoding_set": dmax_d.value,
            "adversary_rate": encoder.rate,
            "converged": dmax.converged,
        },
    )
