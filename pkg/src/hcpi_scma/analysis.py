"""Pairwise error probabilities and the average block error union bound.

Chip sequences are ``(S, J)`` matrices (one column per user) in this module;
channel gains keep the ``(J, S)`` layout of :mod:`hcpi_scma.channel`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import crandn, sample_channel
from .errors import InstanceTooLarge, PoleEncountered
from .mapper import BtiMapper, HcpiConfig, PatternTable

EXACT_BLOCK_LIMIT = 1 << 20


def q_exact(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def q_approx(x):
    """Two-exponential approximation ``e^{-x^2/2}/12 + e^{-2x^2/3}/4``."""
    x2 = np.asarray(x, dtype=float) ** 2
    return np.exp(-x2 / 2) / 12 + np.exp(-2 * x2 / 3) / 4


@dataclass(frozen=True)
class PairwiseInstance:
    """Transmitted ``Cmat`` versus hypothesized ``Chat``, both ``(S, J)``."""

    Cmat: np.ndarray
    Chat: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.Cmat, dtype=complex))
        b = np.atleast_2d(np.asarray(self.Chat, dtype=complex))
        if a.shape != b.shape:
            raise ValueError(f"Cmat {a.shape} and Chat {b.shape} differ")
        object.__setattr__(self, "Cmat", a)
        object.__setattr__(self, "Chat", b)

    @property
    def delta(self) -> np.ndarray:
        return self.Cmat - self.Chat

    @property
    def lambda2(self) -> np.ndarray:
        return delta_eigenvalues(self)


def delta_eigenvalues(instance: PairwiseInstance) -> np.ndarray:
    """Per-chip ``sum_j |c_j[s] - chat_j[s]|^2``, the nonzero spectrum of the difference Gram matrix."""
    return np.sum(np.abs(instance.delta) ** 2, axis=1)


def cpep(instance: PairwiseInstance, h: np.ndarray, N0: float, approx: bool = False) -> float:
    """Pairwise error probability given gains ``h (J, S)``."""
    d = np.sum(np.asarray(h).T * instance.delta, axis=1)
    x = np.sqrt(np.sum(np.abs(d) ** 2) / (2 * N0))
    return float(q_approx(x) if approx else q_exact(x))


def upep(lambda2, N0: float, form: str = "corrected") -> np.ndarray:
    """Rayleigh-averaged pairwise error probability.

    ``lambda2`` may be a :class:`PairwiseInstance` or an array whose last
    axis runs over chips. ``form="corrected"`` is the exact expectation of
    the two-exponential approximation; ``"as-printed"`` keeps the product of
    sums with the minus signs, and raises :class:`PoleEncountered` when a
    denominator reaches zero.
    """
    if isinstance(lambda2, PairwiseInstance):
        lambda2 = lambda2.lambda2
    lam = np.asarray(lambda2, dtype=float)
    if form == "corrected":
        a = np.prod(4 * N0 / (4 * N0 + lam), axis=-1)
        b = np.prod(3 * N0 / (3 * N0 + lam), axis=-1)
        return a / 12 + b / 4
    if form == "as-printed":
        d1 = 2 * N0 - lam / 2
        d2 = 2 * N0 - 2 * lam / 3
        if (d1 <= 0).any() or (d2 <= 0).any():
            raise PoleEncountered(f"2*N0 = {2 * N0!r} <= 2/3 * max lambda^2 = {2 * lam.max() / 3!r}")
        return np.prod(2 * N0 / d1 / 12 + 2 * N0 / d2 / 4, axis=-1)
    raise ValueError(f"unknown form {form!r}")


class BlockSpace:
    """Every user's ``2**m`` possible chip sequences, indexed by the integer value of the bits."""

    def __init__(self, config: HcpiConfig, mapper: BtiMapper, families):
        self.config = config
        self.table = PatternTable(config, mapper)
        fams = sorted(families, key=lambda f: f.order)
        self.graph = fams[0].graph
        cw = np.stack([f.codewords for f in fams])
        m = config.m
        self.size = 1 << m
        all_bits = ((np.arange(self.size)[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int64)
        J = cw.shape[1]
        chips, _ = self.table.encode(np.broadcast_to(all_bits[:, None, :], (self.size, J, m)), cw)
        self.chips = np.ascontiguousarray(chips.transpose(1, 0, 2))  # (J, 2**m, S)

    @property
    def J(self) -> int:
        return self.chips.shape[0]

    @property
    def S(self) -> int:
        return self.chips.shape[2]

    def user_distances(self) -> np.ndarray:
        """``D[j, b, bhat, s] = |u_j[b, s] - u_j[bhat, s]|^2``."""
        u = self.chips
        return np.abs(u[:, :, None, :] - u[:, None, :, :]) ** 2


def ablep_bound(j: int, space: BlockSpace, N0: float, mode: str = "exact", samples: int = 2000,
                multi_samples: int = 16, rng: np.random.Generator | None = None,
                form: str = "corrected") -> tuple[float, float]:
    """Union bound on user ``j``'s block error probability under joint ML detection.

    Returns ``(value, stderr)``; ``stderr`` is 0 in exact mode.

    ``exact`` averages, over every joint block C, the sum of pairwise error
    probabilities to every Chat whose user-``j`` block differs.

    ``sampled`` draws ``samples`` blocks C uniformly. For each it sums the
    Chat that differ from C in user ``j`` only exhaustively, and estimates
    the remaining terms (other users differ too) from ``multi_samples``
    uniform draws scaled by their count.
    """
    Nb, J = space.size, space.J
    D = space.user_distances()
    if mode == "exact":
        N = Nb ** J
        if N > EXACT_BLOCK_LIMIT:
            raise InstanceTooLarge(f"{N} joint blocks exceed {EXACT_BLOCK_LIMIT}; use sampled mode")
        grids = np.indices((Nb,) * J).reshape(J, -1)  # every joint block
        total = 0.0
        for c in grids.T:
            others = grids[:, grids[j] != c[j]]
            lam = sum(D[i, c[i], others[i]] for i in range(J))
            total += upep(lam, N0, form).sum()
        return float(total / N), 0.0
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    n_multi = (Nb - 1) * (Nb ** (J - 1) - 1)
    vals = np.empty(samples)
    step = max(1, 4096 // Nb)
    for lo in range(0, samples, step):
        T = min(step, samples - lo)
        c = rng.integers(0, Nb, size=(T, J))
        lam_single = D[j, c[:, j]]  # (T, Nb, S)
        single = upep(lam_single, N0, form)
        single[np.arange(T), c[:, j]] = 0.0
        est = single.sum(axis=1)
        if n_multi:
            M = multi_samples
            ch = rng.integers(0, Nb, size=(T, M, J))
            ch[..., j] = (c[:, None, j] + 1 + rng.integers(0, Nb - 1, size=(T, M))) % Nb
            while True:  # reject draws where every other user matches C
                others_same = np.all(np.delete(ch == c[:, None, :], j, axis=2), axis=2)
                if not others_same.any():
                    break
                redraw = rng.integers(0, Nb, size=(T, M, J))
                redraw[..., j] = ch[..., j]
                ch = np.where(others_same[..., None], redraw, ch)
            lam = sum(D[i, c[:, None, i], ch[..., i]] for i in range(J))  # (T, M, S)
            est = est + n_multi * upep(lam, N0, form).mean(axis=1)
        vals[lo:lo + T] = est
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0


def map_block_error_rate(j: int, space: BlockSpace, N0: float, trials: int, rng: np.random.Generator,
                         fading: str = "per-chip-iid", batch: int = 4096) -> tuple[int, int]:
    """Monte Carlo joint-ML block detection; returns ``(user-j block errors, trials)``.

    Every one of the ``2**(m*J)`` joint blocks is scored, so this is only for
    reduced systems.
    """
    Nb, J, S = space.size, space.J, space.S
    N = Nb ** J
    if N > 1 << 12:
        raise InstanceTooLarge(f"{N} joint hypotheses is too many for brute-force ML")
    grids = np.indices((Nb,) * J).reshape(J, -1)
    cand = space.chips[np.arange(J)[:, None], grids]  # (J, N, S)
    K = space.graph.K
    errors = 0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        tx = rng.integers(0, Nb, size=(B, J))
        h = sample_channel(J, S, rng, fading, K, batch=(B,))
        x = space.chips[np.arange(J), tx]  # (B, J, S)
        y = np.sum(h * x, axis=1) + crandn(rng, (B, S), N0)
        rx = np.einsum("bjs,jns->bns", h, cand)
        metric = np.sum(np.abs(y[:, None, :] - rx) ** 2, axis=2)
        best = grids[:, np.argmin(metric, axis=1)]  # (J, B)
        errors += int(np.sum(best[j] != tx[:, j]))
        done += B
    return errors, done
