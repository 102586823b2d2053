"""Merging-codebook message passing and staged index/data recovery.

Array conventions
-----------------
* detection unit: ``y`` is ``(B, K)`` and ``h`` is ``(B, J, K)``; unbatched
  ``(K,)`` / ``(J, K)`` inputs are accepted and give unbatched outputs.
* soft messages of a block: ``phis`` is ``(..., J, n, Q)`` with the merged
  column order S_1, ..., S_R, zero (see :class:`~hcpi_scma.codebook.MergedAlphabet`).

All message passing runs on log-probabilities. Each function-node output is
a log-sum-exp with the maximum pulled out per output symbol, so nothing
underflows at high SNR; the ``1/(pi N0)`` likelihood constant is dropped
because every message is renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import FactorGraph, MergedAlphabet
from .errors import EmptyCandidateSet, InstanceTooLarge
from .mapper import PatternTable

EXACT_LIMIT = 1 << 24
_TINY = 1e-300


class HypothesisCounter:
    """Counts joint hypotheses weighed by function-node updates."""

    def __init__(self):
        self.total = 0
        self.updates = 0

    def add(self, hypotheses: int):
        self.total += hypotheses
        self.updates += 1

    @property
    def per_update(self) -> float:
        return self.total / self.updates if self.updates else 0.0


def _symbols_of(alphabet) -> np.ndarray:
    return alphabet.symbols if isinstance(alphabet, MergedAlphabet) else np.asarray(alphabet)


def _lse_keep(a: np.ndarray, keep: int) -> np.ndarray:
    """Log-sum-exp of ``a`` (shape ``(B, Q, Q, ...)``) over every symbol axis except ``keep``."""
    a = np.moveaxis(a, keep, 1)
    B, Q = a.shape[:2]
    a = a.reshape(B, Q, -1)
    mx = a.max(axis=2, keepdims=True)
    return np.log(np.exp(a - mx).sum(axis=2)) + mx[..., 0]


def _normalize_log(m: np.ndarray) -> np.ndarray:
    mx = m.max(axis=-1, keepdims=True)
    return m - (np.log(np.exp(m - mx).sum(axis=-1, keepdims=True)) + mx)


def resource_log_likelihood(y_k: np.ndarray, h_k: np.ndarray, N0: float, sym_k: np.ndarray) -> np.ndarray:
    """``-|y_k - sum_i h_k^i x_i|^2 / N0`` over all joint hypotheses of the users on one resource.

    ``y_k``: ``(B,)``; ``h_k``: ``(B, d)``; ``sym_k``: ``(d, Q)``.
    Returns ``(B,) + (Q,) * d``.
    """
    B = y_k.shape[0]
    d, Q = sym_k.shape
    res = y_k.reshape((B,) + (1,) * d)
    for s in range(d):
        shape = [B] + [1] * d
        shape[s + 1] = Q
        res = res - (h_k[:, s, None] * sym_k[s][None, :]).reshape(shape)
    return -(res.real ** 2 + res.imag ** 2) / N0


def _fn_update_log(log_table: np.ndarray, incoming: list, counter: HypothesisCounter | None = None) -> list:
    """Exact log-domain update: log-sum-exp with the maximum taken per output symbol."""
    d = len(incoming)
    B, Q = incoming[0].shape
    if counter is not None:
        counter.add(Q ** d)
    out = []
    for s in range(d):
        total = log_table
        for s2 in range(d):
            if s2 != s:
                shape = [B] + [1] * d
                shape[s2 + 1] = Q
                total = total + incoming[s2].reshape(shape)
        out.append(_normalize_log(_lse_keep(total, s + 1)))
    return out


def _slot_major(E: np.ndarray) -> list:
    """For every slot s, ``E`` with axis s first and the other slots flattened: ``(B, Q, Q**(d-1))``."""
    B, d = E.shape[0], E.ndim - 1
    return [np.ascontiguousarray(np.moveaxis(E, s + 1, 1)).reshape(B, E.shape[s + 1], -1) for s in range(d)]


def _outer(probs: list, B: int) -> np.ndarray:
    t = np.ones((B, 1))
    for p in probs:
        t = (t[:, :, None] * p[:, None, :]).reshape(B, -1)
    return t


def _fn_update_fast(E_slots: list, log_table: np.ndarray, incoming: list,
                    counter: HypothesisCounter | None = None) -> list:
    """Same result as :func:`_fn_update_log` via products of shifted exponentials.

    ``E_slots`` comes from :func:`_slot_major` applied to ``exp(log_table - max)``.
    Rows whose outputs come close to underflow are recomputed on the exact
    log path.
    """
    d = len(incoming)
    B, Q = incoming[0].shape
    if counter is not None:
        counter.add(Q ** d)
    probs = [np.exp(m - m.max(axis=1, keepdims=True)) for m in incoming]
    out = []
    bad = np.zeros(B, dtype=bool)
    for s in range(d):
        others = _outer([p for i, p in enumerate(probs) if i != s], B)
        o = np.matmul(E_slots[s], others[:, :, None])[:, :, 0]
        bad |= o.max(axis=1) < 1e-250
        out.append(_normalize_log(np.log(np.maximum(o, _TINY))))
    if bad.any():
        redo = _fn_update_log(log_table[bad], [m[bad] for m in incoming])
        for s in range(d):
            out[s][bad] = redo[s]
    return out


def fn_update(y_k, h_k, N0: float, sym_k, incoming) -> np.ndarray:
    """Function-node update of a single resource.

    Parameters
    ----------
    y_k : complex
        Received chip.
    h_k : array_like, shape (d,)
        Gains of the d users on the resource.
    sym_k : array_like, shape (d, Q)
        Their merged symbol values on this resource.
    incoming : array_like, shape (d, Q)
        User-to-resource messages (probabilities).

    Returns
    -------
    ndarray, shape (d, Q)
        Normalized resource-to-user messages.
    """
    sym_k = np.asarray(sym_k, dtype=complex)
    inc = np.log(np.maximum(np.asarray(incoming, dtype=float), _TINY))
    table = resource_log_likelihood(np.atleast_1d(np.asarray(y_k, complex)),
                                    np.asarray(h_k, complex)[None, :], N0, sym_k)
    out = _fn_update_log(table, [inc[s][None, :] for s in range(sym_k.shape[0])])
    return np.exp(np.stack([o[0] for o in out]))


def mc_mpa(y, h, N0: float, alphabet, graph: FactorGraph, iters: int = 6,
           counter: HypothesisCounter | None = None) -> np.ndarray:
    """Per-user symbol beliefs of one or many detection units.

    Messages start uniform over the Q merged symbols. Each iteration updates
    every function node from the current user messages, then every user
    node from the products of the other resources' messages. The returned
    belief is the normalized product of all incoming resource messages.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    sym = _symbols_of(alphabet)
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    single = y.ndim == 1
    if single:
        y, h = y[None], h[None]
    B = y.shape[0]
    J, Q, K = sym.shape
    tables = [resource_log_likelihood(y[:, k], h[:, list(graph.xi[k]), k], N0, sym[list(graph.xi[k]), :, k])
              for k in range(K)]
    shifted = [_slot_major(np.exp(t - t.reshape(B, -1).max(axis=1).reshape((B,) + (1,) * (t.ndim - 1))))
               for t in tables]
    uniform = np.full((B, Q), -np.log(Q))
    un = [[uniform] * len(graph.xi[k]) for k in range(K)]
    slot = [{k: graph.xi[k].index(j) for k in graph.zeta[j]} for j in range(J)]
    for _ in range(iters):
        fn = [_fn_update_fast(shifted[k], tables[k], un[k], counter) for k in range(K)]
        belief = []
        for j in range(J):
            total = sum(fn[k][slot[j][k]] for k in graph.zeta[j])
            for k in graph.zeta[j]:
                un[k][slot[j][k]] = _normalize_log(total - fn[k][slot[j][k]])
            belief.append(total)
    out = np.exp(_normalize_log(np.stack(belief, axis=1)))
    return out[0] if single else out


def exact_map_unit(y, h, N0: float, alphabet, graph: FactorGraph) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force posteriors of one detection unit.

    Enumerates all ``Q**J`` joint hypotheses under the same likelihood as
    :func:`mc_mpa` with uniform priors. Returns ``(marginals (J, Q), joint MAP symbols (J,))``.
    """
    sym = _symbols_of(alphabet)
    J, Q, K = sym.shape
    if Q ** J > EXACT_LIMIT:
        raise InstanceTooLarge(f"{Q}^{J} = {Q ** J} joint hypotheses exceed {EXACT_LIMIT}")
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    joint = np.zeros((Q,) * J)
    for k in range(K):
        users = list(graph.xi[k])
        t = resource_log_likelihood(y[None, k], h[None, users, k], N0, sym[users, :, k])[0]
        shape = [1] * J
        for u in users:
            shape[u] = Q
        joint = joint + t.reshape(shape)
    mx = joint.max()
    p = np.exp(joint - mx)
    p /= p.sum()
    marg = np.stack([p.sum(axis=tuple(a for a in range(J) if a != j)) for j in range(J)])
    best = np.array(np.unravel_index(np.argmax(joint), joint.shape))
    return marg, best


def exact_marginals(y, h, N0: float, alphabet, graph: FactorGraph) -> np.ndarray:
    """:func:`exact_map_unit` marginals for a batch ``y (B, K)``, ``h (B, J, K)``."""
    return np.stack([exact_map_unit(yb, hb, N0, alphabet, graph)[0] for yb, hb in zip(y, h)])


# -- staged detection ----------------------------------------------------------


def detect_vacant(phis: np.ndarray, n_vacant: int) -> np.ndarray:
    """Mask of the ``n_vacant`` positions with the largest zero-symbol probability.

    ``phis`` is ``(..., n, Q)``; ties go to the smaller position.
    """
    p0 = phis[..., -1]
    mask = np.zeros(p0.shape, dtype=bool)
    if n_vacant:
        idx = np.argsort(-p0, axis=-1, kind="stable")[..., :n_vacant]
        np.put_along_axis(mask, idx, True, axis=-1)
    return mask


def order_usage_probability(phis: np.ndarray, r: int, C: int) -> np.ndarray:
    """Probability that order ``r``'s codebook is used, per position: ``(..., n, Q) -> (..., n)``."""
    return phis[..., (r - 1) * C:r * C].sum(axis=-1)


@dataclass
class OrderDecision:
    row: np.ndarray
    prefix: np.ndarray
    mask: np.ndarray
    data: np.ndarray
    empty: np.ndarray


def detect_order(r: int, phis: np.ndarray, vacant: np.ndarray, prefix: np.ndarray,
                 table: PatternTable, C: int, strict: bool = False) -> OrderDecision:
    """Index set and data symbols of order ``r``.

    Candidates are the mapper rows of order ``r`` (placed after the rows in
    ``prefix``) that avoid every detected vacancy. Among them the row with
    the largest product of usage probabilities wins, ties to the lowest row.
    If no row qualifies the choice falls back to all rows and ``empty`` is
    set (``strict=True`` raises instead). Data symbols are the most likely
    order-``r`` symbols at the chosen positions.
    """
    masks = table.masks[r - 1][prefix]  # (..., rows, n)
    logp = np.log(np.maximum(order_usage_probability(phis, r, C), _TINY))
    score = (masks * logp[..., None, :]).sum(axis=-1)
    valid = ~(masks & vacant[..., None, :]).any(axis=-1)
    empty = ~valid.any(axis=-1)
    if strict and empty.any():
        raise EmptyCandidateSet(f"no order-{r} mapper row avoids the detected vacancies")
    score = np.where(valid | empty[..., None], score, -np.inf)
    row = np.argmax(score, axis=-1)
    mask = np.take_along_axis(masks, row[..., None, None], axis=-2)[..., 0, :]
    data = np.argmax(phis[..., (r - 1) * C:r * C], axis=-1)
    return OrderDecision(row, prefix * table.rows[r - 1] + row, mask, data, empty)


def _to_bits(v: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return (v[..., None] >> shifts) & 1


@dataclass
class MpadDecision:
    bits: np.ndarray
    vacant: np.ndarray
    orders: list
    empty: np.ndarray


def mpad_decide(phis: np.ndarray, table: PatternTable, vacancy_override: np.ndarray | None = None) -> MpadDecision:
    """Vacancies, then orders 1..R, then bits, from soft messages ``(..., n, Q)``."""
    cfg = table.config
    vacant = detect_vacant(phis, cfg.vacancies) if vacancy_override is None else np.asarray(vacancy_override, bool)
    prefix = np.zeros(phis.shape[:-2], dtype=np.int64)
    orders = []
    chunks = []
    empty = np.zeros(phis.shape[:-2], dtype=bool)
    b = cfg.bits_per_symbol
    for r in range(1, cfg.R + 1):
        dec = detect_order(r, phis, vacant, prefix, table, cfg.C)
        prefix = dec.prefix
        empty |= dec.empty
        orders.append(dec)
        chunks.append(_to_bits(dec.row, cfg.m1[r - 1]))
        pos = np.argsort(~dec.mask, axis=-1, kind="stable")[..., :cfg.t[r - 1]]
        sym = np.take_along_axis(dec.data, pos, axis=-1)
        chunks.append(_to_bits(sym, b).reshape(sym.shape[:-1] + (cfg.t[r - 1] * b,)))
    return MpadDecision(np.concatenate(chunks, axis=-1).astype(np.int8), vacant, orders, empty)


@dataclass
class MpadResult:
    bits: np.ndarray
    phis: np.ndarray
    decision: MpadDecision


def block_units(y: np.ndarray, h: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``y (B, nK)``, ``h (B, J, nK)`` into ``(B*n, K)`` and ``(B*n, J, K)`` units."""
    B, S = y.shape
    J = h.shape[1]
    K = S // n
    yu = y.reshape(B * n, K)
    hu = h.reshape(B, J, n, K).transpose(0, 2, 1, 3).reshape(B * n, J, K)
    return yu, hu


def block_soft_messages(y, h, N0: float, alphabet, graph: FactorGraph, n: int, iters: int = 6,
                        exact: bool = False, counter: HypothesisCounter | None = None) -> np.ndarray:
    """``phis (B, J, n, Q)`` from MC-MPA (or exact unit marginals) on every detection unit."""
    y = np.asarray(y, complex)
    h = np.asarray(h, complex)
    B = y.shape[0]
    yu, hu = block_units(y, h, n)
    if exact:
        bel = exact_marginals(yu, hu, N0, alphabet, graph)
    else:
        bel = mc_mpa(yu, hu, N0, alphabet, graph, iters, counter)
    J, Q = bel.shape[1:]
    return bel.reshape(B, n, J, Q).transpose(0, 2, 1, 3)


def mpad_block(y, h, N0: float, alphabet: MergedAlphabet, table: PatternTable, iters: int = 6,
               vacancy_override: np.ndarray | None = None, exact: bool = False,
               counter: HypothesisCounter | None = None) -> MpadResult:
    """Recover every user's ``m`` bits from received blocks ``y (B, nK)`` with gains ``h (B, J, nK)``.

    ``exact=True`` replaces MC-MPA by brute-force unit marginals.
    """
    phis = block_soft_messages(y, h, N0, alphabet, alphabet.graph, table.config.n, iters, exact, counter)
    decision = mpad_decide(phis, table, vacancy_override)
    return MpadResult(decision.bits, phis, decision)


def mpa_detect(y, h, N0: float, codewords: np.ndarray, graph: FactorGraph, iters: int = 6) -> np.ndarray:
    """Plain SCMA detection: most likely symbol per user, ``(B, K) -> (B, J)``."""
    return np.argmax(mc_mpa(y, h, N0, codewords, graph, iters), axis=-1)
