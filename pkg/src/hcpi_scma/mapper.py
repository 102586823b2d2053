"""Bit budgets, bits-to-indices (BTI) mapping, block encoding and transmission efficiency.

Codeword positions are 1-based (``{1, 3}`` means the first and third slot),
while mapper tables store 0-based *relative* ranks into the ascending list
of positions still available when an order is placed.

Bit layout of one user block: for r = 1..R, the ``m1[r]`` index bits of
order r followed by its ``m2[r]`` data bits. Data bits fill the order's
active positions in ascending position order, ``log2(C)`` bits per symbol,
most significant bit first.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BitsOutOfTable, InvalidConfig, InvalidLength, ParseError, RankOutOfRange, UnmappableIndexSet


def _log2_int(C: int) -> int:
    b = C.bit_length() - 1
    if C < 2 or 1 << b != C:
        raise InvalidConfig(f"codebook size C={C} is not a power of two >= 2")
    return b


@dataclass(frozen=True)
class HcpiConfig:
    """``n`` positions, ``t[r-1]`` active positions of order r, codebook size ``C``.

    ``R = 1`` is CPI-SCMA; ``n = 1, t = (1,)`` is plain SCMA.
    """

    n: int
    t: tuple
    C: int = 4

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(int(x) for x in self.t))
        if self.n < 1 or not self.t:
            raise InvalidConfig(f"need n >= 1 and at least one order, got n={self.n}, t={self.t}")
        if any(x < 1 for x in self.t):
            raise InvalidConfig(f"every order needs t >= 1, got t={self.t}")
        if sum(self.t) > self.n:
            raise InvalidConfig(f"sum(t)={sum(self.t)} exceeds n={self.n}")
        _log2_int(self.C)

    @property
    def R(self) -> int:
        return len(self.t)

    @property
    def bits_per_symbol(self) -> int:
        return _log2_int(self.C)

    @property
    def available(self) -> tuple:
        """Positions still free when each order is placed."""
        return tuple(self.n - sum(self.t[:r]) for r in range(self.R))

    @property
    def m1(self) -> tuple:
        return tuple(math.comb(a, t).bit_length() - 1 for a, t in zip(self.available, self.t))

    @property
    def m2(self) -> tuple:
        return tuple(t * self.bits_per_symbol for t in self.t)

    @property
    def m(self) -> int:
        return sum(self.m1) + sum(self.m2)

    @property
    def vacancies(self) -> int:
        return self.n - sum(self.t)


def bit_budget(config: HcpiConfig) -> tuple[tuple, tuple, int]:
    """Return ``(m1, m2, m)`` for every hybrid order."""
    return config.m1, config.m2, config.m


# -- combinadic -------------------------------------------------------------


def combinadic_unrank(rank: int, n_avail: int, t: int) -> tuple:
    """Lexicographic ``rank``-th t-subset of ``{1..n_avail}`` (rank is 0-based)."""
    total = math.comb(n_avail, t)
    if not 0 <= rank < total:
        raise RankOutOfRange(f"rank {rank} not in [0, {total}) for C({n_avail}, {t})")
    out = []
    x = 1
    for remaining in range(t, 0, -1):
        while True:
            # subsets starting with x among what is left
            count = math.comb(n_avail - x, remaining - 1)
            if rank < count:
                break
            rank -= count
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def combinadic_rank(subset, n_avail: int) -> int:
    s = sorted(subset)
    if len(set(s)) != len(s) or (s and (s[0] < 1 or s[-1] > n_avail)):
        raise RankOutOfRange(f"{subset} is not a subset of 1..{n_avail}")
    t = len(s)
    rank, prev = 0, 0
    for i, x in enumerate(s):
        for y in range(prev + 1, x):
            rank += math.comb(n_avail - y, t - i - 1)
        prev = x
    return rank


# -- BTI mapper -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BtiMapper:
    """Per-order lookup: row ``i`` (index bits read as an integer) -> relative ranks.

    ``tables[r-1]`` has shape ``(2**m1[r], t[r])``.
    """

    tables: tuple
    kind: str = "combinadic"
    name: str = ""
    _lookup: tuple = field(init=False, repr=False)

    def __post_init__(self):
        tabs = []
        for r, tab in enumerate(self.tables, start=1):
            a = np.array(tab, dtype=np.int64)
            if a.ndim != 2 or a.shape[0] < 1 or a.shape[0] & (a.shape[0] - 1):
                raise ParseError(f"order {r} table must have a power-of-two number of rows, got shape {a.shape}")
            a = np.sort(a, axis=1)
            if (np.diff(a, axis=1) == 0).any():
                raise ParseError(f"order {r} table has a row with repeated ranks")
            if len({tuple(row) for row in a}) != a.shape[0]:
                raise ParseError(f"order {r} table has duplicate rows")
            a.setflags(write=False)
            tabs.append(a)
        object.__setattr__(self, "tables", tuple(tabs))
        object.__setattr__(self, "_lookup", tuple({tuple(row): i for i, row in enumerate(a)} for a in tabs))

    @property
    def R(self) -> int:
        return len(self.tables)

    def row_of(self, r: int, ranks) -> int | None:
        return self._lookup[r - 1].get(tuple(sorted(ranks)))

    def check(self, config: HcpiConfig) -> None:
        """Raise InvalidConfig unless the tables fit ``config`` exactly."""
        if self.R != config.R:
            raise InvalidConfig(f"mapper {self.name or self.kind} has {self.R} orders, config has {config.R}")
        for r, (tab, t, avail, m1) in enumerate(zip(self.tables, config.t, config.available, config.m1), 1):
            if tab.shape != (1 << m1, t):
                raise InvalidConfig(f"order {r} table shape {tab.shape}, expected {(1 << m1, t)}")
            if tab.size and (tab.min() < 0 or tab.max() >= avail):
                raise InvalidConfig(f"order {r} ranks must lie in [0, {avail})")

    @classmethod
    def combinadic(cls, config: HcpiConfig) -> "BtiMapper":
        """First ``2**m1`` lexicographic subsets for every order."""
        tabs = []
        for t, avail, m1 in zip(config.t, config.available, config.m1):
            tabs.append([[x - 1 for x in combinadic_unrank(i, avail, t)] for i in range(1 << m1)])
        return cls(tuple(tabs), kind="combinadic", name="combinadic")

    @classmethod
    def builtin(cls, name: str) -> "BtiMapper":
        try:
            tabs = BUILTIN_TABLES[name]
        except KeyError:
            raise InvalidConfig(f"unknown builtin mapper {name!r}; choose from {sorted(BUILTIN_TABLES)}") from None
        return cls(tabs, kind="builtin-table", name=name)

    def to_json(self) -> str:
        doc = {
            "mappers": [
                {
                    "order": r,
                    "rows": [
                        {"bits": format(i, f"0{tab.shape[0].bit_length() - 1}b") if tab.shape[0] > 1 else "",
                         "ranks": row.tolist()}
                        for i, row in enumerate(tab)
                    ],
                }
                for r, tab in enumerate(self.tables, 1)
            ]
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str, name: str = "file") -> "BtiMapper":
        try:
            doc = json.loads(text)
            entries = sorted(doc["mappers"], key=lambda e: int(e["order"]))
            if [int(e["order"]) for e in entries] != list(range(1, len(entries) + 1)):
                raise ParseError("mapper orders must be 1..R, each once")
            tabs = []
            for e in entries:
                rows = e["rows"]
                width = max(len(rw["bits"]) for rw in rows)
                tab = [None] * len(rows)
                for rw in rows:
                    i = int(rw["bits"], 2) if rw["bits"] else 0
                    if len(rw["bits"]) != width or i >= len(rows) or tab[i] is not None:
                        raise ParseError(f"order {e['order']}: bad or repeated bit label {rw['bits']!r}")
                    tab[i] = [int(x) for x in rw["ranks"]]
                tabs.append(tab)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(f"malformed mapper document: {e!r}") from e
        return cls(tuple(tabs), kind="builtin-table", name=name)


BUILTIN_TABLES = {
    # bits 00, 01, 10, 11 -> {1,3}, {2,4}, {2,3}, {1,4}
    "table1-n4t2": (((0, 2), (1, 3), (1, 2), (0, 3)),),
    # second order: 0 -> first vacant position, 1 -> last one
    "table2-hcpi-n4": (((0, 2), (1, 3), (1, 2), (0, 3)), ((0,), (1,))),
}


def make_mapper(source: str, config: HcpiConfig) -> BtiMapper:
    """``"combinadic"``, a builtin table name, or a path to a mapper JSON file."""
    if source == "combinadic":
        mapper = BtiMapper.combinadic(config)
    elif source in BUILTIN_TABLES:
        mapper = BtiMapper.builtin(source)
    else:
        with open(source, encoding="utf-8") as fh:
            mapper = BtiMapper.from_json(fh.read(), name=str(source))
    mapper.check(config)
    return mapper


def _bits_to_int(bits) -> int:
    v = 0
    for b in bits:
        if b not in (0, 1):
            raise InvalidLength(f"bits must be 0/1, got {b!r}")
        v = 2 * v + int(b)
    return v


def _int_to_bits(v: int, width: int) -> list:
    return [(v >> (width - 1 - i)) & 1 for i in range(width)]


def map_bits_to_indices(bits, r: int, occupied, mapper: BtiMapper, n: int) -> frozenset:
    """Absolute positions of order ``r`` given positions already ``occupied`` by lower orders."""
    tab = mapper.tables[r - 1]
    width = tab.shape[0].bit_length() - 1
    if len(bits) != width:
        raise BitsOutOfTable(f"order {r} expects {width} index bits, got {len(bits)}")
    row = _bits_to_int(bits)
    avail = sorted(set(range(1, n + 1)) - set(occupied))
    if tab.size and tab.max() >= len(avail):
        raise BitsOutOfTable(f"order {r} table ranks exceed the {len(avail)} available positions")
    return frozenset(avail[k] for k in tab[row])


def demap_indices_to_bits(index_sets: Sequence, mapper: BtiMapper, config: HcpiConfig) -> list:
    """Inverse of :func:`map_bits_to_indices`, applied order by order.

    Returns one list of index bits per order.
    """
    if len(index_sets) != config.R:
        raise UnmappableIndexSet(f"expected {config.R} index sets, got {len(index_sets)}")
    occupied: set = set()
    out = []
    for r, (iset, m1) in enumerate(zip(index_sets, config.m1), 1):
        iset = set(iset)
        avail = sorted(set(range(1, config.n + 1)) - occupied)
        if not iset <= set(avail):
            raise UnmappableIndexSet(f"order {r} set {sorted(iset)} overlaps lower orders or leaves 1..{config.n}")
        row = mapper.row_of(r, [avail.index(p) for p in iset])
        if row is None:
            raise UnmappableIndexSet(f"order {r} set {sorted(iset)} is not in the mapper table")
        out.append(_int_to_bits(row, m1))
        occupied |= iset
    return out


@dataclass(frozen=True)
class CodewordBlock:
    """One user's block.

    ``slots[p]`` is ``(order, symbol)`` or ``None`` for position p + 1;
    ``chips`` is the ``n*K`` transmit sequence.
    """

    slots: tuple
    chips: np.ndarray
    index_sets: tuple
    bits: tuple

    @property
    def layout(self) -> tuple:
        """Order occupying each position, 0 when empty."""
        return tuple(0 if s is None else s[0] for s in self.slots)


def encode_block(bits, config: HcpiConfig, mapper: BtiMapper, families, user: int = 0) -> CodewordBlock:
    """Encode ``m`` bits of ``user`` with codebook families ordered 1..R."""
    bits = [int(b) for b in bits]
    if len(bits) != config.m:
        raise InvalidLength(f"expected {config.m} bits, got {len(bits)}")
    tables = [f.codewords[user] for f in sorted(families, key=lambda f: f.order)]
    if len(tables) < config.R:
        raise InvalidConfig(f"need codebooks for orders 1..{config.R}")
    K = tables[0].shape[1]
    b = config.bits_per_symbol
    slots: list = [None] * config.n
    occupied: set = set()
    index_sets = []
    pos = 0
    for r in range(1, config.R + 1):
        m1, t = config.m1[r - 1], config.t[r - 1]
        iset = map_bits_to_indices(bits[pos:pos + m1], r, occupied, mapper, config.n)
        pos += m1
        for p in sorted(iset):
            c = _bits_to_int(bits[pos:pos + b])
            pos += b
            slots[p - 1] = (r, c)
        occupied |= iset
        index_sets.append(tuple(sorted(iset)))
    chips = np.zeros(config.n * K, dtype=complex)
    for p, s in enumerate(slots):
        if s is not None:
            chips[p * K:(p + 1) * K] = tables[s[0] - 1][s[1]]
    chips.setflags(write=False)
    return CodewordBlock(tuple(slots), chips, tuple(index_sets), tuple(bits))


# -- vectorized encoding -----------------------------------------------------


class PatternTable:
    """All index patterns of a (config, mapper) pair, for batch encoding and staged detection.

    A *prefix* for order r is the mixed-radix number of the rows chosen for
    orders 1..r-1 (0 for r = 1). ``masks[r-1][prefix, row]`` is the boolean
    position mask of order r.
    """

    def __init__(self, config: HcpiConfig, mapper: BtiMapper):
        mapper.check(config)
        self.config = config
        self.mapper = mapper
        n = config.n
        self.rows = tuple(tab.shape[0] for tab in mapper.tables)
        masks = []
        prefix_occupied = [frozenset()]
        for r, tab in enumerate(mapper.tables, 1):
            m = np.zeros((len(prefix_occupied), tab.shape[0], n), dtype=bool)
            nxt = []
            for pi, occ in enumerate(prefix_occupied):
                avail = [p for p in range(n) if p not in occ]
                for ri, ranks in enumerate(tab):
                    ps = [avail[k] for k in ranks]
                    m[pi, ri, ps] = True
                    nxt.append(occ | frozenset(ps))
            m.setflags(write=False)
            masks.append(m)
            prefix_occupied = nxt
        self.masks = tuple(masks)
        # full pattern -> order per position (0 empty) and symbol slot within order
        P = len(prefix_occupied)
        layout = np.zeros((P, n), dtype=np.int64)
        rank_in_order = np.zeros((P, n), dtype=np.int64)
        for p, rows in enumerate(itertools.product(*(range(k) for k in self.rows))):
            prefix = 0
            for r, row in enumerate(rows, 1):
                mk = self.masks[r - 1][prefix, row]
                layout[p, mk] = r
                rank_in_order[p, mk] = np.arange(mk.sum())
                prefix = prefix * self.rows[r - 1] + row
        self.layout = layout
        self.rank_in_order = rank_in_order

    def split_bits(self, bits: np.ndarray):
        """Split ``(..., m)`` bits into per-order row indices and data symbols."""
        cfg = self.config
        b = cfg.bits_per_symbol
        rows, symbols = [], []
        pos = 0
        for m1, t in zip(cfg.m1, cfg.t):
            w = 1 << np.arange(m1 - 1, -1, -1)
            rows.append((bits[..., pos:pos + m1] * w).sum(-1))
            pos += m1
            d = bits[..., pos:pos + t * b].reshape(bits.shape[:-1] + (t, b))
            symbols.append((d * (1 << np.arange(b - 1, -1, -1))).sum(-1))
            pos += t * b
        return rows, symbols

    def pattern_index(self, rows) -> np.ndarray:
        p = np.zeros_like(rows[0])
        for r, row in enumerate(rows):
            p = p * self.rows[r] + row
        return p

    def encode(self, bits: np.ndarray, codewords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch-encode ``bits`` of shape ``(B, J, m)``.

        ``codewords`` is ``(R, J, C, K)``. Returns chips ``(B, J, n*K)`` and the
        per-position layout ``(B, J, n)`` (order number, 0 for empty).
        """
        cfg = self.config
        B, J, _ = bits.shape
        K = codewords.shape[-1]
        rows, symbols = self.split_bits(bits)
        pat = self.pattern_index(rows)
        layout = self.layout[pat]
        rio = self.rank_in_order[pat]
        sym = np.zeros((B, J, cfg.n), dtype=np.int64)
        for r in range(1, cfg.R + 1):
            s = np.take_along_axis(symbols[r - 1], np.minimum(rio, cfg.t[r - 1] - 1), axis=-1)
            sym = np.where(layout == r, s, sym)
        user = np.arange(J)[None, :, None]
        order = np.maximum(layout - 1, 0)
        chips = codewords[order, user, sym]  # (B, J, n, K)
        chips = np.where((layout > 0)[..., None], chips, 0)
        return chips.reshape(B, J, cfg.n * K), layout


# -- transmission efficiency ---------------------------------------------------


def te_cscma(J: int, K: int, C: int) -> Fraction:
    return Fraction(J * _log2_int(C), K)


def te_hcpi(J: int, K: int, config: HcpiConfig) -> Fraction:
    return Fraction(J * config.m, config.n * K)


def te_cpi(J: int, K: int, config: HcpiConfig) -> Fraction:
    if config.R != 1:
        raise InvalidConfig("CPI-SCMA has a single order")
    return te_hcpi(J, K, config)
