"""Factor graphs, sparse codebook families and the merged detection alphabet.

Codeword arrays are laid out as ``(J, C, K)``: user, symbol, resource.
Users, symbols and resources are 0-based; hybrid orders are 1-based.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DuplicateCodeword,
    InconsistentFamilies,
    InfeasibleDegrees,
    ParseError,
    PowerViolation,
    ScmaError,
    SparsityMismatch,
)

POWER_TOL = 1e-9

#: Provenance marker of the all-zero merged symbol.
ZERO = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Binary K x J resource occupancy.

    ``xi[k]`` lists the users on resource ``k`` and ``zeta[j]`` the resources
    of user ``j``, both ascending. Regular graphs have a single ``d_f`` and
    ``d_v``; irregular ones (used for cycle-free validation graphs) report
    the maximum degrees.
    """

    F: np.ndarray
    xi: tuple = field(init=False)
    zeta: tuple = field(init=False)

    def __post_init__(self):
        F = np.asarray(self.F)
        if F.ndim != 2 or F.size == 0 or not np.isin(F, (0, 1)).all():
            raise ParseError("F must be a non-empty 2-D 0/1 matrix")
        F = _frozen(F.astype(np.int8))
        if (F.sum(axis=0) == 0).any() or (F.sum(axis=1) == 0).any():
            raise InfeasibleDegrees("every resource and every user needs at least one edge")
        cols = {tuple(c) for c in F.T}
        if len(cols) != F.shape[1]:
            raise InfeasibleDegrees("occupancy patterns of users are not distinct")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "xi", tuple(tuple(np.flatnonzero(row)) for row in F))
        object.__setattr__(self, "zeta", tuple(tuple(np.flatnonzero(col)) for col in F.T))

    @property
    def K(self) -> int:
        return self.F.shape[0]

    @property
    def J(self) -> int:
        return self.F.shape[1]

    @property
    def d_f(self) -> int:
        return int(self.F.sum(axis=1).max())

    @property
    def d_v(self) -> int:
        return int(self.F.sum(axis=0).max())

    @property
    def regular(self) -> bool:
        rows, cols = self.F.sum(axis=1), self.F.sum(axis=0)
        return bool((rows == rows[0]).all() and (cols == cols[0]).all())

    def __eq__(self, other):
        return isinstance(other, FactorGraph) and np.array_equal(self.F, other.F)

    def __hash__(self):
        return hash(self.F.tobytes() + bytes(self.F.shape))


def canonical_factor_graph(K: int, J: int, d_f: int, d_v: int) -> FactorGraph:
    """Lexicographically first regular graph with distinct weight-``d_v`` columns.

    Columns are drawn from the weight-``d_v`` patterns in lexicographic order
    of their support; the first ``J``-subset (in that order) whose row
    weights all equal ``d_f`` is returned.
    """
    if min(K, J, d_f, d_v) < 1 or K * d_f != J * d_v:
        raise InfeasibleDegrees(f"K*d_f = {K * d_f} != J*d_v = {J * d_v}")
    if d_v > K or d_f > J:
        raise InfeasibleDegrees("degree exceeds node count")
    supports = list(itertools.combinations(range(K), d_v))
    if len(supports) < J:
        raise InfeasibleDegrees(f"only {len(supports)} distinct weight-{d_v} columns for J={J}")

    chosen: list[tuple] = []
    load = [0] * K

    def search(start: int) -> bool:
        if len(chosen) == J:
            return all(w == d_f for w in load)
        for i in range(start, len(supports) - (J - len(chosen)) + 1):
            sup = supports[i]
            if any(load[k] >= d_f for k in sup):
                continue
            chosen.append(sup)
            for k in sup:
                load[k] += 1
            if search(i + 1):
                return True
            chosen.pop()
            for k in sup:
                load[k] -= 1
        return False

    if not search(0):
        raise InfeasibleDegrees(f"no regular ({d_f}, {d_v}) graph with distinct columns for K={K}, J={J}")
    F = np.zeros((K, J), dtype=np.int8)
    for j, sup in enumerate(chosen):
        F[list(sup), j] = 1
    return FactorGraph(F)


@dataclass(frozen=True, eq=False)
class CodebookFamily:
    """Codebook S_r: ``codewords[j, c]`` is the K-dim codeword of user j, symbol c."""

    order: int
    codewords: np.ndarray
    graph: FactorGraph

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=complex)
        g = self.graph
        if cw.ndim != 3 or cw.shape[0] != g.J or cw.shape[2] != g.K or cw.shape[1] < 1:
            raise ParseError(f"codewords shape {cw.shape} does not match (J={g.J}, C, K={g.K})")
        if self.order < 1:
            raise ParseError("order must be >= 1")
        off = (g.F.T == 0)[:, None, :] & (cw != 0)
        if off.any():
            j, c, k = map(int, np.argwhere(off)[0])
            raise SparsityMismatch(f"order {self.order} user {j} symbol {c} is nonzero at unoccupied resource {k}")
        norms = np.sum(np.abs(cw) ** 2, axis=2)
        bad = np.abs(norms - 1.0) > POWER_TOL
        if bad.any():
            j, c = map(int, np.argwhere(bad)[0])
            raise PowerViolation(
                f"order {self.order} user {j} symbol {c} has squared norm {norms[j, c]!r}, expected 1"
            )
        for j in range(g.J):
            d = np.abs(cw[j][:, None, :] - cw[j][None, :, :]).sum(axis=2)
            np.fill_diagonal(d, np.inf)
            if (d == 0).any():
                a, b = map(int, np.argwhere(d == 0)[0])
                raise DuplicateCodeword(f"order {self.order} user {j} symbols {a} and {b} coincide")
        object.__setattr__(self, "codewords", _frozen(cw))

    @property
    def C(self) -> int:
        return self.codewords.shape[1]


def _van_der_corput(i: int) -> float:
    x, denom = 0.0, 1.0
    while i:
        denom *= 2
        i, bit = divmod(i, 2)
        x += bit / denom
    return x


def generate_phase_rotation_family(
    graph: FactorGraph, C: int, r: int = 1, rotation_seed: float = 0.0
) -> CodebookFamily:
    """Deterministic stand-in codebook for hybrid order ``r``.

    Each user repeats a C-PSK symbol on its occupied resources with amplitude
    ``1/sqrt(d_v)``. The phase on resource k combines

    * an order offset ``(2 pi / C) * vdc(r - 1)`` (van der Corput), so S_2 sits
      halfway between the points of S_1, S_3 and S_4 split the gaps again;
    * a user offset ``(pi / C) * u / d_f`` where u is the user's slot among
      the users of resource k, so users sharing a resource are staggered;
    * ``rotation_seed * (j + 1)``;
    * a sign flip on the user's odd-numbered resources for even orders, so
      whenever an S_1 and an S_2 point are close on one resource they are
      far apart on the next.
    """
    if C < 2 or C & (C - 1):
        raise ValueError(f"C must be a power of two >= 2, got {C}")
    if r < 1:
        raise ValueError("order r must be >= 1")
    base = 2 * np.pi * np.arange(C) / C + np.pi / C
    order_offset = 2 * np.pi / C * _van_der_corput(r - 1)
    d_f = graph.d_f
    cw = np.zeros((graph.J, C, graph.K), dtype=complex)
    for j, res in enumerate(graph.zeta):
        amp = 1.0 / math.sqrt(len(res))
        for i, k in enumerate(res):
            u = graph.xi[k].index(j)
            flip = np.pi * (i % 2) * ((r - 1) % 2)
            phase = base + order_offset + flip + np.pi / C * u / d_f + rotation_seed * (j + 1)
            cw[j, :, k] = amp * np.exp(1j * phase)
    return CodebookFamily(order=r, codewords=cw, graph=graph)


def generate_families(graph: FactorGraph, C: int, R: int, rotation_seed: float = 0.0) -> list[CodebookFamily]:
    return [generate_phase_rotation_family(graph, C, r, rotation_seed) for r in range(1, R + 1)]


def _check_families(families: Sequence[CodebookFamily]) -> list[CodebookFamily]:
    if not families:
        raise InconsistentFamilies("no families given")
    fams = sorted(families, key=lambda f: f.order)
    if [f.order for f in fams] != list(range(1, len(fams) + 1)):
        raise InconsistentFamilies(f"orders {[f.order for f in families]} are not 1..R, each once")
    g, C = fams[0].graph, fams[0].C
    for f in fams[1:]:
        if f.graph != g:
            raise InconsistentFamilies(f"order {f.order} uses a different factor graph")
        if f.C != C:
            raise InconsistentFamilies(f"order {f.order} has C={f.C}, expected {C}")
    return fams


@dataclass(frozen=True, eq=False)
class MergedAlphabet:
    """Union of S_1..S_R plus the zero symbol, per user.

    ``symbols`` has shape ``(J, R*C + 1, K)``. Column ``q < R*C`` holds symbol
    ``q % C`` of order ``q // C + 1``; the last column is the zero vector.
    """

    symbols: np.ndarray
    provenance: tuple
    graph: FactorGraph
    R: int
    C: int

    @property
    def Q(self) -> int:
        return self.R * self.C + 1

    @property
    def zero_index(self) -> int:
        return self.R * self.C

    def order_block(self, r: int) -> slice:
        return slice((r - 1) * self.C, r * self.C)


def build_merged_alphabet(families: Sequence[CodebookFamily]) -> MergedAlphabet:
    fams = _check_families(families)
    g, C, R = fams[0].graph, fams[0].C, len(fams)
    stacked = np.concatenate([f.codewords for f in fams] + [np.zeros((g.J, 1, g.K), complex)], axis=1)
    prov = tuple((r, c) for r in range(1, R + 1) for c in range(C)) + (ZERO,)
    return MergedAlphabet(symbols=_frozen(stacked), provenance=prov, graph=g, R=R, C=C)


def cross_codebook_min_distance(families: Sequence[CodebookFamily]) -> tuple[np.ndarray, float]:
    """Per-user minimum Euclidean distance among all distinct merged symbols (zero included)."""
    sym = build_merged_alphabet(families).symbols
    diff = sym[:, :, None, :] - sym[:, None, :, :]
    d = np.sqrt(np.sum(np.abs(diff) ** 2, axis=3))
    Q = sym.shape[1]
    d[:, np.arange(Q), np.arange(Q)] = np.inf
    per_user = d.min(axis=(1, 2))
    return per_user, float(per_user.min())


# -- file I/O ---------------------------------------------------------------


def _num(x: float) -> str:
    s = f"{x:.17g}"
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps_codebook(families: Sequence[CodebookFamily]) -> str:
    """Serialize to the JSON codebook document (17 significant digits)."""
    fams = _check_families(families)
    g = fams[0].graph
    head = {"K": g.K, "J": g.J, "C": fams[0].C, "R": len(fams)}
    lines = ["{"]
    lines += [f'  "{k}": {v},' for k, v in head.items()]
    lines.append(f'  "F": {json.dumps(g.F.tolist())},')
    lines.append('  "families": [')
    for i, f in enumerate(fams):
        users = []
        for j in range(g.J):
            syms = []
            for c in range(f.C):
                syms.append("[" + ", ".join(f"[{_num(z.real)}, {_num(z.imag)}]" for z in f.codewords[j, c]) + "]")
            users.append("        [" + ", ".join(syms) + "]")
        tail = "," if i < len(fams) - 1 else ""
        lines.append(f'    {{"order": {f.order}, "codewords": [')
        lines.append(",\n".join(users))
        lines.append(f"    ]}}{tail}")
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_codebook(text: str) -> list[CodebookFamily]:
    """Parse and validate a codebook document; returns families sorted by order."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}") from e
    try:
        K, J, C, R = (int(doc[k]) for k in ("K", "J", "C", "R"))
        graph = FactorGraph(np.array(doc["F"], dtype=int))
        if graph.K != K or graph.J != J:
            raise ParseError(f"F is {graph.K}x{graph.J}, header says {K}x{J}")
        fams = []
        for entry in doc["families"]:
            arr = np.array(entry["codewords"], dtype=float)
            if arr.shape != (J, C, K, 2):
                raise ParseError(f"order {entry.get('order')} codewords have shape {arr.shape}, expected {(J, C, K, 2)}")
            fams.append(CodebookFamily(int(entry["order"]), arr[..., 0] + 1j * arr[..., 1], graph))
    except ScmaError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed document: {e!r}") from e
    if len(fams) != R:
        raise ParseError(f"header declares R={R} but {len(fams)} families present")
    return _check_families(fams)


def save_codebook_family(families: Sequence[CodebookFamily], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_codebook(families))


def load_codebook_family(path) -> list[CodebookFamily]:
    with open(path, encoding="utf-8") as fh:
        return loads_codebook(fh.read())
