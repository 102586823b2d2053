import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcpi_scma.codebook import canonical_factor_graph, generate_families
from hcpi_scma.errors import BitsOutOfTable, InvalidConfig, InvalidLength, RankOutOfRange, UnmappableIndexSet
from hcpi_scma.mapper import (
    BtiMapper,
    HcpiConfig,
    PatternTable,
    bit_budget,
    combinadic_rank,
    combinadic_unrank,
    demap_indices_to_bits,
    encode_block,
    make_mapper,
    map_bits_to_indices,
    te_cpi,
    te_cscma,
    te_hcpi,
)

TABLE1 = BtiMapper.builtin("table1-n4t2")
TABLE2 = BtiMapper.builtin("table2-hcpi-n4")


def test_bit_budget_table1():
    assert bit_budget(HcpiConfig(4, (2,), 4)) == ((2,), (4,), 6)


def test_bit_budget_table2():
    assert bit_budget(HcpiConfig(4, (2, 1), 4)) == ((2, 1), (4, 2), 9)


def test_bit_budget_n8():
    # floor(log2 C(8,6)) = floor(log2 28) = 4, floor(log2 C(2,1)) = 1
    assert math.floor(math.log2(math.comb(8, 6))) == 4
    assert bit_budget(HcpiConfig(8, (6, 1), 4)) == ((4, 1), (12, 2), 19)


@pytest.mark.parametrize("n,t", [(4, (5,)), (4, (0,)), (3, (2, 2)), (4, ())])
def test_invalid_config(n, t):
    with pytest.raises(InvalidConfig):
        HcpiConfig(n, t, 4)


def test_invalid_codebook_size():
    with pytest.raises(InvalidConfig):
        HcpiConfig(4, (2,), 6)


def test_combinadic_examples():
    # oracle: itertools enumerates t-subsets lexicographically
    pairs = list(itertools.combinations(range(1, 5), 2))
    assert combinadic_unrank(0, 4, 2) == pairs[0] == (1, 2)
    assert combinadic_unrank(5, 4, 2) == pairs[5] == (3, 4)
    for k, p in enumerate(pairs):
        assert combinadic_unrank(k, 4, 2) == p


def test_combinadic_round_trip_n10_t4():
    for k in range(math.comb(10, 4)):
        assert combinadic_rank(combinadic_unrank(k, 10, 4), 10) == k


def test_combinadic_out_of_range():
    with pytest.raises(RankOutOfRange):
        combinadic_unrank(6, 4, 2)
    with pytest.raises(RankOutOfRange):
        combinadic_unrank(-1, 4, 2)


@given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_combinadic_matches_itertools(nt):
    n, t = nt
    subsets = list(itertools.combinations(range(1, n + 1), t))
    k = len(subsets) // 2
    assert combinadic_unrank(k, n, t) == subsets[k]
    assert combinadic_rank(subsets[k], n) == k


def test_map_bits_table1_and_table2():
    assert map_bits_to_indices([0, 0], 1, set(), TABLE1, 4) == {1, 3}
    assert map_bits_to_indices([1], 2, {1, 3}, TABLE2, 4) == {4}
    assert map_bits_to_indices([0], 2, {2, 4}, TABLE2, 4) == {1}


def test_map_bits_wrong_width():
    with pytest.raises(BitsOutOfTable):
        map_bits_to_indices([0], 1, set(), TABLE1, 4)


def test_demap_examples():
    cfg = HcpiConfig(4, (2,), 4)
    assert demap_indices_to_bits([{1, 3}], TABLE1, cfg) == [[0, 0]]
    with pytest.raises(UnmappableIndexSet):
        demap_indices_to_bits([{1, 2}], TABLE1, cfg)


@pytest.fixture(scope="module")
def families():
    return generate_families(canonical_factor_graph(4, 6, 3, 2), 4, 2)


def test_encode_table1_row2(families):
    cfg = HcpiConfig(4, (2,), 4)
    blk = encode_block([0, 1, 1, 0, 0, 1], cfg, TABLE1, families, user=0)
    assert blk.layout == (0, 1, 0, 1)
    assert blk.slots == (None, (1, 2), None, (1, 1))
    assert blk.index_sets == ((2, 4),)
    K = 4
    assert not blk.chips[:K].any() and not blk.chips[2 * K:3 * K].any()
    assert np.array_equal(blk.chips[K:2 * K], families[0].codewords[0, 2])


def test_encode_table2_first_and_last_rows(families):
    cfg = HcpiConfig(4, (2, 1), 4)
    first = encode_block([0, 0, 0, 0, 0, 0, 0, 0, 0], cfg, TABLE2, families)
    assert first.layout == (1, 2, 1, 0)
    last = encode_block([1, 1, 0, 0, 0, 0, 1, 0, 0], cfg, TABLE2, families)
    assert last.layout == (1, 0, 2, 1)
    assert last.index_sets == ((1, 4), (3,))


def test_encode_wrong_length(families):
    with pytest.raises(InvalidLength):
        encode_block([0, 1], HcpiConfig(4, (2,), 4), TABLE1, families)


def test_mapper_check_and_sources():
    cfg = HcpiConfig(4, (2, 1), 4)
    TABLE2.check(cfg)
    with pytest.raises(InvalidConfig):
        TABLE1.check(cfg)
    assert make_mapper("table2-hcpi-n4", cfg).tables[1].tolist() == [[0], [1]]
    comb = make_mapper("combinadic", cfg)
    assert comb.tables[0].tolist() == [[0, 1], [0, 2], [0, 3], [1, 2]]
    with pytest.raises(InvalidConfig):
        make_mapper("no-such-table", cfg) if False else BtiMapper.builtin("no-such-table")


def test_mapper_json_round_trip(tmp_path):
    text = TABLE2.to_json()
    back = BtiMapper.from_json(text)
    for a, b in zip(TABLE2.tables, back.tables):
        assert np.array_equal(a, b)
    p = tmp_path / "m.json"
    p.write_text(text)
    assert make_mapper(str(p), HcpiConfig(4, (2, 1), 4)).R == 2


def _configs(max_m=20, max_n=8, C=4):
    for n in range(1, max_n + 1):
        for R in range(1, 4):
            for t in itertools.product(range(1, n + 1), repeat=R):
                if sum(t) <= n:
                    cfg = HcpiConfig(n, t, C)
                    if cfg.m <= max_m:
                        yield cfg


def test_pattern_table_matches_scalar_encoder(families):
    cfg = HcpiConfig(4, (2, 1), 4)
    tab = PatternTable(cfg, TABLE2)
    cw = np.stack([f.codewords for f in families])
    all_bits = np.array(list(itertools.product((0, 1), repeat=cfg.m)))
    chips, layout = tab.encode(np.repeat(all_bits[:, None, :], 6, axis=1), cw)
    for i in range(0, len(all_bits), 7):
        for j in (0, 5):
            blk = encode_block(all_bits[i], cfg, TABLE2, families, user=j)
            assert np.array_equal(chips[i, j], blk.chips)
            assert tuple(layout[i, j]) == blk.layout


def test_te_values():
    assert te_cscma(6, 4, 4) == 3
    assert te_hcpi(6, 4, HcpiConfig(4, (2, 1), 4)) == Fraction(27, 8)
    assert te_cpi(6, 4, HcpiConfig(4, (2,), 4)) == Fraction(9, 4)
    assert te_hcpi(6, 4, HcpiConfig(4, (2,), 4)) == te_cpi(6, 4, HcpiConfig(4, (2,), 4))
    with pytest.raises(InvalidConfig):
        te_cpi(6, 4, HcpiConfig(4, (2, 1), 4))


def test_te_hybrid_not_below_single_order():
    # splitting the same total of active positions over two orders never loses TE
    for n in range(2, 9):
        for total in range(2, n + 1):
            cpi = te_cpi(6, 4, HcpiConfig(n, (total,), 4))
            for t1 in range(1, total):
                hc = te_hcpi(6, 4, HcpiConfig(n, (t1, total - t1), 4))
                assert hc >= cpi, (n, t1, total)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(_configs(max_m=16, max_n=6))), st.data())
def test_encode_demap_bijection_property(cfg, data):
    mapper = BtiMapper.combinadic(cfg)
    graph = canonical_factor_graph(4, 6, 3, 2)
    fams = generate_families(graph, cfg.C, cfg.R)
    bits = data.draw(st.lists(st.integers(0, 1), min_size=cfg.m, max_size=cfg.m))
    blk = encode_block(bits, cfg, mapper, fams)
    assert sum(1 for s in blk.slots if s is None) == cfg.vacancies
    for r, t in enumerate(cfg.t, 1):
        assert sum(1 for s in blk.slots if s and s[0] == r) == t
    idx_bits = demap_indices_to_bits(blk.index_sets, mapper, cfg)
    pos = 0
    for r, m1 in enumerate(cfg.m1):
        assert idx_bits[r] == bits[pos:pos + m1]
        pos += m1 + cfg.m2[r]
