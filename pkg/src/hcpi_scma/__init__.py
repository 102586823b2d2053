"""Link-level simulation of hybrid codeword-position index-modulated SCMA."""

from .codebook import (
    CodebookFamily,
    FactorGraph,
    MergedAlphabet,
    build_merged_alphabet,
    canonical_factor_graph,
    cross_codebook_min_distance,
    generate_families,
    generate_phase_rotation_family,
    load_codebook_family,
    save_codebook_family,
)
from .mapper import BtiMapper, HcpiConfig, PatternTable, bit_budget, encode_block, te_cpi, te_cscma, te_hcpi

__version__ = "0.1.0"
