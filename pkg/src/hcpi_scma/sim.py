"""Monte Carlo BER/BLER sweeps.

Reproducibility contract: trials run in fixed-size chunks, and chunk ``c`` of
SNR point ``i`` draws everything from ``numpy.random.default_rng([seed, i, c])``.
Chunks are merged in index order and the early stop is checked after each
chunk, so results do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .channel import FADING_MODELS, sample_channel, snr_to_n0, superpose
from .codebook import (
    build_merged_alphabet,
    canonical_factor_graph,
    generate_families,
    load_codebook_family,
)
from .detector import mpa_detect, mpad_block
from .errors import InvalidConfig
from .mapper import HcpiConfig, PatternTable, make_mapper

log = logging.getLogger(__name__)

WORKERS_ENV = "HCPI_SCMA_WORKERS"
SCHEMES = ("cscma", "cpi", "hcpi")


@dataclass(frozen=True)
class SweepConfig:
    scheme: str = "hcpi"
    J: int = 6
    K: int = 4
    C: int = 4
    d_f: int = 3
    d_v: int = 2
    n: int = 4
    t: tuple = (2, 1)
    codebook: str = "generated"
    rotation_seed: float = 0.0
    mapper: str = "auto"
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    max_trials: int = 1_000_000
    target_bit_errors: int = 200
    iters: int = 6
    fading: str = "per-chip-iid"
    seed: int = 0
    chunk: int = 256
    n0: float | None = None
    detector: str = "mpa"

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(int(x) for x in self.t))
        object.__setattr__(self, "snr_db", tuple(float(x) for x in self.snr_db))
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "cscma" and (self.n, self.t) != (1, (1,)):
            object.__setattr__(self, "n", 1)
            object.__setattr__(self, "t", (1,))
        if self.scheme == "cpi" and len(self.t) != 1:
            raise InvalidConfig(f"cpi needs a single order, got t={list(self.t)}")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise InvalidConfig("snr grid must be strictly increasing")
        if self.max_trials < 1 or self.target_bit_errors < 1 or self.chunk < 1 or self.iters < 1:
            raise InvalidConfig("max_trials, target_bit_errors, chunk and iters must be >= 1")
        if self.fading not in FADING_MODELS:
            raise InvalidConfig(f"fading must be one of {FADING_MODELS}")
        if self.detector not in ("mpa", "exact"):
            raise InvalidConfig("detector must be 'mpa' or 'exact'")
        if self.n0 is not None and not self.n0 > 0:
            raise InvalidConfig("n0 override must be positive")
        self.hcpi  # validates n, t, C

    @property
    def hcpi(self) -> HcpiConfig:
        return HcpiConfig(self.n, self.t, self.C)

    @property
    def mapper_source(self) -> str:
        if self.mapper != "auto":
            return self.mapper
        if (self.n, self.t) == (4, (2,)):
            return "table1-n4t2"
        if (self.n, self.t) == (4, (2, 1)):
            return "table2-hcpi-n4"
        return "combinadic"

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidConfig(f"{path}: {e}") from e
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t"] = list(self.t)
        d["snr_db"] = list(self.snr_db)
        return d

    def replace(self, **kw) -> "SweepConfig":
        d = self.to_dict()
        d.update(kw)
        return SweepConfig.from_dict(d)


class System:
    """Everything a trial needs, built once per process."""

    def __init__(self, config: SweepConfig):
        self.config = config
        cfg = config.hcpi
        R = 1 if config.scheme == "cscma" else cfg.R
        if config.codebook == "generated":
            self.graph = canonical_factor_graph(config.K, config.J, config.d_f, config.d_v)
            self.families = generate_families(self.graph, config.C, R, config.rotation_seed)
        else:
            fams = load_codebook_family(config.codebook)
            if len(fams) < R:
                raise InvalidConfig(f"{config.codebook} has {len(fams)} orders, scheme needs {R}")
            self.families = fams[:R]
            self.graph = fams[0].graph
            if (self.graph.K, self.graph.J, fams[0].C) != (config.K, config.J, config.C):
                raise InvalidConfig("codebook K, J or C disagree with the config")
        self.codewords = np.stack([f.codewords for f in self.families])
        self.hcpi = cfg
        self.mapper = make_mapper(config.mapper_source, cfg)
        self.table = PatternTable(cfg, self.mapper)
        self.alphabet = build_merged_alphabet(self.families)
        m = cfg.m
        is_data = np.zeros(m, dtype=bool)
        pos = 0
        for m1, m2 in zip(cfg.m1, cfg.m2):
            is_data[pos + m1:pos + m1 + m2] = True
            pos += m1 + m2
        self.is_data = is_data

    def n0(self, snr_db: float) -> float:
        if self.config.n0 is not None:
            return self.config.n0
        return snr_to_n0(snr_db, self.hcpi).N0


@dataclass
class Counts:
    trials: int = 0
    bits: int = 0
    bit_errors: int = 0
    block_errors: int = 0
    vac_errors: int = 0
    idx_errors: list = field(default_factory=list)
    data_errors: int = 0

    def add(self, other: "Counts"):
        self.trials += other.trials
        self.bits += other.bits
        self.bit_errors += other.bit_errors
        self.block_errors += other.block_errors
        self.vac_errors += other.vac_errors
        if not self.idx_errors:
            self.idx_errors = [0] * len(other.idx_errors)
        self.idx_errors = [a + b for a, b in zip(self.idx_errors, other.idx_errors)]
        self.data_errors += other.data_errors


def simulate_chunk(system: System, snr_index: int, chunk_index: int, size: int) -> Counts:
    cfg = system.config
    hc = system.hcpi
    rng = np.random.default_rng([cfg.seed, snr_index, chunk_index])
    N0 = system.n0(cfg.snr_db[snr_index])
    J, K = cfg.J, system.graph.K
    bits = rng.integers(0, 2, size=(size, J, hc.m), dtype=np.int64)
    chips, layout = system.table.encode(bits, system.codewords)
    S = hc.n * K
    h = sample_channel(J, S, rng, cfg.fading, K, batch=(size,))
    y = superpose(chips, h, N0, rng)
    R = hc.R
    if cfg.scheme == "cscma":
        sym = mpa_detect(y, h, N0, system.codewords[0], system.graph, cfg.iters)
        b = hc.bits_per_symbol
        out = (sym[..., None] >> np.arange(b - 1, -1, -1)) & 1
        wrong = out != bits
        vac = idx = np.zeros((size, J), dtype=bool)
        idx_err = [0]
        flagged = np.zeros((size, J), dtype=bool)
    else:
        res = mpad_block(y, h, N0, system.alphabet, system.table, cfg.iters, exact=cfg.detector == "exact")
        dec = res.decision
        wrong = res.bits != bits
        vac = np.any(dec.vacant != (layout == 0), axis=-1)
        idx_err = [int(np.any(o.mask != (layout == r), axis=-1).sum()) for r, o in enumerate(dec.orders, 1)]
        flagged = vac | dec.empty
    user_err = wrong.any(axis=-1) | flagged
    return Counts(
        trials=size,
        bits=int(bits.size),
        bit_errors=int(wrong.sum()),
        block_errors=int(user_err.sum()),
        vac_errors=int(np.sum(vac)),
        idx_errors=idx_err if cfg.scheme != "cscma" else [0] * R,
        data_errors=int(np.any(wrong & system.is_data, axis=-1).sum()),
    )


@dataclass
class PointResult:
    snr_db: float
    n0: float
    trials: int
    bits: int
    bit_errors: int
    block_errors: int
    vac_errors: int
    idx_errors: tuple
    data_errors: int
    blocks: int
    wall_time: float = 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def bler(self) -> float:
        return self.block_errors / self.blocks if self.blocks else 0.0


@dataclass
class SweepResult:
    config: SweepConfig
    points: list


@lru_cache(maxsize=4)
def _system_for(config: SweepConfig) -> System:
    return System(config)


def _worker_chunk(config: SweepConfig, snr_index: int, chunk_index: int, size: int) -> Counts:
    return simulate_chunk(_system_for(config), snr_index, chunk_index, size)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise InvalidConfig(f"{WORKERS_ENV} must be an integer") from None


def run_sweep(config: SweepConfig, workers: int | None = None, progress=None) -> SweepResult:
    """Simulate every SNR point until ``target_bit_errors`` or ``max_trials``.

    ``progress`` is called with each finished :class:`PointResult`.
    """
    workers = default_workers() if workers is None else workers
    system = System(config)  # fresh: codebook files may have changed since the last call
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    points = []
    try:
        for i, snr in enumerate(config.snr_db):
            t0 = time.perf_counter()
            total = Counts(idx_errors=[0] * system.hcpi.R)
            c = 0
            done = False
            while not done:
                sizes = []
                for k in range(max(1, 2 * workers)):
                    start = (c + k) * config.chunk
                    if start >= config.max_trials:
                        break
                    sizes.append(min(config.chunk, config.max_trials - start))
                if pool is None:
                    results = (simulate_chunk(system, i, c + k, s) for k, s in enumerate(sizes))
                else:
                    futs = [pool.submit(_worker_chunk, config, i, c + k, s) for k, s in enumerate(sizes)]
                    results = (f.result() for f in futs)
                for r in results:
                    total.add(r)
                    c += 1
                    if total.bit_errors >= config.target_bit_errors or total.trials >= config.max_trials:
                        done = True
                        break
            pt = PointResult(
                snr_db=snr, n0=system.n0(snr), trials=total.trials, bits=total.bits,
                bit_errors=total.bit_errors, block_errors=total.block_errors, vac_errors=total.vac_errors,
                idx_errors=tuple(total.idx_errors), data_errors=total.data_errors,
                blocks=total.trials * config.J, wall_time=time.perf_counter() - t0,
            )
            log.info("snr %.2f dB: trials=%d ber=%.3e bler=%.3e", snr, pt.trials, pt.ber, pt.bler)
            if progress is not None:
                progress(pt)
            points.append(pt)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return SweepResult(config, points)


# -- CSV ---------------------------------------------------------------------

CSV_COLUMNS = [
    "snr_db", "scheme", "n", "R", "t_list", "trials", "bits", "bit_errors", "ber", "block_errors", "bler",
    "vac_errors", "idx_errors_per_order", "data_errors", "seed", "iters",
]


def emit_csv(result: SweepResult) -> str:
    cfg = result.config
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for p in result.points:
        w.writerow([
            repr(p.snr_db), cfg.scheme, cfg.n, len(cfg.t), ";".join(map(str, cfg.t)), p.trials, p.bits,
            p.bit_errors, repr(p.ber), p.block_errors, repr(p.bler), p.vac_errors,
            ";".join(map(str, p.idx_errors)), p.data_errors, cfg.seed, cfg.iters,
        ])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    """Rows of an :func:`emit_csv` document with numeric fields restored."""
    rows = list(csv.DictReader(io.StringIO(text)))
    ints = ("n", "R", "trials", "bits", "bit_errors", "block_errors", "vac_errors", "data_errors", "seed", "iters")
    out = []
    for r in rows:
        d = dict(r)
        for k in ints:
            d[k] = int(d[k])
        for k in ("snr_db", "ber", "bler"):
            d[k] = float(d[k])
        d["t_list"] = tuple(int(x) for x in d["t_list"].split(";"))
        d["idx_errors_per_order"] = tuple(int(x) for x in d["idx_errors_per_order"].split(";"))
        out.append(d)
    return out
