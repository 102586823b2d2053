"""Command line entry point: ``hcpi-scma <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from fractions import Fraction

import numpy as np

from .analysis import BlockSpace, ablep_bound
from .channel import es_n0_per_active_chip_db, snr_to_n0
from .codebook import (
    canonical_factor_graph,
    cross_codebook_min_distance,
    generate_families,
    load_codebook_family,
    save_codebook_family,
)
from .errors import InvalidConfig, ScmaError
from .mapper import te_cpi, te_cscma, te_hcpi
from .sim import SweepConfig, System, emit_csv, run_sweep


def _fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else repr(float(x))


def _load_config(path, seed=None) -> SweepConfig:
    cfg = SweepConfig.from_json(path)
    return cfg.replace(seed=seed) if seed is not None else cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.seed)

    def report(p):
        noise = snr_to_n0(p.snr_db, cfg.hcpi)
        print(f"Eb/N0 {p.snr_db:g} dB (Es/N0 per active chip {es_n0_per_active_chip_db(noise, cfg.d_v):.3f} dB): "
              f"trials={p.trials} ber={p.ber:.4e} bler={p.bler:.4e}", flush=True)

    res = run_sweep(cfg, workers=args.workers, progress=report)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(emit_csv(res))
    return 0


def cmd_bound(args) -> int:
    cfg = _load_config(args.config, args.seed)
    system = System(cfg)
    if not 0 <= args.user < system.graph.J:
        raise InvalidConfig(f"--user {args.user} is outside 0..{system.graph.J - 1}")
    space = BlockSpace(cfg.hcpi, system.mapper, system.families)
    rng = np.random.default_rng(cfg.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["snr_db", "n0", "bound", "stderr", "mode"])
        for snr in cfg.snr_db:
            N0 = system.n0(snr)
            val, se = ablep_bound(args.user, space, N0, args.mode, samples=args.samples, rng=rng)
            w.writerow([repr(snr), repr(N0), repr(val), repr(se), args.mode])
            print(f"{snr:g} dB: bound={val:.4e} stderr={se:.2e}", flush=True)
    return 0


def cmd_te(args) -> int:
    cfg = _load_config(args.config)
    if cfg.scheme == "cscma":
        te = te_cscma(cfg.J, cfg.K, cfg.C)
    elif cfg.scheme == "cpi":
        te = te_cpi(cfg.J, cfg.K, cfg.hcpi)
    else:
        te = te_hcpi(cfg.J, cfg.K, cfg.hcpi)
    print(_fmt(te))
    return 0


def cmd_gen_codebook(args) -> int:
    try:
        K, J, d_f, d_v = (int(x) for x in args.graph.split(","))
    except ValueError:
        raise InvalidConfig(f"--graph expects K,J,d_f,d_v, got {args.graph!r}") from None
    try:
        fams = generate_families(canonical_factor_graph(K, J, d_f, d_v), args.C, args.R, args.seed)
    except ValueError as e:
        if isinstance(e, ScmaError):
            raise
        raise InvalidConfig(str(e)) from None
    save_codebook_family(fams, args.out)
    print(f"wrote {args.R} order(s) to {args.out}; min distance {cross_codebook_min_distance(fams)[1]:.6f}")
    return 0


def cmd_validate(args) -> int:
    fams = load_codebook_family(args.codebook)
    g = fams[0].graph
    dist = cross_codebook_min_distance(fams)[1]
    print(f"ok: K={g.K} J={g.J} C={fams[0].C} R={len(fams)} min distance {dist:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcpi-scma", description="Hybrid codeword-position index-modulated SCMA tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo BER/BLER sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bound", help="union bound on block error probability")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--mode", choices=("exact", "sampled"), default="sampled")
    b.add_argument("--samples", type=int, default=2000)
    b.add_argument("--user", type=int, default=0)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bound)

    t = sub.add_parser("te", help="transmission efficiency in bits per chip")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_te)

    g = sub.add_parser("gen-codebook", help="write a generated codebook family")
    g.add_argument("--graph", required=True, help="K,J,d_f,d_v")
    g.add_argument("--C", type=int, required=True)
    g.add_argument("--R", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=float, default=0.0, help="rotation seed angle")
    g.set_defaults(func=cmd_gen_codebook)

    v = sub.add_parser("validate", help="check a codebook file")
    v.add_argument("--codebook", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ScmaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io-failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
