"""Rayleigh fading, AWGN and multi-user superposition.

Receiver-side CSI is perfect: the detector is handed the same gains used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConfig
from .mapper import HcpiConfig

FADING_MODELS = ("per-chip-iid", "block-fading-per-unit", "none")


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    s = np.sqrt(var / 2)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


@dataclass(frozen=True)
class NoiseParams:
    N0: float
    snr_db: float
    eb: float

    def __post_init__(self):
        if not self.N0 > 0:
            raise InvalidConfig(f"N0 must be positive, got {self.N0}")


def snr_to_n0(snr_db: float, config: HcpiConfig) -> NoiseParams:
    """Eb/N0 convention: Eb is the block energy (one unit per active codeword) over ``m`` bits."""
    eb = sum(config.t) / config.m
    return NoiseParams(N0=eb * 10.0 ** (-snr_db / 10.0), snr_db=snr_db, eb=eb)


def es_n0_per_active_chip_db(noise: NoiseParams, d_v: int) -> float:
    """SNR of one nonzero chip of a unit-energy codeword spread over ``d_v`` resources."""
    return float(10 * np.log10(1.0 / (d_v * noise.N0)))


def sample_channel(J: int, S: int, rng: np.random.Generator, model: str = "per-chip-iid", K: int = 1,
                   batch: tuple = ()) -> np.ndarray:
    """Channel gains ``h[..., j, s]`` with unit average power.

    ``block-fading-per-unit`` holds one gain per user over each run of ``K``
    chips; ``none`` is the identity channel.
    """
    shape = tuple(batch) + (J, S)
    if model == "per-chip-iid":
        return crandn(rng, shape)
    if model == "block-fading-per-unit":
        if S % K:
            raise DimensionMismatch(f"S={S} is not a multiple of K={K}")
        h = crandn(rng, tuple(batch) + (J, S // K))
        return np.repeat(h, K, axis=-1)
    if model == "none":
        return np.ones(shape, dtype=complex)
    raise InvalidConfig(f"unknown fading model {model!r}; choose from {FADING_MODELS}")


def superpose(chips: np.ndarray, h: np.ndarray, N0: float, rng: np.random.Generator | None) -> np.ndarray:
    """``y[..., s] = sum_j h[..., j, s] * chips[..., j, s] + z[..., s]``, z ~ CN(0, N0).

    Passing ``rng=None`` (or ``N0 == 0``) omits the noise.
    """
    chips = np.asarray(chips)
    h = np.asarray(h)
    if chips.shape != h.shape:
        raise DimensionMismatch(f"chips {chips.shape} and gains {h.shape} differ")
    y = np.sum(h * chips, axis=-2)
    if rng is not None and N0 > 0:
        y = y + crandn(rng, y.shape, N0)
    return y
