"""Reproducible cylindrical Gaussian sampling with counter-based streams.

Every draw is a pure function of (master_seed, stream_tag, step_index,
sample_index, mode).  Streams are realized with a Philox generator keyed by
(master_seed, tag, step); each sample owns a fixed, block-aligned span of
counter space, so any partition of the sample range into batches (threads,
chunks) reproduces the serial output bit for bit.

Normals are produced by inverse-CDF transform of fixed-consumption uniform
draws; rejection samplers would consume a data-dependent number of words and
break the counter layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri

from .spectral import SpectrumSpec

__all__ = [
    "StreamTag",
    "SeedContext",
    "sample_cylindrical",
    "sample_cylindrical_batch",
    "sample_invariant_measure",
    "sample_invariant_measure_batch",
]


class StreamTag(IntEnum):
    GAMMA_1 = 1
    GAMMA_2 = 2
    OU_EXACT = 3
    INITIAL = 4


@dataclass(frozen=True)
class SeedContext:
    """Address of one draw: which sample, which step, which noise stream."""

    master_seed: int
    sample_index: int = 0
    step_index: int = 0
    stream_tag: StreamTag = StreamTag.GAMMA_1

    def __post_init__(self):
        if self.sample_index < 0 or self.step_index < 0:
            raise ValueError("sample_index and step_index must be nonnegative")


def _words_per_sample(J: int) -> int:
    # Philox emits 4 uint64 words per counter block; pad so every sample
    # starts on a block boundary.
    return 4 * ((J + 3) // 4)


def _stream(master_seed: int, tag: StreamTag, step: int, first_block: int) -> Generator:
    key = SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(tag), int(step)])
    return Generator(Philox(key=key.generate_state(2, np.uint64), counter=[first_block, 0, 0, 0]))


def sample_cylindrical_batch(
    spec: SpectrumSpec,
    master_seed: int,
    tag: StreamTag,
    step_index: int,
    first_sample: int,
    count: int,
) -> np.ndarray:
    """(count, J) standard normals for samples first_sample..first_sample+count-1.

    Bit-identical to stacking single draws; independent of how the sample
    range is split into batches.
    """
    if count < 0 or first_sample < 0:
        raise ValueError("sample range must be nonnegative")
    wps = _words_per_sample(spec.J)
    gen = _stream(master_seed, tag, step_index, first_sample * (wps // 4))
    u = gen.random((count, wps))
    # u is a multiple of 2^-53 in [0, 1); shift to the cell midpoint so the
    # inverse CDF never sees 0 or 1
    return ndtri(u[:, : spec.J] + 2.0**-54)


def sample_cylindrical(spec: SpectrumSpec, ctx: SeedContext) -> np.ndarray:
    """One cylindrical Gaussian draw: J i.i.d. standard normal coefficients."""
    return sample_cylindrical_batch(
        spec, ctx.master_seed, ctx.stream_tag, ctx.step_index, ctx.sample_index, 1
    )[0]


def sample_invariant_measure_batch(
    spec: SpectrumSpec,
    master_seed: int,
    tag: StreamTag,
    step_index: int,
    first_sample: int,
    count: int,
) -> np.ndarray:
    """Draws from the Gaussian invariant law of the fast process, N(0, Lambda^-1)."""
    g = sample_cylindrical_batch(spec, master_seed, tag, step_index, first_sample, count)
    return g / np.sqrt(spec.lambdas)


def sample_invariant_measure(spec: SpectrumSpec, ctx: SeedContext) -> np.ndarray:
    """One draw with independent modes of variance 1/lambda_j."""
    return sample_invariant_measure_batch(
        spec, ctx.master_seed, ctx.stream_tag, ctx.step_index, ctx.sample_index, 1
    )[0]
