"""Pulse-level Monte Carlo that samples the physical model directly.

Each block of pulses draws from its own Philox stream keyed by
``SeedSequence(seed, spawn_key=(block_index,))``, so the counts depend only on
``(seed, block_size)`` and not on how many workers run or in what order the
blocks finish.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .channel import transmittance
from .decoy import SiftedCounts
from .params import DeviceParams, ProtocolParams


class DriftKind(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    SINUSOIDAL = "sinusoidal"


_KIND_CODES = {
    DriftKind.CONSTANT: _kernels.DRIFT_CONSTANT,
    DriftKind.LINEAR: _kernels.DRIFT_LINEAR,
    DriftKind.SINUSOIDAL: _kernels.DRIFT_SINUSOIDAL,
}


@dataclass(frozen=True)
class DriftSchedule:
    """Frame angle as a function of the global pulse index.

    ``linear``: beta0 + rate * i. ``sinusoidal``: beta0 + amplitude * sin(2 pi i / period).
    """

    kind: DriftKind = DriftKind.CONSTANT
    beta0: float = 0.0
    rate: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        if self.kind is DriftKind.SINUSOIDAL and self.period <= 0:
            raise ValueError("sinusoidal drift needs a positive period")

    @classmethod
    def constant(cls, beta: float) -> DriftSchedule:
        return cls(DriftKind.CONSTANT, beta0=beta)

    @classmethod
    def linear_window(cls, beta0: float, window: float, pulses: int) -> DriftSchedule:
        """Uniform drift across ``window`` radians over a run of ``pulses``."""
        return cls(DriftKind.LINEAR, beta0=beta0, rate=window / max(pulses, 1))

    def beta(self, index):
        index = np.asarray(index, dtype=float)
        if self.kind is DriftKind.LINEAR:
            return self.beta0 + self.rate * index
        if self.kind is DriftKind.SINUSOIDAL:
            return self.beta0 + self.amplitude * np.sin(2.0 * np.pi * index / self.period)
        return np.full(index.shape, float(self.beta0))

    def as_tuple(self):
        return (_KIND_CODES[self.kind], self.beta0, self.rate, self.amplitude, self.period)


@dataclass(frozen=True)
class RunSpec:
    pulses: int
    seed: int = 0
    block_size: int = 1 << 18

    def __post_init__(self):
        if self.pulses < 0:
            raise ValueError("pulses must be nonnegative")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def n_blocks(self) -> int:
        return -(-int(self.pulses) // self.block_size)


def block_uniforms(seed: int, block_index: int, size: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(block_index,))
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.random((size, _kernels.N_UNIFORMS))


def run_block(block_index: int, proto: ProtocolParams, dev: DeviceParams, distance_km: float,
              drift: DriftSchedule, spec: RunSpec, backend=None) -> np.ndarray:
    """Counts ``[a, b, k, valid/error]`` for one block."""
    first = block_index * spec.block_size
    size = min(spec.block_size, int(spec.pulses) - first)
    out = np.zeros((3, 3, 3, 2), dtype=np.int64)
    if size <= 0:
        return out
    u = block_uniforms(spec.seed, block_index, size)
    eta_z = transmittance(distance_km, "Z", dev)
    eta_xy = transmittance(distance_km, "XY", dev)
    cum = np.cumsum(proto.probabilities)[:2]
    _kernels.tally(u, first, proto.intensities, cum, proto.p_z, proto.p_x,
                   (eta_xy, eta_xy, eta_z), dev.e_d, dev.e0, drift.as_tuple(), out,
                   backend=backend)
    return out


def run(proto: ProtocolParams, dev: DeviceParams, distance_km: float, drift: DriftSchedule,
        spec: RunSpec, workers: int = 1, order=None, backend=None) -> SiftedCounts:
    """Simulate ``spec.pulses`` pulses and return integer sifted counts.

    Z-vs-X/Y basis crossings are discarded; X-vs-Y crossings are kept.
    ``order`` optionally permutes the block execution order (results are
    identical for any permutation).
    """
    blocks = list(range(spec.n_blocks)) if order is None else list(order)
    if sorted(blocks) != list(range(spec.n_blocks)):
        raise ValueError("order must be a permutation of the block indices")

    def work(b):
        return run_block(b, proto, dev, distance_km, drift, spec, backend)

    total = np.zeros((3, 3, 3, 2), dtype=np.int64)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(work, blocks):
                total += part
    else:
        for b in blocks:
            total += work(b)
    return SiftedCounts(total[..., 0], total[..., 1])


def drift_r_degradation(window: float) -> float:
    """Ideal single-photon R after averaging correlators over a uniform drift window."""
    if window < 0:
        raise ValueError("window must be nonnegative")
    if window == 0:
        return 1.0
    half = window / 2.0
    return (math.sin(half) / half) ** 2
