"""Analytic channel model: overlaps under a frame rotation, yields, gains and QBER.

Bob's X/Y frame is rotated by ``beta`` relative to Alice's; Z is shared. The
correlator convention is

    <XX> = cos b,  <YY> = -cos b,  <XY> = <YX> = -sin b,  <ZZ> = 1,

and every Z-vs-X/Y crossing is uncorrelated. With this choice the
quarter-sum R of the two pooled combinations is 1 for every ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .decoy import BASES, SiftedCounts
from .params import DeviceParams, ProtocolParams


class StateLabel(NamedTuple):
    basis: str
    bit: int


ALL_STATES = tuple(StateLabel(b, v) for b in BASES for v in (0, 1))


def correlator(alice_basis: str, bob_basis: str, beta: float) -> float:
    """Ideal single-photon expectation <A B> for the rotated frame."""
    if alice_basis == "Z" or bob_basis == "Z":
        return 1.0 if alice_basis == bob_basis else 0.0
    if alice_basis == "X" and bob_basis == "X":
        return math.cos(beta)
    if alice_basis == "Y" and bob_basis == "Y":
        return -math.cos(beta)
    return -math.sin(beta)


def overlap(alice: StateLabel, bob: StateLabel, beta: float) -> float:
    """Probability that a photon prepared as ``alice`` is found in ``bob``."""
    sign = -1.0 if alice.bit != bob.bit else 1.0
    return 0.5 * (1.0 + sign * correlator(alice.basis, bob.basis, beta))


def wrap_angle(beta: float) -> float:
    return beta % (2.0 * math.pi)


def path_of(bob_basis: str) -> str:
    return "Z" if bob_basis == "Z" else "XY"


def transmittance(distance_km: float, path: str, dev: DeviceParams) -> float:
    """End-to-end detection probability per photon along ``path``."""
    if distance_km < 0:
        raise ValueError("distance must be nonnegative")
    loss_db = dev.alpha * distance_km + dev.path_loss_db(path)
    return 10.0 ** (-loss_db / 10.0) * dev.eta_det


@dataclass(frozen=True)
class ChannelPoint:
    distance_km: float
    beta: float
    eta_total_z: float
    eta_total_xy: float

    @classmethod
    def at(cls, distance_km: float, dev: DeviceParams, beta: float = 0.0) -> ChannelPoint:
        return cls(distance_km, wrap_angle(beta),
                   transmittance(distance_km, "Z", dev),
                   transmittance(distance_km, "XY", dev))

    def eta(self, bob_basis: str) -> float:
        return self.eta_total_z if bob_basis == "Z" else self.eta_total_xy


def yield_n(n: int, eta: float, c: float, e_d: float) -> float:
    """Probability that an ``n``-photon pulse is recorded as the queried outcome.

    Two threshold detectors with dark-count probability ``e_d``; each photon
    reaches the queried detector with probability ``eta*c``, the partner with
    ``eta*(1-c)``, and is lost otherwise. A double click is assigned by a
    fair coin.
    """
    keep = 1.0 - e_d
    return 0.5 + 0.5 * keep * ((1.0 - eta * (1.0 - c)) ** n
                               - (1.0 - eta * c) ** n
                               - keep * (1.0 - eta) ** n)


def gain_wcs(k, eta, c, e_d):
    """Poisson average of :func:`yield_n` over a weak coherent pulse of mean ``k``.

    Works elementwise on arrays.
    """
    a = (1.0 - e_d) * np.exp(-k * eta * c)
    b = (1.0 - e_d) * np.exp(-k * eta * (1.0 - c))
    return (1.0 - a) * (1.0 + b) / 2.0


@dataclass(frozen=True)
class PairStatistics:
    """Gain and QBER of one (Alice basis, Bob basis) pair at one intensity."""

    gain: float
    qber: float
    no_signal: bool = False


def _pair_arrays(alice_basis: str, bob_basis: str, k, eta: float, beta: float, dev: DeviceParams):
    """Vectorized over intensities ``k``; returns (Q, E) arrays."""
    k = np.asarray(k, dtype=float)
    # c for (Alice bit a, Bob outcome b); only the a == b and a != b cases differ
    c_same = overlap(StateLabel(alice_basis, 0), StateLabel(bob_basis, 0), beta)
    c_diff = overlap(StateLabel(alice_basis, 0), StateLabel(bob_basis, 1), beta)
    v_same = gain_wcs(k, eta, c_same, dev.e_d)
    v_diff = gain_wcs(k, eta, c_diff, dev.e_d)
    # Alice's bit-1 states mirror bit 0, so each case appears twice in the sum
    gain = v_same + v_diff
    with np.errstate(invalid="ignore", divide="ignore"):
        raw = np.where(gain > 0, v_diff / np.where(gain > 0, gain, 1.0), 0.5)
    qber = dev.e0 * (1.0 - raw) + (1.0 - dev.e0) * raw
    qber = np.where(gain > 0, qber, 0.5)
    return gain, qber


def pair_statistics(alice_basis: str, bob_basis: str, k: float, point: ChannelPoint,
                    dev: DeviceParams) -> PairStatistics:
    gain, qber = _pair_arrays(alice_basis, bob_basis, k, point.eta(bob_basis), point.beta, dev)
    gain, qber = float(gain), float(qber)
    return PairStatistics(gain, qber, no_signal=gain == 0.0)


def expected_counts(proto: ProtocolParams, dev: DeviceParams, point: ChannelPoint) -> SiftedCounts:
    """Expectation-valued valid and error counts for all nine basis pairs."""
    k = np.array(proto.intensities)
    pk = np.array(proto.probabilities)
    valid = np.zeros((3, 3, 3))
    error = np.zeros((3, 3, 3))
    for i, a in enumerate(BASES):
        for j, b in enumerate(BASES):
            gain, qber = _pair_arrays(a, b, k, point.eta(b), point.beta, dev)
            rounds = proto.n_pulses * proto.basis_probability(a) * proto.basis_probability(b) * pk
            valid[i, j] = rounds * gain
            error[i, j] = rounds * gain * qber
    return SiftedCounts(valid, error)
