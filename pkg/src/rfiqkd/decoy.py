"""Weak+vacuum decoy estimation with Hoeffding fluctuations.

Counts are pooled into three event classes before estimation:

* ``ZZ``: Z-Z rounds, error = bit mismatch;
* ``G1``: X-X and Y-Y rounds, error = mismatch in XX and *match* in YY, so the
  class correlator is <XX> - <YY>;
* ``G2``: X-Y and Y-X rounds, error = mismatch in both, correlator <XY> + <YX>.

Z-vs-X/Y crossings are discarded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .params import INTENSITIES, InfeasibleDecoyError, ProtocolParams, decoy_denominator, tau

BASES = ("X", "Y", "Z")
ASYMMETRY_TOL = 0.05


class PoolingAsymmetryWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SiftedCounts:
    """Valid and error counts indexed ``[alice_basis, bob_basis, intensity]``.

    Axis order follows ``BASES`` and ``INTENSITIES``. Counts may be
    expectation values (floats) or integers from measured/simulated data.
    """

    valid: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        valid = np.array(self.valid, copy=True)
        error = np.array(self.error, copy=True)
        if valid.shape != (3, 3, 3) or error.shape != (3, 3, 3):
            raise ValueError("counts must have shape (3, 3, 3)")
        if np.any(valid < 0) or np.any(error < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(error > valid):
            raise ValueError("error count exceeds valid count")
        valid.flags.writeable = False
        error.flags.writeable = False
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "error", error)

    @classmethod
    def zeros(cls) -> SiftedCounts:
        return cls(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))

    def cell(self, alice_basis: str, bob_basis: str, intensity: str) -> tuple[float, float]:
        idx = (BASES.index(alice_basis), BASES.index(bob_basis), INTENSITIES.index(intensity))
        return self.valid[idx], self.error[idx]

    def pair(self, alice_basis: str, bob_basis: str) -> tuple[np.ndarray, np.ndarray]:
        i, j = BASES.index(alice_basis), BASES.index(bob_basis)
        return self.valid[i, j], self.error[i, j]

    def __add__(self, other: SiftedCounts) -> SiftedCounts:
        return SiftedCounts(self.valid + other.valid, self.error + other.error)

    def __eq__(self, other):
        if not isinstance(other, SiftedCounts):
            return NotImplemented
        return (np.array_equal(self.valid, other.valid)
                and np.array_equal(self.error, other.error))

    def is_integral(self) -> bool:
        return bool(np.all(self.valid == np.round(self.valid))
                    and np.all(self.error == np.round(self.error)))


class EventClass(str, Enum):
    ZZ = "ZZ"
    G1 = "G1"
    G2 = "G2"


def pooling_asymmetry(counts: SiftedCounts) -> float:
    """|n_XX / n_YY - 1| over all intensities; 0 when either side is empty."""
    n_xx = counts.pair("X", "X")[0].sum()
    n_yy = counts.pair("Y", "Y")[0].sum()
    if n_xx == 0 or n_yy == 0:
        return 0.0
    return abs(n_xx / n_yy - 1.0)


def class_counts(counts: SiftedCounts, event_class: EventClass) -> tuple[np.ndarray, np.ndarray]:
    """Per-intensity (valid, error) arrays for one event class."""
    event_class = EventClass(event_class)
    if event_class is EventClass.ZZ:
        n, m = counts.pair("Z", "Z")
        return n.copy(), m.copy()
    if event_class is EventClass.G1:
        if pooling_asymmetry(counts) > ASYMMETRY_TOL:
            warnings.warn("XX and YY totals differ by more than 5%; pooled estimate "
                          "assumes symmetric X/Y sampling", PoolingAsymmetryWarning,
                          stacklevel=2)
        n_xx, m_xx = counts.pair("X", "X")
        n_yy, m_yy = counts.pair("Y", "Y")
        return n_xx + n_yy, m_xx + (n_yy - m_yy)
    n_xy, m_xy = counts.pair("X", "Y")
    n_yx, m_yx = counts.pair("Y", "X")
    return n_xy + n_yx, m_xy + m_yx


def fluctuate(count: float, class_total: float, eps_pe: float) -> tuple[float, float]:
    """Hoeffding interval around an observed count.

    The half-width scales with the class total, not the individual count.
    """
    delta = math.sqrt(class_total / 2.0 * math.log(1.0 / eps_pe))
    return max(0.0, count - delta), count + delta


def _fluctuated(counts, class_total, eps_pe):
    lo, hi = zip(*(fluctuate(float(c), class_total, eps_pe) for c in counts))
    return lo, hi


def _check_decoy(proto: ProtocolParams) -> None:
    if proto.nu == proto.omega:
        raise InfeasibleDecoyError("nu and omega must differ")
    if decoy_denominator(proto.mu, proto.nu, proto.omega) <= 0:
        raise InfeasibleDecoyError("mu*(nu - omega) - nu**2 + omega**2 must be positive")
    if min(proto.probabilities) <= 0:
        raise InfeasibleDecoyError("every intensity needs a nonzero selection probability")


def vacuum_lower(counts, proto: ProtocolParams, eps_pe: float, class_total=None) -> float:
    """Lower bound on vacuum events from per-intensity counts (mu, nu, omega)."""
    _check_decoy(proto)
    total = float(np.sum(counts)) if class_total is None else class_total
    lo, hi = _fluctuated(counts, total, eps_pe)
    mu, nu, om = proto.intensities
    _, p_nu, p_om = proto.probabilities
    value = tau(0, proto) * (nu * math.exp(om) / p_om * lo[2]
                             - om * math.exp(nu) / p_nu * hi[1]) / (nu - om)
    return max(0.0, value)


def single_photon_bounds(counts, proto: ProtocolParams, eps_pe: float,
                         class_total=None) -> tuple[float, float]:
    """(lower, upper) bounds on single-photon events, clamped to [0, class total]."""
    _check_decoy(proto)
    total = float(np.sum(counts)) if class_total is None else class_total
    lo, hi = _fluctuated(counts, total, eps_pe)
    mu, nu, om = proto.intensities
    p_mu, p_nu, p_om = proto.probabilities
    t0, t1 = tau(0, proto), tau(1, proto)
    s0_l = vacuum_lower(counts, proto, eps_pe, total)

    upper = t1 * (math.exp(nu) / p_nu * hi[1] - math.exp(om) / p_om * lo[2]) / (nu - om)
    lower = t1 * mu / decoy_denominator(mu, nu, om) * (
        math.exp(nu) / p_nu * lo[1]
        - math.exp(om) / p_om * hi[2]
        - (nu**2 - om**2) / mu**2 * (math.exp(mu) / p_mu * hi[0] - s0_l / t0))
    upper = min(max(upper, 0.0), total)
    lower = min(max(lower, 0.0), total)
    return lower, upper


@dataclass(frozen=True)
class PhotonNumberBounds:
    """Vacuum and single-photon bounds for one class, valid and error streams."""

    s0_l: float
    s1_l: float
    s1_u: float
    t0_l: float
    t1_l: float
    t1_u: float
    s_total: float
    m_total: float
    ordered: bool = True


def photon_number_bounds(counts: SiftedCounts, event_class: EventClass, proto: ProtocolParams,
                         eps_pe: float) -> PhotonNumberBounds:
    """Decoy bounds for one class.

    The error stream is estimated like the valid stream, with the error class
    total setting its fluctuation width.
    """
    n, t = class_counts(counts, event_class)
    s_total, m_total = float(n.sum()), float(t.sum())
    s0_l = vacuum_lower(n, proto, eps_pe, s_total)
    s1_l, s1_u = single_photon_bounds(n, proto, eps_pe, s_total)
    t0_l = vacuum_lower(t, proto, eps_pe, m_total)
    t1_l, t1_u = single_photon_bounds(t, proto, eps_pe, m_total)
    t1_u = min(t1_u, s1_u)
    t1_l = min(t1_l, t1_u)
    s0_l = min(s0_l, s_total)
    return PhotonNumberBounds(s0_l, s1_l, s1_u, t0_l, t1_l, t1_u, s_total, m_total,
                              ordered=s1_l <= s1_u)
