"""R-statistic bound, leaked-information bound and finite-size key rate."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .decoy import (
    EventClass,
    PhotonNumberBounds,
    PoolingAsymmetryWarning,
    SiftedCounts,
    class_counts,
    fluctuate,
    photon_number_bounds,
    pooling_asymmetry,
    ASYMMETRY_TOL,
)
from .params import DeviceParams, ProtocolParams, SecurityParams, epsilon_total


@dataclass(frozen=True)
class CorrelatorInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not -2.0 <= self.lo <= self.hi <= 2.0:
            raise ValueError(f"invalid correlator interval [{self.lo}, {self.hi}]")

    def min_square(self) -> float:
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(self.lo**2, self.hi**2)


def correlator_interval(s1_l: float, s1_u: float, t1_l: float, t1_u: float) -> CorrelatorInterval:
    """Worst-case range of a pooled single-photon correlator (range [-2, 2])."""
    if s1_l <= 0.0:
        return CorrelatorInterval(-2.0, 2.0)
    e_hi = min(1.0, t1_u / s1_l)
    e_lo = max(0.0, t1_l / s1_u) if s1_u > 0 else 0.0
    lo = min(2.0, max(-2.0, 2.0 * (1.0 - 2.0 * e_hi)))
    hi = min(2.0, max(-2.0, 2.0 * (1.0 - 2.0 * e_lo)))
    return CorrelatorInterval(min(lo, hi), hi)


def r_lower(g1: CorrelatorInterval, g2: CorrelatorInterval) -> float:
    return min(1.0, 0.25 * (g1.min_square() + g2.min_square()))


def c_value(xx: float, xy: float, yx: float, yy: float) -> float:
    return xx**2 + xy**2 + yx**2 + yy**2


def binary_entropy(x):
    """Shannon entropy in bits of a Bernoulli(x) variable; elementwise on arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy argument outside [0, 1]: {x}")
    inner = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inner, arr, 0.5)
    h = np.where(inner, -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe), 0.0)
    return float(h) if h.ndim == 0 else h


def leaked_info(e_zz1_u: float, r_l: float) -> float:
    """Upper bound on Eve's information per single-photon Z bit."""
    e = e_zz1_u
    if e >= 1.0:
        return 1.0
    arg = (1.0 + math.sqrt(max(r_l, 0.0)) - e) / (2.0 * (1.0 - e))
    arg = min(1.0, max(0.5, arg))
    return min(1.0, max(0.0, (1.0 - e) * binary_entropy(arg) + e))


def key_rate_unclamped(s_zz0_l, s_zz1_l, i_e_u, s_zz, e_zz_u, f_ec, sec: SecurityParams,
                       n_pulses) -> float:
    """Finite-size key length per pulse before clamping at zero."""
    finite_term = 7.0 * math.sqrt(s_zz * math.log2(2.0 / sec.eps_bar)) if s_zz > 0 else 0.0
    length = (s_zz0_l + s_zz1_l * (1.0 - i_e_u)
              - s_zz * f_ec * binary_entropy(min(e_zz_u, 1.0))
              - math.log2(2.0 / sec.eps_ec)
              - 2.0 * math.log2(2.0 / sec.eps_pa)
              - finite_term
              - 30.0 * math.log2(n_pulses + 1.0))
    return length / n_pulses


def key_rate(s_zz0_l, s_zz1_l, i_e_u, s_zz, e_zz_u, f_ec, sec: SecurityParams, n_pulses) -> float:
    return max(0.0, key_rate_unclamped(s_zz0_l, s_zz1_l, i_e_u, s_zz, e_zz_u, f_ec, sec,
                                       n_pulses))


@dataclass(frozen=True)
class KeyRateReport:
    r_l: float
    r_l_unclamped: float
    R_l: float
    I_E_u: float
    e_zz1_u: float
    s_zz0_l: float
    s_zz1_l: float
    s_zz: float
    s_zz_mu: float
    m_zz: float
    E_zz_obs: float
    E_zz_u: float
    eps_total: float
    g1: CorrelatorInterval
    g2: CorrelatorInterval
    c_diagnostic: float
    bounds: dict[str, PhotonNumberBounds]
    protocol: ProtocolParams
    device: DeviceParams
    security: SecurityParams
    reasons: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["protocol"].pop("adjustments", None)
        out["device"]["sift_applies"] = self.device.sift_applies.value
        out["reasons"] = list(self.reasons)
        out["warnings"] = list(self.warnings)
        return out


def observed_correlators(counts: SiftedCounts) -> tuple[float, float, float, float]:
    """Raw <XX>, <XY>, <YX>, <YY> from all intensities pooled (0 when empty)."""
    out = []
    for a, b in (("X", "X"), ("X", "Y"), ("Y", "X"), ("Y", "Y")):
        n, m = counts.pair(a, b)
        n, m = n.sum(), m.sum()
        out.append(float((n - 2.0 * m) / n) if n > 0 else 0.0)
    return tuple(out)


def analyze(counts: SiftedCounts, proto: ProtocolParams, dev: DeviceParams,
            sec: SecurityParams) -> KeyRateReport:
    """Run the full estimation chain on sifted counts and return the key-rate report."""
    reasons = []
    notes = list(proto.adjustments)
    eps = sec.eps_pe
    if pooling_asymmetry(counts) > ASYMMETRY_TOL:
        notes.append(f"pooling asymmetry |n_XX/n_YY - 1| = {pooling_asymmetry(counts):.4g}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PoolingAsymmetryWarning)
        bounds = {c.value: photon_number_bounds(counts, c, proto, eps) for c in EventClass}
    for name, b in bounds.items():
        if not b.ordered:
            notes.append(f"{name}: single-photon lower bound exceeds upper bound")

    zz = bounds["ZZ"]
    n_zz, m_zz_k = class_counts(counts, EventClass.ZZ)
    s_zz, m_zz = zz.s_total, zz.m_total

    e_zz1_u = min(0.5, zz.t1_u / zz.s1_l) if zz.s1_l > 0 else 0.5
    g1 = correlator_interval(bounds["G1"].s1_l, bounds["G1"].s1_u,
                             bounds["G1"].t1_l, bounds["G1"].t1_u)
    g2 = correlator_interval(bounds["G2"].s1_l, bounds["G2"].s1_u,
                             bounds["G2"].t1_l, bounds["G2"].t1_u)
    big_r = r_lower(g1, g2)
    i_e = leaked_info(e_zz1_u, big_r)

    if s_zz > 0:
        e_obs = m_zz / s_zz
        e_u = min(0.5, fluctuate(m_zz, m_zz, eps)[1] / s_zz)
    else:
        e_obs, e_u = 0.0, 0.5

    n_pulses = proto.n_pulses
    if counts.valid.sum() == 0:
        reasons.append("no events")
    for name in ("G1", "G2"):
        if bounds[name].s_total == 0:
            reasons.append(f"no {name} events")
    if s_zz == 0:
        reasons.append("no ZZ events")

    if n_pulses <= 0:
        raw = 0.0
        reasons.append("no pulses")
    else:
        raw = key_rate_unclamped(zz.s0_l, zz.s1_l, i_e, s_zz, e_u, dev.f_ec, sec, n_pulses)
    if reasons:
        rate = 0.0
    else:
        rate = max(0.0, raw)
        if raw <= 0:
            reasons.append("finite-size overhead exceeds extractable key")

    return KeyRateReport(
        r_l=rate, r_l_unclamped=raw, R_l=big_r, I_E_u=i_e, e_zz1_u=e_zz1_u,
        s_zz0_l=zz.s0_l, s_zz1_l=zz.s1_l, s_zz=s_zz, s_zz_mu=float(n_zz[0]), m_zz=m_zz,
        E_zz_obs=e_obs, E_zz_u=e_u, eps_total=epsilon_total(sec), g1=g1, g2=g2,
        c_diagnostic=c_value(*observed_correlators(counts)), bounds=bounds,
        protocol=proto, device=dev, security=sec,
        reasons=tuple(reasons), warnings=tuple(notes))
