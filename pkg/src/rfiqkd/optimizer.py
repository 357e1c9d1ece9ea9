"""Per-distance maximization of the analytic key rate over protocol parameters.

Search: Latin-hypercube seed points in a unit cube, then cyclic coordinate-wise
golden-section refinement of the best few. The objective is the *unclamped*
rate so that the search still has a slope where the clamped rate is zero.
Everything is deterministic given ``(seed, budget)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc

from .channel import ChannelPoint, expected_counts
from .params import DeviceParams, InfeasibleDecoyError, ProtocolParams, SecurityParams
from .security import KeyRateReport, analyze

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MONOTONE_SLACK = 0.02


@dataclass(frozen=True)
class OptimizationSpec:
    """Search box and budget. omega is pinned to 0.

    nu ranges over [nu_min, nu_max_frac * mu]; p_omega over ``p_omega_bounds``
    with the rest split between mu and nu by ``mu_share_bounds``.
    """

    n_pulses: float
    seed: int = 0
    budget: int = 2000
    starts: int = 24
    refine: int = 3
    mu_bounds: tuple[float, float] = (0.05, 1.0)
    nu_min: float = 0.01
    nu_max_frac: float = 0.9
    p_omega_bounds: tuple[float, float] = (0.02, 0.6)
    mu_share_bounds: tuple[float, float] = (0.05, 0.95)
    p_z_bounds: tuple[float, float] = (0.5, 0.99)
    beta: float = 0.0

    def decode(self, x) -> ProtocolParams:
        """Map a point of the unit cube to protocol parameters."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        mu = _lerp(self.mu_bounds, x[0])
        nu = _lerp((self.nu_min, self.nu_max_frac * mu), x[1])
        p_omega = _lerp(self.p_omega_bounds, x[2])
        share = _lerp(self.mu_share_bounds, x[3])
        p_mu = (1.0 - p_omega) * share
        p_nu = 1.0 - p_omega - p_mu
        p_z = _lerp(self.p_z_bounds, x[4])
        return ProtocolParams(mu=mu, nu=nu, omega=0.0, p_mu=p_mu, p_nu=p_nu, p_omega=p_omega,
                              p_z=p_z, n_pulses=self.n_pulses)

    def encode(self, proto: ProtocolParams) -> np.ndarray:
        """Inverse of :meth:`decode` (clipped to the box)."""
        x = np.array([
            _unlerp(self.mu_bounds, proto.mu),
            _unlerp((self.nu_min, self.nu_max_frac * proto.mu), proto.nu),
            _unlerp(self.p_omega_bounds, proto.p_omega),
            _unlerp(self.mu_share_bounds, proto.p_mu / (proto.p_mu + proto.p_nu)),
            _unlerp(self.p_z_bounds, proto.p_z),
        ])
        return np.clip(x, 0.0, 1.0)


def _lerp(bounds, t):
    lo, hi = bounds
    return lo + (hi - lo) * float(t)


def _unlerp(bounds, value):
    lo, hi = bounds
    return (value - lo) / (hi - lo) if hi > lo else 0.0


class OptimizationResult(NamedTuple):
    protocol: ProtocolParams
    report: KeyRateReport


class _Objective:
    def __init__(self, distance_km, dev, sec, spec):
        self.point = ChannelPoint.at(distance_km, dev, spec.beta)
        self.dev, self.sec, self.spec = dev, sec, spec
        self.calls = 0
        self.limit = spec.budget

    def report(self, proto):
        return analyze(expected_counts(proto, self.dev, self.point), proto, self.dev, self.sec)

    def __call__(self, x) -> float:
        self.calls += 1
        try:
            proto = self.spec.decode(x)
        except InfeasibleDecoyError:
            return -math.inf
        return self.report(proto).r_l_unclamped


def _golden_line(f, x, fx, axis, width, objective):
    """Golden-section search along one coordinate inside [x - width, x + width]."""
    lo, hi = max(0.0, x[axis] - width), min(1.0, x[axis] + width)
    best_x, best_f = x.copy(), fx

    def at(t):
        y = best_x.copy()
        y[axis] = t
        return y, f(y)

    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    yc, fc = at(c)
    yd, fd = at(d)
    for _ in range(14):
        if objective.calls >= objective.limit:
            break
        if fc >= fd:
            b, d, yd, fd = d, c, yc, fc
            c = b - GOLDEN * (b - a)
            yc, fc = at(c)
        else:
            a, c, yc, fc = c, d, yd, fd
            d = a + GOLDEN * (b - a)
            yd, fd = at(d)
    for y, fy in ((yc, fc), (yd, fd)):
        if fy > best_f:
            best_x, best_f = y, fy
    return best_x, best_f


def optimize(distance_km: float, dev: DeviceParams, spec: OptimizationSpec,
             sec: SecurityParams | None = None, warm_starts=()) -> OptimizationResult:
    """Maximize the key rate at one distance.

    Returns the best parameters found and their report; when no point gives a
    positive rate the report carries ``r_l = 0`` and a reason.
    """
    sec = sec or SecurityParams()
    objective = _Objective(distance_km, dev, sec, spec)
    sampler = qmc.LatinHypercube(d=5, seed=np.random.default_rng(spec.seed))
    candidates = list(sampler.random(spec.starts))
    candidates += [spec.encode(p) for p in warm_starts]
    scored = sorted(((objective(x), i, x) for i, x in enumerate(candidates)),
                    key=lambda t: (-t[0], t[1]))

    best_f, best_x = -math.inf, None
    chosen = scored[:spec.refine]
    for n, (fx, _, x) in enumerate(chosen):
        share = (spec.budget - objective.calls) // (len(chosen) - n)
        objective.limit = objective.calls + max(share, 0)
        x = np.array(x, dtype=float)
        width = 0.5
        while objective.calls < objective.limit and width > 1e-4:
            start = fx
            for axis in range(5):
                x, fx = _golden_line(objective, x, fx, axis, width, objective)
            if fx - start <= 1e-12 * max(abs(start), 1e-30):
                width *= 0.5
            else:
                width *= 0.8
        if fx > best_f:
            best_f, best_x = fx, x

    if best_x is None:
        best_f, _, best_x = scored[0]
    proto = spec.decode(best_x)
    report = objective.report(proto)
    if best_f <= 0:
        reasons = report.reasons + ("no feasible point yields a positive key rate",)
        report = _with_reasons(report, reasons)
    log.debug("optimize(%s km): %d evaluations, r_l=%.4g", distance_km, objective.calls,
              report.r_l)
    return OptimizationResult(proto, report)


def _with_reasons(report, reasons):
    from dataclasses import replace
    return replace(report, reasons=tuple(dict.fromkeys(reasons)))


class SweepRow(NamedTuple):
    distance_km: float
    protocol: ProtocolParams
    report: KeyRateReport
    search_failure: bool


def _optimize_one(args):
    distance, dev, spec, sec = args
    return optimize(distance, dev, spec, sec)


def sweep(distances, dev: DeviceParams, spec: OptimizationSpec,
          sec: SecurityParams | None = None, workers: int = 1) -> list[SweepRow]:
    """Optimize each distance independently; rows come back in input order.

    A rate that rises by more than 2% with distance (relative to the previous
    row) marks that row as a search failure.
    """
    distances = list(distances)
    jobs = [(d, dev, spec, sec) for d in distances]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_optimize_one, jobs))
    else:
        results = [_optimize_one(j) for j in jobs]

    rows = []
    order = np.argsort(distances, kind="stable")
    flags = [False] * len(distances)
    for prev, cur in zip(order[:-1], order[1:]):
        r_prev, r_cur = results[prev].report.r_l, results[cur].report.r_l
        if distances[cur] > distances[prev] and r_cur > r_prev * (1 + MONOTONE_SLACK) \
                and r_cur > 0:
            flags[cur] = True
            log.warning("rate increases from %g km to %g km; search failure suspected",
                        distances[prev], distances[cur])
    for d, res, flag in zip(distances, results, flags):
        rows.append(SweepRow(d, res.protocol, res.report, flag))
    return rows
