"""Configuration types: device constants, protocol choices and the failure budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

PROB_TOL = 1e-9
# Published probability vectors are rounded to two decimals; drift up to this
# much is renormalized by ``ProtocolParams.from_rounded``.
ROUNDING_TOL = 0.02

INTENSITIES = ("mu", "nu", "omega")


class InfeasibleDecoyError(ValueError):
    """Intensities for which the weak+vacuum decoy bounds are undefined."""


class SiftPlacement(str, Enum):
    XY_ONLY = "xy_only"
    BOTH = "both"
    Z_ONLY = "z_only"


@dataclass(frozen=True)
class DeviceParams:
    """Fiber, receiver and detector constants for one hardware profile.

    Losses are in dB, ``alpha`` in dB/km. ``e_d`` is the dark-count
    probability per detector per gate; each measurement path has two
    detectors.
    """

    alpha: float
    eta_z_db: float
    eta_xy_db: float
    e0: float
    e_d: float
    eta_det: float
    f_ec: float
    sift_db: float = 3.0
    sift_applies: SiftPlacement = SiftPlacement.XY_ONLY

    def __post_init__(self):
        object.__setattr__(self, "sift_applies", SiftPlacement(self.sift_applies))
        if not 0.0 <= self.e0 < 0.5:
            raise ValueError(f"e0 must lie in [0, 0.5), got {self.e0}")
        if not 0.0 <= self.e_d < 1.0:
            raise ValueError(f"e_d must lie in [0, 1), got {self.e_d}")
        if not 0.0 < self.eta_det <= 1.0:
            raise ValueError(f"eta_det must lie in (0, 1], got {self.eta_det}")
        if self.f_ec < 1.0:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")
        for name in ("alpha", "eta_z_db", "eta_xy_db", "sift_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def path_loss_db(self, path: str) -> float:
        """Receiver-side loss in dB for ``path`` ("Z" or "XY"), sift loss included."""
        if path == "Z":
            loss = self.eta_z_db
            sifted = self.sift_applies in (SiftPlacement.Z_ONLY, SiftPlacement.BOTH)
        elif path == "XY":
            loss = self.eta_xy_db
            sifted = self.sift_applies in (SiftPlacement.XY_ONLY, SiftPlacement.BOTH)
        else:
            raise ValueError(f"unknown path {path!r}")
        return loss + (self.sift_db if sifted else 0.0)


# Measured profiles of the two detector types.
APD = DeviceParams(alpha=0.2, eta_z_db=10.0, eta_xy_db=12.0, e0=0.01, e_d=8e-6,
                   eta_det=0.15, f_ec=1.16)
SNSPD = DeviceParams(alpha=0.2, eta_z_db=10.0, eta_xy_db=12.0, e0=0.002, e_d=1e-8,
                     eta_det=0.55, f_ec=1.16)
PRESETS = {"apd": APD, "snspd": SNSPD}


@dataclass(frozen=True)
class ProtocolParams:
    """Intensities, their selection probabilities, basis bias and pulse count.

    ``p_z`` is shared by Alice and Bob; X and Y split the remainder evenly.
    The constructor accepts probability vectors within ``PROB_TOL`` of the
    simplex (renormalizing them); use :meth:`from_rounded` for published,
    rounded values.
    """

    mu: float
    nu: float
    omega: float
    p_mu: float
    p_nu: float
    p_omega: float
    p_z: float
    n_pulses: float
    adjustments: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        probs = (self.p_mu, self.p_nu, self.p_omega)
        if any(p < 0 for p in probs):
            raise ValueError(f"intensity probabilities must be nonnegative, got {probs}")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(
                f"p_mu + p_nu + p_omega = {total!r} is off the simplex by more than {PROB_TOL}")
        if total != 1.0:
            object.__setattr__(self, "p_mu", self.p_mu / total)
            object.__setattr__(self, "p_nu", self.p_nu / total)
            object.__setattr__(self, "p_omega", self.p_omega / total)
        if not 0.0 < self.p_z < 1.0:
            raise ValueError(f"p_z must lie in (0, 1), got {self.p_z}")
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be nonnegative")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        if not self.mu > self.nu > self.omega:
            raise InfeasibleDecoyError(
                f"need mu > nu > omega, got mu={self.mu}, nu={self.nu}, omega={self.omega}")
        if decoy_denominator(self.mu, self.nu, self.omega) <= 0:
            raise InfeasibleDecoyError(
                "mu*(nu - omega) - nu**2 + omega**2 must be positive "
                f"(mu={self.mu}, nu={self.nu}, omega={self.omega})")

    @classmethod
    def from_rounded(cls, *, mu, nu, omega, p_mu, p_nu, p_omega, p_z, n_pulses):
        """Build from rounded values, renormalizing intensity probabilities.

        Vectors whose sum is within ``ROUNDING_TOL`` of one are rescaled and
        the rescaling is recorded in ``adjustments``.
        """
        total = math.fsum((p_mu, p_nu, p_omega))
        notes = ()
        if abs(total - 1.0) > ROUNDING_TOL:
            raise ValueError(
                f"p_mu + p_nu + p_omega = {total!r} deviates from 1 by more than {ROUNDING_TOL}")
        if abs(total - 1.0) > PROB_TOL:
            notes = (f"intensity probabilities summed to {total!r}; renormalized",)
            p_mu, p_nu, p_omega = p_mu / total, p_nu / total, p_omega / total
        return cls(mu=mu, nu=nu, omega=omega, p_mu=p_mu, p_nu=p_nu, p_omega=p_omega,
                   p_z=p_z, n_pulses=n_pulses, adjustments=notes)

    @property
    def p_x(self) -> float:
        return (1.0 - self.p_z) / 2.0

    p_y = p_x

    @property
    def intensities(self) -> tuple[float, float, float]:
        return (self.mu, self.nu, self.omega)

    @property
    def probabilities(self) -> tuple[float, float, float]:
        return (self.p_mu, self.p_nu, self.p_omega)

    def basis_probability(self, basis: str) -> float:
        return self.p_z if basis == "Z" else self.p_x

    def replace(self, **changes) -> ProtocolParams:
        values = {k: getattr(self, k) for k in
                  ("mu", "nu", "omega", "p_mu", "p_nu", "p_omega", "p_z", "n_pulses")}
        values.update(changes)
        return ProtocolParams(**values)


@dataclass(frozen=True)
class SecurityParams:
    eps_ec: float = 1e-10
    eps_pa: float = 1e-10
    eps_bar: float = 1e-10
    eps_pe: float = 1e-10
    n_pe: int = 18

    def __post_init__(self):
        for name in ("eps_ec", "eps_pa", "eps_bar", "eps_pe"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.n_pe < 1:
            raise ValueError("n_pe must be positive")


def epsilon_total(sec: SecurityParams) -> float:
    """Composable failure probability of the whole protocol."""
    return sec.eps_ec + sec.eps_pa + sec.eps_bar + sec.n_pe * sec.eps_pe


def decoy_denominator(mu: float, nu: float, omega: float) -> float:
    return mu * (nu - omega) - nu**2 + omega**2


def tau(n: int, proto: ProtocolParams) -> float:
    """Probability that Alice emits an ``n``-photon pulse, averaged over intensities."""
    if n < 0:
        raise ValueError("photon number must be nonnegative")
    log_fact = math.lgamma(n + 1)
    total = 0.0
    for k, p in zip(proto.intensities, proto.probabilities):
        if k == 0.0:
            total += p if n == 0 else 0.0
        else:
            total += p * math.exp(-k + n * math.log(k) - log_fact)
    return total
