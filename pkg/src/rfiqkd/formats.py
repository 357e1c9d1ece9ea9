"""Scenario JSON, counts CSV, rate-table CSV and report JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .decoy import BASES, SiftedCounts
from .montecarlo import DriftKind, DriftSchedule
from .optimizer import OptimizationSpec
from .params import INTENSITIES, PRESETS, DeviceParams, ProtocolParams, SecurityParams

COUNTS_HEADER = ("alice_basis", "bob_basis", "intensity", "valid", "error")
RATE_COLUMNS = ("distance_km", "r_l", "R_l", "I_E_u", "mu", "nu", "p_mu", "p_nu", "p_omega",
                "p_z", "e_zz1_u", "s_zz1_l", "s_zz0_l", "eps_total")
BETA_COLUMNS = ("beta", "R_l", "C_diagnostic", "r_l")

DEVICE_KEYS = {"alpha_db_per_km": "alpha", "eta_z_db": "eta_z_db", "eta_xy_db": "eta_xy_db",
               "sift_db": "sift_db", "sift_applies": "sift_applies", "e0": "e0", "e_d": "e_d",
               "eta_det": "eta_det", "f_ec": "f_ec"}
PROTOCOL_KEYS = ("mu", "nu", "omega", "p_mu", "p_nu", "p_omega", "p_z", "n_pulses")
SECURITY_KEYS = ("eps_ec", "eps_pa", "eps_bar", "eps_pe", "n_pe")


class ScenarioError(ValueError):
    """Malformed scenario file; the message names the offending key."""


class CountsFormatError(ValueError):
    """Malformed counts CSV."""


class CountsConsistencyError(ValueError):
    """A counts row reports more errors than valid events."""


@dataclass(frozen=True)
class Scenario:
    device: DeviceParams
    protocol: ProtocolParams | None
    security: SecurityParams
    distances: tuple[float, ...]
    drift: DriftSchedule = field(default_factory=DriftSchedule)
    optimization: OptimizationSpec | None = None

    @property
    def optimize(self) -> bool:
        return self.protocol is None

    @property
    def beta(self) -> float:
        return self.drift.beta0


def _number(section: dict, key: str, where: str):
    if key not in section:
        raise ScenarioError(f"missing key '{where}.{key}'")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"'{where}.{key}' must be a finite number, got {value!r}")
    return value


def _section(data: dict, key: str) -> dict:
    if key not in data:
        raise ScenarioError(f"missing key '{key}'")
    if not isinstance(data[key], dict):
        raise ScenarioError(f"'{key}' must be an object")
    return data[key]


def _reject_unknown(section: dict, allowed, where: str):
    for key in section:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{where}.{key}'")


def _device(data) -> DeviceParams:
    raw = data.get("device")
    if isinstance(raw, str):
        if raw.lower() not in PRESETS:
            raise ScenarioError(f"'device' preset {raw!r} unknown (expected one of {sorted(PRESETS)})")
        return PRESETS[raw.lower()]
    section = _section(data, "device")
    _reject_unknown(section, DEVICE_KEYS, "device")
    values = {}
    for key, attr in DEVICE_KEYS.items():
        if key in ("sift_db", "sift_applies") and key not in section:
            continue
        values[attr] = section[key] if key == "sift_applies" else _number(section, key, "device")
    try:
        return DeviceParams(**values)
    except ValueError as exc:
        raise ScenarioError(f"device: {exc}") from exc


def _security(data) -> SecurityParams:
    section = data.get("security", {})
    if not isinstance(section, dict):
        raise ScenarioError("'security' must be an object")
    _reject_unknown(section, SECURITY_KEYS, "security")
    values = {k: _number(section, k, "security") for k in SECURITY_KEYS if k in section}
    try:
        return SecurityParams(**values)
    except ValueError as exc:
        raise ScenarioError(f"security: {exc}") from exc


def _channel(data) -> tuple[tuple[float, ...], DriftSchedule]:
    section = _section(data, "channel")
    _reject_unknown(section, ("distance_km", "distances", "beta", "drift"), "channel")
    if ("distance_km" in section) == ("distances" in section):
        raise ScenarioError("'channel' needs exactly one of 'distance_km' or 'distances'")
    if "distance_km" in section:
        distances = (float(_number(section, "distance_km", "channel")),)
    else:
        raw = section["distances"]
        if not isinstance(raw, list) or not all(
                isinstance(d, (int, float)) and not isinstance(d, bool) for d in raw):
            raise ScenarioError("'channel.distances' must be a list of numbers")
        distances = tuple(float(d) for d in raw)
    if any(d < 0 for d in distances):
        raise ScenarioError("'channel.distance_km' must be nonnegative")
    if "beta" in section and "drift" in section:
        raise ScenarioError("'channel' takes either 'beta' or 'drift', not both")
    if "drift" in section:
        drift = section["drift"]
        if not isinstance(drift, dict):
            raise ScenarioError("'channel.drift' must be an object")
        _reject_unknown(drift, ("kind", "beta0", "rate", "window", "pulses", "amplitude",
                                "period"), "channel.drift")
        try:
            kind = DriftKind(drift.get("kind", "constant"))
        except ValueError:
            raise ScenarioError(f"'channel.drift.kind' must be one of "
                                f"{[k.value for k in DriftKind]}") from None
        values = {k: float(_number(drift, k, "channel.drift"))
                  for k in ("beta0", "rate", "amplitude", "period") if k in drift}
        if "window" in drift:
            pulses = _number(drift, "pulses", "channel.drift")
            values["rate"] = float(_number(drift, "window", "channel.drift")) / max(pulses, 1)
        try:
            return distances, DriftSchedule(kind, **values)
        except ValueError as exc:
            raise ScenarioError(f"channel.drift: {exc}") from exc
    beta = float(_number(section, "beta", "channel")) if "beta" in section else 0.0
    return distances, DriftSchedule.constant(beta)


def _protocol(data):
    """Returns (ProtocolParams | None, OptimizationSpec | None)."""
    if "protocol" not in data:
        raise ScenarioError("missing key 'protocol'")
    raw = data["protocol"]
    if raw == "optimize":
        section = data.get("optimize", {})
        if not isinstance(section, dict):
            raise ScenarioError("'optimize' must be an object")
        _reject_unknown(section, ("n_pulses", "seed", "budget", "starts"), "optimize")
        n_pulses = _number(section, "n_pulses", "optimize")
        extra = {k: int(_number(section, k, "optimize"))
                 for k in ("seed", "budget", "starts") if k in section}
        return None, OptimizationSpec(n_pulses=float(n_pulses), **extra)
    if not isinstance(raw, dict):
        raise ScenarioError("'protocol' must be an object or the string \"optimize\"")
    if "optimize" in data:
        raise ScenarioError("'optimize' is only allowed with \"protocol\": \"optimize\"")
    _reject_unknown(raw, PROTOCOL_KEYS, "protocol")
    values = {k: _number(raw, k, "protocol") for k in PROTOCOL_KEYS}
    try:
        # InfeasibleDecoyError propagates unchanged (a ValueError subclass
        # with its own exit code).
        return ProtocolParams.from_rounded(**values), None
    except ValueError as exc:
        if type(exc).__name__ == "InfeasibleDecoyError":
            raise
        raise ScenarioError(f"protocol: {exc}") from exc


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    _reject_unknown(data, ("device", "protocol", "security", "channel", "optimize"), "")
    device = _device(data)
    protocol, opt = _protocol(data)
    security = _security(data)
    distances, drift = _channel(data)
    if opt is not None:
        opt = OptimizationSpec(**{**opt.__dict__, "beta": drift.beta0})
    return Scenario(device, protocol, security, distances, drift, opt)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def _format_count(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_counts(counts: SiftedCounts, fh) -> None:
    """Write nonzero cells in a fixed (alice, bob, intensity) order."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(COUNTS_HEADER)
    for i, a in enumerate(BASES):
        for j, b in enumerate(BASES):
            for k, name in enumerate(INTENSITIES):
                n, m = counts.valid[i, j, k], counts.error[i, j, k]
                if n == 0 and m == 0:
                    continue
                writer.writerow((a, b, name, _format_count(n.item()), _format_count(m.item())))


def counts_to_csv(counts: SiftedCounts) -> str:
    buf = io.StringIO()
    write_counts(counts, buf)
    return buf.getvalue()


def _parse_count(text: str, line: int, column: str, integer: bool):
    try:
        value = int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            raise CountsFormatError(f"line {line}: {column} {text!r} is not a number") from None
        if integer:
            raise CountsFormatError(f"line {line}: {column} {text!r} is not an integer")
    if not math.isfinite(value) or value < 0:
        raise CountsFormatError(f"line {line}: {column} must be a nonnegative finite number")
    return value


def read_counts(fh, integer_counts: bool = False) -> SiftedCounts:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != COUNTS_HEADER:
        raise CountsFormatError(f"header must be exactly {','.join(COUNTS_HEADER)}")
    valid = np.zeros((3, 3, 3))
    error = np.zeros((3, 3, 3))
    seen = set()
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise CountsFormatError(f"line {line}: expected 5 fields, got {len(row)}")
        a, b, name = (x.strip() for x in row[:3])
        if a not in BASES or b not in BASES:
            raise CountsFormatError(f"line {line}: bases must be one of {BASES}")
        if name not in INTENSITIES:
            raise CountsFormatError(f"line {line}: intensity must be one of {INTENSITIES}")
        if (a, b, name) in seen:
            raise CountsFormatError(f"line {line}: duplicate row for {a},{b},{name}")
        seen.add((a, b, name))
        n = _parse_count(row[3].strip(), line, "valid", integer_counts)
        m = _parse_count(row[4].strip(), line, "error", integer_counts)
        if m > n:
            raise CountsConsistencyError(f"line {line}: error count {m} exceeds valid count {n}")
        idx = (BASES.index(a), BASES.index(b), INTENSITIES.index(name))
        valid[idx], error[idx] = n, m
    return SiftedCounts(valid, error)


def write_table(rows, columns, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_count(row[c]) for c in columns])


def rate_row(distance_km: float, proto: ProtocolParams, report) -> dict:
    return {
        "distance_km": float(distance_km), "r_l": report.r_l, "R_l": report.R_l,
        "I_E_u": report.I_E_u, "mu": proto.mu, "nu": proto.nu, "p_mu": proto.p_mu,
        "p_nu": proto.p_nu, "p_omega": proto.p_omega, "p_z": proto.p_z,
        "e_zz1_u": report.e_zz1_u, "s_zz1_l": report.s_zz1_l, "s_zz0_l": report.s_zz0_l,
        "eps_total": report.eps_total,
    }


def report_json(report, extra: dict | None = None) -> str:
    """Serialize a report; floats use the shortest repr that round-trips exactly."""
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False,
                      default=lambda v: v.item() if isinstance(v, np.generic) else v.tolist()) + "\n"
