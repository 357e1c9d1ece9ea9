"""Pulse-by-pulse tally kernels for the Monte Carlo oracle.

Both backends consume the same uniform draws and produce identical counts.
The numba kernel is used when numba imports and ``RFIQKD_NO_NUMBA`` is unset
(or "0"); otherwise the vectorized numpy path runs.
"""

import os

import numpy as np

# Uniform columns consumed per pulse.
U_INTENSITY, U_ALICE_BASIS, U_ALICE_BIT, U_BOB_BASIS = 0, 1, 2, 3
U_PHOTONS, U_DETECTED, U_ROUTE, U_DARK0, U_DARK1, U_COIN, U_FLIP = 4, 5, 6, 7, 8, 9, 10
N_UNIFORMS = 11

DRIFT_CONSTANT, DRIFT_LINEAR, DRIFT_SINUSOIDAL = 0, 1, 2

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("RFIQKD_NO_NUMBA", "0") in ("", "0")


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


@_njit
def _beta_at(index, drift_kind, beta0, rate, amplitude, period):
    if drift_kind == DRIFT_LINEAR:
        return beta0 + rate * index
    if drift_kind == DRIFT_SINUSOIDAL:
        return beta0 + amplitude * np.sin(2.0 * np.pi * index / period)
    return beta0


@_njit
def _overlap0(alice_basis, alice_bit, bob_basis, beta):
    # Probability of Bob's outcome 0; bases are 0=X, 1=Y, 2=Z.
    if alice_basis == 2 or bob_basis == 2:
        corr = 1.0 if alice_basis == bob_basis else 0.0
    elif alice_basis == 0 and bob_basis == 0:
        corr = np.cos(beta)
    elif alice_basis == 1 and bob_basis == 1:
        corr = -np.cos(beta)
    else:
        corr = -np.sin(beta)
    sign = 1.0 if alice_bit == 0 else -1.0
    return 0.5 * (1.0 + sign * corr)


@_njit
def _poisson_inv(u, lam):
    n = 0
    p = np.exp(-lam)
    cdf = p
    while u > cdf and n < 200:
        n += 1
        p = p * lam / n
        cdf += p
    return n


@_njit
def _binomial_inv(u, trials, prob):
    if trials == 0 or prob <= 0.0:
        return 0
    if prob >= 1.0:
        return trials
    ratio = prob / (1.0 - prob)
    p = (1.0 - prob) ** trials
    cdf = p
    j = 0
    while u > cdf and j < trials:
        p = p * ratio * (trials - j) / (j + 1)
        j += 1
        cdf += p
    return j


@_njit
def _tally_numba(u, first_index, intensities, cum_intensity, p_z, p_x, eta_by_basis,
                 e_d, e0, drift_kind, beta0, rate, amplitude, period, out):
    for i in range(u.shape[0]):
        row = u[i]
        k = 0
        while k < 2 and row[U_INTENSITY] >= cum_intensity[k]:
            k += 1
        a_basis = 2 if row[U_ALICE_BASIS] < p_z else (0 if row[U_ALICE_BASIS] < p_z + p_x else 1)
        b_basis = 2 if row[U_BOB_BASIS] < p_z else (0 if row[U_BOB_BASIS] < p_z + p_x else 1)
        if (a_basis == 2) != (b_basis == 2):
            continue
        a_bit = 1 if row[U_ALICE_BIT] < 0.5 else 0
        beta = _beta_at(first_index + i, drift_kind, beta0, rate, amplitude, period)
        c0 = _overlap0(a_basis, a_bit, b_basis, beta)
        photons = _poisson_inv(row[U_PHOTONS], intensities[k])
        detected = _binomial_inv(row[U_DETECTED], photons, eta_by_basis[b_basis])
        n0 = _binomial_inv(row[U_ROUTE], detected, c0)
        click0 = n0 > 0 or row[U_DARK0] < e_d
        click1 = (detected - n0) > 0 or row[U_DARK1] < e_d
        if not click0 and not click1:
            continue
        if click0 and click1:
            outcome = 0 if row[U_COIN] < 0.5 else 1
        else:
            outcome = 0 if click0 else 1
        if row[U_FLIP] < e0:
            outcome = 1 - outcome
        out[a_basis, b_basis, k, 0] += 1
        if outcome != a_bit:
            out[a_basis, b_basis, k, 1] += 1


def _poisson_inv_np(u, lam):
    n = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    j = 0
    while active.any() and j < 200:
        j += 1
        p = p * lam / j
        cdf = cdf + p
        n[active] += 1
        active = active & (u > cdf)
    return n


def _binomial_inv_np(u, trials, prob):
    prob = np.broadcast_to(prob, u.shape)
    out = np.zeros(u.shape, dtype=np.int64)
    full = (prob >= 1.0) & (trials > 0)
    out[full] = trials[full]
    live = (trials > 0) & (prob > 0.0) & (prob < 1.0)
    if not live.any():
        return out
    uu, nn, pp = u[live], trials[live], prob[live]
    ratio = pp / (1.0 - pp)
    p = (1.0 - pp) ** nn
    cdf = p.copy()
    j = np.zeros(uu.shape, dtype=np.int64)
    active = (uu > cdf) & (j < nn)
    while active.any():
        p = np.where(active, p * ratio * (nn - j) / (j + 1), p)
        cdf = np.where(active, cdf + p, cdf)
        j = j + active
        active = active & (uu > cdf) & (j < nn)
    out[live] = j
    return out


def _tally_numpy(u, first_index, intensities, cum_intensity, p_z, p_x, eta_by_basis,
                 e_d, e0, drift_kind, beta0, rate, amplitude, period, out):
    k = (u[:, U_INTENSITY] >= cum_intensity[0]).astype(np.int64) + \
        (u[:, U_INTENSITY] >= cum_intensity[1]).astype(np.int64)

    def basis(col):
        return np.where(col < p_z, 2, np.where(col < p_z + p_x, 0, 1))

    a_basis, b_basis = basis(u[:, U_ALICE_BASIS]), basis(u[:, U_BOB_BASIS])
    keep = (a_basis == 2) == (b_basis == 2)
    idx = np.nonzero(keep)[0]
    u, k, a_basis, b_basis = u[idx], k[idx], a_basis[idx], b_basis[idx]
    a_bit = (u[:, U_ALICE_BIT] < 0.5).astype(np.int64)

    index = first_index + idx
    if drift_kind == DRIFT_LINEAR:
        beta = beta0 + rate * index
    elif drift_kind == DRIFT_SINUSOIDAL:
        beta = beta0 + amplitude * np.sin(2.0 * np.pi * index / period)
    else:
        beta = np.full(index.shape, float(beta0))
    corr = np.where((a_basis == 2) | (b_basis == 2), (a_basis == b_basis).astype(float),
                    np.where((a_basis == 0) & (b_basis == 0), np.cos(beta),
                             np.where((a_basis == 1) & (b_basis == 1), -np.cos(beta),
                                      -np.sin(beta))))
    sign = np.where(a_bit == 0, 1.0, -1.0)
    c0 = 0.5 * (1.0 + sign * corr)

    photons = _poisson_inv_np(u[:, U_PHOTONS], intensities[k])
    detected = _binomial_inv_np(u[:, U_DETECTED], photons, eta_by_basis[b_basis])
    n0 = _binomial_inv_np(u[:, U_ROUTE], detected, c0)
    click0 = (n0 > 0) | (u[:, U_DARK0] < e_d)
    click1 = ((detected - n0) > 0) | (u[:, U_DARK1] < e_d)
    outcome = np.where(click0 & click1, (u[:, U_COIN] >= 0.5).astype(np.int64),
                       np.where(click0, 0, 1))
    outcome = np.where(u[:, U_FLIP] < e0, 1 - outcome, outcome)
    clicked = click0 | click1
    cell = (a_basis * 3 + b_basis) * 3 + k
    flat = out.reshape(27, 2)
    flat[:, 0] += np.bincount(cell[clicked], minlength=27)
    flat[:, 1] += np.bincount(cell[clicked & (outcome != a_bit)], minlength=27)


def tally(u, first_index, intensities, cum_intensity, p_z, p_x, eta_by_basis, e_d, e0,
          drift, out, backend=None):
    """Accumulate valid/error counts of one block of pulses into ``out[a, b, k, 0/1]``.

    ``drift`` is ``(kind, beta0, rate, amplitude, period)``.
    """
    use_numba = USE_NUMBA if backend is None else backend == "numba"
    fn = _tally_numba if use_numba else _tally_numpy
    kind, beta0, rate, amplitude, period = drift
    fn(u, int(first_index), np.asarray(intensities, dtype=float),
       np.asarray(cum_intensity, dtype=float), float(p_z), float(p_x),
       np.asarray(eta_by_basis, dtype=float), float(e_d), float(e0),
       int(kind), float(beta0), float(rate), float(amplitude), float(period), out)
