"""Release-and-recapture thermometry and heating-rate estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import gamma

from .dynamics import potential
from .errors import FlatCurveError, InvalidParameterError
from .phys import G_ACCEL, K_B, TrapParams, thermal_sigmas
from .stats import STREAM_BOOTSTRAP, STREAM_ENSEMBLE, STREAM_MODEL, keyed_normals, substream, wilson_interval

COARSE_STEP = 2e-6
FINE_STEP = 0.25e-6
DEFAULT_T_RANGE = (1e-6, 201e-6)


def boltzmann_pdf(E, T):
    """Energy density ``E^2 exp(-E/kT) / (2 (kT)^3)`` of a thermal atom in a 3D harmonic well."""
    if not T > 0:
        raise InvalidParameterError("T must be positive")
    E = np.asarray(E, dtype=float)
    if np.any(E < 0):
        raise InvalidParameterError("E must be >= 0")
    kT = K_B * T
    return E**2 / (2 * kT**3) * np.exp(-E / kT)


def boltzmann_cdf(E, T):
    return gamma.cdf(np.asarray(E, dtype=float), a=3, scale=K_B * T)


def sample_energies(T, n, seed):
    """Draw energies from :func:`boltzmann_pdf` (a Gamma(3, kT) law)."""
    return substream(seed, STREAM_ENSEMBLE, 0).gamma(3.0, K_B * T, size=n)


@dataclass
class RecaptureCurve:
    taus: np.ndarray
    probabilities: np.ndarray
    n_trials: int
    counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.taus.shape != self.probabilities.shape:
            raise InvalidParameterError("taus and probabilities differ in length")
        if np.any(np.diff(self.taus) <= 0):
            raise InvalidParameterError("taus must be strictly increasing")
        if self.counts is None:
            self.counts = np.rint(self.probabilities * self.n_trials).astype(int)

    @property
    def intervals(self):
        return [wilson_interval(int(k), self.n_trials) for k in self.counts]


@dataclass
class TemperatureFit:
    temperature: float  # K
    stderr: float  # K
    grid: np.ndarray  # temperatures probed (K)
    sse: np.ndarray  # sum of squared residuals on that grid
    n_bootstrap: int


@dataclass
class HeatingFit:
    T0: float  # uK
    rate: float  # uK/s
    stderrs: tuple  # (uK, uK/s)


def _recaptured(unit: np.ndarray, T: float, taus: np.ndarray, p: TrapParams, gravity: bool) -> np.ndarray:
    """Boolean ``(len(taus), n)``: atom ``j`` bound in the restored trap after flight ``taus[i]``."""
    s = thermal_sigmas(T, p)
    pos = unit[:, :3] * np.array([s.sigma_xy, s.sigma_xy, s.sigma_z])
    vel = unit[:, 3:] * s.sigma_v
    out = np.empty((len(taus), len(unit)), dtype=bool)
    g = np.array([0.0, -G_ACCEL, 0.0]) if gravity else np.zeros(3)
    for i, tau in enumerate(taus):
        r = pos + vel * tau + 0.5 * g * tau**2
        v = vel + g * tau
        energy = 0.5 * p.mass * np.sum(v**2, axis=1) + potential(r, p)
        out[i] = energy < 0
    return out


def release_recapture(T_atom: float, taus: Sequence[float], p: TrapParams, n_trials: int, seed: int,
                      gravity: bool = False) -> RecaptureCurve:
    """Fraction of atoms still bound after the trap is switched off for each ``tau``.

    Flight is ballistic (gravity along -y when enabled); the trap is restored
    instantaneously and an atom counts as recaptured when its energy is negative.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise InvalidParameterError("release durations must be >= 0")
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    unit = keyed_normals(seed, n_trials, 6, STREAM_ENSEMBLE)
    counts = _recaptured(unit, T_atom, taus, p, gravity).sum(axis=1)
    return RecaptureCurve(taus, counts / n_trials, n_trials, counts)


class _ModelBank:
    """Simulated recapture curves on demand, all from one fixed set of unit draws."""

    def __init__(self, taus, p, n_model, model_seed, gravity):
        self.taus, self.p, self.gravity = taus, p, gravity
        self.unit = keyed_normals(model_seed, n_model, 6, STREAM_MODEL)
        self.cache = {}

    def curve(self, T):
        key = round(T * 1e12)  # pK resolution
        if key not in self.cache:
            self.cache[key] = _recaptured(self.unit, T, self.taus, self.p, self.gravity).mean(axis=1)
        return self.cache[key]

    def sse(self, probs, temps):
        return np.array([np.sum((self.curve(T) - probs) ** 2) for T in temps])


def _grid_fit(bank: _ModelBank, probs, t_range):
    coarse = np.arange(t_range[0], t_range[1] + 1e-12, COARSE_STEP)
    sse_c = bank.sse(probs, coarse)
    best = coarse[np.argmin(sse_c)]
    fine = np.arange(max(best - 2 * COARSE_STEP, FINE_STEP), best + 2 * COARSE_STEP + 1e-12, FINE_STEP)
    sse_f = bank.sse(probs, fine)
    i = int(np.argmin(sse_f))
    T = fine[i]
    if 0 < i < len(fine) - 1:
        # vertex of the parabola through the minimum and its neighbours
        y0, y1, y2 = sse_f[i - 1], sse_f[i], sse_f[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom > 0:
            T += 0.5 * FINE_STEP * (y0 - y2) / denom
    grid = np.concatenate([coarse, fine])
    sse = np.concatenate([sse_c, sse_f])
    order = np.argsort(grid, kind="stable")
    return T, grid[order], sse[order]


def fit_temperature(curve: RecaptureCurve, p: TrapParams, n_model: int = 20000, model_seed: int = 12345,
                    n_bootstrap: int = 100, seed: int = 0, t_range=DEFAULT_T_RANGE,
                    gravity: bool = False) -> TemperatureFit:
    """Least-squares match of a measured curve against simulated ones over a temperature grid.

    The grid is 2 uK coarse then 0.25 uK fine around the best coarse point,
    with a parabolic vertex refinement.  The standard error comes from a
    parametric bootstrap: counts are redrawn binomially from the measured
    probabilities and refitted.
    """
    if len(curve.taus) < 4:
        raise InvalidParameterError("need at least 4 curve points")
    probs = curve.probabilities
    if probs.max() - probs.min() < 0.2 or probs.max() < 0.5 or probs.min() > 0.5:
        raise FlatCurveError("recapture curve has no falling edge spanning 0.5; temperature is unidentifiable")
    bank = _ModelBank(curve.taus, p, n_model, model_seed, gravity)
    T, grid, sse = _grid_fit(bank, probs, t_range)
    boot = []
    for b in range(n_bootstrap):
        rng = substream(seed, STREAM_BOOTSTRAP, b)
        resampled = rng.binomial(curve.n_trials, probs) / curve.n_trials
        boot.append(_grid_fit(bank, resampled, t_range)[0])
    stderr = float(np.std(boot, ddof=1)) if n_bootstrap > 1 else math.nan
    return TemperatureFit(float(T), stderr, grid, sse, n_bootstrap)


def fit_heating(times, temps) -> HeatingFit:
    """Ordinary least-squares line ``T(t) = T0 + rate t`` (times in s, temperatures in uK).

    With exactly two points the fit is exact and the standard errors are 0.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(temps, dtype=float)
    if t.size < 2 or t.shape != y.shape:
        raise InvalidParameterError("need at least two (time, temperature) pairs")
    if np.ptp(t) == 0:
        raise InvalidParameterError("degenerate abscissae: all times equal")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise InvalidParameterError("times and temperatures must be finite")
    # centred closed form: exact on exactly linear data, unlike a generic lstsq solve
    tc = t - t.mean()
    sxx = float(tc @ tc)
    rate = float(tc @ (y - y.mean())) / sxx
    T0 = float(y.mean() - rate * t.mean())
    dof = t.size - 2
    if dof > 0:
        resid = y - (T0 + rate * t)
        s2 = float(resid @ resid) / dof
        errs = (math.sqrt(s2 * (1 / t.size + t.mean() ** 2 / sxx)), math.sqrt(s2 / sxx))
    else:
        errs = (0.0, 0.0)
    return HeatingFit(T0, rate, errs)
