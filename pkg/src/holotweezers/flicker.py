"""Intensity flicker while the SLM switches between two holograms.

Each pixel is assumed to walk linearly in time along the short way round the
phase circle from its old to its new value.  The "photodiode" integrates the
power in the windows of every listed spot, old and new positions alike.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import DimensionMismatchError, FitError, InvalidParameterError
from .holography import (TWO_PI, ComplexField, OpticalSystem, PhaseMask, SpotPattern, _forward, _slm_field,
                         restrict_phase_change, window_sums, wrap_phase)


@dataclass(frozen=True)
class ResponseModel:
    response_time: float = 0.120
    kind: str = "linear_ramp"

    def __post_init__(self):
        if not self.response_time > 0:
            raise InvalidParameterError("response_time must be positive")
        if self.kind != "linear_ramp":
            raise InvalidParameterError(f"unsupported response model {self.kind!r}")


@dataclass
class IntensityTrace:
    times: np.ndarray
    total_spot_power: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.total_spot_power = np.asarray(self.total_spot_power, dtype=float)
        if self.times.shape != self.total_spot_power.shape:
            raise DimensionMismatchError("times and powers differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("times must be strictly increasing")


class SweepRow(NamedTuple):
    alpha: float
    flicker_strength: float
    exceed_count: int
    end_power: float  # trace value at t = response_time
    transient_dip: float


@dataclass
class FlickerFit:
    a: float
    b: float
    c: float
    residual: float  # RMS
    covariance: np.ndarray
    well_determined: bool

    def __call__(self, alpha):
        return flicker_model(np.asarray(alpha, dtype=float), self.a, self.b, self.c)


def union_pattern(*patterns: SpotPattern) -> SpotPattern:
    """All distinct spot positions of the given patterns (weights reset to 1)."""
    xy = np.vstack([p.positions for p in patterns])
    _, idx = np.unique(np.round(xy, 12), axis=0, return_index=True)
    return SpotPattern.from_positions(xy[np.sort(idx)])


def signed_phase_step(a, b) -> np.ndarray:
    """Shortest signed step from ``a`` to ``b``, in [-pi, pi)."""
    return np.mod(np.asarray(b) - np.asarray(a) + np.pi, TWO_PI) - np.pi


def transition_trace(a: PhaseMask, b: PhaseMask, pattern: SpotPattern, illumination: ComplexField,
                     model: ResponseModel | None = None, n_samples: int = 41, pad_factor: int = 2,
                     optics: OpticalSystem | None = None, window: int = 1) -> IntensityTrace:
    """Summed spot power during the switch from ``a`` to ``b``, normalised to its value at t = 0."""
    model = model or ResponseModel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{a.shape} vs {b.shape}")
    if n_samples < 3:
        raise InvalidParameterError("n_samples must be >= 3")
    optics = optics or OpticalSystem(pitch=illumination.pitch)
    px = pattern.pixels(illumination.shape[1], pad_factor, optics)
    step = signed_phase_step(a.phases, b.phases)
    times = np.linspace(0.0, model.response_time, n_samples)
    power = np.empty(n_samples)
    for j, t in enumerate(times):
        phase = a.phases if j == 0 else wrap_phase(a.phases + (t / model.response_time) * step)
        far = _forward(_slm_field(illumination, phase), pad_factor)
        power[j] = window_sums(far.real**2 + far.imag**2, px, window).sum()
    return IntensityTrace(times, power / power[0])


def flicker_strength(trace: IntensityTrace) -> float:
    """``(I_max - I_min) / I_max`` over the trace."""
    p = trace.total_spot_power
    if p.size == 0:
        raise InvalidParameterError("empty trace")
    top = p.max()
    return float((top - p.min()) / top) if top > 0 else 0.0


def transient_dip(trace: IntensityTrace) -> float:
    """Largest drop below the straight line joining the trace endpoints, relative to the trace maximum.

    Unlike :func:`flicker_strength` this ignores a difference in power between
    the two holograms and keeps only the dimming during the switch.
    """
    t, p = trace.times, trace.total_spot_power
    frac = (t - t[0]) / (t[-1] - t[0])
    baseline = (1 - frac) * p[0] + frac * p[-1]
    return float(max(0.0, np.max(baseline - p)) / p.max())


def alpha_sweep(a: PhaseMask, b: PhaseMask, pattern: SpotPattern, illumination: ComplexField,
                alphas: Sequence[float], model: ResponseModel | None = None, n_samples: int = 41,
                pad_factor: int = 2, optics: OpticalSystem | None = None) -> list[SweepRow]:
    """Flicker strength and replaced-pixel count for each threshold, sorted by alpha."""
    rows = []
    for alpha in sorted(float(x) for x in alphas):
        if not 0 <= alpha <= 1:
            raise InvalidParameterError(f"alpha {alpha} outside [0, 1]")
        restricted, exceed = restrict_phase_change(a, b, alpha)
        trace = transition_trace(a, restricted, pattern, illumination, model, n_samples, pad_factor, optics)
        rows.append(SweepRow(alpha, flicker_strength(trace), exceed, float(trace.total_spot_power[-1]),
                             transient_dip(trace)))
    return rows


def flicker_model(alpha, a, b, c):
    with np.errstate(over="ignore"):
        return a * np.exp(b * (alpha - 1.0)) + c


def fit_flicker_exp(alphas, strengths=None) -> FlickerFit:
    """Least-squares fit of ``a exp(b (alpha - 1)) + c``.

    Accepts either two sequences or a list of :class:`SweepRow`.  Several
    starting rates are tried and the lowest residual wins.  Constant data
    leaves ``b`` unidentifiable: the fit still returns finite numbers with
    ``well_determined`` False.
    """
    if strengths is None:
        rows = list(alphas)
        alphas = [r[0] for r in rows]
        strengths = [r[1] for r in rows]
    x = np.asarray(alphas, dtype=float)
    y = np.asarray(strengths, dtype=float)
    if x.size < 4 or x.shape != y.shape:
        raise InvalidParameterError("need at least 4 (alpha, strength) pairs of equal length")

    span = float(y.max() - y.min())
    if span <= 1e-14 * max(1.0, abs(float(y.mean()))):
        return FlickerFit(0.0, 0.0, float(y.mean()), float(np.sqrt(np.mean((y - y.mean()) ** 2))),
                          np.full((3, 3), np.inf), False)

    best = None
    for b0 in (1.0, 3.0, 10.0, 20.0, 40.0):
        p0 = (span * (1 if y[np.argmax(x)] >= y[np.argmin(x)] else -1), b0, float(y[np.argmin(x)]))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, pcov = curve_fit(flicker_model, x, y, p0=p0, method="lm", maxfev=20000,
                                       xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except (RuntimeError, ValueError):
            continue
        res = float(np.sqrt(np.mean((flicker_model(x, *popt) - y) ** 2)))
        if best is None or res < best[2]:
            best = (popt, pcov, res)
    if best is None:
        raise FitError("flicker fit did not converge from any starting point")
    popt, pcov, res = best
    finite = np.all(np.isfinite(pcov))
    rel = np.sqrt(np.abs(np.diag(pcov))) / np.maximum(np.abs(popt), 1e-300) if finite else np.array([np.inf])
    return FlickerFit(*map(float, popt), res, pcov, bool(finite and np.all(rel < 1.0)))


def reference_flicker_curve(alphas):
    """Exponential with the coefficients a=0.076, b=18.566, c=0.125 reported for the measured sweep."""
    return flicker_model(np.asarray(alphas, dtype=float), 0.076, 18.566, 0.125)
