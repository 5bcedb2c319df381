"""Phase-only holograms for tweezer arrays.

The SLM plane is an ``N x N`` grid; the focal plane is its zero-padded,
centred, unitary DFT.  Focal-plane coordinates are physical (metres) through
an :class:`OpticalSystem`: one padded far-field cell is
``wavelength * focal_length / (N * pad * pitch)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import (DimensionMismatchError, FrameError, InvalidParameterError, PreconditionError,
                     SizeOverflowError, WeightUpdateError)
from .stats import STREAM_HOLOGRAM, substream

TWO_PI = 2 * np.pi
DEFAULT_MAX_PIXELS = 1 << 24


@dataclass(frozen=True)
class OpticalSystem:
    """Fourier optics between SLM and atoms.

    ``pitch`` is the SLM pixel pitch imaged onto the focusing lens
    (20 um pixels through a 0.83x telescope by default).
    """

    wavelength: float = 852e-9
    focal_length: float = 3.1e-3
    pitch: float = 0.83 * 20e-6

    def cell(self, n: int, pad: int = 1) -> float:
        """Far-field sample spacing for an ``n``-pixel aperture zero-padded ``pad`` times."""
        return self.wavelength * self.focal_length / (n * pad * self.pitch)


@dataclass
class ComplexField:
    grid: np.ndarray
    pitch: float
    plane: str = "slm"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=complex)
        if self.grid.ndim != 2 or min(self.grid.shape) < 2:
            raise InvalidParameterError(f"field must be 2D with both sides >= 2, got {self.grid.shape}")
        if self.plane not in ("slm", "focal"):
            raise InvalidParameterError(f"plane must be 'slm' or 'focal', got {self.plane!r}")

    @property
    def shape(self):
        return self.grid.shape

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.grid) ** 2))


def wrap_phase(phi) -> np.ndarray:
    """Wrap into [0, 2pi); guards against ``mod`` rounding up to exactly 2pi."""
    out = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    return out


@dataclass
class PhaseMask:
    phases: np.ndarray
    pitch: float = OpticalSystem.pitch

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float)
        if self.phases.ndim != 2:
            raise InvalidParameterError("phase mask must be 2D")
        if np.any(self.phases < 0) or np.any(self.phases >= TWO_PI):
            self.phases = wrap_phase(self.phases)

    @property
    def shape(self):
        return self.phases.shape

    @property
    def width(self):
        return self.shape[1]

    @property
    def height(self):
        return self.shape[0]


@dataclass
class QuantizedMask:
    """8-bit SLM frame; level ``k`` means phase ``2 pi k / 256``."""

    levels: np.ndarray
    pitch: float

    @property
    def phases(self) -> np.ndarray:
        return self.levels.astype(float) * (TWO_PI / 256)

    def to_phase_mask(self) -> PhaseMask:
        return PhaseMask(self.phases, self.pitch)


@dataclass(frozen=True)
class SpotPattern:
    """Target traps in the focal plane: ``spots`` rows are ``(x [m], y [m], weight)``."""

    spots: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.spots, dtype=float).reshape(-1, 3)
        if len(s) == 0:
            raise PreconditionError("spot pattern is empty")
        if np.any(s[:, 2] <= 0) or not np.all(np.isfinite(s)):
            raise InvalidParameterError("spot weights must be positive and coordinates finite")
        object.__setattr__(self, "spots", s)

    @classmethod
    def from_positions(cls, xy, weights=None):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        w = np.ones(len(xy)) if weights is None else np.asarray(weights, dtype=float)
        return cls(np.column_stack([xy, w]))

    def __len__(self):
        return len(self.spots)

    @property
    def positions(self) -> np.ndarray:
        return self.spots[:, :2]

    @property
    def weights(self) -> np.ndarray:
        return self.spots[:, 2]

    def with_weights(self, weights) -> "SpotPattern":
        return SpotPattern(np.column_stack([self.positions, weights]))

    def moved(self, index: int, xy) -> "SpotPattern":
        s = self.spots.copy()
        s[index, :2] = xy
        return SpotPattern(s)

    def pixels(self, n: int, pad: int, optics: OpticalSystem) -> np.ndarray:
        """Integer ``(row, col)`` of each spot on the centred padded far-field grid."""
        m = n * pad
        d = optics.cell(n, pad)
        cols = m // 2 + np.rint(self.positions[:, 0] / d).astype(int)
        rows = m // 2 + np.rint(self.positions[:, 1] / d).astype(int)
        return np.column_stack([rows, cols])

    def validate(self, n: int, pad: int, optics: OpticalSystem, window: int = 1):
        m = n * pad
        px = self.pixels(n, pad, optics)
        if np.any(px < window) or np.any(px >= m - window):
            raise PreconditionError("spot outside the far-field window "
                                    f"(+-{(m // 2 - window) * optics.cell(n, pad) * 1e6:.2f} um)")
        res = optics.cell(n, 1)
        if len(self) > 1:
            diff = self.positions[:, None, :] - self.positions[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(dist, np.inf)
            if dist.min() < res * (1 - 1e-9):
                raise PreconditionError(f"spots closer ({dist.min() * 1e6:.3f} um) than one resolution cell "
                                        f"({res * 1e6:.3f} um)")


@dataclass
class GsConfig:
    max_iters: int = 50
    convergence_tol: float = 0.01
    gain: float = 0.8
    pad_factor: int = 2
    initial_phase: str | PhaseMask = "random"  # "random", "uniform" or a PhaseMask
    seed: int = 0
    window: int = 1  # half-width of the spot integration window (1 -> 3x3 cells)

    def __post_init__(self):
        if not 0 <= self.gain < 1:
            raise InvalidParameterError(f"gain must be in [0, 1), got {self.gain}")
        if self.pad_factor < 1 or int(self.pad_factor) != self.pad_factor:
            raise InvalidParameterError("pad_factor must be an integer >= 1")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be >= 1")
        if isinstance(self.initial_phase, str) and self.initial_phase not in ("random", "uniform"):
            raise InvalidParameterError(f"unknown initial_phase {self.initial_phase!r}")


@dataclass
class SpotMetrics:
    per_spot_intensity: np.ndarray  # fraction of incident power in each spot window
    mean_intensity: float
    uniformity_error: float
    diffraction_efficiency: float


class GsResult(NamedTuple):
    mask: PhaseMask
    metrics: SpotMetrics
    trace: list


@dataclass(frozen=True)
class BlazeSpec:
    period: float  # pixels per 2pi ramp
    orientation: float = 0.0  # radians from the +x (column) axis

    def phase(self, shape) -> np.ndarray:
        yy, xx = centred_coords(shape)
        return wrap_phase(TWO_PI * (xx * math.cos(self.orientation) + yy * math.sin(self.orientation)) / self.period)

    def deflection(self, optics: OpticalSystem) -> np.ndarray:
        """Focal-plane shift in metres produced by the grating."""
        d = optics.wavelength * optics.focal_length / (self.period * optics.pitch)
        return np.array([d * math.cos(self.orientation), d * math.sin(self.orientation)])


def centred_coords(shape):
    """Pixel index grids ``(yy, xx)`` with zero at ``shape // 2``."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return yy - h // 2, xx - w // 2


def gaussian_illumination(n: int = 512, radius_fraction: float = 0.35, pitch: float = OpticalSystem.pitch,
                          power: float = 1.0) -> ComplexField:
    """Gaussian amplitude on an ``n x n`` SLM, 1/e^2 intensity radius ``radius_fraction * n`` pixels."""
    yy, xx = centred_coords((n, n))
    r = radius_fraction * n
    amp = np.exp(-(xx**2 + yy**2) / r**2)
    amp *= math.sqrt(power / np.sum(amp**2))
    return ComplexField(amp.astype(complex), pitch, "slm")


def _check_fft_size(shape, pad, max_pixels):
    h, w = shape[0] * pad, shape[1] * pad
    if h * w > max_pixels:
        raise SizeOverflowError(f"padded grid {h}x{w} exceeds budget of {max_pixels} pixels")
    for s in (h, w):
        if s & (s - 1):
            raise InvalidParameterError(f"padded size {s} is not a power of two")


def far_field(f: ComplexField, pad_factor: int = 1, optics: OpticalSystem | None = None,
              max_pixels: int = DEFAULT_MAX_PIXELS) -> ComplexField:
    """Centred, energy-conserving DFT of ``f`` zero-padded ``pad_factor`` times."""
    if f.plane != "slm":
        raise PreconditionError("far_field expects an SLM-plane field")
    if pad_factor < 1:
        raise InvalidParameterError("pad_factor must be >= 1")
    _check_fft_size(f.shape, pad_factor, max_pixels)
    optics = optics or OpticalSystem(pitch=f.pitch)
    grid = _forward(f.grid, pad_factor)
    return ComplexField(grid, optics.wavelength * optics.focal_length / (f.shape[1] * pad_factor * f.pitch), "focal")


def _embed(grid, pad):
    if pad == 1:
        return grid
    h, w = grid.shape
    big = np.zeros((h * pad, w * pad), dtype=complex)
    r0, c0 = (h * pad) // 2 - h // 2, (w * pad) // 2 - w // 2
    big[r0:r0 + h, c0:c0 + w] = grid
    return big


def _crop(big, shape):
    h, w = shape
    r0, c0 = big.shape[0] // 2 - h // 2, big.shape[1] // 2 - w // 2
    return big[r0:r0 + h, c0:c0 + w]


def _forward(grid, pad):
    return sfft.fftshift(sfft.fft2(sfft.ifftshift(_embed(grid, pad)), norm="ortho"))


def _inverse(far, shape):
    return _crop(sfft.fftshift(sfft.ifft2(sfft.ifftshift(far), norm="ortho")), shape)


def window_sums(intensity: np.ndarray, pixels: np.ndarray, half: int = 1) -> np.ndarray:
    """Sum of ``intensity`` over ``(2 half + 1)^2`` cells centred on each ``(row, col)``."""
    out = np.empty(len(pixels))
    for i, (r, c) in enumerate(pixels):
        out[i] = intensity[r - half:r + half + 1, c - half:c + half + 1].sum()
    return out


def _metrics(intensity, pixels, weights, half) -> SpotMetrics:
    total = float(intensity.sum())
    spot = window_sums(intensity, pixels, half) / total
    ratio = spot / weights
    mean_ratio = ratio.mean()
    return SpotMetrics(
        per_spot_intensity=spot,
        mean_intensity=float(spot.mean()),
        uniformity_error=float(np.max(np.abs(ratio - mean_ratio)) / mean_ratio) if mean_ratio > 0 else math.inf,
        diffraction_efficiency=float(min(spot.sum(), 1.0)),
    )


def spot_metrics(mask: PhaseMask, pattern: SpotPattern, illumination: ComplexField, pad_factor: int = 2,
                 optics: OpticalSystem | None = None, window: int = 1) -> SpotMetrics:
    """Forward-propagate ``mask`` under ``illumination`` and measure the spots of ``pattern``."""
    optics = optics or OpticalSystem(pitch=illumination.pitch)
    field_ = _slm_field(illumination, mask.phases)
    far = _forward(field_, pad_factor)
    intensity = far.real**2 + far.imag**2
    px = pattern.pixels(illumination.shape[1], pad_factor, optics)
    return _metrics(intensity, px, pattern.weights / pattern.weights.mean(), window)


def _slm_field(illumination, phases):
    if illumination.shape != phases.shape:
        raise DimensionMismatchError(f"mask {phases.shape} vs illumination {illumination.shape}")
    return np.abs(illumination.grid) * np.exp(1j * phases)


def weight_update(target: SpotPattern, measured, gain: float) -> SpotPattern:
    """Reweight target spot intensities from measured ones.

    New target ``i`` is ``t_i / mean(t) * Ibar / (1 - G (1 - I_i / Ibar))``, so
    starting from equal targets it is exactly ``Ibar / (1 - G (1 - I_i / Ibar))``
    and repeated application accumulates the correction.
    """
    measured = np.asarray(measured, dtype=float)
    if measured.shape != (len(target),):
        raise DimensionMismatchError(f"expected {len(target)} measured intensities, got {measured.shape}")
    if np.any(measured < 0) or not measured.mean() > 0:
        raise InvalidParameterError("measured intensities must be >= 0 with positive mean")
    mean = measured.mean()
    denom = 1.0 - gain * (1.0 - measured / mean)
    if np.any(denom <= 0):
        raise WeightUpdateError(f"gain {gain} too aggressive for measured spread (min denominator {denom.min():.3g})")
    rel = target.weights / target.weights.mean()
    return target.with_weights(rel * mean / denom)


def _initial_phase(cfg: GsConfig, shape):
    init = cfg.initial_phase
    if isinstance(init, PhaseMask):
        if init.shape != shape:
            raise DimensionMismatchError(f"initial phase {init.shape} vs illumination {shape}")
        return init.phases.copy()
    if init == "uniform":
        return np.zeros(shape)
    return substream(cfg.seed, STREAM_HOLOGRAM).uniform(0, TWO_PI, size=shape)


def gs_solve(pattern: SpotPattern, illumination: ComplexField, cfg: GsConfig | None = None,
             optics: OpticalSystem | None = None) -> GsResult:
    """Weighted Gerchberg-Saxton with zero padding.

    Each iteration propagates the current mask, records the uniformity error,
    and stops once it drops below ``cfg.convergence_tol``.  Otherwise the
    spot weights are updated with the gain ``cfg.gain`` and the far field is
    replaced by the weighted target amplitudes (keeping the far-field phase)
    before propagating back and keeping only the SLM phase.

    Few-spot patterns respond so steeply to their weights that the gain of
    0.8 can lock into a two-iteration oscillation; when that is detected the
    effective gain is halved.
    """
    cfg = cfg or GsConfig()
    optics = optics or OpticalSystem(pitch=illumination.pitch)
    if illumination.plane != "slm":
        raise PreconditionError("illumination must be an SLM-plane field")
    n = illumination.shape[1]
    pad = cfg.pad_factor
    _check_fft_size(illumination.shape, pad, DEFAULT_MAX_PIXELS)
    pattern.validate(n, pad, optics, cfg.window)
    px = pattern.pixels(n, pad, optics)
    rows, cols = px[:, 0], px[:, 1]
    desired = pattern.weights / pattern.weights.mean()
    amp = np.abs(illumination.grid)
    phase = wrap_phase(_initial_phase(cfg, illumination.shape))
    target = pattern.with_weights(np.ones(len(pattern)))  # cumulative weighting factors

    trace = []
    damping = 1.0
    prev_sign = None
    for k in range(cfg.max_iters):
        far = _forward(amp * np.exp(1j * phase), pad)
        intensity = far.real**2 + far.imag**2
        metrics = _metrics(intensity, px, desired, cfg.window)
        trace.append(metrics.uniformity_error)
        # a single spot is trivially uniform, so always take at least one GS update
        converged = k > 0 and metrics.uniformity_error < cfg.convergence_tol
        if converged or k == cfg.max_iters - 1:
            break
        ratio = metrics.per_spot_intensity / desired
        sign = np.sign(ratio - ratio.mean())
        # Every spot flipping side of the mean without the error contracting is the
        # period-2 cycle of an over-driven weighting loop; halve the effective gain.
        if prev_sign is not None and len(pattern) > 1 and np.all(sign == -prev_sign) \
                and trace[-1] > 0.5 * trace[-2]:
            damping *= 0.5
        prev_sign = sign
        target = weight_update(target, ratio, cfg.gain * damping)
        target_amp = np.sqrt(desired * target.weights / target.weights.mean())
        replaced = np.zeros_like(far)
        replaced[rows, cols] = target_amp * np.exp(1j * np.angle(far[rows, cols]))
        phase = wrap_phase(np.angle(_inverse(replaced, illumination.shape)))

    return GsResult(PhaseMask(phase, illumination.pitch), metrics, trace)


def blazed_grating_for(xy, n: int, pad: int, optics: OpticalSystem) -> np.ndarray:
    """Linear phase steering the zero order onto the padded far-field cell nearest ``xy``."""
    d = optics.cell(n, pad)
    m = n * pad
    kx, ky = np.rint(np.asarray(xy, dtype=float) / d)
    yy, xx = centred_coords((n, n))
    return wrap_phase(TWO_PI * (kx * xx + ky * yy) / m)


def superposed_gratings(pattern: SpotPattern, illumination: ComplexField, pad_factor: int = 2,
                        optics: OpticalSystem | None = None) -> PhaseMask:
    """Phase of the sum of one blazed grating per spot, amplitudes sqrt(weight), zero relative phase."""
    optics = optics or OpticalSystem(pitch=illumination.pitch)
    n = illumination.shape[1]
    total = np.zeros(illumination.shape, dtype=complex)
    for (x, y, w) in pattern.spots:
        total += math.sqrt(w) * np.exp(1j * blazed_grating_for((x, y), n, pad_factor, optics))
    return PhaseMask(wrap_phase(np.angle(total)), illumination.pitch)


def circular_distance(a, b) -> np.ndarray:
    """Shortest angular distance between phases, in [0, pi]."""
    d = np.mod(np.asarray(b) - np.asarray(a), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def restrict_phase_change(prev: PhaseMask, next_: PhaseMask, alpha: float) -> tuple[PhaseMask, int]:
    """Keep ``prev``'s value wherever the circular phase jump exceeds ``2 pi alpha``."""
    if prev.shape != next_.shape:
        raise DimensionMismatchError(f"{prev.shape} vs {next_.shape}")
    if not 0 <= alpha <= 1:
        raise InvalidParameterError(f"alpha must be in [0, 1], got {alpha}")
    exceed = circular_distance(prev.phases, next_.phases) > TWO_PI * alpha
    out = np.where(exceed, prev.phases, next_.phases)
    return PhaseMask(out, next_.pitch), int(exceed.sum())


def quantize(phases: np.ndarray) -> np.ndarray:
    levels = np.floor(wrap_phase(phases) / TWO_PI * 256).astype(np.int64) % 256
    return levels.astype(np.uint8)


def compose_mask(gs: PhaseMask, blaze: BlazeSpec | None = None, corrective: PhaseMask | None = None) -> QuantizedMask:
    """Sum hologram, blazed grating and corrective mask modulo 2pi, then quantize to 8 bits."""
    total = gs.phases.copy()
    if blaze is not None:
        total += blaze.phase(gs.shape)
    if corrective is not None:
        if corrective.shape != gs.shape:
            raise DimensionMismatchError(f"corrective {corrective.shape} vs hologram {gs.shape}")
        total += corrective.phases
    return QuantizedMask(quantize(total), gs.pitch)


@dataclass
class Frame:
    mask: PhaseMask
    metrics: SpotMetrics
    trace: list
    exceed_count: int = 0
    pattern: SpotPattern | None = field(default=None, repr=False)


def trajectory_frames(pattern: SpotPattern, moving_index: int, path: Sequence, illumination: ComplexField,
                      cfg: GsConfig | None = None, alpha: float | None = None, induction: bool = True,
                      optics: OpticalSystem | None = None) -> list[Frame]:
    """One hologram per mover position.

    With ``induction`` every frame's solve starts from the previous frame's
    mask; otherwise frame ``k`` starts from a random phase seeded with
    ``cfg.seed + k``.  With ``alpha`` set, each new mask is passed through
    :func:`restrict_phase_change` against its predecessor and its metrics are
    re-measured.
    """
    cfg = cfg or GsConfig()
    optics = optics or OpticalSystem(pitch=illumination.pitch)
    if not 0 <= moving_index < len(pattern):
        raise PreconditionError(f"moving_index {moving_index} out of range")
    frames: list[Frame] = []
    for k, xy in enumerate(path):
        pat = pattern.moved(moving_index, xy)
        if k == 0 or not induction:
            init = cfg.initial_phase if k == 0 else "random"
            frame_cfg = GsConfig(**{**cfg.__dict__, "initial_phase": init, "seed": cfg.seed + k})
        else:
            frame_cfg = GsConfig(**{**cfg.__dict__, "initial_phase": frames[-1].mask})
        try:
            res = gs_solve(pat, illumination, frame_cfg, optics)
        except Exception as exc:
            raise FrameError(k, exc) from exc
        mask, metrics, exceed = res.mask, res.metrics, 0
        if alpha is not None and frames:
            mask, exceed = restrict_phase_change(frames[-1].mask, mask, alpha)
            metrics = spot_metrics(mask, pat, illumination, cfg.pad_factor, optics, cfg.window)
        frames.append(Frame(mask, metrics, res.trace, exceed, pat))
    return frames


def trajectory_masks(pattern: SpotPattern, moving_index: int, path: Sequence, illumination: ComplexField,
                     cfg: GsConfig | None = None, alpha: float | None = None, induction: bool = True,
                     optics: OpticalSystem | None = None) -> list[PhaseMask]:
    return [f.mask for f in trajectory_frames(pattern, moving_index, path, illumination, cfg, alpha,
                                              induction, optics)]


def mean_phase_step(masks: Sequence[PhaseMask]) -> float:
    """Mean pixelwise circular distance between consecutive masks."""
    if len(masks) < 2:
        return 0.0
    return float(np.mean([circular_distance(a.phases, b.phases).mean() for a, b in zip(masks, masks[1:])]))


def triangle_pattern(side: float = 4e-6, centre=(0.0, 0.0)) -> SpotPattern:
    """Equilateral triangle of equal-weight spots; spot 2 is the apex."""
    h = side * math.sqrt(3) / 2
    cx, cy = centre
    xy = [(cx - side / 2, cy - h / 3), (cx + side / 2, cy - h / 3), (cx, cy + 2 * h / 3)]
    return SpotPattern.from_positions(xy)


def triangle_with_mover(side: float = 4e-6, mover_offset: float = 3e-6) -> SpotPattern:
    """Triangle of three static traps plus a fourth (index 3) below its base."""
    tri = triangle_pattern(side)
    base_y = tri.positions[0, 1]
    return SpotPattern.from_positions(np.vstack([tri.positions, [(0.0, base_y - mover_offset)]]))


def array_pattern(n_spots: int, spacing: float = 2e-6, origin=(6e-6, 4e-6)) -> SpotPattern:
    """``n_spots`` on a near-square grid filled row by row, centred on ``origin``."""
    cols = math.ceil(math.sqrt(n_spots))
    idx = np.arange(n_spots)
    xy = np.column_stack([idx % cols, idx // cols]).astype(float) * spacing
    xy -= xy.mean(axis=0)
    return SpotPattern.from_positions(xy + np.asarray(origin))


def fit_power_law(ns, values) -> tuple[float, float]:
    """Fit ``values = I1 * n^-p`` in log space; returns ``(I1, p)``."""
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)
    return float(math.exp(intercept)), float(-slope)
