
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holotweezers.errors import (DimensionMismatchError, FrameError, InvalidParameterError, PreconditionError,
                                 SizeOverflowError, WeightUpdateError)
from holotweezers.holography import (TWO_PI, BlazeSpec, ComplexField, GsConfig, OpticalSystem, PhaseMask,
                                     SpotPattern, blazed_grating_for, circular_distance, compose_mask, far_field,
                                     gaussian_illumination, gs_solve, mean_phase_step, quantize,
                                     restrict_phase_change, spot_metrics, superposed_gratings, trajectory_frames,
                                     trajectory_masks, triangle_with_mover, weight_update, wrap_phase)

N = 128
OPT = OpticalSystem()


@pytest.fixture(scope="module")
def illum():
    return gaussian_illumination(N)


def centroid(intensity, cell):
    """Intensity-weighted centre in metres on a centred grid."""
    m = intensity.shape[0]
    yy, xx = np.mgrid[0:m, 0:m]
    tot = intensity.sum()
    return ((xx * intensity).sum() / tot - m // 2) * cell, ((yy * intensity).sum() / tot - m // 2) * cell


def direct_dft(field, pad, r, c):
    """Centred, unitary DFT coefficient of the zero-padded field at padded pixel (r, c)."""
    h, w = field.shape
    m = h * pad
    y = np.arange(h)[:, None] - h // 2
    x = np.arange(w)[None, :] - w // 2
    ph = np.exp(-2j * np.pi * ((r - m // 2) * y + (c - m // 2) * x) / m)
    return (field * ph).sum() / m


# --- far field ---------------------------------------------------------

def test_far_field_of_constant_is_single_spot():
    f = ComplexField(np.ones((64, 64)), OPT.pitch)
    I = np.abs(far_field(f, 1).grid) ** 2
    assert I[32, 32] == pytest.approx(f.energy, rel=1e-12)
    I[32, 32] = 0
    assert I.max() < 1e-20


def test_far_field_padded_constant_has_sinc_zeros():
    f = ComplexField(np.ones((32, 32)), OPT.pitch)
    I = np.abs(far_field(f, 2).grid) ** 2
    assert np.unravel_index(I.argmax(), I.shape) == (32, 32)
    # other samples on the unpadded resolution lattice are sinc zeros
    lattice = I[::2, ::2].copy()
    lattice[16, 16] = 0
    assert lattice.max() < 1e-20 * I.max() + 1e-25


@settings(max_examples=20, deadline=None)
@given(k=st.integers(3, 7), pad=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_parseval(k, pad, seed):
    pad = 1 << (pad - 1)
    r = np.random.default_rng(seed)
    n = 1 << k
    g = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    f = ComplexField(g, OPT.pitch)
    out = far_field(f, pad)
    assert out.shape == (n * pad, n * pad)
    assert out.energy == pytest.approx(f.energy, rel=1e-10)
    assert out.plane == "focal"


def test_padding_halves_spacing_and_keeps_spot_position(illum):
    xy = (4 * OPT.cell(N, 1), -3 * OPT.cell(N, 1))
    phase = blazed_grating_for(xy, N, 1, OPT)
    f = ComplexField(np.abs(illum.grid) * np.exp(1j * phase), OPT.pitch)
    a, b = far_field(f, 1, OPT), far_field(f, 2, OPT)
    assert b.pitch == pytest.approx(a.pitch / 2, rel=1e-14)
    ca = centroid(np.abs(a.grid) ** 2, a.pitch)
    cb = centroid(np.abs(b.grid) ** 2, b.pitch)
    assert np.allclose(ca, xy, atol=0.5 * a.pitch)
    assert np.allclose(cb, ca, atol=0.5 * b.pitch)


def test_far_field_size_budget():
    f = ComplexField(np.ones((64, 64)), OPT.pitch)
    with pytest.raises(SizeOverflowError):
        far_field(f, 4, max_pixels=128 * 128)


def test_far_field_rejects_focal_input():
    with pytest.raises(PreconditionError):
        far_field(ComplexField(np.ones((8, 8)), 1e-6, "focal"))


# --- weighting ---------------------------------------------------------

def _flat(n):
    return SpotPattern.from_positions(np.column_stack([np.arange(n) * 5e-6, np.zeros(n)]))


def test_weight_update_equal_measured_is_noop():
    out = weight_update(_flat(3), [0.4, 0.4, 0.4], 0.8)
    assert np.allclose(out.weights, 0.4, rtol=1e-15)


def test_weight_update_zero_gain():
    out = weight_update(_flat(3), [0.2, 1.0, 1.8], 0.0)
    assert np.allclose(out.weights, 1.0, rtol=1e-15)


def test_weight_update_hand_value():
    out = weight_update(_flat(2), [0.8, 1.2], 0.8)
    assert out.weights[0] == pytest.approx(1.1904761904761905, rel=1e-14)
    assert out.weights[1] == pytest.approx(1 / (1 - 0.8 * (1 - 1.2)), rel=1e-14)


def test_weight_update_divide_by_zero():
    with pytest.raises(WeightUpdateError):
        weight_update(_flat(2), [0.0, 2.0], 1.0)


def test_weight_update_shape_and_sign_checks():
    with pytest.raises(DimensionMismatchError):
        weight_update(_flat(2), [1.0, 1.0, 1.0], 0.5)
    with pytest.raises(InvalidParameterError):
        weight_update(_flat(2), [-1.0, 2.0], 0.5)


# --- GS ----------------------------------------------------------------

def test_single_spot_gives_blazed_grating(illum):
    x = 6 * OPT.cell(N, 2)
    pat = SpotPattern.from_positions([(x, 0.0)])
    res = gs_solve(pat, illum, GsConfig(max_iters=5, seed=1))
    grating = blazed_grating_for((x, 0.0), N, 2, OPT)
    diff = wrap_phase(res.mask.phases - grating)
    offset = np.angle(np.mean(np.exp(1j * diff)))
    assert circular_distance(diff, wrap_phase(offset)).max() < 1e-9
    I = np.abs(far_field(ComplexField(np.abs(illum.grid) * np.exp(1j * res.mask.phases), OPT.pitch), 2).grid) ** 2
    cx, cy = centroid(I, OPT.cell(N, 2))
    assert abs(cx - x) < 0.5 * OPT.cell(N, 1)
    assert abs(cy) < 0.5 * OPT.cell(N, 1)


def test_triangle_converges_and_trace_monotone(illum):
    res = gs_solve(triangle_with_mover(), illum, GsConfig(max_iters=30, seed=3))
    assert res.metrics.uniformity_error < 0.01
    tail = res.trace[5:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_metrics_reproducible_and_match_direct_dft(illum):
    pat = triangle_with_mover()
    cfg = GsConfig(max_iters=20, seed=5)
    res = gs_solve(pat, illum, cfg)
    again = spot_metrics(res.mask, pat, illum, cfg.pad_factor)
    assert np.array_equal(again.per_spot_intensity, res.metrics.per_spot_intensity)
    assert again.uniformity_error == res.metrics.uniformity_error

    field = np.abs(illum.grid) * np.exp(1j * res.mask.phases)
    total = np.sum(np.abs(field) ** 2)
    px = pat.pixels(N, 2, OPT)
    for i in range(3):
        r, c = px[i]
        s = sum(abs(direct_dft(field, 2, r + dr, c + dc)) ** 2 for dr in (-1, 0, 1) for dc in (-1, 0, 1))
        assert s / total == pytest.approx(res.metrics.per_spot_intensity[i], rel=1e-8)


def test_metrics_invariants(illum):
    res = gs_solve(triangle_with_mover(), illum, GsConfig(max_iters=3, seed=0))
    m = res.metrics
    assert 0 <= m.diffraction_efficiency <= 1
    assert m.uniformity_error >= 0
    assert m.mean_intensity == pytest.approx(np.mean(m.per_spot_intensity))


def test_gs_deterministic(illum):
    a = gs_solve(triangle_with_mover(), illum, GsConfig(max_iters=10, seed=9))
    b = gs_solve(triangle_with_mover(), illum, GsConfig(max_iters=10, seed=9))
    assert np.array_equal(a.mask.phases, b.mask.phases)


def test_gs_uniform_and_provided_initial_phase(illum):
    pat = triangle_with_mover()
    a = gs_solve(pat, illum, GsConfig(max_iters=10, initial_phase="uniform"))
    b = gs_solve(pat, illum, GsConfig(max_iters=10, initial_phase=a.mask))
    assert b.trace[0] == pytest.approx(a.trace[-1], rel=1e-9)


def test_pattern_preconditions(illum):
    close = SpotPattern.from_positions([(0.0, 0.0), (0.3 * OPT.cell(N, 1), 0.0)])
    with pytest.raises(PreconditionError):
        gs_solve(close, illum)
    far = SpotPattern.from_positions([(1e-3, 0.0)])
    with pytest.raises(PreconditionError):
        gs_solve(far, illum)
    with pytest.raises(PreconditionError):
        SpotPattern(np.zeros((0, 3)))
    with pytest.raises(InvalidParameterError):
        SpotPattern.from_positions([(0.0, 0.0)], weights=[0.0])


def test_gs_config_validation():
    with pytest.raises(InvalidParameterError):
        GsConfig(gain=1.0)
    with pytest.raises(InvalidParameterError):
        GsConfig(pad_factor=0)
    with pytest.raises(InvalidParameterError):
        GsConfig(initial_phase="zeros")


# --- superposed gratings -------------------------------------------------

def test_superposed_single_spot_is_grating(illum):
    xy = (5 * OPT.cell(N, 2), 2 * OPT.cell(N, 2))
    sg = superposed_gratings(SpotPattern.from_positions([xy]), illum)
    g = blazed_grating_for(xy, N, 2, OPT)
    assert circular_distance(sg.phases, g).max() < 1e-12


def test_superposed_two_spots_weaker_than_gs(illum):
    d = 4 * OPT.cell(N, 1)
    pat = SpotPattern.from_positions([(-d, 0.0), (d, 0.0)])
    sg = spot_metrics(superposed_gratings(pat, illum), pat, illum)
    gs = gs_solve(pat, illum, GsConfig(seed=2)).metrics
    assert np.all(sg.per_spot_intensity < gs.per_spot_intensity)


# --- restricted phase change ---------------------------------------------

def _masks(seed, shape=(16, 16)):
    r = np.random.default_rng(seed)
    return PhaseMask(r.uniform(0, TWO_PI, shape), OPT.pitch), PhaseMask(r.uniform(0, TWO_PI, shape), OPT.pitch)


def test_restrict_alpha_one_and_zero():
    a, b = _masks(0)
    out, k = restrict_phase_change(a, b, 1.0)
    assert np.array_equal(out.phases, b.phases) and k == 0
    out, k = restrict_phase_change(a, b, 0.0)
    assert np.array_equal(out.phases, a.phases) and k == a.phases.size


def test_restrict_hand_example():
    a = PhaseMask(np.full((2, 2), 0.1), OPT.pitch)
    b = PhaseMask(np.full((2, 2), 6.2), OPT.pitch)
    assert circular_distance(0.1, 6.2) == pytest.approx(TWO_PI - 6.1, rel=1e-12)
    out, k = restrict_phase_change(a, b, 0.25)
    assert k == 0
    assert np.allclose(out.phases, 6.2)


def test_restrict_dimension_mismatch():
    a, _ = _masks(0, (4, 4))
    _, b = _masks(1, (4, 8))
    with pytest.raises(DimensionMismatchError):
        restrict_phase_change(a, b, 0.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), alphas=st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_restrict_monotone_and_idempotent(seed, alphas):
    a, b = _masks(seed)
    counts = [restrict_phase_change(a, b, al)[1] for al in sorted(alphas)]
    assert all(y <= x for x, y in zip(counts, counts[1:]))
    once, _ = restrict_phase_change(a, b, alphas[0])
    twice, _ = restrict_phase_change(a, once, alphas[0])
    assert np.array_equal(once.phases, twice.phases)


# --- composition and quantization ----------------------------------------

def test_quantize_levels():
    phi = np.array([0.0, TWO_PI * 255 / 256, TWO_PI * 0.5, TWO_PI - 1e-15, TWO_PI])
    assert quantize(phi).tolist() == [0, 255, 128, 255, 0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_quantization_error_bound(seed):
    a, _ = _masks(seed)
    q = compose_mask(a)
    assert circular_distance(q.phases, a.phases).max() <= TWO_PI / 256 + 1e-12


def test_compose_zero_gs_is_blaze():
    zero = PhaseMask(np.zeros((32, 32)), OPT.pitch)
    blaze = BlazeSpec(8.0)
    q = compose_mask(zero, blaze)
    assert np.array_equal(q.levels, quantize(blaze.phase((32, 32))))


def test_compose_subtract_blaze_recovers_gs():
    a, _ = _masks(4, (32, 32))
    blaze = BlazeSpec(6.0, 0.3)
    q = compose_mask(a, blaze)
    back = wrap_phase(q.phases - blaze.phase((32, 32)))
    assert circular_distance(back, a.phases).max() <= TWO_PI / 256 + 1e-12


def test_compose_dimension_mismatch():
    a, _ = _masks(0, (8, 8))
    c, _ = _masks(0, (8, 16))
    with pytest.raises(DimensionMismatchError):
        compose_mask(a, None, c)


def test_blaze_translates_far_field(illum):
    x0 = 3 * OPT.cell(N, 2)
    res = gs_solve(SpotPattern.from_positions([(x0, 0.0)]), illum, GsConfig(max_iters=3))
    blaze = BlazeSpec(8.0)
    q = compose_mask(res.mask, blaze)
    cell = OPT.cell(N, 2)

    def peak(phases):
        I = np.abs(far_field(ComplexField(np.abs(illum.grid) * np.exp(1j * phases), OPT.pitch), 2).grid) ** 2
        return np.array(centroid(I, cell))

    shift = peak(q.phases) - peak(res.mask.phases)
    assert np.allclose(shift, blaze.deflection(OPT), atol=0.5 * cell)
    assert blaze.deflection(OPT)[0] == pytest.approx(OPT.wavelength * OPT.focal_length / (8 * OPT.pitch))


# --- trajectories --------------------------------------------------------

def _path(pattern, n):
    start = pattern.positions[3]
    return [start + [k * 1e-6, 0.0] for k in range(n)]


def test_trajectory_length_one_equals_gs(illum):
    pat = triangle_with_mover()
    cfg = GsConfig(max_iters=15, seed=4)
    m = trajectory_masks(pat, 3, _path(pat, 1), illum, cfg)
    ref = gs_solve(pat, illum, cfg)
    assert len(m) == 1 and np.array_equal(m[0].phases, ref.mask.phases)


def test_trajectory_induction_reduces_phase_steps(illum):
    pat = triangle_with_mover()
    cfg = GsConfig(seed=2)
    path = _path(pat, 6)
    ind = trajectory_frames(pat, 3, path, illum, cfg, induction=True)
    fresh = trajectory_frames(pat, 3, path, illum, cfg, induction=False)
    assert all(f.metrics.uniformity_error < 0.05 for f in ind)
    assert mean_phase_step([f.mask for f in ind]) < mean_phase_step([f.mask for f in fresh])


def test_trajectory_exceed_monotone_in_alpha(illum):
    pat = triangle_with_mover()
    cfg = GsConfig(max_iters=10, seed=2)
    path = _path(pat, 3)
    counts = []
    for alpha in (0.1, 0.25, 0.5, 1.0):
        fr = trajectory_frames(pat, 3, path, illum, cfg, alpha=alpha)
        counts.append(sum(f.exceed_count for f in fr))
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] == 0


def test_trajectory_error_tagged_with_frame(illum):
    pat = triangle_with_mover()
    path = _path(pat, 2) + [(1e-3, 0.0)]
    with pytest.raises(FrameError) as info:
        trajectory_masks(pat, 3, path, illum, GsConfig(max_iters=3))
    assert info.value.frame == 2
    assert "frame 2" in str(info.value)
