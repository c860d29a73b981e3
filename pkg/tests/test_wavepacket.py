import math

import numpy as np
import pytest
from scipy import integrate

from dnwaveguide.dispersion import ScatteringConfig
from dnwaveguide.errors import QuadratureUnderResolved, WindowViolation
from dnwaveguide.wavepacket import (
    Envelope,
    FieldSnapshot,
    GridSpec,
    QuadSpec,
    asymptotes,
    convergence_distance,
    decay_fit,
    evolve,
    packet,
    validate_window,
)

CFG = ScatteringConfig.from_units(1.0, 1, 0.75)
TU = CFG.geom.t_unit


@pytest.fixture(scope="module")
def wp():
    return packet(CFG, Envelope.from_units(CFG.geom, 0.5, 1.0, "spline"), QuadSpec(96))


@pytest.mark.parametrize("shape", ["bump", "spline"])
def test_envelope_normalised(shape):
    env = Envelope.from_units(CFG.geom, 0.5, 1.0, shape)
    val, _ = integrate.quad(lambda k: env(k) ** 2, env.alpha, env.beta, points=list(env.breakpoints), limit=200)
    assert 2 * math.pi * val == pytest.approx(1.0, rel=1e-10)
    assert env(env.alpha - 0.01) == 0 and env(env.beta + 0.01) == 0


def test_spline_is_c1_not_c2():
    env = Envelope(1.0, 4.0, "spline")
    h = 1e-6
    for knot in env.breakpoints[1:-1]:
        left = (env(knot) - env(knot - h)) / h
        right = (env(knot + h) - env(knot)) / h
        assert left == pytest.approx(right, abs=1e-4)
    # second derivative jumps at the first interior knot
    knot = env.breakpoints[1]
    d2l = (env(knot) - 2 * env(knot - h * 100) + env(knot - 200 * h)) / (100 * h) ** 2
    d2r = (env(knot + 200 * h) - 2 * env(knot + h * 100) + env(knot)) / (100 * h) ** 2
    assert abs(d2l - d2r) > 0.1 * abs(d2l)


def test_window_checks():
    g = CFG.geom
    assert validate_window(Envelope.from_units(g, 0.5, 1.0), CFG)
    with pytest.raises(WindowViolation) as err:
        validate_window(Envelope.from_units(g, 2.5, 3.0), CFG)
    assert err.value.threshold == pytest.approx(math.sqrt(8) * g.k_unit)
    with pytest.raises(WindowViolation):
        Envelope.from_units(g, 0.0, 1.0)


def test_decay_fit_identities():
    ts = [10.0, 20.0, 40.0, 80.0]
    f = decay_fit([(t, 3.0 * t**-0.5) for t in ts])
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert decay_fit([(-t, 2.0 / t) for t in ts]).slope == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize(
    "samples",
    [
        [(1, 1.0), (2, 0.5), (3, 0.3)],
        [(1, 1.0), (-2, 0.5), (3, 0.3), (4, 0.2)],
        [(1, 1.0), (2, 0.5), (3, 0.0), (4, 0.2)],
    ],
)
def test_decay_fit_rejects_degenerate(samples):
    with pytest.raises(ValueError):
        decay_fit(samples)


def test_norm_is_conserved(wp):
    for T in (-40, -10, 0, 10, 40):
        assert wp.norm(T * TU) == pytest.approx(1.0, rel=1e-4)


def test_incoming_free_packet_norm_constant(wp):
    grid = GridSpec(150.0)
    norms = []
    for T in (-20, 0, 20):
        snap = wp.snapshot(T * TU, grid, "minus")
        norms.append(np.trapezoid(snap.cross_section_norms() ** 2, snap.x))
    np.testing.assert_allclose(norms, 1.0, rtol=1e-4)


def test_evanescent_content_decays(wp):
    vals = [wp.evanescent_norm(T * TU) for T in (0, 10, 20, 40, 80)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    vals = [wp.evanescent_norm(-T * TU) for T in (10, 20, 40, 80)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_distance_order_one_at_zero_and_decreasing(wp):
    assert wp.distance(0.0) > 0.1
    for sgn in (1, -1):
        d = [wp.distance(sgn * T * TU) for T in (10, 20, 40)]
        assert d[0] > d[1] > d[2]


def test_far_left_field_is_incident_packet(wp):
    grid = GridSpec(40.0, dx=0.25)
    full = wp.snapshot(0.0, grid, "full")
    ev = wp.snapshot(0.0, grid, "evanescent")
    far = full.x < -20
    peak = np.max(np.abs(full.values))
    assert np.max(np.abs(ev.values[far])) < 1e-8 * peak
    assert np.all(np.isfinite(full.cross_section_norms()))


def test_plus_state_has_open_channels_only(wp):
    snap = wp.snapshot(30 * TU, GridSpec(60.0, dx=0.25), "plus")
    # project onto closed cosine modes on x > 0
    from dnwaveguide.modes import ModeBasis, chi_matrix

    C = chi_matrix(ModeBasis.COSINE, 6, snap.y, CFG.geom)
    right = snap.x > 0.5
    proj = np.trapezoid(snap.values[right][:, None, :] * C[None, :, :], snap.y, axis=2)
    assert np.max(np.abs(proj[:, 1:])) < 1e-3 * np.max(np.abs(proj[:, 0]))


def test_free_packet_centroid_speed(wp):
    env = wp.env
    grid = GridSpec(200.0)

    def centroid(t):
        s = wp.snapshot(t, grid, "minus")
        dens = s.cross_section_norms() ** 2
        return np.trapezoid(s.x * dens, s.x) / np.trapezoid(dens, s.x)

    t1, t2 = 20 * TU, 40 * TU
    v = (centroid(t2) - centroid(t1)) / (t2 - t1)
    assert v == pytest.approx(2 * env.mean_k, rel=1e-3)


def test_quadrature_self_consistency():
    env = Envelope.from_units(CFG.geom, 0.5, 1.0, "bump")
    assert convergence_distance(CFG, env, 0.0, quad=QuadSpec(64), check_tol=1e-8) > 0.1
    # late times need more nodes; the acceptance run uses 256 against 512
    spline = Envelope.from_units(CFG.geom, 0.5, 1.0, "spline")
    assert convergence_distance(CFG, spline, 80 * TU, quad=QuadSpec(256), check_tol=1e-8) > 0


def test_quadrature_under_resolved_is_reported():
    env = Envelope.from_units(CFG.geom, 0.5, 1.0, "spline")
    with pytest.raises(QuadratureUnderResolved):
        convergence_distance(CFG, env, 80 * TU, quad=QuadSpec(24), check_tol=1e-8)


def test_evolve_and_asymptotes_shapes():
    env = Envelope.from_units(CFG.geom, 0.5, 1.0)
    grid = GridSpec(5.0, dx=0.5, dy=0.25)
    snap = evolve(CFG, env, 0.0, grid)
    pair = asymptotes(CFG, env, 0.0, grid)
    assert snap.values.shape == (snap.x.size, snap.y.size) == pair.psi_plus.values.shape
    assert snap.x[0] == -snap.x[-1]


def test_snapshot_round_trip(tmp_path):
    env = Envelope.from_units(CFG.geom, 0.5, 1.0)
    snap = evolve(CFG, env, 1.0, GridSpec(2.0, dx=0.5, dy=0.25))
    back = FieldSnapshot.from_dict(snap.to_dict())
    np.testing.assert_array_equal(back.values, snap.values)
    lines = snap.to_csv().splitlines()
    assert lines[0] == "x,y,re,im" and len(lines) == 1 + snap.values.size
