"""Increment extraction and moment accumulation against independent oracles."""

import math

import numpy as np
import pytest

from conftest import random_atomic_ensemble
from mfturb.ensemble import (
    IncrementEnsemble,
    compensated_sum,
    effective_domain,
    increments,
    moments,
)
from mfturb.errors import ArgumentError, InternalConsistencyError, ResolutionError
from mfturb.generators import MonoFractalSpec, gen_monofractal, mono_layout
from mfturb.gridfield import GridField, axis_directions, default_directions


def naive_moments(values, weights, p):
    """Independent double-loop oracle, exact summation."""
    terms = [w * v**p if v > 0 or p == 0 else (0.0 if p > 0 else math.inf)
             for v, w in zip(values, weights)]
    if any(t == math.inf for t in terms):
        return math.inf
    return math.fsum(terms)


def sine_field_1d(n):
    x = np.arange(n) / n
    values = np.zeros((n, 3))
    values[:, 0] = np.sin(2 * np.pi * x)
    return GridField(values, 1)


# ---------------------------------------------------------------- increments


def test_constant_field_has_zero_increments():
    field = GridField(np.full((64, 3), 0.7), 1)
    ens = increments(field, 0.25, axis_directions(1))
    assert np.all(ens.magnitudes == 0.0)


def test_sine_field_half_period_second_moment():
    # delta at l = 1/2 is -2 sin(2 pi x); direct summation gives <|d|^2> = 2
    n = 256
    field = sine_field_1d(n)
    ens = increments(field, 0.5, axis_directions(1))
    x = np.arange(n) / n
    oracle = math.fsum((2.0 * np.abs(np.sin(2 * np.pi * x))) ** 2) / n
    tab = moments(ens, np.array([2.0]))
    assert tab.moments[0] == pytest.approx(oracle, rel=1e-13)
    assert tab.moments[0] == pytest.approx(2.0, rel=1e-12)


def test_monofractal_magnitudes_two_level():
    spec = MonoFractalSpec(ell=2**-6, D=2.5, epsilon=1.0, seed=5, dims=1, n=2**12)
    u0 = mono_layout(spec)["amplitude"]
    field = gen_monofractal(spec)
    ens = increments(field, spec.ell, axis_directions(1))
    # only the values 0 and U0 occur, up to vector-norm roundoff
    mags = np.unique(ens.magnitudes)
    assert np.all((mags < 1e-12) | (np.abs(mags - u0) < 1e-12 * u0))


def test_increment_translation_invariance():
    rng = np.random.default_rng(11)
    field = GridField(rng.normal(size=(16, 16, 16, 3)), 3)
    dirs = default_directions(3)
    p_grid = np.array([1.0, 2.0, 4.0])
    base = moments(increments(field, 0.25, dirs), p_grid)
    shifted = moments(increments(field.translated((3, 7, 1)), 0.25, dirs), p_grid)
    assert np.allclose(base.moments, shifted.moments, rtol=1e-12)
    assert np.allclose(base.log_moments, shifted.log_moments, rtol=1e-12)


def test_radial_field_angle_independence():
    # u = phi(|x - x0|) v0 with smooth phi: per-direction <|d|^2> / l_eff^2
    # is direction-independent up to O(l) profile curvature; tolerance
    # calibrated to the 64^3 grid (measured spread ~1.5e-2).
    n = 64
    x = (np.arange(n) / n - 0.5)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    r2 = X**2 + Y**2 + Z**2
    phi = np.exp(-r2 / 0.02)
    values = np.zeros((n, n, n, 3))
    values[..., 0] = phi
    field = GridField(values, 3)
    ens = increments(field, 4.0 / n, default_directions(3))
    m2 = ens.direction_moment(2.0) / ens.ell_eff**2
    spread = np.max(np.abs(m2 / np.mean(m2) - 1.0))
    assert spread < 0.05


def test_increment_errors():
    field = sine_field_1d(64)
    with pytest.raises(ResolutionError):
        increments(field, 1.0 / 128, axis_directions(1))
    with pytest.raises(ArgumentError):
        increments(field, 0.25, [])
    with pytest.raises(ArgumentError):
        increments(field, 0.75, axis_directions(1))


def test_displacement_rounding_recorded():
    rng = np.random.default_rng(0)
    field = GridField(rng.normal(size=(32, 32, 32, 3)), 3)
    ens = increments(field, 5.0 / 32, default_directions(3))
    # diagonals cannot hit 5/32 exactly; the metadata must say so
    assert ens.scale_error > 0.0
    assert ens.ell_eff.shape == (14,)


# ------------------------------------------------------------------- moments


def test_constant_magnitudes_power_moments():
    ens = IncrementEnsemble(0.1, np.full(10, 3.0))
    p = np.array([-2.0, 0.0, 1.0, 2.5, 12.0])
    tab = moments(ens, p)
    assert np.allclose(tab.moments, 3.0**p, rtol=1e-13)


def test_two_atom_hand_arithmetic():
    ens = IncrementEnsemble(0.1, np.array([1.0, 2.0]), np.array([0.5, 0.5]))
    tab = moments(ens, np.array([1.0, 2.0]))
    assert tab.moments[1] == pytest.approx(2.5, abs=1e-15)  # (1 + 4)/2
    assert tab.moments[0] == pytest.approx(1.5, abs=1e-15)


def test_zeroth_moment_is_exactly_one(rng):
    for _ in range(20):
        ens = random_atomic_ensemble(rng)
        tab = moments(ens, np.array([-1.0, 0.0, 1.0]))
        assert tab.moments[1] == 1.0


def test_moments_match_naive_oracle(rng):
    for _ in range(50):
        ens = random_atomic_ensemble(rng, allow_zero=False)
        p_grid = np.sort(rng.uniform(-3.0, 8.0, size=5))
        if np.any(np.diff(p_grid) < 1e-6):
            continue
        tab = moments(ens, p_grid)
        w = ens.weight_array()
        for i, p in enumerate(p_grid):
            oracle = naive_moments(ens.magnitudes, w, p)
            assert tab.moments[i] == pytest.approx(oracle, rel=1e-12)


def test_moment_order_shuffle_stability(rng):
    # order-independence up to the compensated-summation tolerance
    n = 4096
    values = np.exp(rng.normal(0, 2, n))
    weights = rng.dirichlet(np.ones(n))
    weights = weights / compensated_sum(weights)
    perm = rng.permutation(n)
    p = np.array([0.5, 2.0, 8.0, 12.0])
    a = moments(IncrementEnsemble(0.1, values, weights), p)
    b = moments(IncrementEnsemble(0.1, values[perm], weights[perm]), p)
    assert np.allclose(a.moments, b.moments, rtol=1e-13)
    assert np.allclose(a.log_moments, b.log_moments, rtol=1e-13)


def test_moment_log_convexity_enforced():
    bad = dict(
        ell=0.1,
        p_grid=np.array([0.0, 1.0, 2.0]),
        moments=np.array([1.0, 10.0, 1.0]),  # log-concave spike
        log_moments=np.zeros(3),
        log2_moments=np.zeros(3),
        zero_fraction=0.0,
        max_magnitude=1.0,
        min_magnitude=1.0,
    )
    from mfturb.ensemble import MomentTable

    with pytest.raises(InternalConsistencyError):
        MomentTable(**bad)


def test_compact_preserves_moments():
    values = np.array([0.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    ens = IncrementEnsemble(0.25, values)
    comp = ens.compact()
    assert len(comp) == 3
    p = np.array([0.0, 1.0, 3.0])
    assert np.allclose(moments(ens, p).moments, moments(comp, p).moments, rtol=1e-14)


# ---------------------------------------------------------- effective domain


def test_domain_with_zeros_starts_at_zero():
    ens = IncrementEnsemble(0.1, np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    tab = moments(ens, np.arange(-2.0, 4.5, 0.5))
    p_min, p_max = effective_domain(tab)
    assert p_min == 0.0
    assert p_max == math.inf
    # finite exactly on p >= 0 (p = 0 moment finite; log moment diverges there)
    finite = tab.finite_mask()
    assert np.all(finite == (tab.p_grid > 0.0))


def test_domain_strictly_positive_is_unbounded():
    ens = IncrementEnsemble(0.1, np.array([0.5, 1.0, 2.0]))
    tab = moments(ens, np.arange(-4.0, 4.5, 0.5))
    p_min, p_max = effective_domain(tab)
    assert p_min == -math.inf
    assert p_max == math.inf


# ----------------------------------------------------------------------- io


def test_gridfield_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    field = GridField(rng.normal(size=(8, 8, 8, 3)), 3)
    path = tmp_path / "field.mfrc"
    field.save(path)
    loaded = GridField.load(path)
    assert loaded.dims == 3 and loaded.n == 8 and loaded.components == 3
    assert np.array_equal(loaded.values, field.values)


def test_moment_csv_roundtrip(tmp_path):
    ens = IncrementEnsemble(0.1, np.array([0.5, 1.5]))
    tab = moments(ens, np.array([0.0, 1.0, 2.0]))
    path = tmp_path / "moments.csv"
    tab.write_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "p,moment,log_moment,log2_moment,finite_flag"
    got = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.array_equal(got, tab.moments)  # 17 digits round-trip exactly
