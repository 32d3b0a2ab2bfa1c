"""Entropy identities and concentration lemmas on exact-measure sets."""

import math

import numpy as np
import pytest

from conftest import random_atomic_ensemble
from mfturb.concentration import (
    ConcentrationReport,
    Density,
    active_region,
    active_region_qp,
    concentration_constant,
    concentration_set,
    csiszar_kullback_check,
    dyadic_counterexample,
    entropy,
    entropy_volume_identity,
    log_concentration,
    strong_concentration,
    strong_constant,
    superlevel_slice,
    weak_concentration,
)
from mfturb.ensemble import IncrementEnsemble, increments, moments
from mfturb.errors import ArgumentError
from mfturb.generators import MonoFractalSpec, gen_monofractal, mono_layout
from mfturb.gridfield import axis_directions


def monofractal_ensemble(ell=2**-8, D=2.5, seed=2):
    spec = MonoFractalSpec(ell=ell, D=D, epsilon=1.0, seed=seed, dims=1, n=int(4 / ell))
    return (
        increments(gen_monofractal(spec), ell, axis_directions(1)).compact(),
        mono_layout(spec)["amplitude"],
    )


def uniform_density():
    return Density(np.ones(4), np.full(4, 0.25))


def half_measure_density():
    # F = 2 on measure 1/2, 0 elsewhere
    return Density(np.array([2.0, 0.0]), np.array([0.5, 0.5]))


def random_density(rng, n_max=20):
    n = int(rng.integers(2, n_max))
    w = rng.dirichlet(np.ones(n))
    v = rng.exponential(1.0, size=n)
    v = v / np.sum(w * v)
    return Density(v, w)


# ----------------------------------------------------------------- entropy


def test_entropy_uniform():
    H, V, shannon = entropy(uniform_density())
    assert H == 0.0 and V == 1.0
    assert shannon == pytest.approx(1.0 / (2 * math.pi * math.e), rel=1e-14)


def test_entropy_half_measure():
    H, V, _ = entropy(half_measure_density())
    assert H == pytest.approx(math.log(2.0), rel=1e-14)
    assert V == pytest.approx(0.5, rel=1e-14)


def test_entropy_monofractal_matches_volume():
    ell, D = 2.0**-8, 2.5
    ens, _ = monofractal_ensemble(ell, D)
    F = Density.from_ensemble(ens, 2.0)
    _, V, _ = entropy(F)
    assert V == pytest.approx(ell ** (3.0 - D), rel=1e-12)


def test_entropy_volume_identity_random(rng):
    for _ in range(50):
        ens = random_atomic_ensemble(rng)
        tab = moments(ens, np.array([0.0, 0.5, 1.0, 2.0]))
        if not tab.finite_mask()[3]:
            continue
        record = entropy_volume_identity(tab, ens, 2.0)
        assert record["pass"]


# ------------------------------------------------------- Csiszar-Kullback


def test_csiszar_kullback_uniform():
    assert csiszar_kullback_check(uniform_density()) == (0.0, 0.0, 0.0)


def test_csiszar_kullback_half_measure():
    lower, H, upper = csiszar_kullback_check(half_measure_density())
    assert lower == pytest.approx(0.5, rel=1e-14)  # <|F-1|> = 1
    assert H == pytest.approx(math.log(2.0), rel=1e-14)
    assert upper == pytest.approx(1.0, rel=1e-14)  # <|F-1|^2> = 1


def test_csiszar_kullback_random(rng):
    for _ in range(1000):
        lower, H, upper = csiszar_kullback_check(random_density(rng))
        assert lower <= H + 1e-12 <= upper + 2e-12


# ------------------------------------------------------- superlevel slicing


def test_superlevel_slice_exact_measure(rng):
    for _ in range(200):
        n = int(rng.integers(2, 15))
        w = rng.dirichlet(np.ones(n))
        v = rng.normal(size=n)
        target = float(rng.uniform(0.0, 1.0))
        take, sliced, exact = superlevel_slice(v, w, target)
        assert exact
        assert math.fsum((take * w).tolist()) == pytest.approx(target, abs=1e-12)
        # taken set is a descending superlevel set: anything fully taken
        # has value >= anything untouched
        full = take >= 1.0 - 1e-15
        untouched = take <= 1e-15
        if np.any(full) and np.any(untouched):
            assert np.min(v[full]) >= np.max(v[untouched]) - 1e-12


# --------------------------------------------------------- lemma: q-capture


def test_concentration_constants():
    assert concentration_constant(4.0, 2.0) == pytest.approx(0.5, rel=1e-14)
    assert concentration_constant(3.0, 2.0) == pytest.approx(
        (1.0 / 3.0) ** (1.0 / 3.0) * (2.0 / 3.0) ** (2.0 / 3.0), rel=1e-14
    )
    assert concentration_constant(3.0, 2.0) == pytest.approx(0.5291, abs=5e-5)
    assert concentration_constant(2.0, 0.0) == pytest.approx(1.0, rel=1e-14)


def test_concentration_set_flatness_pair():
    rng = np.random.default_rng(4)
    ens = IncrementEnsemble(0.1, np.abs(rng.normal(size=20000)))
    report = concentration_set(ens, 4.0, 2.0)
    assert report.passed
    assert report.params["c_qp"] == pytest.approx(0.5, rel=1e-15)
    # captured fraction at least half of the fourth-order mass
    assert report.rhs >= 0.5 * (report.lhs / (1.0 - 0.5))


def test_concentration_set_constant_is_everything():
    ens = IncrementEnsemble(0.1, np.full(6, 1.3))
    report = concentration_set(ens, 3.0, 1.0)
    assert report.set_measure == pytest.approx(1.0, abs=1e-12)
    assert report.passed


def test_concentration_set_random_atoms(rng):
    for _ in range(1000):
        ens = random_atomic_ensemble(rng)
        q = float(rng.uniform(0.5, 8.0))
        p = float(rng.uniform(0.0, q - 0.1))
        report = concentration_set(ens, q, p)
        assert report.passed, (q, p)


# ------------------------------------------------------ weak/strong capture


def test_weak_concentration_uniform_degenerate():
    report = weak_concentration(uniform_density(), 0.5)
    assert report.lhs == 0.0 and report.rhs >= 0.0 and report.passed


def test_weak_concentration_dyadic_margin():
    F = dyadic_counterexample(8).density
    report = weak_concentration(F, 0.5)
    assert report.passed
    assert report.margin > 0.0


def test_weak_concentration_random(rng):
    for _ in range(1000):
        F = random_density(rng)
        for eps in (0.1, 0.5, 0.9):
            assert weak_concentration(F, eps).passed


def test_strong_constant_monotone_to_one():
    values = [strong_constant(h0) for h0 in (1.0, 5.0, 20.0)]
    assert values[0] < values[1] < values[2] < 1.0
    assert values[2] > 0.8  # information loss grows with the entropy cap


def test_strong_concentration_uniform_degenerate():
    report = strong_concentration(uniform_density(), 1.0)
    assert report.lhs == 0.0 and report.passed


def test_strong_concentration_half_measure():
    report = strong_concentration(half_measure_density(), math.log(2.0))
    assert report.passed
    assert report.set_measure == pytest.approx(0.5, abs=1e-12)


def test_strong_concentration_requires_entropy_cap():
    with pytest.raises(ArgumentError):
        strong_concentration(half_measure_density(), 0.1)


def test_strong_concentration_random(rng):
    for _ in range(1000):
        F = random_density(rng)
        H, _, _ = entropy(F)
        assert strong_concentration(F, H * float(rng.uniform(1.0, 3.0)) + 1e-9).passed


# ------------------------------------------------------ dyadic counterexample


def test_dyadic_n2_atoms():
    diag = dyadic_counterexample(2)
    F = diag.density
    # values 1 and 2 on measures 1/2 and 1/4 (plus the zero remainder);
    # the construction is exactly normalized, so the shift is zero
    nz = F.values > 0
    assert sorted(F.values[nz].tolist()) == pytest.approx([1.0, 2.0], abs=1e-15)
    assert math.fsum((F.values * F.weights).tolist()) == pytest.approx(1.0, abs=1e-15)
    assert diag.H_exact == pytest.approx(1.5 * math.log(2.0) - math.log(2.0), rel=1e-12)


def test_dyadic_captured_ratio_decays():
    r4 = dyadic_counterexample(4).ratio
    r16 = dyadic_counterexample(16).ratio
    r64 = dyadic_counterexample(64).ratio
    assert r64 < r16 < r4
    assert r16 < 0.5
    assert r64 < 0.25
    # trend ~ ln(n)/n: the normalized ratio stays within a factor ~1.5
    scaled = [r / (math.log(n) / n) for r, n in ((r4, 4), (r16, 16), (r64, 64))]
    assert max(scaled) / min(scaled) < 1.6


def test_dyadic_exact_entropy_formula():
    # H = ((n+1)/2) ln 2 - ln n for the exactly-normalized construction
    for n in (2, 5, 16, 40):
        diag = dyadic_counterexample(n)
        expected = 0.5 * (n + 1) * math.log(2.0) - math.log(n)
        assert diag.H_exact == pytest.approx(expected, rel=1e-12)


# ------------------------------------------------------------ active regions


def test_active_region_monofractal_band():
    ell, D = 2.0**-8, 2.5
    ens, u0 = monofractal_ensemble(ell, D)
    mask, measure, V_p = active_region(ens, 2.0, 0.5, 2.0)
    # all active cubes fall in the band around s_p = U0
    assert measure == pytest.approx(ell ** (3.0 - D), rel=1e-12)
    assert V_p == pytest.approx(ell ** (3.0 - D), rel=1e-12)


def test_active_region_constant_field():
    ens = IncrementEnsemble(0.1, np.full(5, 0.9))
    mask, measure, V_p = active_region(ens, 1.0, 0.5, 2.0)
    assert measure == 1.0 and V_p == pytest.approx(1.0, rel=1e-12)


def test_active_region_gaussian_chebyshev():
    rng = np.random.default_rng(8)
    ens = IncrementEnsemble(0.1, np.abs(rng.normal(size=200000)))
    _, measure, V_p = active_region(ens, 2.0, 0.5, 2.0)
    assert measure <= 4.0 * V_p  # Chebyshev constant c_lo^-2 made explicit


def test_active_region_qp_optimal_sigma():
    rng = np.random.default_rng(9)
    ens = IncrementEnsemble(0.1, np.abs(rng.normal(size=50000)))
    report = active_region_qp(ens, 4.0, 2.0)
    assert report.passed
    total = report.lhs / (1.0 - report.params["sigma"] ** 2.0)
    assert report.rhs >= 0.5 * total  # capture fraction at least one half


def test_active_region_qp_constant_is_everything():
    ens = IncrementEnsemble(0.1, np.full(4, 2.2))
    report = active_region_qp(ens, 3.0, 1.0, sigma=0.9)
    assert report.set_measure == pytest.approx(1.0, abs=1e-12)


def test_active_region_qp_grid(rng):
    for _ in range(400):
        ens = random_atomic_ensemble(rng)
        q = float(rng.uniform(1.0, 6.0))
        p = float(rng.uniform(0.1, q - 0.5))
        for sigma in (0.25, 0.5, 0.9):
            assert active_region_qp(ens, q, p, sigma).passed


def test_log_concentration_bounded_field_vanishes():
    ens = IncrementEnsemble(0.1, np.array([0.2, 0.5]), np.array([0.5, 0.5]))
    report = log_concentration(ens, 2.0, U0=1.0, c=0.5)
    assert report.lhs == 0.0 and report.rhs == 0.0 and report.passed


def test_log_concentration_monofractal_two_level():
    ens, u0 = monofractal_ensemble()
    report = log_concentration(ens, 2.0, U0=0.5 * u0, c=0.5)
    assert report.passed
    # the active level carries the whole ln_+ source: equality holds
    assert report.rhs == pytest.approx(report.lhs / (1.0 - 0.5), rel=1e-12)


def test_log_concentration_random(rng):
    for _ in range(500):
        ens = random_atomic_ensemble(rng, allow_zero=False)
        for c in (0.25, 0.5, 0.75):
            u0 = float(np.exp(rng.normal()))
            assert log_concentration(ens, 2.0, u0, c).passed


def test_report_json_fields():
    report = weak_concentration(half_measure_density(), 0.5)
    record = report.to_dict()
    assert set(record) == {"lemma", "params", "set_measure", "lhs", "rhs", "margin", "pass"}
    assert isinstance(report, ConcentrationReport)
