"""Scaling exponents: closed-form oracles, derivative identities, endpoints."""

import json
import math

import numpy as np
import pytest

from conftest import random_atomic_ensemble
from mfturb.ensemble import IncrementEnsemble, MomentTable, moments
from mfturb.errors import DomainError, ScaleError
from mfturb.generators import (
    MonoFractalSpec,
    gen_monofractal,
    ref_random_profile,
)
from mfturb.gridfield import axis_directions
from mfturb.ensemble import increments
from mfturb.scaling import (
    ScalingProfile,
    classify_endpoints,
    endpoint_json,
    holder_range,
    ratio_bounds_check,
    zeta,
)


def two_atom_oracle(ell, a1, a2, w1, p):
    """Closed-form zeta, zeta', zeta'' for a two-atom magnitude distribution."""
    w2 = 1.0 - w1
    m = w1 * a1**p + w2 * a2**p
    lg = w1 * a1**p * math.log(a1) + w2 * a2**p * math.log(a2)
    lg2 = w1 * a1**p * math.log(a1) ** 2 + w2 * a2**p * math.log(a2) ** 2
    ln_ell = math.log(ell)
    return (
        math.log(m) / ln_ell,
        lg / m / ln_ell,
        (lg2 / m - (lg / m) ** 2) / ln_ell,
    )


def quadratic_profile(c=0.01, ell=0.1, p_lo=-4.0, p_hi=8.0, step=0.05):
    """Analytic profile zeta = p/3 - c p^2 (strictly concave)."""
    p = np.arange(p_lo, p_hi + step / 2, step)
    return ScalingProfile(
        ell, p, p / 3.0 - c * p**2, 1.0 / 3.0 - 2 * c * p, np.full(p.size, -2 * c),
        -math.inf, math.inf,
    )


def test_constant_magnitude_is_degenerate_k41():
    # |f| = l^h: zeta_p = h p, zeta' = h, zeta'' = 0
    ell, h = 0.125, 0.4
    ens = IncrementEnsemble(ell, np.full(7, ell**h))
    prof = zeta(moments(ens, np.arange(-3.0, 6.5, 0.5)))
    assert np.allclose(prof.zeta, h * prof.p_grid, atol=1e-12)
    assert np.allclose(prof.zeta1, h, atol=1e-12)
    assert np.allclose(prof.zeta2, 0.0, atol=1e-12)


def test_monofractal_matches_beta_model_curve():
    spec = MonoFractalSpec(ell=2**-8, D=2.5, epsilon=1.0, seed=1, dims=1, n=2**14)
    ens = increments(gen_monofractal(spec), spec.ell, axis_directions(1)).compact()
    prof = zeta(moments(ens, np.arange(0.0, 6.25, 0.25)))
    ref = 3.0 - spec.D + prof.p_grid * (spec.D - 2.0) / 3.0
    assert np.max(np.abs(prof.zeta - ref)) < 1e-12


def test_two_atom_closed_form():
    ell = 2.0**-10
    a1, a2, w1 = ell**0.2, ell**0.9, ell**0.5 / (1 + ell**0.5)
    ens = IncrementEnsemble(ell, np.array([a1, a2]), np.array([w1, 1 - w1]))
    p_grid = np.arange(-2.0, 8.5, 0.5)
    prof = zeta(moments(ens, p_grid))
    for i, p in enumerate(prof.p_grid):
        z, z1, z2 = two_atom_oracle(ell, a1, a2, w1, p)
        assert prof.zeta[i] == pytest.approx(z, abs=1e-10)
        assert prof.zeta1[i] == pytest.approx(z1, abs=1e-10)
        assert prof.zeta2[i] == pytest.approx(z2, abs=1e-10)


def test_derivatives_match_finite_differences(rng):
    # centered differences of zeta reproduce the analytic zeta', zeta''
    for _ in range(10):
        ens = random_atomic_ensemble(rng, allow_zero=False)
        dp = 0.05
        prof = zeta(moments(ens, np.arange(-2.0, 6.0 + dp / 2, dp)))
        z, z1, z2 = prof.zeta, prof.zeta1, prof.zeta2
        fd1 = (z[2:] - z[:-2]) / (2 * dp)
        fd2 = (z[2:] - 2 * z[1:-1] + z[:-2]) / dp**2
        tol = max(1e-6, 10 * dp**2)
        scale1 = np.maximum(1.0, np.abs(z1[1:-1]))
        scale2 = np.maximum(1.0, np.abs(z2[1:-1]))
        assert np.max(np.abs(fd1 - z1[1:-1]) / scale1) < tol
        assert np.max(np.abs(fd2 - z2[1:-1]) / scale2) < tol


def test_zeta_zero_is_exact(rng):
    for _ in range(20):
        ens = random_atomic_ensemble(rng, allow_zero=False)
        prof = zeta(moments(ens, np.arange(-1.0, 3.0, 0.5)))
        i0 = prof.index_of_zero()
        assert prof.zeta[i0] == 0.0


def test_scale_error_on_bad_ell():
    ens = IncrementEnsemble(0.5, np.array([1.0, 2.0]))
    tab = moments(ens, np.array([0.0, 1.0]))
    object.__setattr__(tab, "ell", 1.5)
    with pytest.raises(ScaleError):
        zeta(tab)


def test_degenerate_all_zero_ensemble_raises():
    ens = IncrementEnsemble(0.25, np.zeros(4))
    tab = moments(ens, np.array([0.0, 1.0, 2.0]))
    with pytest.raises(DomainError):
        zeta(tab)


# ------------------------------------------------------------- holder range


def test_holder_range_k41():
    ens = IncrementEnsemble(0.125, np.full(3, 0.125 ** (1.0 / 3.0)))
    prof = zeta(moments(ens, np.arange(-4.0, 8.5, 0.5)))
    h_min, h_max = holder_range(prof)
    assert h_min == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert h_max == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_holder_range_monofractal():
    spec = MonoFractalSpec(ell=2**-8, D=2.5, epsilon=1.0, seed=1, dims=1, n=2**14)
    ens = increments(gen_monofractal(spec), spec.ell, axis_directions(1)).compact()
    prof = zeta(moments(ens, np.arange(0.0, 8.25, 0.25)))
    h_min, _ = holder_range(prof)
    assert h_min == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_holder_range_quadratic():
    prof = quadratic_profile()
    h_min, h_max = holder_range(prof)
    assert h_min == pytest.approx(1.0 / 3.0 - 0.16, abs=1e-12)  # zeta'(8)
    assert h_max == pytest.approx(1.0 / 3.0 + 0.08, abs=1e-12)  # zeta'(-4)


# ----------------------------------------------------------- ratio bounds


def test_ratio_bounds_k41_exact():
    ens = IncrementEnsemble(0.125, np.full(3, 0.125 ** (1.0 / 3.0)))
    prof = zeta(moments(ens, np.arange(-2.0, 6.5, 0.5)))
    report = ratio_bounds_check(prof)
    assert report["pass"]
    assert report["worst_lower_margin"] == pytest.approx(0.0, abs=1e-12)


def test_ratio_bounds_monofractal_average_slope():
    spec = MonoFractalSpec(ell=2**-8, D=2.5, epsilon=1.0, seed=1, dims=1, n=2**14)
    ens = increments(gen_monofractal(spec), spec.ell, axis_directions(1)).compact()
    prof = zeta(moments(ens, np.arange(0.0, 24.5, 0.5)))
    report = ratio_bounds_check(prof)
    assert report["pass"]
    # zeta_p / p = 1/6 + 0.5/p approaches h_min = 1/6 from above
    assert report["avg_slope_at_top"] == pytest.approx(1.0 / 6.0 + 0.5 / 24.0, abs=1e-10)
    assert report["limit_gap_nonnegative"]


def test_ratio_bounds_random_ensembles(rng):
    for _ in range(50):
        ens = random_atomic_ensemble(rng)
        tab = moments(ens, np.arange(-2.0, 6.5, 0.5))
        try:
            prof = zeta(tab)
        except DomainError:
            continue
        if prof.p_grid.size < 2:
            continue
        assert ratio_bounds_check(prof)["pass"]


# ------------------------------------------------------------- endpoints


def test_classify_constant_magnitude_case5():
    ens = IncrementEnsemble(0.125, np.full(3, 0.5))
    prof = zeta(moments(ens, np.arange(-4.0, 8.5, 0.5)))
    records = classify_endpoints(prof)
    assert [r["case"] for r in records] == [5, 5]


def test_classify_random_field_lower_bound_case2():
    # the sign-randomized lower-bound curve has logarithmically diverging
    # slope: zeta' drifts by a fixed amount per octave of p
    prof = ref_random_profile(np.arange(0.5, 40.5, 0.5), ell=0.1)
    records = classify_endpoints(prof)
    rec_max = next(r for r in records if r["end"] == "max")
    assert rec_max["case"] == 2
    assert rec_max["zeta1_diverging"]


def test_classify_truncated_grid_case1():
    # consistent table whose moments blow up past p = 2 (heavy-tail proxy);
    # atoms close in value so the slope is settled before the truncation
    ens = IncrementEnsemble(0.1, np.array([0.8, 0.9]), np.array([0.5, 0.5]))
    base = moments(ens, np.arange(0.0, 3.5, 0.5))
    m, lg, lg2 = base.moments.copy(), base.log_moments.copy(), base.log2_moments.copy()
    m[-1], lg[-1], lg2[-1] = np.inf, np.inf, np.inf
    tab = MomentTable(
        ell=0.1,
        p_grid=base.p_grid,
        moments=m,
        log_moments=lg,
        log2_moments=lg2,
        zero_fraction=0.0,
        max_magnitude=0.9,
        min_magnitude=0.2,
    )
    prof = zeta(tab)
    assert math.isfinite(prof.p_max)
    rec_max = next(r for r in classify_endpoints(prof) if r["end"] == "max")
    assert rec_max["case"] == 1


def test_endpoint_json_roundtrip(tmp_path):
    ens = IncrementEnsemble(0.125, np.full(3, 0.5))
    prof = zeta(moments(ens, np.arange(-2.0, 4.5, 0.5)))
    path = tmp_path / "endpoints.json"
    endpoint_json(classify_endpoints(prof), path)
    loaded = json.loads(path.read_text())
    assert {r["end"] for r in loaded} == {"max", "min"}
    assert all(r["case"] in (1, 2, 3, 4, 5) for r in loaded)


def test_profile_csv(tmp_path):
    prof = quadratic_profile()
    path = tmp_path / "scaling.csv"
    prof.write_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "p,zeta,zeta1,zeta2"
