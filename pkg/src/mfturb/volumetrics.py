"""Volume factors, intermittency dimensions, active thresholds, and the
reconstruction integrals that tie them back to the scaling exponents.

Central objects, all per scale l < 1 and computed in log space (orders up
to p = 12 at scales down to 2^-10 overflow naive powers):

    V_{q,p} = <|f|^q>^{p/(p-q)} / <|f|^p>^{q/(p-q)}     (q,p)-volume factor
    D_{q,p} = 3 - log_l V_{q,p}                          dimension
    V_p     = lim_{q->p} V_{q,p} = <|f|^p> exp(-<|f|^p ln|f|^p>/<|f|^p>)
    D_p     = 3 - log_l V_p = 3 - zeta_p + p zeta'_p
    s_{q,p} = (<|f|^q>/<|f|^p>)^{1/(q-p)}                active threshold
    s_p     = exp(<|f|^p ln|f|>/<|f|^p>)

The diagonal family determines everything: the correction integral
I_p = p * int_0^p (D_s - 3)/s^2 ds rebuilds zeta_p = p zeta'_0 + I_p, and
the full two-parameter dimension family is restored by the same integrand.
The integrand is extended continuously through s = 0 with the value
zeta''_0 / 2 (Taylor expansion of D_s - 3 = -zeta_s + s zeta'_s).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import IncrementEnsemble, MomentTable, domain_mask, moments
from .errors import (
    ArgumentError,
    DomainError,
    InconsistentInputError,
    InternalConsistencyError,
    ScaleError,
)
from .scaling import ScalingProfile, _sanitize

IDENTITY_TOL = 1e-9
REL_TOL = 1e-10
DIAGONAL_PROBE = 1e-4


def _ln_moment(tab: MomentTable, p: float) -> float:
    i = tab.index_of(p)
    if not tab.finite_mask()[i]:
        raise DomainError(f"moment at p={p} is not finite")
    return math.log(tab.moments[i])


def ln_volume_factor(tab: MomentTable, q: float, p: float) -> float:
    if q == p:
        raise ArgumentError("q == p: use active_volume for the diagonal limit")
    lnm_q = _ln_moment(tab, q)
    lnm_p = _ln_moment(tab, p)
    return (p * lnm_q - q * lnm_p) / (p - q)


def volume_factor(tab: MomentTable, q: float, p: float) -> float:
    """(q,p)-volume factor; equals the active-set measure for two-level fields."""
    return math.exp(ln_volume_factor(tab, q, p))


def dimension(tab: MomentTable, q: float, p: float) -> float:
    """D_{q,p} via the volume factor, cross-checked against the exponent form.

    The second route 3 - (p zeta_q - q zeta_p)/(p - q) is algebraically
    identical, so any disagreement beyond tolerance flags a moment bug.
    """
    if not (0.0 < tab.ell < 1.0):
        raise ScaleError(f"ell={tab.ell} leaves no valid log base")
    ln_ell = math.log(tab.ell)
    d1 = 3.0 - ln_volume_factor(tab, q, p) / ln_ell
    z_q = _ln_moment(tab, q) / ln_ell
    z_p = _ln_moment(tab, p) / ln_ell
    d2 = 3.0 - (p * z_q - q * z_p) / (p - q)
    if abs(d1 - d2) > IDENTITY_TOL * max(1.0, abs(d1)):
        raise InternalConsistencyError(
            f"D_(q,p) routes disagree: {d1} vs {d2} at (q={q}, p={p})"
        )
    return d1


def _diag_stats(tab: MomentTable, p: float) -> tuple[float, float]:
    """(ln m_p, mu_p) with mu_p = <|f|^p ln|f|>/<|f|^p>."""
    i = tab.index_of(p)
    if not tab.finite_mask()[i]:
        raise DomainError(f"moments at p={p} are not finite")
    return math.log(tab.moments[i]), tab.log_moments[i] / tab.moments[i]


def active_volume(
    tab: MomentTable, p: float, ens: IncrementEnsemble | None = None
) -> float:
    """Diagonal volume V_p = <|f|^p> exp(-p <|f|^p ln|f|>/<|f|^p>).

    Always asserts the identity D_p = 3 - zeta_p + p zeta'_p. When the
    originating ensemble is supplied, also witnesses the diagonal limit
    numerically: the Richardson average of V_{p+d,p} and V_{p-d,p} at
    d = 1e-4 must agree with V_p within 1e-6 relative.
    """
    lnm, mu = _diag_stats(tab, p)
    ln_vp = lnm - p * mu
    _assert_dimension_identity(tab, p, ln_vp)
    if ens is not None:
        _assert_diagonal_limit(ens, tab.p_grid, p, ln_vp)
    return math.exp(ln_vp)


def dimension_p(tab: MomentTable, p: float, ens: IncrementEnsemble | None = None) -> float:
    """D_p = 3 - log_l V_p."""
    if not (0.0 < tab.ell < 1.0):
        raise ScaleError(f"ell={tab.ell} leaves no valid log base")
    lnm, mu = _diag_stats(tab, p)
    ln_vp = lnm - p * mu
    _assert_dimension_identity(tab, p, ln_vp)
    if ens is not None:
        _assert_diagonal_limit(ens, tab.p_grid, p, ln_vp)
    return 3.0 - ln_vp / math.log(tab.ell)


def _assert_dimension_identity(tab: MomentTable, p: float, ln_vp: float) -> None:
    ln_ell = math.log(tab.ell)
    lnm, mu = _diag_stats(tab, p)
    d_direct = 3.0 - ln_vp / ln_ell
    z = lnm / ln_ell
    z1 = mu / ln_ell
    d_identity = 3.0 - z + p * z1
    if abs(d_direct - d_identity) > IDENTITY_TOL * max(1.0, abs(d_direct)):
        raise InternalConsistencyError(
            f"D_p identity broken at p={p}: {d_direct} vs {d_identity}"
        )


def _assert_diagonal_limit(
    ens: IncrementEnsemble, p_grid: np.ndarray, p: float, ln_vp: float
) -> None:
    d = DIAGONAL_PROBE
    probes = sorted({p - d, p, p + d})
    tab = moments(ens, np.asarray(probes))
    ln_plus = ln_volume_factor(tab, p + d, p)
    ln_minus = ln_volume_factor(tab, p - d, p)
    # the one-sided limits differ by O(d); their average cancels the
    # leading term (Richardson)
    ln_avg = 0.5 * (ln_plus + ln_minus)
    if abs(ln_avg - ln_vp) > 1e-6 * max(1.0, abs(ln_vp)):
        raise InternalConsistencyError(
            f"diagonal limit fails at p={p}: {ln_avg} vs {ln_vp}"
        )


def threshold(tab: MomentTable, q: float, p: float) -> float:
    """s_{q,p} = (<|f|^q>/<|f|^p>)^{1/(q-p)}; bounded by the max magnitude."""
    if q == p:
        raise ArgumentError("q == p: use threshold_p for the diagonal limit")
    ln_s = (_ln_moment(tab, q) - _ln_moment(tab, p)) / (q - p)
    s = math.exp(ln_s)
    if s > tab.max_magnitude * (1.0 + 1e-12) + 1e-300:
        raise InternalConsistencyError(
            f"s_(q,p)={s} exceeds the maximum magnitude {tab.max_magnitude}"
        )
    return s


def threshold_p(tab: MomentTable, p: float) -> float:
    """Diagonal threshold s_p = exp(<|f|^p ln|f|>/<|f|^p>)."""
    _, mu = _diag_stats(tab, p)
    s = math.exp(mu)
    if s > tab.max_magnitude * (1.0 + 1e-12) + 1e-300:
        raise InternalConsistencyError(
            f"s_p={s} exceeds the maximum magnitude {tab.max_magnitude}"
        )
    return s


def restore_threshold(r_grid, ln_s_r, q: float, p: float) -> float:
    """Rebuild s_{q,p} from the diagonal curve: geometric mean of s_r on [p, q].

    Trapezoid quadrature of ln s_r over [min(p,q), max(p,q)], with linear
    interpolation for fractional end panels.
    """
    r = np.asarray(r_grid, dtype=np.float64)
    y = np.asarray(ln_s_r, dtype=np.float64)
    if q == p:
        raise ArgumentError("q == p leaves nothing to restore")
    lo, hi = min(p, q), max(p, q)
    if lo < r[0] - 1e-12 or hi > r[-1] + 1e-12:
        raise DomainError(f"[{lo}, {hi}] escapes the threshold grid [{r[0]}, {r[-1]}]")
    # (1/(q-p)) int_p^q equals (1/(hi-lo)) int_lo^hi for either order,
    # matching the symmetry s_(q,p) = s_(p,q).
    integral = _trapezoid_on(r, y, lo, hi)
    return math.exp(integral / (hi - lo))


def _trapezoid_on(x: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid integral of the sampled curve restricted to [lo, hi]."""
    if hi <= lo:
        return 0.0
    inside = (x > lo) & (x < hi)
    xs = np.concatenate([[lo], x[inside], [hi]])
    ys = np.concatenate([[np.interp(lo, x, y)], y[inside], [np.interp(hi, x, y)]])
    return float(np.trapezoid(ys, xs))


def quadrature_error_estimate(x: np.ndarray, y: np.ndarray) -> float:
    """Crude trapezoid error bound: step^2 * max |second difference| * range."""
    if x.size < 3:
        return 0.0
    d2 = np.abs(np.diff(y, 2))
    h = float(np.max(np.diff(x)))
    return float(h * np.max(d2) * (x[-1] - x[0])) if d2.size else 0.0


def dimension_integrand(
    s_grid, D_values, curvature_at_zero: float | None = None
) -> np.ndarray:
    """(D_s - 3)/s^2 with the removable singularity at s = 0 filled in.

    The continuous extension at 0 equals zeta''_0 / 2; when no curvature
    is supplied it is borrowed from the nearest nonzero grid point.
    """
    s = np.asarray(s_grid, dtype=np.float64)
    D = np.asarray(D_values, dtype=np.float64)
    out = np.empty_like(s)
    nz = np.abs(s) > 1e-12
    out[nz] = (D[nz] - 3.0) / s[nz] ** 2
    if np.any(~nz):
        if curvature_at_zero is not None:
            fill = 0.5 * curvature_at_zero
        elif np.any(nz):
            j = int(np.argmin(np.abs(s[~nz][:, None] - s[nz][None, :]).min(axis=0)))
            fill = out[nz][j]
        else:
            raise DomainError("cannot extend the integrand on an all-zero grid")
        out[~nz] = fill
    return out


def _require_D0(s: np.ndarray, D: np.ndarray, tol: float = 1e-6) -> None:
    i = int(np.argmin(np.abs(s)))
    if abs(s[i]) < 1e-12 and abs(D[i] - 3.0) > tol:
        raise InconsistentInputError(f"D(0) = {D[i]} deviates from 3 beyond {tol}")


def intermittency_correction(
    s_grid, D_values, p: float, curvature_at_zero: float | None = None
) -> float:
    """I_p = p * int_0^p (D_s - 3)/s^2 ds (vanishes in the Kolmogorov regime)."""
    s = np.asarray(s_grid, dtype=np.float64)
    D = np.asarray(D_values, dtype=np.float64)
    lo, hi = (0.0, p) if p >= 0.0 else (p, 0.0)
    if lo < s[0] - 1e-12 or hi > s[-1] + 1e-12:
        raise DomainError(f"D-grid does not cover [{lo}, {hi}]")
    _require_D0(s, D)
    g = dimension_integrand(s, D, curvature_at_zero)
    integral = _trapezoid_on(s, g, lo, hi)
    return p * integral * (1.0 if p >= 0.0 else -1.0)


def reconstruct_zeta(
    s_grid, D_values, zeta1_at_0: float, p: float, curvature_at_zero: float | None = None
) -> float:
    """zeta_p = p zeta'_0 + I_p, solving the dimension identity as an ODE."""
    return p * zeta1_at_0 + intermittency_correction(s_grid, D_values, p, curvature_at_zero)


def reconstruct_Dqp(
    s_grid, D_values, q: float, p: float, curvature_at_zero: float | None = None
) -> tuple[float, bool]:
    """Rebuild D_{q,p} from the diagonal curve.

    D_{q,p} = 3 + (qp/(q-p)) * int_p^q (D_s - 3)/s^2 ds. Returns the value
    and a flag marking intervals that cross s = 0, where the integrand is
    carried through the singularity by its continuous extension.
    """
    if q == p:
        raise ArgumentError("q == p: the reconstruction needs a nontrivial interval")
    s = np.asarray(s_grid, dtype=np.float64)
    D = np.asarray(D_values, dtype=np.float64)
    lo, hi = min(p, q), max(p, q)
    if lo < s[0] - 1e-12 or hi > s[-1] + 1e-12:
        raise DomainError(f"D-grid does not cover [{lo}, {hi}]")
    cross_sign = lo < 0.0 < hi
    if cross_sign:
        _require_D0(s, D)
    g = dimension_integrand(s, D, curvature_at_zero)
    integral = _trapezoid_on(s, g, lo, hi)
    if q < p:
        integral = -integral
    return 3.0 + q * p / (q - p) * integral, cross_sign


@dataclass(frozen=True)
class VolumetricReport:
    """All volumetric curves of one ensemble at one scale."""

    ell: float
    p_grid: np.ndarray
    V_qp: np.ndarray  # matrix over (q, p); diagonal filled with V_p
    D_qp: np.ndarray
    V_p: np.ndarray
    D_p: np.ndarray
    s_p: np.ndarray
    s_qp: np.ndarray
    I_p: np.ndarray  # NaN where [0, p] leaves the domain
    flatness: float  # 1 / V_{4,2}; NaN when the grid lacks p = 2 or 4
    tolerances: dict

    def to_json(self, path=None) -> str:
        payload = {
            "ell": self.ell,
            "p_grid": self.p_grid,
            "V_qp": self.V_qp.ravel(),
            "D_qp": self.D_qp.ravel(),
            "V_p": self.V_p,
            "D_p": self.D_p,
            "s_p": self.s_p,
            "I_p": self.I_p,
            "flatness": self.flatness,
            "tolerances": self.tolerances,
        }
        text = json.dumps(_sanitize(payload), indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("p,V_p,D_p,s_p,I_p\n")
            for i, p in enumerate(self.p_grid):
                fh.write(
                    f"{p:.17g},{self.V_p[i]:.17g},{self.D_p[i]:.17g},"
                    f"{self.s_p[i]:.17g},{self.I_p[i]:.17g}\n"
                )


def build_report(
    tab: MomentTable,
    prof: ScalingProfile,
    ens: IncrementEnsemble | None = None,
    limit_check_orders: tuple[float, ...] = (),
) -> VolumetricReport:
    """Evaluate the full (q,p) families on the profile's domain grid.

    Structural bounds (symmetry, V_{q,0} = 1, the sign-dependent V4 bounds,
    V_p = l^{3-D_p}, s_p^p V_p = <|f|^p>) are asserted here; they are
    theorems, so violations raise.
    """
    ln_ell = math.log(tab.ell)
    p = prof.p_grid
    k = p.size
    idx = [tab.index_of(v) for v in p]
    lnm = np.array([math.log(tab.moments[i]) for i in idx])
    mu = np.array([tab.log_moments[i] / tab.moments[i] for i in idx])

    ln_V_qp = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            if a == b:
                ln_V_qp[a, b] = lnm[b] - p[b] * mu[b]
            else:
                q_, p_ = p[a], p[b]
                ln_V_qp[a, b] = (p_ * lnm[a] - q_ * lnm[b]) / (p_ - q_)
    V_qp = np.exp(ln_V_qp)
    D_qp = 3.0 - ln_V_qp / ln_ell

    ln_V_p = lnm - p * mu
    V_p = np.exp(ln_V_p)
    D_p = 3.0 - ln_V_p / ln_ell

    s_p = np.exp(mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        ln_s_qp = (lnm[:, None] - lnm[None, :]) / (p[:, None] - p[None, :])
    for a in range(k):
        ln_s_qp[a, a] = mu[a]
    s_qp = np.exp(ln_s_qp)

    # --- structural assertions -------------------------------------------
    if not np.allclose(ln_V_qp, ln_V_qp.T, atol=1e-12, rtol=1e-12):
        raise InternalConsistencyError("V_(q,p) symmetry broken")
    sign = np.sign(p[:, None] * p[None, :])
    if np.any(ln_V_qp[sign > 0] > 1e-12) or np.any(ln_V_qp[sign < 0] < -1e-12):
        raise InternalConsistencyError("V4 sign bounds broken")
    zero_rows = np.abs(p) < 1e-12
    if np.any(zero_rows):
        if not np.all(np.abs(ln_V_qp[zero_rows, :]) < 1e-12):
            raise InternalConsistencyError("V_(q,0) = 1 broken")
        if np.any(np.abs(D_qp[zero_rows, :] - 3.0) > 1e-9):
            raise InternalConsistencyError("D_(q,0) = 3 broken")
    # V_p = l^(3 - D_p) and s_p^p V_p = <|f|^p>, in log space
    if np.any(np.abs(ln_V_p - (3.0 - D_p) * ln_ell) > REL_TOL * np.maximum(1.0, np.abs(ln_V_p))):
        raise InternalConsistencyError("V_p = l^(3-D_p) broken")
    if np.any(np.abs(p * mu + ln_V_p - lnm) > REL_TOL * np.maximum(1.0, np.abs(lnm))):
        raise InternalConsistencyError("s_p^p V_p = <|f|^p> broken")
    identity_gap = np.abs(D_p - (3.0 - prof.zeta + p * prof.zeta1))
    if np.any(identity_gap > IDENTITY_TOL * np.maximum(1.0, np.abs(D_p))):
        raise InternalConsistencyError("D_p = 3 - zeta_p + p zeta'_p broken")
    if ens is not None:
        for v in limit_check_orders:
            active_volume(tab, float(v), ens)

    # intermittency correction where [0, p] is inside the domain
    I_p = np.full(k, np.nan)
    has_zero = prof.index_of_zero() is not None
    if has_zero:
        z2_0 = prof.zeta2_at_zero
        for i, v in enumerate(p):
            try:
                I_p[i] = intermittency_correction(p, D_p, float(v), z2_0)
            except (DomainError, InconsistentInputError):
                pass

    try:
        flatness = 1.0 / volume_factor(tab, 4.0, 2.0)
    except (ArgumentError, DomainError):
        flatness = math.nan

    tolerances = {
        "identity": IDENTITY_TOL,
        "relative": REL_TOL,
        "diagonal_probe": DIAGONAL_PROBE,
    }
    return VolumetricReport(
        tab.ell, p, V_qp, D_qp, V_p, D_p, s_p, s_qp, I_p, flatness, tolerances
    )
