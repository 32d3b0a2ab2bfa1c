"""Multifractal spectrum d_h via the discrete Legendre transform.

d_h = inf_p (3 + h p - zeta_p) over the domain grid of the profile; the
inverse transform zeta_p = inf_h (3 + p h - d_h) reproduces the concave
hull. Since the objective is affine in h, the discrete transform is exact
at tangency points, which makes the correspondence with the diagonal
dimensions D_p (at h = zeta'_p) machine-checkable to roundoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import IncrementEnsemble
from .errors import ArgumentError, DomainError, InternalConsistencyError
from .scaling import ScalingProfile, _sanitize, holder_range

TIE_TOL = 1e-12


@dataclass(frozen=True)
class MfrSpectrum:
    """Spectrum values on an h-grid plus the minimizing order per point."""

    h_grid: np.ndarray
    d_h: np.ndarray
    argmin_p: np.ndarray
    h_min: float
    h_max: float
    peak_h: float | None  # zeta'_0 where available
    in_range: np.ndarray  # False where h fell outside [h_min, h_max]

    def __post_init__(self):
        for name in ("h_grid", "d_h", "argmin_p", "in_range"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("h,d_h,argmin_p\n")
            for i, h in enumerate(self.h_grid):
                fh.write(f"{h:.17g},{self.d_h[i]:.17g},{self.argmin_p[i]:.17g}\n")

    def to_json(self, path=None) -> str:
        payload = {
            "h_grid": self.h_grid,
            "d_h": self.d_h,
            "argmin_p": self.argmin_p,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "peak_h": self.peak_h,
            "in_range": self.in_range,
        }
        text = json.dumps(_sanitize(payload), indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _discrete_inf(coeff: np.ndarray, values: np.ndarray, orders: np.ndarray):
    """Row-wise min of (3 + coeff*orders - values) with ties to smaller |order|."""
    objective = 3.0 + coeff[:, None] * orders[None, :] - values[None, :]
    best = np.min(objective, axis=1)
    out_val = np.empty(coeff.size)
    out_arg = np.empty(coeff.size)
    for i in range(coeff.size):
        tol = TIE_TOL * max(1.0, abs(best[i]))
        tied = np.where(objective[i] <= best[i] + tol)[0]
        pick = tied[np.argmin(np.abs(orders[tied]))]  # ties: smaller |order|
        out_val[i] = objective[i, pick]
        out_arg[i] = orders[pick]
    return out_val, out_arg


def legendre(prof: ScalingProfile, h_grid) -> MfrSpectrum:
    """Spectrum d_h = min over the domain p-grid of (3 + h p - zeta_p).

    Values of h outside [h_min, h_max] are admitted (the infimum then sits
    at a boundary order) but flagged via ``in_range``.
    """
    h = np.asarray(h_grid, dtype=np.float64).ravel()
    if prof.p_grid.size == 0:
        raise DomainError("empty profile domain")
    d, arg = _discrete_inf(h, prof.zeta, prof.p_grid)
    h_min, h_max = holder_range(prof)
    in_range = (h >= h_min - 1e-12) & (h <= h_max + 1e-12)
    return MfrSpectrum(h, d, arg, h_min, h_max, prof.zeta1_at_zero, in_range)


def inverse_legendre(spec: MfrSpectrum, p_grid) -> np.ndarray:
    """zeta_p = min over the h-grid of (3 + p h - d_h) (concave hull)."""
    p = np.asarray(p_grid, dtype=np.float64).ravel()
    if spec.h_grid.size == 0:
        raise DomainError("empty spectrum")
    z, _ = _discrete_inf(p, spec.d_h, spec.h_grid)
    return z


def dh_from_Dp(prof: ScalingProfile, D_p: np.ndarray, check_tol: float = 1e-6) -> MfrSpectrum:
    """Parametric spectrum {(zeta'_p, D_p)}; must agree with the transform.

    The transform evaluated at h = zeta'_p attains its minimum at p itself
    (tangency), so both routes coincide up to roundoff wherever defined.
    """
    D_p = np.asarray(D_p, dtype=np.float64)
    if D_p.shape != prof.p_grid.shape:
        raise ArgumentError("D_p must live on the profile grid")
    via_transform = legendre(prof, prof.zeta1)
    gap = np.abs(via_transform.d_h - D_p)
    worst = float(np.max(gap))
    if worst > check_tol * max(1.0, float(np.max(np.abs(D_p)))):
        raise InternalConsistencyError(
            f"parametric spectrum deviates from the transform by {worst:.3e}"
        )
    order = np.argsort(prof.zeta1, kind="stable")
    return MfrSpectrum(
        prof.zeta1[order],
        D_p[order],
        prof.p_grid[order],
        via_transform.h_min,
        via_transform.h_max,
        prof.zeta1_at_zero,
        np.ones(prof.p_grid.size, dtype=bool),
    )


def active_region_bound_check(
    ens: IncrementEnsemble,
    prof: ScalingProfile,
    h: float,
    c: float,
    C: float,
) -> dict:
    """Measure the band {c l^h <= |f| <= C l^h} against its spectral bound.

    The Chebyshev step bounds the measure by K * l^{3 - d_h} with
    K = c^{-p*} when the minimizing order p* is nonnegative (lower cutoff
    active) and K = C^{-p*} otherwise (upper cutoff active).
    """
    if not (0.0 < c < C):
        raise ArgumentError("need 0 < c < C")
    ell = ens.ell
    spec = legendre(prof, np.array([h]))
    d_h = float(spec.d_h[0])
    p_star = float(spec.argmin_p[0])
    K = c ** (-p_star) if p_star >= 0.0 else C ** (-p_star)
    level = ell**h
    f = ens.magnitudes
    w = ens.weight_array()
    mask = (f >= c * level) & (f <= C * level)
    measure = float(np.sum(w[mask]))
    bound = K * ell ** (3.0 - d_h)
    return {
        "h": h,
        "d_h": d_h,
        "argmin_p": p_star,
        "measure": measure,
        "bound": bound,
        "constant": K,
        "pass": bool(measure <= bound * (1.0 + 1e-9) + 1e-15),
    }


def spectrum_width_identity(
    prof: ScalingProfile, D_p: np.ndarray
) -> dict:
    """Check h_max - h_min against the total intermittency correction.

    On a finite domain [a, b] the exact (integration-by-parts) form is

        h_max - h_min = int_a^b (3 - D_s)/s^2 ds
                        - (D_b - 3)/b + (D_a - 3)/a,

    whose boundary terms vanish as the domain bounds grow, recovering the
    asymptotic statement without them.
    """
    from .volumetrics import dimension_integrand, quadrature_error_estimate

    p = prof.p_grid
    D = np.asarray(D_p, dtype=np.float64)
    a, b = float(p[0]), float(p[-1])
    if a >= 0.0 or b <= 0.0:
        raise DomainError("width identity needs a domain straddling 0")
    h_min, h_max = holder_range(prof)
    g = -dimension_integrand(p, D, prof.zeta2_at_zero)  # (3 - D_s)/s^2
    integral = float(np.trapezoid(g, p))
    corr_hi = -(D[-1] - 3.0) / b
    corr_lo = (D[0] - 3.0) / a
    corrected = integral + corr_hi + corr_lo
    width = h_max - h_min
    quad = quadrature_error_estimate(p, g)
    return {
        "width": width,
        "integral": integral,
        "boundary_correction": corr_hi + corr_lo,
        "corrected": corrected,
        "residual": width - corrected,
        "quadrature_estimate": quad,
        "pass": bool(abs(width - corrected) <= max(quad, 1e-8 * max(1.0, abs(width)))),
    }
