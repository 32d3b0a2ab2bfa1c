"""Correlation functions, energy spectra, and the power-law correspondence.

The radial correlation Gamma(l) = E - S2(l) (E the mean kinetic energy,
S2 the angle-averaged quarter second-order structure function) transforms
to the shell spectrum through

    E(kappa) = (2/pi) int_0^inf kappa l sin(kappa l) Gamma(l) dl,

where the 2/pi constant is fixed by the closure int_0^inf E = Gamma(0).
The oscillatory integral is evaluated with the cutoff decomposition: a C4
polynomial bump chi splits a near range, integrated by Gauss-Legendre
panels resolving every sine period, from a far range carried by the decay
model C (1+l)^-4, where four integrations by parts trade the oscillation
for a 1/kappa^3 prefactor. The inverse direction uses the bounded kernel

    S2(l) = int_0^inf E(kappa) (1 - sinc(kappa l)) dkappa

with a power-law continuation of the spectrum beyond the data grid.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ArgumentError,
    ConvergenceError,
    FitError,
    InconsistentInputError,
)
from .gridfield import GridField
from .scaling import _sanitize

#: Quintic-through-nonic smoothstep: s4(0)=0, s4(1)=1, four vanishing
#: derivatives at both ends. chi(x) = 1 - s4(2x - 1) on [1/2, 1].
SMOOTHSTEP_C4 = (126.0, -420.0, 540.0, -315.0, 70.0)

PANELS_PER_PERIOD = 10  # >= 8 keeps every sine period well resolved
_GL_X, _GL_W = np.polynomial.legendre.leggauss(7)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    c0, c1, c2, c3, c4 = SMOOTHSTEP_C4
    return t**5 * (c0 + t * (c1 + t * (c2 + t * (c3 + t * c4))))


def cutoff_bump(x) -> np.ndarray:
    """C4 bump: 1 on [0, 1/2], polynomial fall to 0 at 1, 0 beyond."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    mid = (x > 0.5) & (x < 1.0)
    out[mid] = 1.0 - _smoothstep(2.0 * x[mid] - 1.0)
    out[x >= 1.0] = 0.0
    return out


def _panel_quad(fn, a: float, b: float, wavelength: float,
                panels_per_period: int = PANELS_PER_PERIOD, min_panels: int = 16) -> float:
    """Gauss-Legendre panel quadrature resolving an oscillation wavelength."""
    if b <= a:
        return 0.0
    n = max(min_panels, int(math.ceil((b - a) / wavelength * panels_per_period)))
    edges = np.linspace(a, b, n + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fn(pts)
    contrib = (vals * _GL_W[None, :]).sum(axis=1) * half
    return math.fsum(contrib.tolist())


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class CorrelationCurve:
    """Gamma on an l-grid plus the matched decay-model coefficient."""

    ell_grid: np.ndarray
    gamma: np.ndarray
    energy: float  # Gamma(0)
    tail_coeff: float  # C in the continuation C (1+l)^-4 past the grid

    def __post_init__(self):
        ell = np.asarray(self.ell_grid, dtype=np.float64)
        g = np.asarray(self.gamma, dtype=np.float64)
        object.__setattr__(self, "ell_grid", ell)
        object.__setattr__(self, "gamma", g)
        if ell.ndim != 1 or ell.size < 4 or np.any(np.diff(ell) <= 0):
            raise ArgumentError("ell_grid must be strictly increasing with >= 4 points")
        if abs(ell[0]) > 1e-12:
            raise ArgumentError("ell_grid must start at 0 (Gamma(0) anchors the energy)")
        if abs(g[0] - self.energy) > 1e-12 * max(1.0, abs(self.energy)):
            raise InconsistentInputError("Gamma(0) must equal the total energy")

    @classmethod
    def from_values(cls, ell_grid, gamma) -> "CorrelationCurve":
        ell = np.asarray(ell_grid, dtype=np.float64)
        g = np.asarray(gamma, dtype=np.float64)
        energy = float(g[0])
        tail = float(g[-1]) * (1.0 + float(ell[-1])) ** 4
        return cls(ell, g, energy, tail)


def correlation_from_s2(ell_grid, s2, energy: float) -> CorrelationCurve:
    """Gamma(l) = E - S2(l); the grid is extended by the decay model.

    S2 here is the quarter angle-averaged second-order structure function,
    so 0 <= S2 <= 2E; larger values are inconsistent with the stated
    energy.
    """
    ell = np.asarray(ell_grid, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if np.any(s2 < -1e-12):
        raise InconsistentInputError("S2 must be nonnegative")
    if np.any(s2 > 2.0 * energy * (1.0 + 1e-12)):
        raise InconsistentInputError("S2 exceeds twice the total energy")
    if abs(ell[0]) > 1e-12:
        ell = np.concatenate([[0.0], ell])
        s2 = np.concatenate([[0.0], s2])
    return CorrelationCurve.from_values(ell, energy - s2)


def powerlaw_correlation(
    alpha: float, energy: float, c: float, ell0: float, n_points: int = 4097
) -> CorrelationCurve:
    """Smooth correlation with exact power-law structure function at small l.

    Gamma = (E - c l^alpha) * bump(l / ell0): the power law holds verbatim
    for l <= ell0/2 and the bump takes the curve C4-smoothly to zero,
    keeping the transform free of cutoff ringing in the fit band.
    """
    if not (0.0 < alpha < 2.0):
        raise ArgumentError("alpha must lie in (0, 2)")
    if c * ell0**alpha > energy:
        raise ArgumentError("power law exhausts the energy before the cutoff")
    ell = np.linspace(0.0, ell0, n_points)
    gamma = (energy - c * ell**alpha) * cutoff_bump(ell / ell0)
    return CorrelationCurve.from_values(ell, gamma)


@dataclass(frozen=True)
class SpectrumCurve:
    """Shell energy spectrum, optionally annotated with a power-law fit."""

    kappa_grid: np.ndarray
    E: np.ndarray
    energy: float | None = None
    exponent: float | None = None
    fit_range: tuple[float, float] | None = None
    fit_residual: float | None = None
    fit_ok: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "kappa_grid", np.asarray(self.kappa_grid, dtype=np.float64))
        object.__setattr__(self, "E", np.asarray(self.E, dtype=np.float64))

    @property
    def min_E(self) -> float:
        """Most negative value (quadrature noise is kept raw in exports)."""
        return float(np.min(self.E))

    def write_csv(self, path) -> None:
        in_fit = np.zeros(self.kappa_grid.size, dtype=int)
        if self.fit_range is not None:
            lo, hi = self.fit_range
            in_fit = ((self.kappa_grid >= lo) & (self.kappa_grid <= hi)).astype(int)
        with open(path, "w") as fh:
            fh.write("kappa,E,fit_flag\n")
            for i, k in enumerate(self.kappa_grid):
                fh.write(f"{k:.17g},{self.E[i]:.17g},{in_fit[i]}\n")

    def fit_json(self, path=None) -> str:
        payload = {
            "exponent": self.exponent,
            "range": self.fit_range,
            "residual": self.fit_residual,
            "ok": self.fit_ok,
        }
        text = json.dumps(_sanitize(payload), indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# --------------------------------------------------------------------------
# forward transform


def _tail_derivatives(coeff: float, ell: np.ndarray, order: int) -> np.ndarray:
    """m-th derivative of l * C (1+l)^-4 = C [(1+l)^-3 - (1+l)^-4]."""
    sign = (-1.0) ** order
    poch3 = math.prod(range(3, 3 + order)) if order else 1.0
    poch4 = math.prod(range(4, 4 + order)) if order else 1.0
    return coeff * sign * (
        poch3 * (1.0 + ell) ** (-3.0 - order) - poch4 * (1.0 + ell) ** (-4.0 - order)
    )


_S4_POLY = np.polynomial.Polynomial((0.0, 0.0, 0.0, 0.0, 0.0) + SMOOTHSTEP_C4)
_S4_DERIVS = [_S4_POLY.deriv(m) if m else _S4_POLY for m in range(5)]


def _one_minus_bump_derivs(x: np.ndarray, scale: float, order: int) -> np.ndarray:
    """m-th derivative of l -> 1 - bump(l / scale)."""
    t = 2.0 * (x / scale) - 1.0
    inside = (t > 0.0) & (t < 1.0)
    out = np.zeros_like(x)
    if order == 0:
        out[t >= 1.0] = 1.0
        out[inside] = _S4_DERIVS[0](t[inside])
    else:
        chain = (2.0 / scale) ** order
        out[inside] = _S4_DERIVS[order](t[inside]) * chain
    return out


def _far_integrand_fourth_derivative(coeff: float, scale: float):
    """(d/dl)^4 of [l * C (1+l)^-4 * (1 - bump(l/scale))], analytic."""

    def g4(ell: np.ndarray) -> np.ndarray:
        total = np.zeros_like(ell)
        for j in range(5):
            total += (
                math.comb(4, j)
                * _tail_derivatives(coeff, ell, 4 - j)
                * _one_minus_bump_derivs(ell, scale, j)
            )
        return total

    return g4


def spectrum_from_correlation(
    corr: CorrelationCurve,
    kappa_grid,
    panels_per_period: int = PANELS_PER_PERIOD,
) -> SpectrumCurve:
    """E(kappa) = (2/pi) int kappa l sin(kappa l) Gamma(l) dl.

    Near range [0, 2L] (L the grid end): cubic-spline data, bump-weighted,
    panel quadrature with ``panels_per_period`` panels per sine period.
    Far range [L, inf): decay model only, four integrations by parts, then
    the same panel quadrature on the absolutely convergent remainder.
    """
    _require_decay(corr)
    kappa = np.asarray(kappa_grid, dtype=np.float64).ravel()
    if np.any(kappa <= 0.0):
        raise ArgumentError("kappa grid must be positive")
    L = float(corr.ell_grid[-1])
    X = 2.0 * L
    spline = CubicSpline(corr.ell_grid, corr.gamma)
    C = corr.tail_coeff

    def gamma_ext(ell: np.ndarray) -> np.ndarray:
        ell = np.asarray(ell)
        out = np.empty_like(ell)
        data = ell <= L
        out[data] = spline(ell[data])
        out[~data] = C * (1.0 + ell[~data]) ** -4.0
        return out

    far_g4 = _far_integrand_fourth_derivative(C, X)
    ell_far = max(60.0, 12.0 * X)

    E = np.empty_like(kappa)
    for i, k in enumerate(kappa):
        wavelength = 2.0 * math.pi / k

        def near(ell, k=k):
            return k * ell * np.sin(k * ell) * gamma_ext(ell) * cutoff_bump(ell / X)

        # panel edges aligned with the data/tail junction at L
        val = _panel_quad(near, 0.0, L, wavelength, panels_per_period)
        val += _panel_quad(near, L, X, wavelength, panels_per_period)
        if C != 0.0:
            val += (
                _panel_quad(
                    lambda ell, k=k: np.sin(k * ell) * far_g4(ell),
                    L,
                    ell_far,
                    wavelength,
                    panels_per_period,
                )
                / k**3
            )
        E[i] = 2.0 / math.pi * val
    return SpectrumCurve(kappa, E, energy=corr.energy)


def _require_decay(corr: CorrelationCurve) -> None:
    """Reject tails whose envelope grows toward the grid end."""
    g = np.abs(corr.gamma)
    ell = corr.ell_grid
    L = ell[-1]
    mid = g[(ell >= 0.70 * L) & (ell <= 0.80 * L)]
    end = g[ell >= 0.90 * L]
    if mid.size and end.size:
        a = float(np.max(mid))
        b = float(np.max(end))
        if b > a * (1.0 + 1e-4) + 1e-12 * abs(corr.energy):
            raise ConvergenceError("correlation tail is not decaying")


# --------------------------------------------------------------------------
# field route


def spectrum_from_field(field: GridField, shell_width: float = 1.0) -> SpectrumCurve:
    """Shell-binned spectrum of the discrete Fourier transform.

    kappa is measured in integer wavenumbers (cycles per box side); shell
    j collects modes with |k| in [j*w - w/2, j*w + w/2) and is divided by
    the width so that sum E(kappa) * w recovers the total energy exactly
    (up to FFT roundoff).
    """
    if shell_width <= 0.0:
        raise ArgumentError("shell width must be positive")
    axes = tuple(range(field.dims))
    n = field.n
    uhat = np.fft.fftn(field.values, axes=axes) / n**field.dims
    power = 0.5 * np.sum(np.abs(uhat) ** 2, axis=-1)
    freqs = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers
    if field.dims == 3:
        kx, ky, kz = np.meshgrid(freqs, freqs, freqs, indexing="ij")
        kmag = np.sqrt(kx**2 + ky**2 + kz**2)
    else:
        kmag = np.abs(freqs)
    bins = np.rint(kmag / shell_width).astype(int)
    n_bins = int(bins.max()) + 1
    shell_sum = np.bincount(bins.ravel(), weights=power.ravel(), minlength=n_bins)
    kappa = np.arange(n_bins) * shell_width
    E = shell_sum / shell_width
    return SpectrumCurve(kappa, E, energy=field.energy())


# --------------------------------------------------------------------------
# inverse transform


def _powerlaw_tail_integral(A: float, beta: float, K: float, ell: float) -> float:
    """int_K^inf A k^-beta (1 - sinc(k l)) dk for beta > 1, via 3-term IBP."""
    X = K * ell
    m = beta + 1.0
    # int_X^inf x^-m sin x dx, asymptotic integration by parts
    osc = (
        X**-m * math.cos(X)
        + m * X ** (-m - 1.0) * math.sin(X)
        - m * (m + 1.0) * X ** (-m - 2.0) * math.cos(X)
    )
    return A * (K ** (1.0 - beta) / (beta - 1.0) - ell ** (beta - 1.0) * osc)


def s2_from_spectrum(
    spec: SpectrumCurve,
    ell_grid,
    panels_per_period: int = PANELS_PER_PERIOD,
) -> np.ndarray:
    """S2(l) = int E(kappa) (1 - sinc(kappa l)) dkappa over the grid + tail.

    E is interpolated log-log between positive grid points (exact for
    power laws); beyond the grid the last decade's fitted power law is
    integrated analytically. A non-integrable continuation (exponent
    >= -1) raises ConvergenceError.
    """
    ell_grid = np.asarray(ell_grid, dtype=np.float64).ravel()
    kappa = spec.kappa_grid
    E = np.maximum(spec.E, 0.0)  # negative noise carries no energy
    pos = kappa > 0.0
    kappa, E = kappa[pos], E[pos]
    if kappa.size < 2:
        raise ArgumentError("need at least two spectral points")

    def interp(k: np.ndarray) -> np.ndarray:
        out = np.zeros_like(k)
        inside = (k >= kappa[0]) & (k <= kappa[-1])
        ki = k[inside]
        j = np.clip(np.searchsorted(kappa, ki) - 1, 0, kappa.size - 2)
        k0, k1 = kappa[j], kappa[j + 1]
        e0, e1 = E[j], E[j + 1]
        vals = np.empty_like(ki)
        both = (e0 > 0.0) & (e1 > 0.0)
        t = np.where(k1 > k0, (np.log(ki) - np.log(k0)) / (np.log(k1) - np.log(k0)), 0.0)
        with np.errstate(divide="ignore"):
            vals[both] = np.exp(
                (1.0 - t[both]) * np.log(e0[both]) + t[both] * np.log(e1[both])
            )
        lin = ~both
        tl = (ki[lin] - k0[lin]) / np.where(k1[lin] > k0[lin], k1[lin] - k0[lin], 1.0)
        vals[lin] = (1.0 - tl) * e0[lin] + tl * e1[lin]
        out[inside] = vals
        return out

    tail_fit = _tail_powerlaw(kappa, E)
    out = np.empty_like(ell_grid)
    for i, ell in enumerate(ell_grid):
        wavelength = 2.0 * math.pi / ell

        def integrand(k, ell=ell):
            x = k * ell
            return interp(k) * (1.0 - np.sinc(x / math.pi))

        total = 0.0
        for a, b in zip(
            np.geomspace(kappa[0], kappa[-1], 40)[:-1],
            np.geomspace(kappa[0], kappa[-1], 40)[1:],
        ):
            total += _panel_quad(integrand, a, b, wavelength, panels_per_period, min_panels=4)
        if tail_fit is not None:
            A, beta = tail_fit
            total += _powerlaw_tail_integral(A, beta, float(kappa[-1]), float(ell))
        out[i] = total
    return out


def _tail_powerlaw(kappa: np.ndarray, E: np.ndarray):
    """(amplitude, beta) of the last-decade fit, None for compact spectra."""
    lo = kappa[-1] / 10.0
    sel = (kappa >= lo) & (E > 0.0)
    if np.count_nonzero(sel) < 3:
        if E[-1] > 0.0:
            raise ConvergenceError("spectrum tail cannot be continued")
        return None
    fit = slope_fit(kappa[sel], E[sel])
    beta = -fit.exponent
    if beta <= 1.0:
        raise ConvergenceError(f"spectrum tail ~ kappa^{fit.exponent:.3f} is not integrable")
    A = math.exp(fit.intercept)
    return A, beta


# --------------------------------------------------------------------------
# power-law fitting


@dataclass(frozen=True)
class FitResult:
    exponent: float
    residual: float  # RMS of log deviation
    intercept: float
    n_points: int


def slope_fit(x, y, fit_range: tuple[float, float] | None = None) -> FitResult:
    """Least-squares slope on (ln x, ln y) inside the range."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if fit_range is not None:
        lo, hi = fit_range
        sel = (x >= lo) & (x <= hi)
        x, y = x[sel], y[sel]
    if x.size < 5:
        raise FitError(f"need >= 5 points in range, got {x.size}")
    if np.any(y <= 0.0) or np.any(x <= 0.0):
        raise FitError("power-law fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    sol, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ sol
    return FitResult(
        exponent=float(sol[0]),
        residual=float(np.sqrt(np.mean(resid**2))),
        intercept=float(sol[1]),
        n_points=int(x.size),
    )


def default_fit_band(kappa_grid) -> tuple[float, float]:
    """The [8, 80] decade rescaled to the resolved wavenumber range."""
    kappa = np.asarray(kappa_grid, dtype=np.float64)
    top = float(np.max(kappa))
    factor = top / 128.0
    lo = max(8.0 * factor, float(np.min(kappa[kappa > 0.0])))
    return lo, min(80.0 * factor, top)


def fit_powerlaw(
    curve: SpectrumCurve,
    fit_range: tuple[float, float] | None = None,
    residual_flag: float = 0.5,
) -> SpectrumCurve:
    """Attach a power-law fit to the curve; flag fits with large residual."""
    if fit_range is None:
        fit_range = default_fit_band(curve.kappa_grid)
    sel = (curve.kappa_grid >= fit_range[0]) & (curve.kappa_grid <= fit_range[1])
    try:
        fit = slope_fit(curve.kappa_grid[sel], curve.E[sel])
    except FitError:
        return dataclasses.replace(
            curve, exponent=None, fit_range=fit_range, fit_residual=None, fit_ok=False
        )
    return dataclasses.replace(
        curve,
        exponent=fit.exponent,
        fit_range=fit_range,
        fit_residual=fit.residual,
        fit_ok=bool(fit.residual <= residual_flag),
    )
