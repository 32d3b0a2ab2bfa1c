"""Velocity-increment ensembles and raw moments.

This module is the single home of the averaging bracket <.>: an
IncrementEnsemble is a weighted sample of increment magnitudes
|u(x + l e) - u(x)| over grid points and directions, and ``moments``
evaluates <|f|^p>, <|f|^p ln|f|> and <|f|^p (ln|f|)^2> on a p-grid in one
pass.

Conventions (fixed here, relied on everywhere downstream):
  * 0^0 = 1 when evaluating <|f|^0>, so the p = 0 moment is exactly 1;
  * 0^p = +inf for p < 0: ensembles containing zeros have infinite
    negative-order moments, recorded as non-finite data, not errors;
  * magnitudes below ``ZERO_FLOOR`` are treated as exact zeros so that
    log-weighted sums are never contaminated by ln of a denormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, ResolutionError
from .gridfield import Direction, GridField

ZERO_FLOOR = 1e-300

# Order-independence contract for the accumulation (relative).
SUM_TOL = 1e-13

_CHUNK = 4096


def compensated_sum(a: np.ndarray) -> float:
    """Sum with pairwise chunk partials combined by exact fsum."""
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    if a.size <= _CHUNK:
        return math.fsum(a.tolist())
    pad = (-a.size) % _CHUNK
    if pad:
        a = np.concatenate([a, np.zeros(pad)])
    partials = a.reshape(-1, _CHUNK).sum(axis=1)
    return math.fsum(partials.tolist())


@dataclass(frozen=True)
class IncrementEnsemble:
    """Weighted sample of increment magnitudes at one scale.

    ``weights`` is None for uniform weighting (1/len each); explicit
    weights must sum to 1 within 1e-12. ``dir_blocks`` records the slice
    of samples contributed by each direction when the ensemble came from
    a field sweep; compacted ensembles drop it.
    """

    ell: float
    magnitudes: np.ndarray
    weights: np.ndarray | None = None
    ell_eff: np.ndarray | None = None  # effective scale per direction
    scale_error: float = 0.0  # max |ell_eff - ell| / ell over directions
    dir_blocks: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64).ravel()
        object.__setattr__(self, "magnitudes", mags)
        if not (0.0 < self.ell <= 0.5):
            raise ArgumentError(f"ell must lie in (0, 1/2], got {self.ell}")
        if mags.size == 0:
            raise ArgumentError("empty ensemble")
        if not np.all(np.isfinite(mags)) or np.any(mags < 0.0):
            raise ArgumentError("magnitudes must be finite and nonnegative")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64).ravel()
            object.__setattr__(self, "weights", w)
            if w.shape != mags.shape:
                raise ArgumentError("weights shape mismatch")
            if np.any(w < 0.0):
                raise ArgumentError("weights must be nonnegative")
            total = compensated_sum(w)
            if abs(total - 1.0) > 1e-12:
                raise ArgumentError(f"weights sum to {total}, not 1")

    def __len__(self) -> int:
        return self.magnitudes.size

    def weight_array(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.full(len(self), 1.0 / len(self))

    def compact(self) -> "IncrementEnsemble":
        """Merge exactly-equal magnitudes into weighted atoms."""
        values, inverse = np.unique(self.magnitudes, return_inverse=True)
        w = np.bincount(inverse, weights=self.weight_array(), minlength=values.size)
        w = w / compensated_sum(w)
        return IncrementEnsemble(self.ell, values, w, self.ell_eff, self.scale_error)

    def scaled(self, lam: float) -> "IncrementEnsemble":
        """Magnitudes multiplied by lam > 0 (for homogeneity checks)."""
        if lam <= 0.0:
            raise ArgumentError("scale factor must be positive")
        return IncrementEnsemble(
            self.ell, self.magnitudes * lam, self.weights, self.ell_eff, self.scale_error
        )

    def direction_moment(self, p: float) -> np.ndarray:
        """Per-direction <|f|^p>, available for field-built ensembles."""
        if self.dir_blocks is None:
            raise ArgumentError("ensemble has no per-direction structure")
        w = self.weight_array()
        out = []
        for lo, hi in self.dir_blocks:
            block_w = w[lo:hi]
            out.append(
                compensated_sum(block_w * self.magnitudes[lo:hi] ** p)
                / compensated_sum(block_w)
            )
        return np.array(out)


def increments(
    field: GridField,
    ell: float,
    directions: list[Direction],
    stride: int = 1,
) -> IncrementEnsemble:
    """Increment magnitudes |u(x + l e) - u(x)| over the grid and directions.

    The displacement l*e is rounded to the nearest lattice vector per
    direction (the induced relative scale error is recorded); indexing
    wraps periodically; weights are uniform over (point, direction).
    """
    if not directions:
        raise ArgumentError("empty direction set")
    if not (0.0 < ell <= 0.5):
        raise ArgumentError(f"ell must lie in (0, 1/2], got {ell}")
    n = field.n
    if ell * n < 1.0 - 1e-9:
        raise ResolutionError(f"ell={ell} below grid resolution 1/{n}")
    if stride < 1 or n % stride != 0:
        raise ArgumentError(f"stride must divide the grid size {n}")

    axes = tuple(range(field.dims))
    sub = (slice(None, None, stride),) * field.dims
    blocks: list[np.ndarray] = []
    ell_eff = np.empty(len(directions))
    for j, d in enumerate(directions):
        if d.vector.size != field.dims:
            raise ArgumentError("direction dimensionality mismatch")
        shift = np.rint(ell * n * d.vector).astype(int)
        if not np.any(shift):
            raise ResolutionError(
                f"displacement {ell}*{d.vector} rounds to the zero lattice vector"
            )
        ell_eff[j] = float(np.linalg.norm(shift)) / n
        moved = np.roll(field.values, tuple(-shift), axis=axes)
        delta = moved[sub] - field.values[sub]
        blocks.append(np.sqrt(np.sum(delta**2, axis=-1)).ravel())

    sizes = [b.size for b in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    dir_blocks = tuple((int(offsets[i]), int(offsets[i + 1])) for i in range(len(blocks)))
    mags = np.concatenate(blocks)
    scale_error = float(np.max(np.abs(ell_eff - ell)) / ell)
    return IncrementEnsemble(
        ell, mags, None, ell_eff=ell_eff, scale_error=scale_error, dir_blocks=dir_blocks
    )


@dataclass(frozen=True)
class MomentTable:
    """<|f|^p>, <|f|^p ln|f|>, <|f|^p (ln|f|)^2> over a p-grid at one scale.

    Non-finite entries are data (they mark the boundary of the effective
    domain), so the arrays may legitimately contain +-inf.
    """

    ell: float
    p_grid: np.ndarray
    moments: np.ndarray
    log_moments: np.ndarray
    log2_moments: np.ndarray
    zero_fraction: float
    max_magnitude: float
    min_magnitude: float

    def __post_init__(self):
        for name in ("p_grid", "moments", "log_moments", "log2_moments"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        p = self.p_grid
        if p.ndim != 1 or p.size == 0 or np.any(np.diff(p) <= 0):
            raise ArgumentError("p_grid must be non-empty and strictly increasing")
        self._check_log_convexity()

    def _check_log_convexity(self, rel_tol: float = 1e-9):
        # Interpolation inequality: ln<|f|^p> is convex on the finite range.
        ok = self.finite_mask()
        p, lnm = self.p_grid[ok], np.log(self.moments[ok])
        if p.size < 3:
            return
        lam = (p[2:] - p[1:-1]) / (p[2:] - p[:-2])
        hull = lam * lnm[:-2] + (1.0 - lam) * lnm[2:]
        slack = rel_tol * np.maximum(1.0, np.abs(hull))
        if np.any(lnm[1:-1] > hull + slack):
            from .errors import InternalConsistencyError

            worst = float(np.max(lnm[1:-1] - hull))
            raise InternalConsistencyError(
                f"moment log-convexity violated by {worst:.3e}"
            )

    def finite_mask(self) -> np.ndarray:
        # A vanished moment (identically-zero magnitudes at p > 0) is not
        # usable data: the exponent there is +inf, outside the domain.
        return (
            np.isfinite(self.moments)
            & (self.moments > 0.0)
            & np.isfinite(self.log_moments)
            & np.isfinite(self.log2_moments)
        )

    def index_of(self, p: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.p_grid - p)))
        if abs(self.p_grid[i] - p) > tol:
            raise ArgumentError(f"p={p} is not on the moment grid")
        return i

    def rescaled(self, lam: float) -> "MomentTable":
        """Moment table of the magnitude-scaled ensemble lam*|f| (exact algebra)."""
        if lam <= 0.0:
            raise ArgumentError("scale factor must be positive")
        ln_lam = math.log(lam)
        p = self.p_grid
        factor = lam**p
        m = self.moments * factor
        lg = factor * (self.log_moments + ln_lam * self.moments)
        lg2 = factor * (
            self.log2_moments + 2.0 * ln_lam * self.log_moments + ln_lam**2 * self.moments
        )
        return MomentTable(
            self.ell,
            p,
            m,
            lg,
            lg2,
            self.zero_fraction,
            self.max_magnitude * lam,
            self.min_magnitude * lam,
        )

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("p,moment,log_moment,log2_moment,finite_flag\n")
            ok = self.finite_mask()
            for i, p in enumerate(self.p_grid):
                fh.write(
                    f"{p:.17g},{self.moments[i]:.17g},{self.log_moments[i]:.17g},"
                    f"{self.log2_moments[i]:.17g},{int(ok[i])}\n"
                )


def moments(ens: IncrementEnsemble, p_grid) -> MomentTable:
    """Weighted power moments and log-weighted moments in a single pass."""
    p_grid = np.asarray(p_grid, dtype=np.float64).ravel()
    if p_grid.size == 0 or np.any(np.diff(p_grid) <= 0):
        raise ArgumentError("p_grid must be non-empty and strictly increasing")

    f = ens.magnitudes
    w = ens.weight_array()
    zero = f <= ZERO_FLOOR
    zero_fraction = compensated_sum(w[zero])
    fn, wn = f[~zero], w[~zero]
    has_zero = zero_fraction > 0.0
    has_pos = fn.size > 0
    logf = np.log(fn) if has_pos else np.zeros(0)

    m = np.empty_like(p_grid)
    lg = np.empty_like(p_grid)
    lg2 = np.empty_like(p_grid)
    for i, p in enumerate(p_grid):
        if p == 0.0:
            # 0^0 = 1 on the zero set: normalization is exact by convention.
            m[i] = 1.0
            if has_zero:
                lg[i], lg2[i] = -np.inf, np.inf
            else:
                lg[i] = compensated_sum(wn * logf)
                lg2[i] = compensated_sum(wn * logf**2)
        elif p < 0.0 and has_zero:
            m[i], lg[i], lg2[i] = np.inf, -np.inf, np.inf
        else:
            t = wn * np.exp(p * logf) if has_pos else np.zeros(0)
            m[i] = compensated_sum(t)
            lg[i] = compensated_sum(t * logf)
            lg2[i] = compensated_sum(t * logf**2)

    max_mag = float(np.max(f))
    min_mag = float(np.min(f))
    return MomentTable(
        ens.ell, p_grid, m, lg, lg2, zero_fraction, max_mag, min_mag
    )


class DomainBounds(NamedTuple):
    """Effective domain flags: values are +-inf when the grid never hits a bound."""

    p_min: float
    p_max: float


def domain_mask(tab: MomentTable) -> np.ndarray:
    """Maximal contiguous run with all three moment arrays finite.

    Prefers the run containing p = 0; otherwise the longest run (ties to
    the right, where positive orders live).
    """
    ok = tab.finite_mask()
    if not np.any(ok):
        return ok
    runs = []
    start = None
    for i, good in enumerate([*ok, False]):
        if good and start is None:
            start = i
        elif not good and start is not None:
            runs.append((start, i))
            start = None
    zero_idx = None
    near = np.where(np.abs(tab.p_grid) < 1e-12)[0]
    if near.size:
        zero_idx = int(near[0])
    chosen = None
    for lo, hi in runs:
        if zero_idx is not None and lo <= zero_idx < hi:
            chosen = (lo, hi)
            break
    if chosen is None:
        chosen = max(runs, key=lambda r: (r[1] - r[0], r[0]))
    mask = np.zeros_like(ok)
    mask[chosen[0] : chosen[1]] = True
    return mask


def effective_domain(tab: MomentTable) -> DomainBounds:
    """Domain bounds of the scaling exponents as flags.

    p_max is +inf when every grid order p >= 0 has finite moments (the
    case for bounded discrete ensembles); otherwise the largest finite
    grid p. p_min is 0 when the ensemble carries zero magnitudes, -inf
    when the whole requested negative range is finite, and the smallest
    finite grid p otherwise.
    """
    mask = domain_mask(tab)
    p = tab.p_grid
    if not np.any(mask):
        return DomainBounds(math.nan, math.nan)
    lo = p[mask][0]
    hi = p[mask][-1]
    positive = p > 0.0
    p_max = math.inf if bool(np.all(mask[positive])) else float(hi)
    if tab.zero_fraction > 0.0:
        p_min = 0.0
    else:
        neg = p < 0.0
        covers_all_neg = bool(np.all(mask[neg])) if np.any(neg) else True
        p_min = -math.inf if covers_all_neg else float(lo)
    return DomainBounds(p_min, p_max)
