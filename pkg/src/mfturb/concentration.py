"""Entropy concentration of renormalized increment densities.

For F = |f|^p / <|f|^p> the entropy H = <F ln F> satisfies V_p = e^{-H},
tying the diagonal volume factor to information content. The lemmas
verified here construct sets of prescribed measure (descending superlevel
sets with a fractional atom slice making the measure exact) and certify
that they capture a stated fraction of the q-mass or entropy source.
Every verification returns a machine-readable report; the inequalities
are theorems, so the acceptance suite treats any failure as a bug.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import IncrementEnsemble, MomentTable, compensated_sum, moments
from .errors import ArgumentError, DomainError
from .scaling import _sanitize

_SLACK = 1e-12  # roundoff slack when certifying exact inequalities


@dataclass(frozen=True)
class Density:
    """Nonnegative weighted density with <F> = 1 within 1e-12."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        if v.shape != w.shape or v.size == 0:
            raise ArgumentError("values and weights must be matching non-empty arrays")
        if np.any(v < 0.0) or np.any(w < 0.0):
            raise ArgumentError("density values and weights must be nonnegative")
        mean = compensated_sum(w * v)
        if abs(mean - 1.0) > 1e-12:
            raise ArgumentError(f"<F> = {mean}, expected 1; normalize first")

    @classmethod
    def from_magnitudes(cls, f, w, p: float) -> "Density":
        """F = |f|^p / <|f|^p> for a weighted magnitude sample."""
        f = np.asarray(f, dtype=np.float64).ravel()
        w = np.asarray(w, dtype=np.float64).ravel()
        w = w / compensated_sum(w)
        fp = np.where(f > 0.0, f, 0.0) ** p if p != 0.0 else np.ones_like(f)
        mean = compensated_sum(w * fp)
        if not (math.isfinite(mean) and mean > 0.0):
            raise DomainError(f"<|f|^{p}> = {mean} cannot be normalized")
        return cls(fp / mean, w)

    @classmethod
    def from_ensemble(cls, ens: IncrementEnsemble, p: float) -> "Density":
        return cls.from_magnitudes(ens.magnitudes, ens.weight_array(), p)

    def entropy_source(self) -> np.ndarray:
        """Pointwise F ln F with the 0 ln 0 = 0 convention."""
        F = self.values
        out = np.zeros_like(F)
        pos = F > 0.0
        out[pos] = F[pos] * np.log(F[pos])
        return out


@dataclass(frozen=True)
class ConcentrationReport:
    """Result of one lemma verification on one density/ensemble."""

    lemma: str
    params: dict
    set_measure: float
    lhs: float
    rhs: float
    sliced_atom: int | None
    exact_measure: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + _SLACK * max(1.0, abs(self.rhs))

    def to_dict(self) -> dict:
        return {
            "lemma": self.lemma,
            "params": self.params,
            "set_measure": self.set_measure,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(_sanitize(self.to_dict())) + "\n"


def superlevel_slice(values: np.ndarray, weights: np.ndarray, target: float):
    """Descending superlevel set of exact measure ``target``.

    Atoms are taken in decreasing value order; the atom at the cut is
    fractionally weighted (weights are divisible), mirroring the proof
    device of a slice B inside the level set {|f| = alpha}. Returns
    (take, sliced_index, exact) where ``take`` holds the taken fraction of
    each atom's weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    if target < -1e-15 or target > 1.0 + 1e-12:
        raise ArgumentError(f"target measure {target} outside [0, 1]")
    order = np.argsort(-np.asarray(values), kind="stable")
    take = np.zeros_like(w)
    acc = 0.0
    sliced = None
    for i in order:
        if w[i] <= 0.0:
            continue
        if acc + w[i] <= target * (1.0 + 1e-15):
            take[i] = 1.0
            acc += w[i]
        else:
            frac = (target - acc) / w[i]
            if frac > 0.0:
                take[i] = frac
                sliced = int(i)
            acc = target
            break
    exact = abs(min(acc, target) - target) <= 1e-12 * max(1.0, target)
    return take, sliced, exact


def concentration_constant(q: float, p: float) -> float:
    """c_{q,p} = ((q-p)/q)^((q-p)/q) * (p/q)^(p/q); minimal 1/2 at p = q/2."""
    if not (0.0 <= p < q):
        raise ArgumentError("need 0 <= p < q")
    a = (q - p) / q
    b = p / q
    return a**a * b**b  # 0^0 = 1 covers p = 0


def concentration_set(ens: IncrementEnsemble, q: float, p: float) -> ConcentrationReport:
    """Set of measure V_{q,p} capturing at least (1 - c_{q,p}) of the q-mass."""
    from .volumetrics import ln_volume_factor

    if not (0.0 <= p < q):
        raise ArgumentError("need 0 <= p < q")
    tab = moments(ens, np.array(sorted({p, q})))
    V = math.exp(ln_volume_factor(tab, q, p))
    c = concentration_constant(q, p)
    f = ens.magnitudes
    w = ens.weight_array()
    take, sliced, exact = superlevel_slice(f, w, V)
    captured = compensated_sum(take * w * f**q)
    total = compensated_sum(w * f**q)
    return ConcentrationReport(
        lemma="volume-capture",
        params={"q": q, "p": p, "V_qp": V, "c_qp": c},
        set_measure=float(compensated_sum(take * w)),
        lhs=(1.0 - c) * total,
        rhs=captured,
        sliced_atom=sliced,
        exact_measure=exact,
    )


def entropy(F: Density) -> tuple[float, float, float]:
    """(H, V, shannon) with H = <F ln F>, V = e^{-H}, shannon = V^{2/3}/(2 pi e)."""
    H = compensated_sum(F.weights * F.entropy_source())
    V = math.exp(-H)
    shannon = V ** (2.0 / 3.0) / (2.0 * math.pi * math.e)
    return H, V, shannon


def csiszar_kullback_check(F: Density) -> tuple[float, float, float]:
    """(lower, H, upper) = (0.5 <|F-1|>^2, <F ln F>, <|F-1|^2>), sandwiched."""
    H, _, _ = entropy(F)
    dev = np.abs(F.values - 1.0)
    lower = 0.5 * compensated_sum(F.weights * dev) ** 2
    upper = compensated_sum(F.weights * dev**2)
    slack = _SLACK * max(1.0, abs(H), upper)
    if not (lower <= H + slack and H <= upper + slack):
        from .errors import InternalConsistencyError

        raise InternalConsistencyError(
            f"entropy sandwich broken: {lower} <= {H} <= {upper}"
        )
    return lower, H, upper


def weak_concentration(F: Density, epsilon: float) -> ConcentrationReport:
    """Set of measure V^{1-eps} capturing at least eps*H of the entropy."""
    if not (0.0 < epsilon < 1.0):
        raise ArgumentError("need 0 < epsilon < 1")
    H, V, _ = entropy(F)
    target = min(V ** (1.0 - epsilon), 1.0)
    take, sliced, exact = superlevel_slice(F.values, F.weights, target)
    captured = compensated_sum(take * F.weights * F.entropy_source())
    return ConcentrationReport(
        lemma="weak-entropy-capture",
        params={"epsilon": epsilon, "H": H, "V": V},
        set_measure=float(compensated_sum(take * F.weights)),
        lhs=epsilon * H,
        rhs=captured,
        sliced_atom=sliced,
        exact_measure=exact,
    )


def strong_constant(H0: float, tol: float = 1e-10) -> float:
    """c_{H0} = sup_{x in [0,1)} x + x ln(1-x)/H0 by golden-section search.

    The supremum over entropies H <= H0 sits at H = H0 because the
    objective increases in H (x ln(1-x) <= 0).
    """
    if H0 <= 0.0:
        raise ArgumentError("H0 must be positive")

    def g(x: float) -> float:
        return x + x * math.log1p(-x) / H0

    lo, hi = 0.0, 1.0 - 1e-15
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = g(c1), g(c2)
    while b - a > tol:
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = g(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = g(c1)
    return max(f1, f2, 0.0)


def strong_concentration(F: Density, H0: float) -> ConcentrationReport:
    """Set of measure V capturing at least (1 - c_{H0}) H, given H <= H0."""
    H, V, _ = entropy(F)
    if H > H0 + 1e-12:
        raise ArgumentError(f"H = {H} exceeds the stated bound H0 = {H0}")
    c = strong_constant(H0)
    take, sliced, exact = superlevel_slice(F.values, F.weights, V)
    captured = compensated_sum(take * F.weights * F.entropy_source())
    return ConcentrationReport(
        lemma="strong-entropy-capture",
        params={"H0": H0, "c_H0": c, "H": H, "V": V},
        set_measure=float(compensated_sum(take * F.weights)),
        lhs=(1.0 - c) * H,
        rhs=captured,
        sliced_atom=sliced,
        exact_measure=exact,
    )


@dataclass(frozen=True)
class DyadicDiagnostics:
    """Deterioration example: a density whose capturable entropy fraction decays.

    Atom i of n carries value 2^i/n on an interval of length 2^-i, plus a
    zero atom closing the measure; the construction is exactly normalized
    (<F> = 1, shift 0 after the defensive renormalization). ``ratio`` uses
    the construction's leading-order entropy n ln 2 - ln n for both the
    captured-set volume target and the denominator; the exact values are
    reported alongside. The ratio decays like ln(n)/n.
    """

    n: int
    density: Density
    H_exact: float
    V_exact: float
    H_leading: float
    V_leading: float
    captured: float
    ratio: float


def dyadic_counterexample(n: int) -> DyadicDiagnostics:
    if n < 2:
        raise ArgumentError("need n >= 2")
    i = np.arange(1, n + 1, dtype=np.float64)
    w = 2.0**-i
    vals = 2.0**i / n
    w_full = np.concatenate([w, [2.0**-float(n)]])  # zero remainder closes [0,1]
    v_full = np.concatenate([vals, [0.0]])
    mean = compensated_sum(w_full * v_full)
    F = Density(v_full / mean, w_full)
    H_exact, V_exact, _ = entropy(F)
    H_lead = n * math.log(2.0) - math.log(n)
    V_lead = math.exp(-H_lead)
    take, _, _ = superlevel_slice(F.values, F.weights, V_lead)
    captured = compensated_sum(take * F.weights * F.entropy_source())
    return DyadicDiagnostics(
        n=n,
        density=F,
        H_exact=H_exact,
        V_exact=V_exact,
        H_leading=H_lead,
        V_leading=V_lead,
        captured=captured,
        ratio=captured / H_lead,
    )


def active_region(
    ens: IncrementEnsemble, p: float, c_lo: float, c_hi: float
) -> tuple[np.ndarray, float, float]:
    """Band {c_lo s_p <= |f| <= c_hi s_p}: mask, measure, and the volume V_p.

    Chebyshev gives measure <= c_lo^{-p} V_p for p > 0; violations raise.
    """
    from .volumetrics import active_volume, threshold_p

    if not (0.0 < c_lo < c_hi):
        raise ArgumentError("need 0 < c_lo < c_hi")
    tab = moments(ens, np.array([p]))
    s_p = threshold_p(tab, p)
    V_p = active_volume(tab, p)
    f = ens.magnitudes
    mask = (f >= c_lo * s_p) & (f <= c_hi * s_p)
    measure = float(compensated_sum(ens.weight_array()[mask]))
    if p > 0.0:
        bound = c_lo ** (-p) * V_p
        if measure > bound * (1.0 + _SLACK) + 1e-15:
            from .errors import InternalConsistencyError

            raise InternalConsistencyError(
                f"active-region measure {measure} exceeds the bound {bound}"
            )
    return mask, measure, V_p


def active_region_qp(
    ens: IncrementEnsemble, q: float, p: float, sigma: float | None = None
) -> ConcentrationReport:
    """Region {|f| >= sigma s_{q,p}}: measure and capture bounds together.

    Default sigma = c_{q,p}^{1/(q-p)}, matching the capture level of the
    exact-measure construction. lhs/rhs report the capture inequality; the
    measure bound sigma^{-p} V_{q,p} (for p > 0) is checked inline.
    """
    from .volumetrics import ln_volume_factor, threshold

    if not (0.0 <= p < q):
        raise ArgumentError("need 0 <= p < q")
    if sigma is None:
        sigma = concentration_constant(q, p) ** (1.0 / (q - p))
    if not (0.0 < sigma < 1.0):
        raise ArgumentError("need 0 < sigma < 1")
    tab = moments(ens, np.array(sorted({p, q})))
    s = threshold(tab, q, p)
    V = math.exp(ln_volume_factor(tab, q, p))
    f = ens.magnitudes
    w = ens.weight_array()
    mask = f >= sigma * s
    measure = float(compensated_sum(w[mask]))
    if p > 0.0:
        bound = sigma ** (-p) * V
        if measure > bound * (1.0 + _SLACK) + 1e-15:
            from .errors import InternalConsistencyError

            raise InternalConsistencyError(
                f"(q,p)-active measure {measure} exceeds the bound {bound}"
            )
    captured = compensated_sum((w * f**q)[mask])
    total = compensated_sum(w * f**q)
    return ConcentrationReport(
        lemma="qp-active-capture",
        params={"q": q, "p": p, "sigma": sigma, "s_qp": s, "V_qp": V},
        set_measure=measure,
        lhs=(1.0 - sigma ** (q - p)) * total,
        rhs=captured,
        sliced_atom=None,
        exact_measure=False,
    )


def log_concentration(
    ens: IncrementEnsemble, p: float, U0: float, c: float
) -> ConcentrationReport:
    """Region {|f| >= U0^{1-c} s_p^c} captures (1-c) of <|f|^p ln_+(|f|/U0)>."""
    from .volumetrics import threshold_p

    if not (0.0 < c < 1.0):
        raise ArgumentError("need 0 < c < 1")
    if U0 <= 0.0:
        raise ArgumentError("U0 must be positive")
    tab = moments(ens, np.array([p]))
    s_p = threshold_p(tab, p)
    f = ens.magnitudes
    w = ens.weight_array()
    mask = f >= U0 ** (1.0 - c) * s_p**c
    pos = f > 0.0
    ln_plus = np.zeros_like(f)
    ln_plus[pos] = np.maximum(np.log(f[pos] / U0), 0.0)
    source = w * np.where(pos, f, 0.0) ** p * ln_plus
    total = compensated_sum(source)
    captured = compensated_sum(source[mask])
    return ConcentrationReport(
        lemma="log-plus-capture",
        params={"p": p, "U0": U0, "c": c, "s_p": s_p},
        set_measure=float(compensated_sum(w[mask])),
        lhs=(1.0 - c) * total,
        rhs=captured,
        sliced_atom=None,
        exact_measure=False,
    )


def entropy_volume_identity(tab: MomentTable, ens: IncrementEnsemble, p: float) -> dict:
    """V_p from the moment route vs e^{-H} of F = |f|^p/<|f|^p>."""
    from .volumetrics import active_volume

    V_moment = active_volume(tab, p)
    F = Density.from_ensemble(ens, p)
    H, V_entropy, _ = entropy(F)
    gap = abs(V_moment - V_entropy) / max(V_moment, 1e-300)
    return {
        "p": p,
        "V_moment": V_moment,
        "V_entropy": V_entropy,
        "H": H,
        "relative_gap": gap,
        "pass": bool(gap <= 1e-10),
    }
