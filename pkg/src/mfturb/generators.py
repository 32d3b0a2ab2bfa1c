"""Synthetic fields with prescribed multifractal statistics, plus the
closed-form reference curves they must reproduce.

Cube-family generators place amplitude-carrying cubes of side l on a
2l-pitch lattice (guaranteeing pairwise separation >= l) by seeded
sampling without replacement. Placement counts are normalized so that the
*increment* statistics hit the target curves exactly for axis-aligned
displacements at the construction scale: a cube activates its own volume
plus the trailing gap, so N cubes yield an active measure 2 N l^dims, and
the generator therefore places half the nominal eddy count l^{3-D}/l^dims.

The frequency-randomized generator multiplies fixed Fourier amplitudes by
independent +-1 signs on a half-lattice, mirrored to keep fields real, so
second-order statistics are identical across realizations by Parseval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, CapacityError, SpecFormatError
from .gridfield import GridField

SQRT_PI = math.sqrt(math.pi)


# --------------------------------------------------------------------------
# cube-family layout


def _resolve_grid(ell: float, n: int | None, dims: int) -> tuple[int, int, int, int]:
    """(n, cells, pitch, sites_per_axis) for a cube construction."""
    if not (0.0 < ell <= 0.5):
        raise ArgumentError(f"ell must lie in (0, 1/2], got {ell}")
    if n is None:
        n = int(round(4.0 / ell))
    cells = int(round(ell * n))
    if cells < 1 or abs(cells - ell * n) > 1e-9:
        raise CapacityError(f"grid n={n} does not resolve ell={ell} in whole cells")
    pitch = 2 * cells
    if n % pitch != 0:
        raise CapacityError(f"grid n={n} is not a multiple of the lattice pitch {pitch}")
    return n, cells, pitch, n // pitch


def _family_count(ell: float, D: float, dims: int) -> float:
    """Nominal cube count: half of l^{3-D} / l^dims (see module docstring)."""
    return 0.5 * ell ** (3.0 - D - dims)


def _paint_cubes(values: np.ndarray, sites: np.ndarray, layout_dims: int,
                 pitch: int, cells: int, amplitudes: np.ndarray) -> None:
    if layout_dims == 1:
        for site, amp in zip(sites, amplitudes):
            lo = int(site) * pitch
            values[lo : lo + cells] = amp
    else:
        for site, amp in zip(sites, amplitudes):
            ix, iy, iz = (int(s) * pitch for s in site)
            values[ix : ix + cells, iy : iy + cells, iz : iz + cells] = amp


def _random_unit_vectors(rng: np.random.Generator, count: int, components: int = 3):
    v = rng.normal(size=(count, components))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return v / norms


@dataclass(frozen=True)
class MonoFractalSpec:
    """Single-amplitude cube field of dimension D at scale ell.

    Amplitude is u0 when given, otherwise epsilon^(1/3) ell^((D-2)/3)
    (third-order normalization <|delta u|^3> ~ epsilon*ell). In 1D grids
    the realizable dimension range is [2, 3]; in 3D it is [0, 3] up to
    lattice capacity.
    """

    ell: float
    D: float
    u0: float | None = None
    epsilon: float | None = None
    seed: int = 0
    dims: int = 3
    n: int | None = None
    allow_saturation: bool = True

    def __post_init__(self):
        if not (0.0 <= self.D <= 3.0):
            raise ArgumentError(f"D must lie in [0, 3], got {self.D}")
        if (self.u0 is None) == (self.epsilon is None):
            raise ArgumentError("give exactly one of u0 or epsilon")
        if self.dims not in (1, 3):
            raise ArgumentError("dims must be 1 or 3")

    @property
    def amplitude(self) -> float:
        if self.u0 is not None:
            return self.u0
        return self.epsilon ** (1.0 / 3.0) * self.ell ** ((self.D - 2.0) / 3.0)


def mono_layout(spec: MonoFractalSpec) -> dict:
    n, cells, pitch, sites_axis = _resolve_grid(spec.ell, spec.n, spec.dims)
    n_sites = sites_axis**spec.dims
    target = _family_count(spec.ell, spec.D, spec.dims)
    # a single cube is the smallest realizable unit; the layout records the
    # realized measure so callers see the clamp (extreme-intermittency D)
    n_cubes = max(1, int(round(target)))
    saturated = False
    if n_cubes > n_sites:
        if not spec.allow_saturation:
            raise CapacityError(
                f"{n_cubes} cubes exceed the {n_sites} separated lattice sites"
            )
        n_cubes = n_sites
        saturated = True
    return {
        "n": n,
        "cells": cells,
        "pitch": pitch,
        "sites_per_axis": sites_axis,
        "n_sites": n_sites,
        "n_target": target,
        "n_cubes": n_cubes,
        "saturated": saturated,
        "active_measure": 2.0 * n_cubes * (cells / n) ** spec.dims,
        "amplitude": spec.amplitude,
    }


def gen_monofractal(spec: MonoFractalSpec) -> GridField:
    lay = mono_layout(spec)
    rng = np.random.default_rng(spec.seed)
    sites_axis, dims = lay["sites_per_axis"], spec.dims
    chosen = rng.choice(sites_axis**dims, size=lay["n_cubes"], replace=False)
    if dims == 3:
        sites = np.stack(np.unravel_index(chosen, (sites_axis,) * 3), axis=1)
    else:
        sites = chosen
    amps = spec.amplitude * _random_unit_vectors(rng, lay["n_cubes"])
    values = np.zeros((lay["n"],) * dims + (3,))
    _paint_cubes(values, sites, dims, lay["pitch"], lay["cells"], amps)
    return GridField(values, dims)


@dataclass(frozen=True)
class MultiFractalSpec:
    """K cube families (h_k, D_k) with amplitudes ell^{h_k}; h and D increasing."""

    ell: float
    nodes: tuple[tuple[float, float], ...]  # (h_k, D_k)
    seed: int = 0
    dims: int = 3
    n: int | None = None

    def __post_init__(self):
        nodes = tuple((float(h), float(d)) for h, d in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) < 1:
            raise ArgumentError("need at least one node")
        hs = [h for h, _ in nodes]
        ds = [d for _, d in nodes]
        if any(b <= a for a, b in zip(hs, hs[1:])) or any(
            b <= a for a, b in zip(ds, ds[1:])
        ):
            raise ArgumentError("nodes must have strictly increasing h and D")
        if ds[-1] > 3.0 + 1e-12:
            raise ArgumentError("dimensions cannot exceed 3")


def multi_layout(spec: MultiFractalSpec) -> dict:
    n, cells, pitch, sites_axis = _resolve_grid(spec.ell, spec.n, spec.dims)
    n_sites = sites_axis**spec.dims
    counts = []
    for _, d in spec.nodes:
        target = _family_count(spec.ell, d, spec.dims)
        c = int(round(target))
        if c < 1:
            raise CapacityError(f"family D={d} needs fewer than one cube")
        counts.append(c)
    if sum(counts) > n_sites:
        raise CapacityError(
            f"{sum(counts)} cubes across families exceed {n_sites} separated sites"
        )
    return {
        "n": n,
        "cells": cells,
        "pitch": pitch,
        "sites_per_axis": sites_axis,
        "n_sites": n_sites,
        "counts": counts,
        "amplitudes": [spec.ell**h for h, _ in spec.nodes],
    }


def gen_multifractal(spec: MultiFractalSpec) -> GridField:
    lay = multi_layout(spec)
    rng = np.random.default_rng(spec.seed)
    sites_axis, dims = lay["sites_per_axis"], spec.dims
    total = sum(lay["counts"])
    chosen = rng.choice(sites_axis**dims, size=total, replace=False)
    values = np.zeros((lay["n"],) * dims + (3,))
    offset = 0
    for count, amp in zip(lay["counts"], lay["amplitudes"]):
        block = chosen[offset : offset + count]
        offset += count
        if dims == 3:
            sites = np.stack(np.unravel_index(block, (sites_axis,) * 3), axis=1)
        else:
            sites = block
        dirs = amp * _random_unit_vectors(rng, count)
        _paint_cubes(values, sites, dims, lay["pitch"], lay["cells"], dirs)
    return GridField(values, dims)


# --------------------------------------------------------------------------
# frequency-randomized fields


def in_half_lattice(k) -> bool:
    """Canonical half of Z^3 \\ {0}: first nonzero component positive."""
    k1, k2, k3 = (int(v) for v in k)
    if k1 != 0:
        return k1 > 0
    if k2 != 0:
        return k2 > 0
    return k3 > 0


@dataclass(frozen=True)
class RademacherSpec:
    """Base Fourier amplitudes on the half-lattice plus sign-flip seeds.

    ``modes`` maps integer wavevectors to complex 3-component amplitudes;
    wavevectors from the mirrored half are folded in as conjugates and
    must agree with any explicit counterpart (real fields need
    u_{-k} = conj(u_k)).
    """

    n: int
    modes: tuple[tuple[tuple[int, int, int], tuple[complex, complex, complex]], ...]
    seed: int = 0
    members: int = 1

    def __post_init__(self):
        if self.members < 1:
            raise ArgumentError("need at least one ensemble member")
        canonical: dict[tuple[int, int, int], np.ndarray] = {}
        for k, amp in self.modes:
            k = tuple(int(v) for v in k)
            a = np.asarray(amp, dtype=np.complex128)
            if a.shape != (3,):
                raise ArgumentError("amplitudes must be complex 3-vectors")
            if k == (0, 0, 0):
                if np.any(np.abs(a) > 0):
                    raise ArgumentError("mean mode u_0 must vanish")
                continue
            if not in_half_lattice(k):
                k = tuple(-v for v in k)
                a = np.conj(a)
            if k in canonical:
                if not np.allclose(canonical[k], a, rtol=1e-12, atol=1e-15):
                    raise ArgumentError(
                        f"non-Hermitian base amplitudes at k={k}: u_-k != conj(u_k)"
                    )
            else:
                canonical[k] = a
        if not canonical:
            raise ArgumentError("empty mode set")
        half = max(abs(v) for k in canonical for v in k)
        if 2 * half >= self.n:
            raise ArgumentError(f"modes up to |k_i|={half} do not fit on an n={self.n} grid")
        folded = tuple(sorted((k, tuple(a.tolist())) for k, a in canonical.items()))
        object.__setattr__(self, "modes", folded)

    def mode_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ks = np.array([k for k, _ in self.modes], dtype=int)
        amps = np.array([a for _, a in self.modes], dtype=np.complex128)
        return ks, amps


def gen_rademacher(spec: RademacherSpec) -> list[GridField]:
    """M independent sign assignments, synthesized by inverse FFT."""
    ks, amps = spec.mode_arrays()
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.members)
    fields = []
    n = spec.n
    for member_seed in seeds:
        rng = np.random.default_rng(member_seed)
        theta = rng.integers(0, 2, size=len(ks)) * 2 - 1
        spectral = np.zeros((n, n, n, 3), dtype=np.complex128)
        for k, a, t in zip(ks, amps, theta):
            idx = tuple(np.mod(k, n))
            midx = tuple(np.mod(-k, n))
            spectral[idx] += t * a
            spectral[midx] += t * np.conj(a)
        u = np.fft.ifftn(spectral, axes=(0, 1, 2)) * n**3
        if np.max(np.abs(u.imag)) > 1e-9 * max(1.0, np.max(np.abs(u.real))):
            raise ArgumentError("synthesis produced a non-real field")
        fields.append(GridField(np.ascontiguousarray(u.real), 3))
    return fields


def band_limited_modes(
    kmin: float, kmax: float, slope: float, amplitude: float, seed: int
) -> list[tuple[tuple[int, int, int], tuple[complex, complex, complex]]]:
    """Half-lattice modes with |u_k| = amplitude * |k|^(-slope) and seeded
    random complex polarization (statistically isotropic base)."""
    rng = np.random.default_rng(seed)
    kceil = int(math.floor(kmax))
    modes = []
    for k1 in range(-kceil, kceil + 1):
        for k2 in range(-kceil, kceil + 1):
            for k3 in range(-kceil, kceil + 1):
                k = (k1, k2, k3)
                if k == (0, 0, 0) or not in_half_lattice(k):
                    continue
                norm = math.sqrt(k1 * k1 + k2 * k2 + k3 * k3)
                if not (kmin <= norm <= kmax):
                    continue
                mag = amplitude * norm ** (-slope)
                z = rng.normal(size=3) + 1j * rng.normal(size=3)
                z = z / np.linalg.norm(z)
                modes.append((k, tuple((mag * z).tolist())))
    if not modes:
        raise ArgumentError(f"no lattice modes in the band [{kmin}, {kmax}]")
    return modes


# --------------------------------------------------------------------------
# closed-form reference curves


def ref_beta_zeta(p: float, D: float) -> float:
    """Mono-fractal exponent 3 - D + p (D - 2)/3 (for p > 0)."""
    return 3.0 - D + p * (D - 2.0) / 3.0


def ref_beta_relation(p: float, D_p3: float) -> float:
    """zeta_p = p/3 + (3 - D_{p,3}) (1 - p/3) under the third-order normalization."""
    return p / 3.0 + (3.0 - D_p3) * (1.0 - p / 3.0)


def kfamily_nodal_points(nodes) -> list[tuple[float, float]]:
    """Polygon kinks (p_k, zeta_{p_k}) between consecutive families."""
    out = []
    for (h1, d1), (h2, d2) in zip(nodes[:-1], nodes[1:]):
        p_k = (d2 - d1) / (h2 - h1)
        z_k = 3.0 + (d2 * h1 - d1 * h2) / (h2 - h1)
        out.append((p_k, z_k))
    return out


def ref_kfamily_zeta(p: float, nodes) -> float:
    """Polygon exponent min_k (3 + p h_k - D_k)."""
    return min(3.0 + p * h - d for h, d in nodes)


def digamma(x: float) -> float:
    """psi(x) for x > 0 by ascending recurrence into the asymptotic series.

    Shifted to x >= 12 before the Bernoulli tail: the first dropped term
    is ~ 4e-16 there, comfortably inside the 1e-12 accuracy target.
    """
    if x <= 0.0:
        raise ArgumentError("digamma implemented for positive arguments only")
    acc = 0.0
    while x < 12.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # Bernoulli tail: ln x - 1/(2x) - sum B_2n / (2n x^2n)
    series = 1.0 / 12.0 - inv2 * (
        1.0 / 120.0
        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))
    )
    return acc + math.log(x) - 0.5 / x - inv2 * series


def trigamma(x: float) -> float:
    """psi'(x) for x > 0, same recurrence/series scheme as ``digamma``."""
    if x <= 0.0:
        raise ArgumentError("trigamma implemented for positive arguments only")
    acc = 0.0
    while x < 12.0:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 1.0 + inv * (
        0.5
        + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
    )
    return acc + inv * series


def ref_khintchine_B(p: float) -> float:
    """Sharp sign-sum moment constant B_p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)."""
    return math.exp(0.5 * p * math.log(2.0) + math.lgamma((p + 1.0) / 2.0)) / SQRT_PI


def ref_random_bounds(p: float, ell: float) -> tuple[float, float]:
    """Expected-exponent sandwich for sign-randomized fields (p >= 3).

    lower = p/3 + (-ln sqrt(pi) + p ln 2 + ln Gamma((p+1)/2)) / ln ell
    upper = p (1/3 - 2 ln 2 / (3 ln ell))
    """
    if not (0.0 < ell < 1.0):
        raise ArgumentError("need 0 < ell < 1")
    ln_ell = math.log(ell)
    g = -math.log(SQRT_PI) + p * math.log(2.0) + math.lgamma((p + 1.0) / 2.0)
    lower = p / 3.0 + g / ln_ell
    upper = p * (1.0 / 3.0 - 2.0 * math.log(2.0) / (3.0 * ln_ell))
    return lower, upper


def ref_random_Dp(p: float, ell: float) -> float:
    """Dimension of the lower-bound exponent curve (polygamma form)."""
    if not (0.0 < ell < 1.0):
        raise ArgumentError("need 0 < ell < 1")
    ln_ell = math.log(ell)
    z = (p + 1.0) / 2.0
    num = -math.log(SQRT_PI) + math.lgamma(z) - 0.5 * p * digamma(z)
    return 3.0 - num / ln_ell


def ref_random_profile(p_grid, ell: float):
    """Lower-bound exponent curve as a ScalingProfile (analytic derivatives)."""
    from .scaling import ScalingProfile

    p = np.asarray(p_grid, dtype=np.float64)
    ln_ell = math.log(ell)
    z = (p + 1.0) / 2.0
    g = -math.log(SQRT_PI) + p * math.log(2.0) + np.array([math.lgamma(v) for v in z])
    zeta = p / 3.0 + g / ln_ell
    zeta1 = 1.0 / 3.0 + (math.log(2.0) + 0.5 * np.array([digamma(v) for v in z])) / ln_ell
    zeta2 = 0.25 * np.array([trigamma(v) for v in z]) / ln_ell
    return ScalingProfile(ell, p, zeta, zeta1, zeta2, -math.inf, math.inf)


# --------------------------------------------------------------------------
# flat key-value spec files


def parse_spec_file(path):
    """Parse a generator description in the flat key-value format.

    Grammar: one ``key = value`` pair per line; '#' starts a comment;
    blank lines ignored. ``kind`` selects the generator:

      kind = monofractal   keys: ell, D, u0 | epsilon, seed, dims, n
      kind = multifractal  keys: ell, nodes (h1:D1, h2:D2, ...), seed, dims, n
      kind = rademacher    keys: n, kmin, kmax, slope, amplitude, seed, members
    """
    text = Path(path).read_text()
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise SpecFormatError(f"{path}:{lineno}: empty key or value")
        if key in pairs:
            raise SpecFormatError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value

    kind = pairs.pop("kind", None)
    if kind is None:
        raise SpecFormatError(f"{path}: missing 'kind'")
    try:
        if kind == "monofractal":
            return MonoFractalSpec(
                ell=float(pairs.pop("ell")),
                D=float(pairs.pop("D")),
                u0=float(pairs.pop("u0")) if "u0" in pairs else None,
                epsilon=float(pairs.pop("epsilon")) if "epsilon" in pairs else None,
                seed=int(pairs.pop("seed", "0")),
                dims=int(pairs.pop("dims", "3")),
                n=int(pairs.pop("n")) if "n" in pairs else None,
            )
        if kind == "multifractal":
            nodes = []
            for item in pairs.pop("nodes").split(","):
                h, d = item.strip().split(":")
                nodes.append((float(h), float(d)))
            return MultiFractalSpec(
                ell=float(pairs.pop("ell")),
                nodes=tuple(nodes),
                seed=int(pairs.pop("seed", "0")),
                dims=int(pairs.pop("dims", "3")),
                n=int(pairs.pop("n")) if "n" in pairs else None,
            )
        if kind == "rademacher":
            n = int(pairs.pop("n"))
            modes = band_limited_modes(
                kmin=float(pairs.pop("kmin")),
                kmax=float(pairs.pop("kmax")),
                slope=float(pairs.pop("slope", "1.8333333333333333")),
                amplitude=float(pairs.pop("amplitude", "1.0")),
                seed=int(pairs.get("seed", "0")),
            )
            return RademacherSpec(
                n=n,
                modes=tuple(modes),
                seed=int(pairs.pop("seed", "0")),
                members=int(pairs.pop("members", "1")),
            )
    except (KeyError, ValueError) as exc:
        raise SpecFormatError(f"{path}: {exc}") from exc
    raise SpecFormatError(f"{path}: unknown kind {kind!r}")
