"""Periodic vector fields on uniform grids and displacement direction sets.

The computational domain is the adimensional periodic box [0, 1)^dims
(velocity and length units fixed to 1). A field stores one vector sample
per grid node; all increment arithmetic wraps around periodically.

Binary file format ("MFRC"): little-endian header
``magic "MFRC" | version u32 | dims u32 | n u32 | components u32``
followed by the row-major (C order) float64 sample array of shape
``(n,)*dims + (components,)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError

MAGIC = b"MFRC"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class GridField:
    """Vector field sampled on a uniform periodic grid of the unit box."""

    values: np.ndarray  # shape (n,)*dims + (components,)
    dims: int

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)
        if self.dims not in (1, 3):
            raise ArgumentError(f"dims must be 1 or 3, got {self.dims}")
        if v.ndim != self.dims + 1:
            raise ArgumentError(
                f"values must have shape (n,)*{self.dims} + (components,), got {v.shape}"
            )
        n = v.shape[0]
        if any(s != n for s in v.shape[: self.dims]):
            raise ArgumentError(f"grid must be cubic, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("field contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def components(self) -> int:
        return self.values.shape[-1]

    def energy(self) -> float:
        """Mean kinetic energy density 0.5 * <|u|^2>."""
        return 0.5 * float(np.mean(np.sum(self.values**2, axis=-1)))

    def translated(self, shift) -> "GridField":
        """Periodic translation by an integer lattice vector (cells)."""
        shift = np.atleast_1d(np.asarray(shift, dtype=int))
        rolled = np.roll(self.values, tuple(-shift), axis=tuple(range(self.dims)))
        return GridField(rolled, self.dims)

    def save(self, path) -> None:
        path = Path(path)
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, self.dims, self.n, self.components)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.values.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "GridField":
        path = Path(path)
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
            if len(raw) != _HEADER.size:
                raise ArgumentError(f"{path}: truncated header")
            magic, version, dims, n, components = _HEADER.unpack(raw)
            if magic != MAGIC:
                raise ArgumentError(f"{path}: bad magic {magic!r}")
            if version != FORMAT_VERSION:
                raise ArgumentError(f"{path}: unsupported version {version}")
            count = n**dims * components
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
        values = data.reshape((n,) * dims + (components,)).astype(np.float64)
        return cls(values, dims)


@dataclass(frozen=True)
class Direction:
    """Unit displacement direction; Euclidean norm 1 within 1e-12."""

    vector: np.ndarray
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.vector, dtype=np.float64))
        object.__setattr__(self, "vector", v)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > self.tol:
            raise ArgumentError(f"direction norm {norm} deviates from 1 beyond {self.tol}")


def axis_directions(dims: int) -> list[Direction]:
    """The 2*dims signed axis directions."""
    out = []
    for ax in range(dims):
        for sign in (+1.0, -1.0):
            v = np.zeros(dims)
            v[ax] = sign
            out.append(Direction(v))
    return out


def default_directions(dims: int) -> list[Direction]:
    """6 axes + 8 main diagonals in 3D ("axes14"); the two signs in 1D."""
    dirs = axis_directions(dims)
    if dims == 3:
        for sx in (+1.0, -1.0):
            for sy in (+1.0, -1.0):
                for sz in (+1.0, -1.0):
                    dirs.append(Direction(np.array([sx, sy, sz]) / np.sqrt(3.0)))
    return dirs


def random_directions(m: int, seed: int, dims: int = 3) -> list[Direction]:
    """M uniformly distributed unit vectors from a seeded generator."""
    if m < 1:
        raise ArgumentError("need at least one direction")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < m:
        v = rng.normal(size=dims)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            out.append(Direction(v / norm))
    return out


def direction_set(spec: str, dims: int, seed: int = 0) -> list[Direction]:
    """Parse a direction-set name: "axes14", "axes", or "random:M"."""
    if spec == "axes14":
        return default_directions(dims)
    if spec == "axes":
        return axis_directions(dims)
    if spec.startswith("random:"):
        try:
            m = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ArgumentError(f"bad direction spec {spec!r}") from exc
        return random_directions(m, seed, dims)
    raise ArgumentError(f"unknown direction set {spec!r}")
