"""Periodic dyadic grid on the torus [0, 1)^d and its discrete Fourier transform.

Conventions
-----------
The grid has ``N = 2**(K + 1)`` samples per axis at ``x = n / N`` and the
frequency lattice is ``{-N/2, ..., N/2 - 1}^d`` stored in FFT order. The
forward transform carries the ``1/N^d`` factor::

    fhat(xi) = N^{-d} sum_x f(x) exp(-2 pi i <x, xi>)
    f(x)     = sum_xi fhat(xi) exp(2 pi i <x, xi>)

so that a constant function has unit spectrum at the origin. With the
normalised pairing ``<f, g> = N^{-d} sum f conj(g)`` on both sides,
Parseval reads ``<f, g>_physical = N^d <fhat, ghat>_frequency``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError

PHYSICAL = "physical"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class GridSpec:
    """Dimension ``d`` in {1, 2} and dyadic depth ``K`` (N = 2**(K+1))."""

    d: int
    K: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise DomainError("d", self.d, "only d = 1 and d = 2 are supported")
        if int(self.K) != self.K or self.K < 4:
            raise DomainError("K", self.K, "dyadic depth K must be an integer >= 4")

    @property
    def N(self) -> int:
        return 2 ** (self.K + 1)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    def frequencies(self) -> np.ndarray:
        """Integer lattice frequencies in FFT order, shape ``shape + (d,)``."""
        return _frequencies(self.d, self.K)

    def points(self) -> np.ndarray:
        """Physical sample points ``n / N``, shape ``shape + (d,)``."""
        return _points(self.d, self.K)

    def freq_norm(self) -> np.ndarray:
        return np.sqrt((self.frequencies() ** 2).sum(axis=-1))

    def periodic_norm(self) -> np.ndarray:
        """Torus distance of each grid point to the origin."""
        return periodic_distance(self.points())


@functools.lru_cache(maxsize=16)
def _frequencies(d, K):
    N = 2 ** (K + 1)
    axis = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    out = np.stack(grids, axis=-1)
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=16)
def _points(d, K):
    N = 2 ** (K + 1)
    axis = np.arange(N) / N
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    out = np.stack(grids, axis=-1)
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=4)
def fourier_matrix(spec: GridSpec) -> np.ndarray:
    """``E[x, xi] = exp(2 pi i <x, xi>)`` over flattened points and frequencies.

    Built from exact integer phases ``<n, xi> mod N`` and a table of roots of
    unity, so entries carry no accumulated rounding.
    """
    N = spec.N
    n = np.rint(spec.points().reshape(-1, spec.d) * N).astype(np.int64)
    k = spec.frequencies().reshape(-1, spec.d)
    phase = (n @ k.T) % N
    roots = np.exp(2j * np.pi * np.arange(N) / N)
    out = roots[phase]
    out.flags.writeable = False
    return out


def periodic_distance(y):
    """Euclidean length of ``y`` (last axis = coordinates) modulo the integer lattice."""
    y = np.asarray(y, dtype=float)
    r = np.abs(y - np.round(y))
    return np.sqrt((r**2).sum(axis=-1))


class GridFunction:
    """Complex samples on a :class:`GridSpec`, on the physical or frequency side.

    The value array has shape ``spec.shape`` and is treated as immutable.
    """

    __slots__ = ("spec", "side", "values")

    def __init__(self, spec: GridSpec, side: str, values):
        if side not in (PHYSICAL, FREQUENCY):
            raise ContractError(f"unknown side {side!r}")
        values = np.array(values, dtype=complex)
        if values.shape != spec.shape:
            if values.size == spec.size:
                values = values.reshape(spec.shape)
            else:
                raise ContractError(
                    f"values of shape {values.shape} do not fit grid shape {spec.shape}"
                )
        values.flags.writeable = False
        self.spec = spec
        self.side = side
        self.values = values

    def __repr__(self):
        return f"GridFunction(d={self.spec.d}, K={self.spec.K}, side={self.side!r})"

    def _check_pair(self, other):
        if self.spec != other.spec or self.side != other.side:
            raise ContractError("grid functions live on different grids or sides")

    def __add__(self, other):
        self._check_pair(other)
        return GridFunction(self.spec, self.side, self.values + other.values)

    def __sub__(self, other):
        self._check_pair(other)
        return GridFunction(self.spec, self.side, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.spec, self.side, self.values * c)

    __rmul__ = __mul__

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    @classmethod
    def from_function(cls, spec: GridSpec, fn):
        """Sample ``fn(x)`` where ``x`` has shape ``spec.shape + (d,)``."""
        return cls(spec, PHYSICAL, fn(spec.points()))

    @classmethod
    def from_spectrum(cls, spec: GridSpec, fhat):
        """Physical-side function with Fourier coefficients ``fhat`` (FFT order)."""
        return transform(cls(spec, FREQUENCY, fhat), "inverse")


def transform(f: GridFunction, direction: str) -> GridFunction:
    """Forward (physical -> frequency) or inverse discrete Fourier transform."""
    spec = f.spec
    if direction == "forward":
        if f.side != PHYSICAL:
            raise ContractError("forward transform expects a physical-side function")
        return GridFunction(spec, FREQUENCY, np.fft.fftn(f.values) / spec.size)
    if direction == "inverse":
        if f.side != FREQUENCY:
            raise ContractError("inverse transform expects a frequency-side function")
        return GridFunction(spec, PHYSICAL, np.fft.ifftn(f.values) * spec.size)
    raise ContractError(f"unknown transform direction {direction!r}")


def _check_p(p):
    p = float(p)
    if not p > 0:
        raise DomainError("p", p)
    return p


def lp_mean_norm(values, p) -> float:
    """``(mean |v|^p)^(1/p)`` for an array, ``max |v|`` when ``p = inf``."""
    p = _check_p(p)
    a = np.abs(np.asarray(values))
    if np.isinf(p):
        return float(a.max())
    top = a.max()
    if top == 0:
        return 0.0
    # rescale so tiny values or small p do not underflow
    a = a / top
    if p == 2.0:
        return float(top * np.sqrt(np.mean(a * a)))
    return float(top * np.mean(a**p) ** (1.0 / p))


def lp_norm(f: GridFunction, p) -> float:
    """Normalised L^p (quasi-)norm on the torus; the measure of [0,1)^d is 1."""
    if f.side != PHYSICAL:
        raise ContractError("lp_norm expects a physical-side function")
    return lp_mean_norm(f.values, p)


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """``N^{-d} sum f conj(g)``; the same normalisation is used on both sides."""
    f._check_pair(g)
    return complex(np.vdot(g.values, f.values) / f.spec.size)


# ---------------------------------------------------------------------------
# CSV serialisation

_FLOAT_FMT = "%.17g"


def format_float(x) -> str:
    return _FLOAT_FMT % x


def write_csv(path, header, rows, meta=()):
    """Write ``rows`` under ``# key=value`` comment lines and a header row.

    Refuses to overwrite an existing file.
    """
    path = Path(path)
    if path.exists():
        raise FileExistsError(f"refusing to overwrite existing output {path}")
    with open(path, "x", newline="") as fh:
        for key, value in meta:
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def read_csv(path):
    """Return ``(meta: dict, header: list, rows: list[list[str]])``."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    return meta, header, [row for row in reader]


def save_grid_function(path, f: GridFunction, meta=()):
    """CSV with columns ``(i0[, i1], re, im)``.

    Index columns hold sample indices on the physical side and signed
    frequencies on the frequency side.
    """
    spec = f.spec
    if f.side == PHYSICAL:
        idx = np.stack(
            np.meshgrid(*([np.arange(spec.N)] * spec.d), indexing="ij"), axis=-1
        )
    else:
        idx = spec.frequencies()
    idx = idx.reshape(-1, spec.d)
    vals = f.values.reshape(-1)
    header = [f"i{a}" for a in range(spec.d)] + ["re", "im"]
    rows = (
        [int(v) for v in idx[n]] + [float(vals[n].real), float(vals[n].imag)]
        for n in range(spec.size)
    )
    all_meta = [("d", spec.d), ("K", spec.K), ("side", f.side)] + list(meta)
    write_csv(path, header, rows, all_meta)


def load_grid_function(path) -> GridFunction:
    meta, header, rows = read_csv(path)
    try:
        spec = GridSpec(int(meta["d"]), int(meta["K"]))
        side = meta["side"]
    except KeyError as exc:
        raise ContractError(f"{path}: missing header key {exc.args[0]}") from None
    data = np.array(rows, dtype=float)
    if data.shape != (spec.size, spec.d + 2):
        raise ContractError(f"{path}: expected {spec.size} rows of {spec.d + 2} columns")
    idx = data[:, : spec.d].astype(np.int64) % spec.N
    values = np.zeros(spec.shape, dtype=complex)
    values[tuple(idx.T)] = data[:, spec.d] + 1j * data[:, spec.d + 1]
    return GridFunction(spec, side, values)
