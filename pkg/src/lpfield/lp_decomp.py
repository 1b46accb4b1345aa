"""Smooth dyadic partition of unity, band projections and maximal operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, DomainError
from .grid import (
    FREQUENCY,
    PHYSICAL,
    GridFunction,
    GridSpec,
    periodic_distance,
    transform,
)


def _mollifier_tail(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly monotone between."""
    a = _mollifier_tail(t)
    b = _mollifier_tail(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def radial_cutoff(r, inner, outer):
    """Smooth function of ``r`` equal to 1 for r <= inner and 0 for r >= outer."""
    return smooth_step((outer - np.asarray(r, dtype=float)) / (outer - inner))


def psi(r):
    """Radial bump: 1 on |xi| <= 1, 0 on |xi| >= 2."""
    return radial_cutoff(r, 1.0, 2.0)


def window(r, k):
    """Partition window ``omega_k`` as a function of the radius ``r = |xi|``."""
    r = np.asarray(r, dtype=float)
    if k == 0:
        return psi(r)
    return psi(r / 2.0**k) - psi(r / 2.0 ** (k - 1))


def window_sum(r, kmax):
    """``sum_{k <= kmax} omega_k`` in closed (telescoped) form; zero for kmax < 0."""
    if kmax < 0:
        return np.zeros_like(np.asarray(r, dtype=float))
    return psi(np.asarray(r, dtype=float) / 2.0**kmax)


@dataclass(frozen=True, eq=False)
class LPPartition:
    """Windows ``omega_0 .. omega_{K-1}`` on the frequency lattice (FFT order)."""

    spec: GridSpec
    windows: np.ndarray  # shape (K,) + spec.shape

    @property
    def nbands(self) -> int:
        return self.windows.shape[0]

    def omega(self, k) -> np.ndarray:
        self._check_band(k)
        return self.windows[k]

    def phi(self, k) -> GridFunction:
        """``phi_k``: inverse transform of ``omega_k``."""
        return GridFunction.from_spectrum(self.spec, self.omega(k))

    def cumulative(self, kmax) -> np.ndarray:
        """``sum_{k <= kmax} omega_k`` on the lattice."""
        return window_sum(self.spec.freq_norm(), min(kmax, self.nbands - 1))

    def resolved_mask(self) -> np.ndarray:
        """Lattice points where the windows sum to one."""
        return self.spec.freq_norm() <= 2.0 ** (self.nbands - 1)

    def _check_band(self, k):
        if not 0 <= k < self.nbands:
            raise ContractError(f"band index {k} outside 0..{self.nbands - 1}")


def build_partition(spec: GridSpec) -> LPPartition:
    """Windows ``omega_0 = psi``, ``omega_k = psi(2^-k xi) - psi(2^(1-k) xi)``."""
    if spec.K < 4:
        raise DomainError("K", spec.K, "need K >= 4 for at least four bands")
    r = spec.freq_norm()
    windows = np.stack([window(r, k) for k in range(spec.K)])
    windows.flags.writeable = False
    return LPPartition(spec, windows)


def band_project(P: LPPartition, f: GridFunction, k: int) -> GridFunction:
    """``phi_k * f = (omega_k fhat)^vee``."""
    if f.side != PHYSICAL:
        raise ContractError("band_project expects a physical-side function")
    if f.spec != P.spec:
        raise ContractError("partition and function live on different grids")
    fhat = transform(f, "forward").values
    return transform(GridFunction(f.spec, FREQUENCY, P.omega(k) * fhat), "inverse")


def band_decompose(P: LPPartition, f: GridFunction) -> np.ndarray:
    """All band projections at once, shape ``(K,) + spec.shape``."""
    if f.side != PHYSICAL:
        raise ContractError("band_decompose expects a physical-side function")
    fhat = np.fft.fftn(f.values)
    axes = tuple(range(1, f.spec.d + 1))
    return np.fft.ifftn(P.windows * fhat[None], axes=axes)


def peetre_maximal(u: GridFunction, sigma: float, r: float) -> GridFunction:
    """``M_{sigma,r} u(x) = max_y |u(x + y)| / (1 + r|y|)^sigma`` over all lattice offsets.

    ``|y|`` is the torus distance. Exact sup over the ``N^d`` offsets.
    """
    if u.side != PHYSICAL:
        raise ContractError("peetre_maximal expects a physical-side function")
    if not sigma > 0:
        raise DomainError("sigma", sigma)
    if not r > 0:
        raise DomainError("r", r)
    dist = periodic_distance(u.spec.points())
    weight = (1.0 + r * dist) ** (-float(sigma))
    out = kernels.peetre_sup(np.abs(u.values), weight)
    return GridFunction(u.spec, PHYSICAL, out)


def hl_maximal(u: GridFunction, t: float) -> GridFunction:
    """``M_t u = (M |u|^t)^(1/t)`` with ``M`` the centred periodic-cube maximal function.

    Cubes are unions of ``(2j + 1)^d`` cells centred at the sample point,
    ``j = 0 .. N/2 - 1``.
    """
    if u.side != PHYSICAL:
        raise ContractError("hl_maximal expects a physical-side function")
    if not t > 0:
        raise DomainError("t", t)
    a = np.abs(u.values)
    top = a.max()
    if top == 0:
        return GridFunction(u.spec, PHYSICAL, np.zeros(u.spec.shape))
    scaled = (a / top) ** t
    out = top * kernels.box_max(scaled) ** (1.0 / t)
    return GridFunction(u.spec, PHYSICAL, out)


def vector_maximal_ratio(P: LPPartition, f: GridFunction, p, q, sigma) -> float:
    """``||(sum_k (M_{sigma,2^k} u_k)^q)^{1/q}||_p / ||(sum_k |u_k|^q)^{1/q}||_p``.

    ``u_k`` are the band projections of ``f``.
    """
    from .spaces import lq_combine
    from .grid import lp_mean_norm

    bands = band_decompose(P, f)
    maxed = np.stack(
        [
            peetre_maximal(GridFunction(f.spec, PHYSICAL, bands[k]), sigma, 2.0**k).values.real
            for k in range(P.nbands)
        ]
    )
    num = lp_mean_norm(lq_combine(maxed, q), p)
    den = lp_mean_norm(lq_combine(np.abs(bands), q), p)
    return num / den
