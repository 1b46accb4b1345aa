"""Pseudo-differential operators on grid functions.

``T_a f(x) = sum_xi a(x, xi) fhat(xi) exp(2 pi i <x, xi>)`` and, for compound
symbols, ``T_[A] f(x) = N^-d sum_{y, xi} A(x, y, xi) f(y) exp(2 pi i <x - y, xi>)``.
Both are evaluated as exact dense sums; x-independent symbols go through
the FFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .grid import PHYSICAL, GridFunction, GridSpec, fourier_matrix, periodic_distance
from .symbols import CompoundSymbol, ParadiffSplit, Symbol, compound_adjoint, make_ns


def _check_input(f):
    if not isinstance(f, GridFunction) or f.side != PHYSICAL:
        raise ContractError("operators act on physical-side grid functions")


def _spectrum(f):
    return np.fft.fftn(f.values) / f.spec.size


def _from_spectrum_flat(spec, ghat_flat):
    return GridFunction(spec, PHYSICAL, np.fft.ifftn(ghat_flat.reshape(spec.shape)) * spec.size)


def operator_matrix(a: Symbol, spec: GridSpec) -> np.ndarray:
    """``a(x, xi) exp(2 pi i <x, xi>)``, cached on the symbol next to its table."""
    key = (spec, "op")
    cache = a._tables
    if key not in cache:
        op = a.table(spec) * fourier_matrix(spec)
        op.flags.writeable = False
        cache[key] = op
    return cache[key]


def apply(a: Symbol, f: GridFunction) -> GridFunction:
    """``T_a f``; cost ``O(N^{2d})``, or one FFT pair when ``a`` is x-independent."""
    _check_input(f)
    spec = f.spec
    fhat = _spectrum(f)
    if a.x_independent:
        return GridFunction(spec, PHYSICAL, np.fft.ifftn(a.multiplier(spec) * fhat) * spec.size)
    out = operator_matrix(a, spec) @ fhat.reshape(-1)
    return GridFunction(spec, PHYSICAL, out.reshape(spec.shape))


def apply_compound(A: CompoundSymbol, f: GridFunction) -> GridFunction:
    """``T_[A] f`` by direct summation.

    Costs: ``O(N^{2d})`` when ``A`` does not depend on x or on y, otherwise
    ``O(N^{3d})`` (one ``N^d x N^d`` slab per output point).
    """
    _check_input(f)
    spec = f.spec
    M = spec.size
    fv = f.values.reshape(-1)
    E = fourier_matrix(spec)
    if A.adjoint_of is not None:
        # A(x, y, xi) = conj(a(y, xi)): T_[A] is the matrix adjoint of T_a
        G = np.conj(operator_matrix(A.adjoint_of, spec)).T @ fv / M
        return _from_spectrum_flat(spec, G)
    if A.y_independent:
        return apply(A.collapse(), f)
    if A.x_independent:
        S = A.slab(spec, 0)
        G = (S * np.conj(E)).T @ fv / M
        return _from_spectrum_flat(spec, G)
    out = np.empty(M, dtype=complex)
    weighted = np.conj(E) * fv[:, None] / M  # f(y) exp(-2 pi i <y, xi>) / N^d
    step = max(1, (1 << 22) // (M * M))
    for start in range(0, M, step):
        rows = slice(start, min(M, start + step))
        S = A.slab_block(spec, rows)
        G = np.einsum("xyk,yk->xk", S, weighted)
        out[rows] = (E[rows] * G).sum(axis=1)
    return GridFunction(spec, PHYSICAL, out.reshape(spec.shape))


@dataclass(frozen=True, eq=False)
class BandKernel:
    """Dense kernel ``K_k(x, y) = sum_xi a_k(x, xi) exp(2 pi i <x - y, xi>)``.

    ``N^-d K_k f = T_{a_k} f`` on grid samples.
    """

    k: int
    family: str
    spec: GridSpec
    matrix: np.ndarray

    def apply(self, f: GridFunction) -> GridFunction:
        _check_input(f)
        out = self.matrix @ f.values.reshape(-1) / self.spec.size
        return GridFunction(self.spec, PHYSICAL, out.reshape(self.spec.shape))

    def max_abs(self) -> float:
        return float(np.abs(self.matrix).max())

    def radial_profile(self):
        """Max of ``|K_k(x, y)|`` per torus distance ``|x - y|``.

        Returns ``(r, profile)`` over the distinct distances, sorted.
        """
        spec = self.spec
        pts = spec.points().reshape(-1, spec.d)
        n = np.rint(pts * spec.N).astype(np.int64)
        absK = np.abs(self.matrix)
        # squared integer offset, wrapped, identifies the distance class
        off = np.mod(n[:, None, :] - n[None, :, :] + spec.N // 2, spec.N) - spec.N // 2
        key = (off**2).sum(-1).reshape(-1)
        uniq, inv = np.unique(key, return_inverse=True)
        prof = np.zeros(uniq.size)
        np.maximum.at(prof, inv.reshape(-1), absK.reshape(-1))
        return np.sqrt(uniq) / spec.N, prof


def band_kernel(split: ParadiffSplit, k: int, family: str = "a") -> BandKernel:
    """Kernel of ``T_{a_k}`` (``family="a"``) or ``T_{b_k}`` (``family="b"``)."""
    if not 0 <= k < split.nbands:
        raise DomainError("k", k, f"band index outside 0..{split.nbands - 1}")
    if family not in ("a", "b"):
        raise ContractError(f"unknown kernel family {family!r}")
    spec = split.spec
    tab = split.a_k(k) if family == "a" else split.b_k(k)
    E = fourier_matrix(spec)
    mat = (tab * E) @ np.conj(E).T
    mat.flags.writeable = False
    return BandKernel(k, family, spec, mat)


def compose_with_multiplier(s1: float, a: Symbol, s2: float, f: GridFunction) -> GridFunction:
    """``n_{s1}(D) T_a n_{s2}(D) f``."""
    _check_input(f)
    g = f if s2 == 0 else apply(make_ns(s2), f)
    g = apply(a, g)
    return g if s1 == 0 else apply(make_ns(s1), g)


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    history: tuple


def operator_norm(a: Symbol, spec: GridSpec, iters=50, tol=1e-6, seed=0) -> NormEstimate:
    """``L^2 -> L^2`` norm of ``T_a`` by power iteration on ``T_a T_a^*``."""
    A = compound_adjoint(a)
    rng = np.random.default_rng(seed)
    v = GridFunction(spec, PHYSICAL, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))
    v = v * (1.0 / np.linalg.norm(v.values))
    lam = 0.0
    history = []
    converged = False
    it = 0
    for it in range(1, iters + 1):
        w = apply(a, apply_compound(A, v))
        nw = float(np.linalg.norm(w.values))
        history.append(nw)
        if nw == 0:
            return NormEstimate(0.0, it, True, tuple(history))
        v = w * (1.0 / nw)
        if it > 1 and abs(nw - lam) <= tol * nw:
            lam = nw
            converged = True
            break
        lam = nw
    return NormEstimate(float(np.sqrt(lam)), it, converged, tuple(np.sqrt(history)))
