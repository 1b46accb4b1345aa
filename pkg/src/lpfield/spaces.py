"""Triebel-Lizorkin / Besov norms, dyadic sequence spaces and the frame transform.

Dyadic cubes live in [0, 1)^d at levels ``0 .. K-1``; a level-``k`` cube has
side ``2^-k`` and covers ``2^(K+1-k)`` grid cells per axis, so cube
indicators are exact unions of cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .grid import (
    FREQUENCY,
    PHYSICAL,
    GridFunction,
    GridSpec,
    lp_mean_norm,
    read_csv,
    write_csv,
)
from .lp_decomp import LPPartition, band_decompose, psi


@dataclass(frozen=True)
class SpaceParams:
    """Integrability ``p``, summability ``q``, smoothness ``s`` and scale ``F`` or ``B``."""

    p: float
    q: float
    s: float = 0.0
    scale: str = "F"

    def __post_init__(self):
        for key in ("p", "q"):
            value = float(getattr(self, key))
            if not value > 0:
                raise DomainError(key, value)
            object.__setattr__(self, key, value)
        object.__setattr__(self, "s", float(self.s))
        if self.scale not in ("F", "B"):
            raise DomainError("scale", self.scale, "scale must be 'F' or 'B'")

    @classmethod
    def parse(cls, text: str) -> "SpaceParams":
        """Parse ``"F:p,q,s"`` (``inf`` allowed for p and q)."""
        scale, _, rest = text.partition(":")
        parts = [float(v) for v in rest.split(",")]
        if len(parts) == 2:
            parts.append(0.0)
        if len(parts) != 3:
            raise ContractError(f"cannot parse space parameters {text!r}")
        return cls(parts[0], parts[1], parts[2], scale.strip().upper())


def lq_combine(stack, q, axis=0):
    """``(sum |v|^q)^(1/q)`` along ``axis``; ``max |v|`` for ``q = inf``."""
    a = np.abs(np.asarray(stack))
    q = float(q)
    if np.isinf(q):
        return a.max(axis=axis)
    if q == 1.0:
        return a.sum(axis=axis)
    top = a.max(axis=axis, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    out = safe * ((a / safe) ** q).sum(axis=axis, keepdims=True) ** (1.0 / q)
    return np.squeeze(np.where(top > 0, out, 0.0), axis=axis)


def _weighted_bands(f, P, s):
    if f.side != PHYSICAL:
        raise ContractError("norms expect a physical-side function")
    if f.spec != P.spec:
        raise ContractError("partition and function live on different grids")
    bands = np.abs(band_decompose(P, f))
    weights = 2.0 ** (s * np.arange(P.nbands))
    return bands * weights.reshape((-1,) + (1,) * f.spec.d)


def f_space_norm(f: GridFunction, P: LPPartition, params: SpaceParams) -> float:
    """``F_p^{s,q}`` (``L^p(l^q)``) or ``B_p^{s,q}`` (``l^q(L^p)``) norm of ``f``.

    An F-scale request with ``p = inf`` is answered by :func:`f_infty_norm`.
    """
    if params.scale == "F" and np.isinf(params.p):
        return f_infty_norm(f, P, params.q, params.s)
    bands = _weighted_bands(f, P, params.s)
    if params.scale == "F":
        return lp_mean_norm(lq_combine(bands, params.q), params.p)
    per_band = np.array([lp_mean_norm(b, params.p) for b in bands])
    return float(lq_combine(per_band, params.q))


def _block_view(arr, level, K):
    """Reshape a grid array so each level-``level`` cube becomes trailing axes."""
    d = arr.ndim
    ncubes = 2**level
    width = 2 ** (K + 1 - level)
    if d == 1:
        return arr.reshape(ncubes, width)
    return arr.reshape(ncubes, width, ncubes, width).transpose(0, 2, 1, 3).reshape(
        ncubes, ncubes, width * width
    )


def f_infty_norm(f: GridFunction, P: LPPartition, q: float, s: float) -> float:
    """Carleson-type ``F_inf^{s,q}`` norm.

    ``||phi_0 * f||_inf`` plus the supremum over dyadic ``P`` with side
    ``2^-mu``, ``mu = 1 .. K-1``, of ``(|P|^-1 int_P sum_{k >= mu} |2^{ks} phi_k * f|^q)^(1/q)``.
    For ``q = inf`` the inner average is replaced by its ``L^inf(P)`` limit.
    """
    q = float(q)
    if not q > 0:
        raise DomainError("q", q)
    bands = _weighted_bands(f, P, s)
    K = f.spec.K
    first = float(bands[0].max()) / (2.0 ** (0 * s))
    best = 0.0
    if np.isinf(q):
        tail = np.zeros(f.spec.shape)
        for mu in range(P.nbands - 1, 0, -1):
            tail = np.maximum(tail, bands[mu])
            best = max(best, float(tail.max()))
        return first + best
    top = bands.max()
    if top == 0:
        return first
    tail = np.zeros(f.spec.shape)
    for mu in range(P.nbands - 1, 0, -1):
        tail = tail + (bands[mu] / top) ** q
        means = _block_view(tail, mu, K).mean(axis=-1)
        best = max(best, float(means.max()))
    return first + float(top * best ** (1.0 / q))


# ---------------------------------------------------------------------------
# Dyadic cubes and coefficient sequences


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube ``2^-level * (corner + [0, 1)^d)`` inside [0, 1)^d."""

    level: int
    corner: tuple

    def __post_init__(self):
        if self.level < 0 or any(not 0 <= c < 2**self.level for c in self.corner):
            raise ContractError(f"cube {self} is not a dyadic subcube of [0,1)^d")

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def volume(self) -> float:
        return self.side**self.d

    @property
    def x_corner(self) -> np.ndarray:
        return np.array(self.corner, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.corner, dtype=float) + 0.5) * self.side

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((c >> shift) == a for c, a in zip(other.corner, self.corner))

    def cell_slices(self, K: int) -> tuple:
        """Index slices of the grid cells covered by this cube on depth ``K``."""
        width = 2 ** (K + 1 - self.level)
        return tuple(slice(c * width, (c + 1) * width) for c in self.corner)


class SequenceCoeffs:
    """Complex coefficients on dyadic cubes of levels ``0 .. K-1``.

    ``levels[k]`` is an array of shape ``(2^k,) * d`` indexed by cube corner.
    """

    __slots__ = ("d", "K", "levels")

    def __init__(self, d: int, K: int, levels=None):
        self.d = d
        self.K = K
        if levels is None:
            levels = [np.zeros((2**k,) * d, dtype=complex) for k in range(K)]
        if len(levels) != K:
            raise ContractError(f"expected {K} levels, got {len(levels)}")
        self.levels = [np.asarray(a, dtype=complex).reshape((2**k,) * d) for k, a in enumerate(levels)]

    @classmethod
    def zeros(cls, d, K):
        return cls(d, K)

    @classmethod
    def from_items(cls, d, K, items):
        out = cls(d, K)
        for cube, value in items:
            out._check_cube(cube)
            out.levels[cube.level][cube.corner] = value
        return out

    def _check_cube(self, cube):
        if cube.d != self.d or cube.level >= self.K:
            raise ContractError(f"cube {cube} outside depth {self.K} / dimension {self.d}")

    def __getitem__(self, cube: DyadicCube) -> complex:
        self._check_cube(cube)
        return complex(self.levels[cube.level][cube.corner])

    def items(self):
        """Nonzero ``(cube, value)`` pairs in lexicographic (level, corner) order."""
        for k, arr in enumerate(self.levels):
            for corner in zip(*np.nonzero(arr)):
                corner = tuple(int(c) for c in corner)
                yield DyadicCube(k, corner), complex(arr[corner])

    def copy(self):
        return SequenceCoeffs(self.d, self.K, [a.copy() for a in self.levels])

    def _binary(self, other, op):
        if (self.d, self.K) != (other.d, other.K):
            raise ContractError("coefficient sequences of different shapes")
        return SequenceCoeffs(self.d, self.K, [op(a, b) for a, b in zip(self.levels, other.levels)])

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, c):
        return SequenceCoeffs(self.d, self.K, [a * c for a in self.levels])

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return max(float(np.abs(a).max()) for a in self.levels)

    def support(self):
        return [cube for cube, _ in self.items()]

    def __repr__(self):
        n = sum(int(np.count_nonzero(a)) for a in self.levels)
        return f"SequenceCoeffs(d={self.d}, K={self.K}, nonzero={n})"


def save_sequence(path, b: SequenceCoeffs, meta=()):
    """CSV rows ``(level, c0[, c1], re, im)`` for the nonzero coefficients."""
    header = ["level"] + [f"c{a}" for a in range(b.d)] + ["re", "im"]
    rows = ([cube.level, *cube.corner, float(v.real), float(v.imag)] for cube, v in b.items())
    write_csv(path, header, rows, [("d", b.d), ("K", b.K), ("kind", "sequence")] + list(meta))


def load_sequence(path) -> SequenceCoeffs:
    meta, _, rows = read_csv(path)
    d, K = int(meta["d"]), int(meta["K"])
    items = []
    for row in rows:
        level = int(row[0])
        corner = tuple(int(c) for c in row[1 : 1 + d])
        items.append((DyadicCube(level, corner), float(row[1 + d]) + 1j * float(row[2 + d])))
    return SequenceCoeffs.from_items(d, K, items)


def _upsample(arr, K):
    """Spread per-cube values over the grid cells of each cube."""
    level = int(round(math.log2(arr.shape[0])))
    width = 2 ** (K + 1 - level)
    out = arr
    for axis in range(arr.ndim):
        out = np.repeat(out, width, axis=axis)
    return out


def level_profiles(b: SequenceCoeffs, s: float) -> np.ndarray:
    """Per-level grid functions ``sum_{Q in D_k} |Q|^{-s/d-1/2} |b_Q| chi_Q``."""
    d = b.d
    return np.stack(
        [_upsample(np.abs(a) * 2.0 ** (k * (s + d / 2.0)), b.K) for k, a in enumerate(b.levels)]
    )


def gsq(b: SequenceCoeffs, s: float, q: float) -> np.ndarray:
    """``g^{s,q}(b)`` sampled on the depth-``K`` grid (exact: cube indicators are cell unions)."""
    return lq_combine(level_profiles(b, s), q)


def sequence_norm(b: SequenceCoeffs, params: SpaceParams) -> float:
    """``||g^{s,q}(b)||_{L^p}`` (F-scale) or ``l^q(L^p)`` over levels (B-scale)."""
    if params.scale == "F":
        return lp_mean_norm(gsq(b, params.s, params.q), params.p)
    profiles = level_profiles(b, params.s)
    per_level = np.array([lp_mean_norm(pr, params.p) for pr in profiles])
    return float(lq_combine(per_level, params.q))


# ---------------------------------------------------------------------------
# Frame transform


@dataclass(frozen=True, eq=False)
class FramePair:
    """Analysis/synthesis windows on the lattice, one pair per cube level.

    ``theta[k]`` is ``theta_hat_k``; ``dual[k]`` is the dual window with
    ``sum_k conj(dual_k) theta_k = 1`` on the resolved range ``|xi| <= 2^(K-3)``.
    Level-``k`` windows are supported in ``|xi| < 2^(k-1)`` so sampling at
    the ``2^-k`` cube corners is alias free.
    """

    spec: GridSpec
    theta: np.ndarray
    dual: np.ndarray
    resolved_radius: float = field(default=0.0)

    @property
    def nlevels(self):
        return self.theta.shape[0]

    def resolved_mask(self):
        return self.spec.freq_norm() <= self.resolved_radius

    def atom(self, cube: DyadicCube, dual=False) -> GridFunction:
        """``theta^Q(x) = |Q|^{1/2} theta_k(x - x_Q)`` on the grid."""
        win = (self.dual if dual else self.theta)[cube.level]
        xi = self.spec.frequencies()
        phase = np.exp(-2j * np.pi * (xi @ cube.x_corner))
        return GridFunction.from_spectrum(self.spec, np.sqrt(cube.volume) * win * phase)


def frame_window(r, k):
    """Frame window of level ``k``: the partition window dilated by 1/4."""
    r = np.asarray(r, dtype=float)
    if k == 0:
        return psi(4.0 * r)
    return psi(r / 2.0 ** (k - 2)) - psi(r / 2.0 ** (k - 3))


def build_frames(spec: GridSpec, tol=1e-10) -> FramePair:
    r = spec.freq_norm()
    theta = np.stack([frame_window(r, k) for k in range(spec.K)])
    energy = (theta**2).sum(axis=0)
    resolved = 2.0 ** (spec.K - 3)
    # the taper equals the top window near the edge, so the dual stays bounded
    # where the energy underflows instead of amplifying round-off
    taper = psi(r / resolved)
    safe = energy > 0
    dual = np.where(safe, theta * taper / np.where(safe, energy, 1.0), 0.0)
    identity = (np.conj(dual) * theta).sum(axis=0)
    mask = r <= resolved
    err = float(np.abs(identity[mask] - 1.0).max())
    if err > tol:
        raise ContractError(f"frame identity violated by {err:.3e} on the resolved range")
    # lower bound on the window core, where the dilated mother is bounded below
    for k in range(3, spec.K):
        core = (r >= 0.75 * 2.0 ** (k - 2)) & (r <= (5.0 / 3.0) * 2.0 ** (k - 2))
        if core.any() and theta[k][core].min() <= 0:
            raise ContractError(f"frame window {k} vanishes on its core annulus")
    theta.flags.writeable = False
    dual.flags.writeable = False
    return FramePair(spec, theta, dual, resolved)


def _corner_stride(spec, k):
    return 2 ** (spec.K + 1 - k)


def phi_analysis(f: GridFunction, frames: FramePair) -> SequenceCoeffs:
    """``v_Q = <f, dual^Q>`` for every cube of levels ``0 .. K-1``."""
    spec = frames.spec
    if f.spec != spec or f.side != PHYSICAL:
        raise ContractError("phi_analysis expects a physical-side function on the frame grid")
    fhat = np.fft.fftn(f.values) / spec.size
    levels = []
    for k in range(frames.nlevels):
        band = np.fft.ifftn(np.conj(frames.dual[k]) * fhat) * spec.size
        stride = _corner_stride(spec, k)
        samples = band[(slice(None, None, stride),) * spec.d]
        levels.append(samples * 2.0 ** (-k * spec.d / 2.0))
    return SequenceCoeffs(spec.d, spec.K, levels)


def phi_synthesis(v: SequenceCoeffs, frames: FramePair) -> GridFunction:
    """``f = sum_Q v_Q theta^Q``."""
    spec = frames.spec
    if (v.d, v.K) != (spec.d, spec.K):
        raise ContractError("coefficients and frames have different depth or dimension")
    fhat = np.zeros(spec.shape, dtype=complex)
    for k, coeffs in enumerate(v.levels):
        if not coeffs.any():
            continue
        stride = _corner_stride(spec, k)
        spikes = np.zeros(spec.shape, dtype=complex)
        spikes[(slice(None, None, stride),) * spec.d] = coeffs
        fhat += frames.theta[k] * np.fft.fftn(spikes) * 2.0 ** (-k * spec.d / 2.0)
    return GridFunction.from_spectrum(spec, fhat)


# ---------------------------------------------------------------------------
# Atomic decomposition of f_p^{s,q}


@dataclass(frozen=True)
class Atom:
    """``lam * coeffs`` with ``coeffs`` supported in ``cube`` and normalised there."""

    lam: float
    coeffs: SequenceCoeffs
    cube: DyadicCube
    height: int


def _upper_half_value(blocks):
    """Value exceeded by more than half the cells of each block: the
    ``(floor(n/2) + 1)``-th largest entry along the last axis."""
    n = blocks.shape[-1]
    rank = n - (n // 2 + 1)
    return np.partition(blocks, rank, axis=-1)[..., rank]


def _height_of(v):
    """Largest integer ``i`` with ``2^i < v``."""
    i = int(math.ceil(math.log2(v))) - 1
    while 2.0 ** (i + 1) < v:
        i += 1
    while not 2.0**i < v:
        i -= 1
    return i


def atom_decompose(b: SequenceCoeffs, params: SpaceParams) -> list:
    """Split ``b`` into infinity-atoms for ``f_p^{s,q}``, ``0 < p <= 1``, ``p <= q``.

    Each nonzero cube ``Q`` gets the height ``i(Q)``: the largest ``i`` with
    ``|Q ∩ {g > 2^i}| > |Q|/2``, ``g = g^{s,q}(b)``. Cubes of equal height
    are grouped under the maximal dyadic cubes ``J`` that are more than half
    covered by ``{g > 2^i}``; each group is scaled so that
    ``||g^{s,q}(r)||_inf = |J|^{-1/p}`` holds with equality.
    """
    p, q, s = params.p, params.q, params.s
    if not (0 < p <= 1 and p <= q):
        raise DomainError("p", p, f"atomic decomposition needs 0 < p <= 1 and p <= q (got p={p}, q={q})")
    K, d = b.K, b.d
    g = gsq(b, s, q)

    heights = {}
    for k, arr in enumerate(b.levels):
        nz = np.argwhere(arr != 0)
        if nz.size == 0:
            continue
        upper = _upper_half_value(_block_view(g, k, K))
        for corner in nz:
            corner = tuple(int(c) for c in corner)
            heights[DyadicCube(k, corner)] = _height_of(float(upper[corner]))

    groups = {}
    for i in sorted(set(heights.values())):
        above = g > 2.0**i
        candidate = [
            _upper_half_value(_block_view(above.astype(float), lev, K)) > 0.5
            for lev in range(K)
        ]
        for cube, hi in heights.items():
            if hi != i:
                continue
            for lev in range(cube.level + 1):
                shift = cube.level - lev
                anc = tuple(c >> shift for c in cube.corner)
                if candidate[lev][anc]:
                    groups.setdefault((DyadicCube(lev, anc), i), []).append(cube)
                    break

    atoms = []
    for (J, i), cubes in sorted(groups.items()):
        raw = SequenceCoeffs.from_items(d, K, [(Q, b[Q]) for Q in cubes])
        lam = J.volume ** (1.0 / p) * float(gsq(raw, s, q).max())
        atoms.append(Atom(lam, raw * (1.0 / lam), J, i))
    return atoms


def atom_lp_sum(atoms, p) -> float:
    """``(sum_j |lam_j|^p)^(1/p)``."""
    if not atoms:
        return 0.0
    lam = np.array([a.lam for a in atoms])
    return float(lq_combine(lam, p))


def reconstruct_atoms(atoms, d, K) -> SequenceCoeffs:
    out = SequenceCoeffs(d, K)
    for a in atoms:
        out = out + a.coeffs * a.lam
    return out
