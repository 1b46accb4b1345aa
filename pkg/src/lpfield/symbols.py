"""Symbols ``a(x, xi)`` and compound symbols ``A(x, y, xi)`` on the torus grid.

A symbol is an evaluator on physical points (last axis ``d``) and
frequencies (last axis ``d``) plus a declared class ``(m, rho, delta)``.
The declared class is a claim; :func:`seminorm_estimate` checks it.

Tables over a grid are ``(N^d, N^d)`` arrays indexed ``[x, xi]`` with both
axes flattened in C order (points) and FFT order (frequencies).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, ConvergenceError, DomainError
from .grid import GridSpec
from .lp_decomp import LPPartition, psi, window, window_sum

# dense tables above this many complex entries are refused
MAX_TABLE_ENTRIES = 2**27


def _check_unit(key, value):
    if not 0.0 <= value <= 1.0:
        raise DomainError(key, value, f"{key} must lie in [0, 1]")


def _table_guard(spec, power=2):
    entries = spec.size**power
    if entries > MAX_TABLE_ENTRIES:
        raise ContractError(
            f"dense table of {entries} entries for d={spec.d}, K={spec.K} exceeds the memory cap"
        )


def _flat_points(spec):
    return spec.points().reshape(-1, spec.d)


def _flat_freqs(spec):
    return spec.frequencies().reshape(-1, spec.d)


class Symbol:
    """Base symbol: subclasses implement ``evaluate(x, xi)``."""

    x_independent = False

    def __init__(self, m=0.0, rho=1.0, delta=0.0, name="symbol"):
        _check_unit("rho", rho)
        _check_unit("delta", delta)
        self.m = float(m)
        self.rho = float(rho)
        self.delta = float(delta)
        self.name = name
        self._tables = {}

    @property
    def declared_class(self):
        return (self.m, self.rho, self.delta)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, m={self.m:g}, rho={self.rho:g}, delta={self.delta:g})"

    def evaluate(self, x, xi):
        raise NotImplementedError

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        return np.broadcast_to(np.asarray(self.evaluate(x, xi), dtype=complex), shape)

    def multiplier(self, spec: GridSpec) -> np.ndarray:
        """Values on the frequency lattice (x-independent symbols only)."""
        if not self.x_independent:
            raise ContractError(f"{self.name} depends on x; no multiplier form")
        origin = np.zeros(spec.d)
        return np.asarray(self(origin, spec.frequencies()), dtype=complex)

    def table(self, spec: GridSpec) -> np.ndarray:
        """Cached ``(N^d, N^d)`` array of ``a(x, xi)`` on the grid."""
        if spec not in self._tables:
            _table_guard(spec)
            if self.x_independent:
                row = self.multiplier(spec).reshape(-1)
                tab = np.broadcast_to(row, (spec.size, spec.size))
            else:
                tab = self._build_table(spec)
                tab.flags.writeable = False
            self._tables[spec] = tab
        return self._tables[spec]

    def _build_table(self, spec):
        pts = _flat_points(spec)
        xi = _flat_freqs(spec)
        out = np.empty((spec.size, spec.size), dtype=complex)
        step = max(1, (1 << 20) // spec.size)
        for start in range(0, spec.size, step):
            sl = slice(start, start + step)
            out[sl] = self(pts[sl, None, :], xi[None, :, :])
        return out

    def clear_cache(self):
        self._tables.clear()

    def with_class(self, m=None, rho=None, delta=None) -> "Symbol":
        """Same evaluator, different declared class."""
        return _Reclassed(self, self.m if m is None else m, self.rho if rho is None else rho,
                          self.delta if delta is None else delta)

    def __mul__(self, other):
        if not isinstance(other, Symbol):
            return NotImplemented
        return ProductSymbol([self, other])


class _Reclassed(Symbol):
    def __init__(self, inner, m, rho, delta):
        super().__init__(m, rho, delta, inner.name)
        self.inner = inner
        self.x_independent = inner.x_independent

    def evaluate(self, x, xi):
        return self.inner(x, xi)

    def table(self, spec):
        return self.inner.table(spec)


class FunctionSymbol(Symbol):
    """Closed-form symbol; ``fn(x, xi)``, or ``fn(xi)`` when ``x_independent``."""

    def __init__(self, fn, m=0.0, rho=1.0, delta=0.0, name="function", x_independent=False):
        super().__init__(m, rho, delta, name)
        self.fn = fn
        self.x_independent = bool(x_independent)

    def evaluate(self, x, xi):
        if self.x_independent:
            return self.fn(xi)
        return self.fn(x, xi)


class ProductSymbol(Symbol):
    """Pointwise product; orders add, ``rho`` is the minimum, ``delta`` the maximum."""

    def __init__(self, factors, name=None):
        factors = list(factors)
        if not factors:
            raise ContractError("empty product")
        super().__init__(
            sum(f.m for f in factors),
            min(f.rho for f in factors),
            max(f.delta for f in factors),
            name or "*".join(f.name for f in factors),
        )
        self.factors = factors
        self.x_independent = all(f.x_independent for f in factors)

    def evaluate(self, x, xi):
        out = self.factors[0](x, xi)
        for f in self.factors[1:]:
            out = out * f(x, xi)
        return out


def _lattice_index(spec, xi):
    """Flat FFT-order index of integer frequencies ``xi`` (last axis d)."""
    k = np.rint(xi).astype(np.int64)
    if np.abs(xi - k).max(initial=0.0) > 1e-9:
        raise ContractError("table symbols are defined on the frequency lattice only")
    k = np.mod(k, spec.N)
    return np.ravel_multi_index(tuple(np.moveaxis(k, -1, 0)), spec.shape)


def _grid_index(spec, x):
    """Flat index of grid points, or None when some ``x`` is off the grid."""
    n = np.asarray(x) * spec.N
    r = np.rint(n)
    if np.abs(n - r).max(initial=0.0) > 1e-9:
        return None
    r = np.mod(r.astype(np.int64), spec.N)
    return np.ravel_multi_index(tuple(np.moveaxis(r, -1, 0)), spec.shape)


class TableSymbol(Symbol):
    """Symbol stored as a grid table; off-grid ``x`` by trigonometric interpolation."""

    lattice_only = True

    def __init__(self, spec, table, m=0.0, rho=1.0, delta=0.0, name="table", x_independent=False):
        super().__init__(m, rho, delta, name)
        table = np.asarray(table, dtype=complex)
        if table.shape != (spec.size, spec.size):
            raise ContractError(f"table shape {table.shape} does not match grid {spec}")
        self.spec = spec
        self.x_independent = bool(x_independent)
        table = table.copy()
        table.flags.writeable = False
        self._tables[spec] = table
        self._xhat = None

    def multiplier(self, spec):
        if spec != self.spec:
            raise ContractError("table symbol evaluated on a foreign grid")
        return self._tables[spec][0].reshape(spec.shape)

    def table(self, spec):
        if spec != self.spec:
            raise ContractError("table symbol evaluated on a foreign grid")
        return self._tables[spec]

    def x_spectrum(self):
        """``ahat[eta, xi]``: normalised DFT of each frequency column in x."""
        if self._xhat is None:
            spec = self.spec
            t = self._tables[spec].reshape(spec.shape + (spec.size,))
            axes = tuple(range(spec.d))
            self._xhat = (np.fft.fftn(t, axes=axes) / spec.size).reshape(spec.size, spec.size)
        return self._xhat

    def evaluate(self, x, xi):
        spec = self.spec
        x, xi = np.broadcast_arrays(x, xi)
        shape = x.shape[:-1]
        kidx = _lattice_index(spec, xi).reshape(-1)
        xflat = x.reshape(-1, spec.d)
        gidx = _grid_index(spec, xflat)
        if gidx is not None:
            return self._tables[spec][gidx, kidx].reshape(shape)
        return _trig_eval(spec, self.x_spectrum(), xflat, kidx).reshape(shape)


def _trig_eval(spec, xhat, xflat, kidx, chunk=1 << 22):
    """``sum_eta xhat[eta, k] exp(2 pi i <x, eta>)`` for paired ``(x, k)``."""
    eta = _flat_freqs(spec).astype(float)
    ux, xinv = np.unique(xflat, axis=0, return_inverse=True)
    xinv = xinv.reshape(-1)
    E = np.exp(2j * np.pi * (ux @ eta.T))
    out = np.empty(xflat.shape[0], dtype=complex)
    step = max(1, chunk // spec.size)
    for s in range(0, out.size, step):
        sl = slice(s, s + step)
        out[sl] = np.einsum("pe,ep->p", E[xinv[sl]], xhat[:, kidx[sl]])
    return out


class FilteredSymbol(Symbol):
    """``w(eta, xi)``-filtered x-spectrum of a parent symbol, resynthesised in x.

    ``value(x, xi) = sum_eta w(|eta|, |xi|) ahat(eta, xi) exp(2 pi i <x, eta>)``
    where ``ahat(., xi)`` is the grid DFT in x of the parent at frequency ``xi``.
    Frequencies may be off the lattice when the parent allows it.
    """

    def __init__(self, parent: Symbol, spec: GridSpec, weight, m, rho, delta, name):
        super().__init__(m, rho, delta, name)
        self.parent = parent
        self.spec = spec
        self.weight = weight
        self.lattice_only = getattr(parent, "lattice_only", False)

    def _filtered_columns(self, xi_unique):
        spec = self.spec
        pts = _flat_points(spec)
        cols = np.asarray(self.parent(pts[:, None, :], xi_unique[None, :, :]))
        cols = cols.reshape(spec.shape + (xi_unique.shape[0],))
        axes = tuple(range(spec.d))
        chat = (np.fft.fftn(cols, axes=axes) / spec.size).reshape(spec.size, -1)
        eta_n = np.sqrt((_flat_freqs(spec) ** 2).sum(-1))
        xi_n = np.sqrt((xi_unique**2).sum(-1))
        return chat * self.weight(eta_n[:, None], xi_n[None, :])

    def evaluate(self, x, xi):
        spec = self.spec
        x, xi = np.broadcast_arrays(x, xi)
        shape = x.shape[:-1]
        xflat = x.reshape(-1, spec.d)
        uxi, kinv = np.unique(xi.reshape(-1, spec.d), axis=0, return_inverse=True)
        chat = self._filtered_columns(uxi)
        return _trig_eval(spec, chat, xflat, kinv.reshape(-1)).reshape(shape)

    def table(self, spec):
        if spec != self.spec:
            raise ContractError("filtered symbol evaluated on a foreign grid")
        if spec not in self._tables:
            _table_guard(spec)
            chat = self._filtered_columns(_flat_freqs(spec).astype(float))
            t = chat.reshape(spec.shape + (spec.size,))
            axes = tuple(range(spec.d))
            tab = (np.fft.ifftn(t, axes=axes) * spec.size).reshape(spec.size, spec.size)
            tab.flags.writeable = False
            self._tables[spec] = tab
        return self._tables[spec]


# ---------------------------------------------------------------------------
# Model symbols and registry


def make_cmrho(m: float, rho: float) -> Symbol:
    """``c_{m,rho}(xi) = exp(-2 pi i |xi|^(1-rho)) (1 + |xi|^2)^(m/2)``, class ``(m, rho, 0)``."""
    if not 0.0 < rho < 1.0:
        raise DomainError("rho", rho, "rho must lie in (0, 1)")
    m = float(m)
    rho = float(rho)

    def fn(xi):
        r2 = (xi**2).sum(axis=-1)
        return np.exp(-2j * np.pi * r2 ** ((1.0 - rho) / 2.0)) * (1.0 + r2) ** (m / 2.0)

    return FunctionSymbol(fn, m, rho, 0.0, name=f"cmrho:m={m:g},rho={rho:g}", x_independent=True)


def make_ns(s: float) -> Symbol:
    """Bessel multiplier ``n_s(xi) = (1 + |xi|^2)^(s/2)``, class ``(s, 1, 0)``."""
    s = float(s)

    def fn(xi):
        return (1.0 + (xi**2).sum(axis=-1)) ** (s / 2.0) + 0j

    return FunctionSymbol(fn, s, 1.0, 0.0, name=f"ns:s={s:g}", x_independent=True)


def make_one() -> Symbol:
    return FunctionSymbol(lambda xi: np.ones(xi.shape[:-1], dtype=complex), 0.0, 1.0, 0.0,
                          name="one", x_independent=True)


def make_modulation(v) -> Symbol:
    """``exp(2 pi i <x, v>)`` (x-only)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def fn(x, xi):
        d = x.shape[-1]
        vv = np.zeros(d)
        vv[: min(d, v.size)] = v[:d]
        return np.exp(2j * np.pi * (x @ vv))

    return FunctionSymbol(fn, 0.0, 1.0, 0.0, name="modulation:" + ",".join(f"v{i}={c:g}" for i, c in enumerate(v)))


def make_xmod(amp=0.5, freq=1, phase=0.0) -> Symbol:
    """Smooth periodic x-modulation ``1 + amp cos(2 pi (freq x_1 + phase))``."""
    amp, freq, phase = float(amp), float(freq), float(phase)

    def fn(x, xi):
        return 1.0 + amp * np.cos(2 * np.pi * (freq * x[..., 0] + phase)) + 0j

    return FunctionSymbol(fn, 0.0, 1.0, 0.0, name=f"xmod:amp={amp:g},freq={freq:g},phase={phase:g}")


def gamma_cutoff(x, tau):
    """Torus cutoff ``prod_i psi(8 |x_i| / 2^tau)`` with ``|x_i|`` the periodic distance to 0.

    Equal to 1 where every ``|x_i| <= 2^tau / 8`` and smooth on the torus; for
    ``tau >= 2`` it is identically 1.
    """
    x = np.asarray(x, dtype=float)
    r = np.abs(x - np.round(x)) / 2.0**tau
    return np.prod(psi(8.0 * r), axis=-1)


def make_gamma(tau: float) -> Symbol:
    tau = float(tau)
    return FunctionSymbol(lambda x, xi: gamma_cutoff(x, tau) + 0j, 0.0, 1.0, 0.0, name=f"gamma:tau={tau:g}")


def truncate(a: Symbol, tau: float) -> Symbol:
    """``a^tau(x, xi) = a(x, xi) gamma(x / 2^tau)``; same declared class as ``a``."""
    if not tau >= 0:
        raise DomainError("tau", tau)
    if tau >= 2:
        return a
    out = ProductSymbol([a, make_gamma(tau)], name=f"{a.name}|tau={tau:g}")
    out.m, out.rho, out.delta = a.m, a.rho, a.delta
    return out


_REGISTRY = {
    "one": (make_one, {}),
    "cmrho": (make_cmrho, {"m": float, "rho": float}),
    "ns": (make_ns, {"s": float}),
    "xmod": (make_xmod, {"amp": float, "freq": float, "phase": float}),
    "gamma": (make_gamma, {"tau": float}),
}


def parse_symbol(text: str) -> Symbol:
    """Build a symbol from a registry string.

    ``name:k=v,k=v`` terms joined by ``*`` with an optional ``product:``
    prefix, e.g. ``product:cmrho:m=-0.25,rho=0.5*xmod:amp=0.3``.
    Names: ``one``, ``cmrho``, ``ns``, ``xmod``, ``gamma``, ``modulation``
    (``v0=..,v1=..``).
    """
    text = text.strip()
    if text.startswith("product:"):
        text = text[len("product:"):]
    terms = [t.strip() for t in text.split("*") if t.strip()]
    if not terms:
        raise ContractError("empty symbol specification")
    factors = [_parse_term(t) for t in terms]
    return factors[0] if len(factors) == 1 else ProductSymbol(factors)


def _parse_term(term):
    name, _, rest = term.partition(":")
    name = name.strip()
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ContractError(f"malformed symbol parameter {item!r} in {term!r}")
        kwargs[key.strip()] = value.strip()
    if name == "modulation":
        try:
            v = [float(kwargs[k]) for k in sorted(kwargs)]
        except ValueError as exc:
            raise ContractError(f"bad modulation vector in {term!r}") from exc
        return make_modulation(v or [0.0])
    if name not in _REGISTRY:
        raise ContractError(f"unresolved registry name {name!r}")
    factory, types = _REGISTRY[name]
    unknown = set(kwargs) - set(types)
    if unknown:
        raise ContractError(f"unknown parameters {sorted(unknown)} for symbol {name!r}")
    try:
        parsed = {k: types[k](v) for k, v in kwargs.items()}
    except ValueError as exc:
        raise ContractError(f"bad value in {term!r}: {exc}") from exc
    return factory(**parsed)


# ---------------------------------------------------------------------------
# Seminorm estimation


def _central_stencil(order):
    """Iterated ``[-1, 0, 1] / 2`` stencil: offsets ``-order..order`` and weights."""
    w = np.array([1.0])
    for _ in range(order):
        w = np.convolve(w, [-0.5, 0.0, 0.5])
    return np.arange(-order, order + 1), w


def _multi_indices(d, nmax):
    return [a for a in itertools.product(range(nmax + 1), repeat=d) if sum(a) <= nmax]


def _dyad_samples(spec, n_per_dyad, dyad_max):
    """Integer frequencies grouped by dyad ``j`` (``2^j <= |xi| < 2^(j+1)``; dyad 0 adds ``xi = 0``)."""
    d = spec.d
    groups = []
    for j in range(dyad_max + 1):
        lo, hi = 2**j, 2 ** (j + 1)
        radii = np.unique(np.linspace(lo, hi - 1, n_per_dyad).round().astype(int))
        if d == 1:
            pts = np.concatenate([radii, -radii])[:, None].astype(float)
        else:
            angles = np.linspace(0, np.pi / 2, 3)
            pts = np.array([[np.rint(r * np.cos(t)), np.rint(r * np.sin(t))] for r in radii for t in angles])
            norm = np.sqrt((pts**2).sum(-1))
            pts = pts[(norm >= lo) & (norm < hi)]
            pts = np.unique(np.concatenate([pts, -pts]), axis=0)
        if j == 0:
            pts = np.concatenate([np.zeros((1, d)), pts])
        groups.append(pts)
    return groups


@dataclass
class SeminormTable:
    """Empirical seminorm constants ``sup |d_xi^alpha d_x^beta a| (1+|xi|)^(-m+rho|alpha|-delta|beta|)``.

    ``per_dyad[(a, b)]`` holds the sup over the sampled points of each
    frequency dyad, maximised over multi-indices with ``|alpha| = a``,
    ``|beta| = b``. ``refined`` holds the same with halved steps.
    """

    orders: tuple
    m: float
    rho: float
    delta: float
    dyads: np.ndarray
    per_dyad: dict
    refined: dict = field(default_factory=dict)
    refined_nonzero: dict = field(default_factory=dict)
    per_dyad_nonzero: dict = field(default_factory=dict)

    def value(self, a, b) -> float:
        return float(np.max(self.per_dyad[(a, b)]))

    def entries(self):
        return {key: float(np.max(v)) for key, v in self.per_dyad.items()}

    def growth_rate(self, a, b, last=3) -> float:
        """Least-squares slope of ``log2`` entry against dyad over the top ``last`` dyads."""
        vals = np.asarray(self.per_dyad[(a, b)])[-last:]
        js = self.dyads[-last:]
        vals = np.maximum(vals, np.finfo(float).tiny)
        return float(np.polyfit(js, np.log2(vals), 1)[0])

    def is_stable(self, rtol=0.25, atol=1e-8) -> bool:
        """Full-step and half-step seminorm constants agree (``xi = 0`` excluded).

        The constants are sups over all sampled dyads; per-dyad values at the
        lowest dyads move more because a unit step there is coarse.
        """
        if not self.refined_nonzero:
            return True
        for key, full in self.per_dyad_nonzero.items():
            a = float(np.max(full))
            b = float(np.max(self.refined_nonzero[key]))
            if abs(a - b) > rtol * max(abs(a), abs(b)) + atol:
                return False
        return True


def seminorm_estimate(a: Symbol, orders=(2, 2), spec: GridSpec = None, *, m=None, rho=None,
                      delta=None, n_x=32, n_xi=4, refine=True) -> SeminormTable:
    """Estimate the class seminorms of ``a`` by central differences.

    Steps are one lattice unit in ``xi`` and one grid spacing ``1/N`` in x,
    with a refinement pass at half the steps (x only for lattice-bound
    symbols). ``m``, ``rho``, ``delta`` override the declared class in the
    normalisation, which is how a wrong class claim shows up as growth.
    """
    if spec is None:
        raise ContractError("seminorm_estimate needs the grid that fixes the x step")
    amax, bmax = orders
    m = a.m if m is None else m
    rho = a.rho if rho is None else rho
    delta = a.delta if delta is None else delta
    d = spec.d
    hx = 1.0 / spec.N
    if hx / 2 < 1e-7 or (hx / 2) ** max(bmax, 1) < 1e-280:
        raise ContractError("differencing step underflow")
    stride = max(1, spec.N // n_x) if d == 1 else max(1, spec.N // max(4, n_x // 4))
    axis_pts = np.arange(0, spec.N, stride) / spec.N
    xs = np.stack(np.meshgrid(*([axis_pts] * d), indexing="ij"), -1).reshape(-1, d)
    groups = _dyad_samples(spec, n_xi, spec.K - 1)
    lattice_only = getattr(a, "lattice_only", False)

    def run(hx, hxi):
        per = {}
        per_nz = {}
        for alpha in _multi_indices(d, amax):
            for beta in _multi_indices(d, bmax):
                key = (sum(alpha), sum(beta))
                vals, vals_nz = [], []
                for pts in groups:
                    D = _mixed_difference(a, xs, pts, alpha, beta, hx, hxi)
                    r = np.sqrt((pts**2).sum(-1))
                    w = (1.0 + r) ** (-m + rho * sum(alpha) - delta * sum(beta))
                    mag = np.abs(D) * w[None, :]
                    vals.append(mag.max())
                    nz = r > 0
                    vals_nz.append(mag[:, nz].max() if nz.any() else 0.0)
                per[key] = np.maximum(per.get(key, 0.0), np.array(vals))
                per_nz[key] = np.maximum(per_nz.get(key, 0.0), np.array(vals_nz))
        return per, per_nz

    per, per_nz = run(hx, 1.0)
    table = SeminormTable(tuple(orders), m, rho, delta, np.arange(len(groups)), per,
                          per_dyad_nonzero=per_nz)
    if refine:
        table.refined, table.refined_nonzero = run(hx / 2, 1.0 if lattice_only else 0.5)
    return table


def _mixed_difference(a, xs, xis, alpha, beta, hx, hxi):
    """``d_xi^alpha d_x^beta a`` at all pairs ``(xs[i], xis[j])``."""
    d = xs.shape[1]
    out = np.zeros((xs.shape[0], xis.shape[0]), dtype=complex)
    xi_st = [_central_stencil(o) for o in alpha]
    x_st = [_central_stencil(o) for o in beta]
    for xi_off in itertools.product(*[list(zip(*s)) for s in xi_st]):
        wxi = np.prod([w for _, w in xi_off])
        if wxi == 0:
            continue
        shift_xi = np.array([o for o, _ in xi_off], dtype=float) * hxi
        for x_off in itertools.product(*[list(zip(*s)) for s in x_st]):
            wx = np.prod([w for _, w in x_off])
            if wx == 0:
                continue
            shift_x = np.array([o for o, _ in x_off], dtype=float) * hx
            vals = a((xs + shift_x)[:, None, :], (xis + shift_xi)[None, :, :])
            out += wxi * wx * vals
    scale = hxi ** sum(alpha) * hx ** sum(beta)
    return out / scale


# ---------------------------------------------------------------------------
# Paradifferential split


def _phi_sum(r, k, nbands):
    """``Phi_k = sum_{|j-k| <= 2, 0 <= j < nbands} omega_j``."""
    out = np.zeros_like(np.asarray(r, dtype=float))
    for j in range(max(0, k - 2), min(nbands, k + 3)):
        out = out + window(r, j)
    return out


def _low_sum(r, n, nbands):
    """``sum_{j <= n} omega_j`` restricted to ``j < nbands``."""
    return window_sum(r, min(n, nbands - 1))


@dataclass(eq=False)
class ParadiffSplit:
    """Joint dyadic localisation of a symbol in x-spectrum (``j``) and frequency (``k``).

    ``a_{j,k}(x, xi) = (omega_j(eta) ahat(eta, xi))^vee(x) omega_k(xi)``. The
    parts group the pairs as ``k <= j - 3`` (part 1), ``|j - k| <= 2``
    (part 2) and ``j <= k - 3`` (part 3). The diagonal family is
    ``a_k = sum_{|j-k| <= 2} a_{j,k}`` and the low family
    ``b_k = sum_{j <= k-3} a_{j,k}``.
    """

    symbol: Symbol
    partition: LPPartition
    xhat: np.ndarray  # (N^d eta, N^d xi)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def spec(self) -> GridSpec:
        return self.partition.spec

    @property
    def nbands(self) -> int:
        return self.partition.nbands

    def _norms(self):
        r = np.sqrt((_flat_freqs(self.spec) ** 2).sum(-1))
        return r[:, None], r[None, :]

    def _synth(self, weight):
        spec = self.spec
        t = (weight * self.xhat).reshape(spec.shape + (spec.size,))
        axes = tuple(range(spec.d))
        tab = (np.fft.ifftn(t, axes=axes) * spec.size).reshape(spec.size, spec.size)
        tab.flags.writeable = False
        return tab

    def _check_band(self, k):
        if not 0 <= k < self.nbands:
            raise ContractError(f"band index {k} outside 0..{self.nbands - 1}")

    def weight(self, kind, k=None):
        """Weight ``w(|eta|, |xi|)`` defining a part or family member."""
        K = self.nbands
        if kind == "a":
            return lambda e, x: _phi_sum(e, k, K) * window(x, k)
        if kind == "b":
            return lambda e, x: _low_sum(e, k - 3, K) * window(x, k)
        if kind == "part1":
            return lambda e, x: sum(window(e, j) * _low_sum(x, j - 3, K) for j in range(K))
        if kind == "part2":
            return lambda e, x: sum(window(x, kk) * _phi_sum(e, kk, K) for kk in range(K))
        if kind == "part3":
            return lambda e, x: sum(window(x, kk) * _low_sum(e, kk - 3, K) for kk in range(K))
        raise ContractError(f"unknown split component {kind!r}")

    def _table(self, kind, k=None):
        key = (kind, k)
        if key not in self._cache:
            e, x = self._norms()
            self._cache[key] = self._synth(self.weight(kind, k)(e, x))
        return self._cache[key]

    def part(self, i: int) -> np.ndarray:
        if i not in (1, 2, 3):
            raise ContractError("parts are numbered 1, 2, 3")
        return self._table(f"part{i}")

    def a_jk(self, j, k) -> np.ndarray:
        self._check_band(j)
        self._check_band(k)
        e, x = self._norms()
        return self._synth(window(e, j) * window(x, k))

    def a_k(self, k) -> np.ndarray:
        self._check_band(k)
        return self._table("a", k)

    def b_k(self, k) -> np.ndarray:
        self._check_band(k)
        return self._table("b", k)

    def reconstruct(self) -> np.ndarray:
        return self.part(1) + self.part(2) + self.part(3)

    def resolved_mask(self) -> np.ndarray:
        """Frequencies ``xi`` where the omega_k sum to one (column mask)."""
        return np.sqrt((_flat_freqs(self.spec) ** 2).sum(-1)) <= 2.0 ** (self.nbands - 1)

    def family_symbol(self, kind, k=None) -> Symbol:
        """A part or family member as a symbol evaluable off the grid.

        Members inherit order ``m`` and type ``(rho, max(delta, rho))``.
        """
        a = self.symbol
        return FilteredSymbol(a, self.spec, self.weight(kind, k), a.m, a.rho, max(a.delta, a.rho),
                              name=f"{a.name}|{kind}{'' if k is None else k}")

    def table_symbol(self, kind, k=None) -> TableSymbol:
        """A part or family member as a grid-table symbol (cheap once tabulated)."""
        a = self.symbol
        if kind in ("a", "b"):
            self._check_band(k)
        tab = self._table(kind, k)
        return TableSymbol(self.spec, tab, a.m, a.rho, max(a.delta, a.rho),
                           name=f"{a.name}|{kind}{'' if k is None else k}")


def paradiff_split(a: Symbol, P: LPPartition) -> ParadiffSplit:
    """Split ``a`` on the grid of ``P``; x-transforms are taken per frequency column."""
    spec = P.spec
    tab = a.table(spec)
    t = np.asarray(tab).reshape(spec.shape + (spec.size,))
    axes = tuple(range(spec.d))
    xhat = (np.fft.fftn(t, axes=axes) / spec.size).reshape(spec.size, spec.size)
    return ParadiffSplit(a, P, xhat)


# ---------------------------------------------------------------------------
# Compound symbols


class CompoundSymbol:
    """Amplitude ``A(x, y, xi)`` with declared class ``(m, rho, delta1, delta2)``."""

    def __init__(self, fn, m=0.0, rho=1.0, delta1=0.0, delta2=0.0, name="compound",
                 x_independent=False, y_independent=False):
        for key, v in (("rho", rho), ("delta1", delta1), ("delta2", delta2)):
            _check_unit(key, v)
        self.fn = fn
        self.m, self.rho, self.delta1, self.delta2 = float(m), float(rho), float(delta1), float(delta2)
        self.name = name
        self.x_independent = bool(x_independent)
        self.y_independent = bool(y_independent)
        self.adjoint_of = None

    def __repr__(self):
        return f"CompoundSymbol({self.name!r}, m={self.m:g}, rho={self.rho:g})"

    @property
    def declared_class(self):
        return (self.m, self.rho, self.delta1, self.delta2)

    def __call__(self, x, y, xi):
        x, y, xi = (np.asarray(v, dtype=float) for v in (x, y, xi))
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], xi.shape[:-1])
        return np.broadcast_to(np.asarray(self.fn(x, y, xi), dtype=complex), shape)

    def slab(self, spec: GridSpec, ix: int) -> np.ndarray:
        """``A(x_ix, y, xi)`` over all ``(y, xi)``, shape ``(N^d, N^d)``."""
        if self.adjoint_of is not None:
            return np.conj(self.adjoint_of.table(spec))
        pts = _flat_points(spec)
        xi = _flat_freqs(spec)
        return np.asarray(self(pts[ix][None, None, :], pts[:, None, :], xi[None, :, :]))

    def slab_block(self, spec: GridSpec, rows: slice) -> np.ndarray:
        """``A(x, y, xi)`` for a block of x rows, shape ``(rows, N^d, N^d)``."""
        pts = _flat_points(spec)
        xi = _flat_freqs(spec)
        xs = pts[rows]
        if self.adjoint_of is not None:
            tab = np.conj(self.adjoint_of.table(spec))
            return np.broadcast_to(tab, (xs.shape[0],) + tab.shape)
        return np.asarray(self(xs[:, None, None, :], pts[None, :, None, :], xi[None, None, :, :]))

    def collapse(self) -> Symbol:
        """For y-independent ``A``: the ordinary symbol ``a(x, xi) = A(x, ., xi)``."""
        if not self.y_independent:
            raise ContractError("compound symbol depends on y")
        fn = self.fn
        return FunctionSymbol(lambda x, xi: fn(x, x, xi), self.m, self.rho, self.delta1,
                              name=f"{self.name}|collapsed", x_independent=self.x_independent)


def compound_adjoint(a: Symbol) -> CompoundSymbol:
    """``A(x, y, xi) = conj(a(y, xi))``, so that ``T_[A] = (T_a)^*``; class ``(m, rho, 0, delta)``."""

    def fn(x, y, xi):
        return np.conj(a(y, xi))

    A = CompoundSymbol(fn, a.m, a.rho, 0.0, a.delta, name=f"adjoint({a.name})",
                       x_independent=True, y_independent=a.x_independent)
    A.adjoint_of = a
    return A


class ReducedSymbol(TableSymbol):
    """Result of :func:`reduce_compound` with its epsilon trace and error estimate."""

    def __init__(self, spec, table, m, rho, delta, name, schedule, trace, error_estimate, stages):
        super().__init__(spec, table, m, rho, delta, name)
        self.schedule = tuple(schedule)
        self.trace = list(trace)
        self.error_estimate = float(error_estimate)
        self.stages = stages


def _wrapped(v, N):
    return np.mod(v + N // 2, N) - N // 2


def reduce_compound(A: CompoundSymbol, spec: GridSpec, eps_schedule=(0.25, 0.125, 0.0625)) -> ReducedSymbol:
    """Reduce ``T_[A]`` to an ordinary symbol by a regularised oscillatory sum.

    For each ``eps`` the discrete analogue of
    ``a(x, zeta) = sum sum A(x, x - y, zeta + eta) exp(-2 pi i <y, eta>)``
    is evaluated with the smooth damping ``W(eps y, eps eta)``: a periodic
    Gaussian ``exp(-eps^2 sum_i sin^2(pi y_i) / pi)`` in ``y`` and
    ``exp(-pi eps^2 |eta|^2)`` in the frequency shift ``eta``. Both equal 1 at
    ``eps = 0``, where the discrete sum reproduces ``T_[A]`` exactly. The
    values are extrapolated to ``eps = 0`` by Romberg's scheme in
    ``eps^2`` across the whole schedule; the error estimate is the change
    contributed by the last extrapolation stage.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size < 3:
        raise DomainError("eps_schedule", tuple(eps), "need at least three epsilon values")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise DomainError("eps_schedule", tuple(eps), "epsilon schedule must be positive and decreasing")
    _table_guard(spec)
    N, d, M = spec.N, spec.d, spec.size
    k = _flat_freqs(spec)
    n = np.rint(_flat_points(spec) * N).astype(np.int64)
    # R[zeta, xi]: flat index of the frequency shift (xi - zeta) mod N
    diff = k[None, :, :] - k[:, None, :]
    R = np.ravel_multi_index(tuple(np.moveaxis(np.mod(diff, N), -1, 0)), spec.shape)
    shift2 = (_wrapped(diff, N) ** 2).sum(-1).astype(float)
    yprime = n / N
    sin2 = (np.sin(np.pi * yprime) ** 2).sum(-1) / np.pi
    axes = tuple(range(d))

    values = np.empty((eps.size, M, M), dtype=complex)
    G = [np.exp(-np.pi * e**2 * shift2) for e in eps]
    W = [np.exp(-(e**2) * sin2) for e in eps]
    for ix in range(M):
        slab = A.slab(spec, ix)
        # B[y', xi] = A(x, x - y', xi)
        src = np.ravel_multi_index(tuple(np.moveaxis(np.mod(n[ix] - n, N), -1, 0)), spec.shape)
        B = slab[src]
        for i in range(eps.size):
            Bw = (W[i][:, None] * B).reshape(spec.shape + (M,))
            C = np.fft.ifftn(Bw, axes=axes).reshape(M, M)
            values[i, ix] = kernels.gather_diag(C, R, G[i])

    trace = []
    diffs = [float(np.abs(values[i + 1] - values[i]).max()) for i in range(eps.size - 1)]
    for i, e in enumerate(eps):
        trace.append((float(e), diffs[i - 1] if i > 0 else float("nan")))
    if any(diffs[i + 1] >= diffs[i] for i in range(len(diffs) - 1)):
        raise ConvergenceError("epsilon schedule is not converging (successive differences do not decrease)",
                               trace)

    h = eps**2
    T = [[values[0]]]
    for i in range(1, eps.size):
        row = [values[i]]
        for j in range(1, i + 1):
            ratio = h[i - j] / h[i]
            row.append(row[j - 1] + (row[j - 1] - T[i - 1][j - 1]) / (ratio - 1.0))
        T.append(row)
    best = T[-1][-1]
    err = float(np.abs(T[-1][-1] - T[-1][-2]).max())
    return ReducedSymbol(spec, best, A.m, A.rho, max(A.delta1, A.delta2), f"reduced({A.name})",
                         eps, trace, err, [T[i][i] for i in range(eps.size)])
