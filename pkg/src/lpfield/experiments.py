"""Desk-scale experiments: random-cube sharpness ensembles, Besov and
``L^inf`` families, and boundedness probes of model multipliers.

Every experiment is a pure function of its arguments and seed. Random
streams are ``numpy.random.default_rng([seed, k])`` so each (draw, level)
pair has its own independent, reproducible stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .grid import PHYSICAL, GridFunction, GridSpec, lp_mean_norm
from .lp_decomp import build_partition, psi, radial_cutoff, smooth_step
from .psido import apply
from .spaces import SpaceParams, f_space_norm, lq_combine
from .symbols import FunctionSymbol, Symbol

SQRT2 = np.sqrt(2.0)

# profile constants: eta_hat rises on [0.4, 2^-1/2], falls on [2^1/2, 1.7];
# eta_tilde_hat is 1 on |xi| <= 1.7 and vanishes for |xi| >= 2
ETA_LOW, ETA_HIGH = 0.4, 1.7
ETA_TILDE_EDGE = 2.0


def eta_hat(r):
    """Annular window: 0 near the origin, 1 on ``[2^-1/2, 2^1/2]``, 0 beyond 1.7."""
    r = np.asarray(r, dtype=float)
    rise = smooth_step((r - ETA_LOW) / (1.0 / SQRT2 - ETA_LOW))
    return rise * radial_cutoff(r, SQRT2, ETA_HIGH)


def eta_tilde_hat(r):
    """Bump equal to 1 on the support of :func:`eta_hat`, supported in ``|xi| <= 2``."""
    return radial_cutoff(r, ETA_HIGH, ETA_TILDE_EDGE)


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise DomainError("rho", rho, "rho must lie in (0, 1)")


def make_Sk(k: int, m: float, rho: float, eta=eta_hat, spec: GridSpec = None) -> Symbol:
    """Multiplier ``2^{mk} exp(2 pi i |xi|^(1-rho)) eta(2^-k xi)``.

    ``eta`` is a radial profile; with ``spec`` given the band must fit the
    lattice (``eta`` supported in ``|xi| <= 2`` needs ``2^(k+1) <= N/2``).
    """
    _check_rho(rho)
    if k < 0:
        raise DomainError("k", k)
    if spec is not None and 2.0 ** (k + 1) > spec.N // 2:
        raise DomainError("k", k, f"band {k} exceeds the resolution of K={spec.K}")
    scale = 2.0 ** (m * k)

    def fn(xi):
        r = np.sqrt((xi**2).sum(-1))
        return scale * np.exp(2j * np.pi * r ** (1.0 - rho)) * eta(r / 2.0**k)

    return FunctionSymbol(fn, m, rho, 0.0, name=f"S_k:k={k},m={m:g},rho={rho:g}", x_independent=True)


# ---------------------------------------------------------------------------
# Random cube families


@dataclass(frozen=True)
class RandomCubeFamily:
    """``f^{k,w} = 2^{kd(1-rho)/p} sum_Q theta_Q eta_tilde(2^k (x - c_Q))`` over level-k cubes.

    ``theta_Q`` are i.i.d. Bernoulli with parameter ``2^{-kd(1-rho)}`` drawn
    from ``default_rng([seed, k])``.
    """

    spec: GridSpec
    k: int
    rho: float
    p: float
    seed: int

    def __post_init__(self):
        _check_rho(self.rho)
        if not self.p > 0:
            raise DomainError("p", self.p)
        if not 1 <= self.k <= self.spec.K - 2:
            raise DomainError("k", self.k, f"level must lie in 1..K-2 = {self.spec.K - 2}")

    @property
    def bernoulli(self) -> float:
        return 2.0 ** (-self.k * self.spec.d * (1.0 - self.rho))

    @property
    def amplitude(self) -> float:
        return 2.0 ** (self.k * self.spec.d * (1.0 - self.rho) / self.p)

    def active(self) -> np.ndarray:
        """Boolean activity per cube, shape ``(2^k,) * d``."""
        rng = np.random.default_rng([int(self.seed), int(self.k)])
        shape = (2**self.k,) * self.spec.d
        return rng.random(shape) < self.bernoulli


def sample_random_f(fam: RandomCubeFamily) -> GridFunction:
    """Draw ``f^{k,w}``; built spectrally so the periodisation is exact."""
    spec, k, d = fam.spec, fam.k, fam.spec.d
    theta = fam.active()
    if not theta.any():
        return GridFunction(spec, PHYSICAL, np.zeros(spec.shape, dtype=complex))
    # cube centres sit at (j + 1/2) 2^-k: place spikes on the grid, then shift
    stride = spec.N // 2**k
    spikes = np.zeros(spec.shape)
    spikes[(slice(None, None, stride),) * d] = theta
    xi = spec.frequencies()
    half_shift = np.exp(-2j * np.pi * (xi.sum(-1) * 0.5 / 2**k))
    r = spec.freq_norm()
    fhat = fam.amplitude * 2.0 ** (-k * d) * eta_tilde_hat(r / 2.0**k) * np.fft.fftn(spikes) * half_shift
    return GridFunction.from_spectrum(spec, fhat)


# ---------------------------------------------------------------------------
# Sharpness ensembles


@dataclass
class GrowthFit:
    """Ensemble norms per level and least-squares exponents of ``L``."""

    levels: np.ndarray
    input_norm: np.ndarray
    output_norm: np.ndarray
    input_slope: float
    output_slope: float
    ratio_slope: float
    residual: float
    fit_levels: np.ndarray
    per_seed: np.ndarray = field(repr=False, default=None)  # (n_levels, seeds, 2) p-th powers
    params: dict = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        return self.output_norm / self.input_norm


def _loglog_fit(L, y):
    x = np.log(L)
    z = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - z) ** 2)))
    return float(coef[0]), resid


def sharpness_growth(p, q, t, m=None, rho=0.5, L_list=range(4, 10), seeds=64, *, d=1, K=11,
                     seed0=0, drop_smallest=1) -> GrowthFit:
    """Random-cube ensemble growth against the number of levels ``L``.

    For each draw ``w`` the levels ``k = 1..L`` give ``f^{k,w}`` and
    ``S_k f^{k,w}``; the input is ``(E ||(sum_k |f^{k,w}|^q)^(1/q)||_p^p)^(1/p)``
    and the output the same with ``t`` and ``S_k f^{k,w}``. Exponents are
    ordinary least squares on ``(log L, log value)`` after dropping the
    ``drop_smallest`` smallest levels.
    """
    _check_rho(rho)
    for key, v in (("p", p), ("q", q), ("t", t)):
        if not v > 0:
            raise DomainError(key, v)
    if m is None:
        m = -d * (1.0 - rho) * (1.0 / p - 0.5)
    L_list = np.array(sorted(set(int(L) for L in L_list)))
    if L_list.size - drop_smallest < 3 or L_list.size < 4:
        raise ContractError("need at least four levels for an exponent fit")
    spec = GridSpec(d, K)
    Lmax = int(L_list.max())
    if Lmax > K - 2:
        raise DomainError("L_list", Lmax, f"levels must not exceed K-2 = {K - 2}")
    Sk = [None] + [make_Sk(k, m, rho, spec=spec).multiplier(spec) for k in range(1, Lmax + 1)]
    per_seed = np.zeros((L_list.size, seeds, 2))
    for s in range(seeds):
        acc_in = np.zeros(spec.shape)
        acc_out = np.zeros(spec.shape)
        top_in = top_out = 0.0
        for k in range(1, Lmax + 1):
            f = sample_random_f(RandomCubeFamily(spec, k, rho, p, seed0 + s))
            fhat = np.fft.fftn(f.values)
            g = np.fft.ifftn(Sk[k] * fhat)
            acc_in = _acc(acc_in, np.abs(f.values), q)
            acc_out = _acc(acc_out, np.abs(g), t)
            if k in L_list:
                i = int(np.searchsorted(L_list, k))
                per_seed[i, s, 0] = lp_mean_norm(_finish(acc_in, q), p) ** p
                per_seed[i, s, 1] = lp_mean_norm(_finish(acc_out, t), p) ** p
    means = per_seed.mean(axis=1) ** (1.0 / p)
    keep = slice(drop_smallest, None)
    s_in, r_in = _loglog_fit(L_list[keep], means[keep, 0])
    s_out, r_out = _loglog_fit(L_list[keep], means[keep, 1])
    s_ratio, r_ratio = _loglog_fit(L_list[keep], means[keep, 1] / means[keep, 0])
    return GrowthFit(L_list, means[:, 0], means[:, 1], s_in, s_out, s_ratio,
                     max(r_in, r_out, r_ratio), L_list[keep], per_seed,
                     dict(p=p, q=q, t=t, m=m, rho=rho, d=d, K=K, seeds=seeds, seed0=seed0))


def _acc(acc, a, q):
    """Running ``sum |a_k|^q`` (or max for ``q = inf``)."""
    if np.isinf(q):
        return np.maximum(acc, a)
    return acc + a**q


def _finish(acc, q):
    return acc if np.isinf(q) else acc ** (1.0 / q)


# ---------------------------------------------------------------------------
# Besov family


@dataclass
class FamilyTable:
    """Per-level measurements with the quantities the checks consume."""

    k: np.ndarray
    columns: dict
    checks: dict
    params: dict = field(default_factory=dict)

    def rows(self):
        names = list(self.columns)
        return names, [[int(k)] + [float(self.columns[n][i]) for n in names] for i, k in enumerate(self.k)]


def besov_family_check(p=2.0, t=2.0, rho=0.5, k_list=range(4, 10), *, d=1, K=11, m=None) -> FamilyTable:
    """``h_k = k^{-1/t} 2^{kd/p} eta_tilde(2^k x)`` and ``S_k h_k``.

    Reports ``||h_k||_p k^{1/t}`` and ``||S_k h_k||_p k^{1/t}``; the first
    should stay within a factor 2 of its first value and the second above
    half of its first value.
    """
    _check_rho(rho)
    if m is None:
        m = -d * (1.0 - rho) * abs(1.0 / p - 0.5)
    spec = GridSpec(d, K)
    ks = np.array(list(k_list))
    if ks.max() > K - 1:
        raise DomainError("k_list", int(ks.max()), f"levels must not exceed K-1 = {K - 1}")
    tpow = 0.0 if np.isinf(t) else 1.0 / t
    r = spec.freq_norm()
    h_norm, s_norm = [], []
    for k in ks:
        hhat = k ** (-tpow) * 2.0 ** (k * d / p) * 2.0 ** (-k * d) * eta_tilde_hat(r / 2.0**k)
        h = np.fft.ifftn(hhat) * spec.size
        sh = np.fft.ifftn(make_Sk(int(k), m, rho, spec=spec).multiplier(spec) * hhat) * spec.size
        h_norm.append(lp_mean_norm(h, p))
        s_norm.append(lp_mean_norm(sh, p))
    h_norm = np.array(h_norm)
    s_norm = np.array(s_norm)
    hk = h_norm * ks**tpow
    sk = s_norm * ks**tpow
    checks = {
        "h_within_factor_2": bool(np.all((hk <= 2 * hk[0]) & (hk >= hk[0] / 2))),
        "Sh_bounded_below": bool(np.all(sk >= sk[0] / 2)),
    }
    return FamilyTable(ks, {"h_norm": h_norm, "Sh_norm": s_norm, "h_scaled": hk, "Sh_scaled": sk},
                       checks, dict(p=p, t=t, rho=rho, m=m, d=d, K=K))


# ---------------------------------------------------------------------------
# L-infinity family


def sigma_sequence(ks, m, rho, d, rule, t=None):
    ks = np.asarray(ks, dtype=float)
    if rule == "supercritical":
        return 2.0 ** (-ks * d * (m + d * (1.0 - rho) / 2.0) / 2.0)
    if rule == "critical":
        if t is None or not t > 0:
            raise DomainError("t", t, "critical rule needs t > 0")
        return ks ** (-1.0 / t) if np.isfinite(t) else np.ones_like(ks)
    raise ContractError(f"unknown sigma rule {rule!r}")


def linf_family_check(m, rho, sigma_rule="supercritical", k_list=range(4, 10), *, t=None, d=1,
                      K=11, construction="shifted") -> FamilyTable:
    """Sup norms of ``g_k`` and ``S_k g_k`` for the ``p = inf`` sharpness families.

    ``construction="shifted"``: ``ghat_k = sigma_k 2^{-rho k d} psi(2^{2-rho k}(xi - 2^k e1))``,
    a bump of width about ``2^{rho k}`` centred at ``2^k e1``; ``U_k`` is the
    inverse transform of ``exp(2 pi i |xi|^(1-rho))`` times that bump.
    ``construction="dispersed"``: ``ghat_k = sigma_k 2^{-kd(1+rho)/2} exp(-2 pi i |xi|^(1-rho)) eta(2^-k xi)``,
    a wave that ``S_k`` refocuses; ``U_k`` is the inverse transform of
    ``exp(-2 pi i |xi|^(1-rho)) eta(2^-k xi)``.

    Checks: ``||g_k||_inf / sigma_k`` within a factor 4 bracket; the output
    terms ``||S_k g_k||_inf^t`` not summable (``k * term`` bounded below by
    half its first value, i.e. no faster decay than the harmonic series);
    and the floor ``max |U_k| >= c 2^{kd(1+rho)/2}`` with ``c`` half the
    value at the smallest ``k``.
    """
    _check_rho(rho)
    if construction not in ("shifted", "dispersed"):
        raise ContractError(f"unknown construction {construction!r}")
    spec = GridSpec(d, K)
    ks = np.array(list(k_list))
    sig = sigma_sequence(ks, m, rho, d, sigma_rule, t)
    xi = spec.frequencies().astype(float)
    r = spec.freq_norm()
    phase = np.exp(2j * np.pi * r ** (1.0 - rho))
    g_sup, s_sup, u_sup = [], [], []
    for k, s in zip(ks, sig):
        if 2.0 ** (k + 1) > spec.N // 2:
            raise DomainError("k", int(k), f"window at level {k} is not resolved on K={K}")
        if construction == "shifted":
            shifted = xi.copy()
            shifted[..., 0] -= 2.0**k
            bump = psi(2.0 ** (2 - rho * k) * np.sqrt((shifted**2).sum(-1)))
            if not bump.any():
                raise DomainError("k", int(k), "shifted window holds no lattice point")
            ghat = s * 2.0 ** (-rho * k * d) * bump
            u = np.fft.ifftn(phase * bump) * spec.size
        else:
            prof = np.conj(phase) * eta_hat(r / 2.0**k)
            ghat = s * 2.0 ** (-k * d * (1 + rho) / 2.0) * prof
            u = np.fft.ifftn(prof) * spec.size
        g = np.fft.ifftn(ghat) * spec.size
        sg = np.fft.ifftn(make_Sk(int(k), m, rho, spec=spec).multiplier(spec) * ghat) * spec.size
        g_sup.append(np.abs(g).max())
        s_sup.append(np.abs(sg).max())
        u_sup.append(np.abs(u).max())
    g_sup, s_sup, u_sup = map(np.array, (g_sup, s_sup, u_sup))
    texp = 1.0 if t is None or not np.isfinite(t) else t
    terms = s_sup**texp
    partial = np.cumsum(terms)
    g_ratio = g_sup / sig
    floor = u_sup / 2.0 ** (ks * d * (1 + rho) / 2.0)
    checks = {
        "g_bracket": bool(g_ratio.max() <= 4 * g_ratio.min()),
        "nonsummable": bool(np.all(terms * ks >= 0.5 * terms[0] * ks[0])),
        "stationary_floor": bool(np.all(floor >= 0.5 * floor[0])),
    }
    return FamilyTable(ks, {"sigma": sig, "g_sup": g_sup, "g_ratio": g_ratio, "Sg_sup": s_sup,
                            "partial_sum": partial, "U_sup": u_sup, "U_floor_ratio": floor},
                       checks, dict(m=m, rho=rho, rule=sigma_rule, t=t, d=d, K=K,
                                    construction=construction))


# ---------------------------------------------------------------------------
# Boundedness probes

FAMILIES = ("bandlimited", "cubes", "packets")


def draw_test_function(spec: GridSpec, family: str, seed: int, index: int, rho=0.5, p=2.0) -> GridFunction:
    """One member of a seeded test family.

    ``bandlimited``: Gaussian coefficients on ``|xi| <= 2^(K-1)``.
    ``cubes``: a random-cube function at a level drawn in ``1..K-2``.
    ``packets``: a wave packet at a random position and direction, scale ``2^-k``.
    """
    rng = np.random.default_rng([int(seed), int(index)])
    r = spec.freq_norm()
    if family == "bandlimited":
        c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
        return GridFunction.from_spectrum(spec, c * (r <= 2.0 ** (spec.K - 1)))
    if family == "cubes":
        k = int(rng.integers(1, spec.K - 1))
        return sample_random_f(RandomCubeFamily(spec, k, rho, p, int(rng.integers(2**31))))
    if family == "packets":
        k = int(rng.integers(2, spec.K - 1))
        centre = rng.random(spec.d)
        direction = rng.standard_normal(spec.d)
        direction /= np.linalg.norm(direction)
        xi = spec.frequencies().astype(float)
        off = np.sqrt(((xi - 2.0**k * direction) ** 2).sum(-1))
        window = psi(off / 2.0 ** (k - 2))
        fhat = window * np.exp(-2j * np.pi * (xi @ centre))
        return GridFunction.from_spectrum(spec, fhat)
    raise ContractError(f"unknown test family {family!r}")


@dataclass
class ProbeReport:
    """Ratio statistics ``||T_a f||_out / ||f||_in`` over a seeded family."""

    ratios: np.ndarray
    family: str
    spec: GridSpec
    evidence: str = "single grid: no refinement evidence"

    @property
    def max(self) -> float:
        return float(self.ratios.max())

    @property
    def mean(self) -> float:
        return float(self.ratios.mean())

    def quantiles(self, qs=(0.1, 0.5, 0.9)):
        return np.quantile(self.ratios, qs)


def boundedness_probe(a: Symbol, in_params: SpaceParams, out_params: SpaceParams, family: str = "bandlimited",
                      n: int = 64, *, spec: GridSpec, seed: int = 0) -> ProbeReport:
    """Distribution of ``||T_a f||_out / ||f||_in`` over ``n`` seeded draws."""
    if family not in FAMILIES:
        raise ContractError(f"unknown test family {family!r}")
    P = build_partition(spec)
    ratios = np.empty(n)
    for i in range(n):
        f = draw_test_function(spec, family, seed, i, p=in_params.p if np.isfinite(in_params.p) else 2.0)
        den = f_space_norm(f, P, in_params)
        if den == 0:
            ratios[i] = np.nan
            continue
        ratios[i] = f_space_norm(apply(a, f), P, out_params) / den
    ratios = ratios[np.isfinite(ratios)]
    return ProbeReport(ratios, family, spec)


@dataclass
class RefinementReport:
    """Probe maxima across grid depths and the resulting evidence grade."""

    Ks: np.ndarray
    maxima: np.ndarray
    reports: list
    grade: str
    variation: float


def probe_refinement(symbol_factory, in_params, out_params, family="bandlimited", n=64, *, d=1,
                     Ks=(6, 7, 8), seed=0, stable_tol=0.2) -> RefinementReport:
    """Repeat :func:`boundedness_probe` on refined grids.

    ``grade`` is ``"growth under refinement"`` when the maxima increase
    strictly, ``"stable under refinement"`` when their spread is below
    ``stable_tol``, and ``"inconclusive"`` otherwise. Finite grids cannot
    certify boundedness or unboundedness; the grade is evidence only.
    """
    reports = []
    for K in Ks:
        spec = GridSpec(d, K)
        a = symbol_factory() if callable(symbol_factory) else symbol_factory
        reports.append(boundedness_probe(a, in_params, out_params, family, n, spec=spec, seed=seed))
    maxima = np.array([r.max for r in reports])
    variation = float((maxima.max() - maxima.min()) / maxima.min())
    if np.all(np.diff(maxima) > 0) and variation >= stable_tol:
        grade = "growth under refinement"
    elif variation < stable_tol:
        grade = "stable under refinement"
    else:
        grade = "inconclusive"
    for r in reports:
        r.evidence = f"evidence only: {grade} over K={tuple(Ks)}"
    return RefinementReport(np.array(Ks), maxima, reports, grade, variation)
