"""Acceptance suite shared by ``lpfield verify`` and the test suite.

Each check returns a :class:`CriterionResult` carrying the measured values
as CSV rows, so that repeated runs can be compared byte for byte.
"""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import PHYSICAL, GridFunction, GridSpec, inner_product, write_csv
from .lp_decomp import build_partition
from .psido import apply, apply_compound, band_kernel
from .spaces import (
    DyadicCube,
    SequenceCoeffs,
    SpaceParams,
    atom_decompose,
    build_frames,
    phi_analysis,
    phi_synthesis,
)
from .symbols import (
    CompoundSymbol,
    FunctionSymbol,
    compound_adjoint,
    make_cmrho,
    make_modulation,
    make_ns,
    make_one,
    make_xmod,
    paradiff_split,
    reduce_compound,
    truncate,
)
from .experiments import besov_family_check, probe_refinement, sharpness_growth


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    budget: float
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = "" if self.budget == float("inf") else f" / {self.budget:g}s"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.elapsed:.1f}s{budget})"


def _random_f(spec, rng, radius=None):
    c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    if radius is None:
        return GridFunction(spec, PHYSICAL, c)
    return GridFunction.from_spectrum(spec, c * (spec.freq_norm() <= radius))


def _unit(f):
    return f * (1.0 / np.sqrt(inner_product(f, f).real))


def check_partition():
    rows = []
    worst = 0.0
    for d, K in ((1, 10), (2, 6)):
        spec = GridSpec(d, K)
        P = build_partition(spec)
        mask = spec.freq_norm() <= 2.0 ** (K - 2)
        err = float(np.abs(P.windows.sum(axis=0)[mask] - 1.0).max())
        rows.append([d, K, err])
        worst = max(worst, err)
    return worst <= 1e-12, f"max |sum omega_k - 1| = {worst:.2e} (tol 1e-12)", ["d", "K", "max_error"], rows


def _random_symbol(rng):
    m = rng.uniform(-1.0, 0.5)
    rho = rng.uniform(0.2, 0.9)
    return make_cmrho(m, rho) * make_xmod(rng.uniform(0.1, 0.8), int(rng.integers(1, 6)), rng.uniform())


def check_operator_identities(seed=2):
    spec = GridSpec(1, 8)
    rng = np.random.default_rng(seed)
    one = make_one()
    rows = []
    e_id = e_mod = e_adj = 0.0
    for i in range(20):
        f = _random_f(spec, rng)
        scale = float(np.abs(f.values).max())
        e1 = float(np.abs(apply(one, f).values - f.values).max()) / scale
        v = int(rng.integers(-spec.N // 2, spec.N // 2))
        x = spec.points()[..., 0]
        e2 = float(np.abs(apply(make_modulation([v]), f).values - np.exp(2j * np.pi * v * x) * f.values).max()) / scale
        a = _random_symbol(rng)
        # adjoint amplitude through the generic double sum, not the matrix adjoint
        A = CompoundSymbol(lambda x, y, xi, a=a: np.conj(a(y, xi)), a.m, a.rho, 0.0, a.delta)
        f1, g1 = _unit(_random_f(spec, rng)), _unit(_random_f(spec, rng))
        e3 = abs(inner_product(apply(a, f1), g1) - inner_product(f1, apply_compound(A, g1)))
        e_id, e_mod, e_adj = max(e_id, e1), max(e_mod, e2), max(e_adj, e3)
        rows.append([i, e1, e2, e3])
    ok = e_id <= 1e-12 and e_mod <= 1e-12 and e_adj <= 1e-8
    detail = f"identity {e_id:.1e}, modulation {e_mod:.1e} (tol 1e-12), adjoint {e_adj:.1e} (tol 1e-8)"
    return ok, detail, ["draw", "identity_err", "modulation_err", "adjoint_err"], rows


def random_smooth_symbol(spec, rng, max_mode=None):
    """Random trigonometric x-profile (modes ``<= 2^(K-1)``, decaying) times a model multiplier."""
    max_mode = max_mode or 2 ** (spec.K - 1)
    modes = rng.integers(-max_mode, max_mode + 1, size=(6, spec.d))
    coef = (rng.standard_normal(6) + 1j * rng.standard_normal(6)) / (1.0 + np.abs(modes).sum(-1))
    mult = make_cmrho(rng.uniform(-1, 1), rng.uniform(0.2, 0.9))

    def fn(x, xi):
        prof = 1.0 + sum(c * np.exp(2j * np.pi * (x @ mu.astype(float))) for c, mu in zip(coef, modes))
        return prof * mult(x, xi)

    return FunctionSymbol(fn, mult.m, mult.rho, 0.0, name="random-smooth")


def check_paradiff(seed=3):
    spec = GridSpec(1, 8)
    P = build_partition(spec)
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for i in range(5):
        a = random_smooth_symbol(spec, rng)
        S = paradiff_split(a, P)
        cols = S.resolved_mask()
        err = float(np.abs(S.reconstruct() - a.table(spec))[:, cols].max())
        rows.append([i, err])
        worst = max(worst, err)
    return worst <= 1e-10, f"max reconstruction error {worst:.2e} (tol 1e-10)", ["symbol", "max_error"], rows


def reduction_test_symbol():
    """Smooth symbol with x-modes ``|mu| <= 1``: order -1/4, type 1/2."""
    return make_cmrho(-0.25, 0.5) * make_xmod(0.4, 1, 0.1)


def check_reduction(seed=4):
    spec = GridSpec(1, 7)
    a = reduction_test_symbol()
    A = compound_adjoint(a)
    red = reduce_compound(A, spec)
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for i in range(10):
        g = _random_f(spec, rng, radius=2.0 ** (spec.K - 1))
        err = float(np.linalg.norm(apply(red, g).values - apply_compound(A, g).values) / np.linalg.norm(g.values))
        rows.append([i, err])
        worst = max(worst, err)
    detail = f"max relative error {worst:.2e} (tol 1e-4), schedule error estimate {red.error_estimate:.1e}"
    return worst <= 1e-4, detail, ["draw", "relative_error"], rows


def kernel_test_symbol():
    """Truncated smooth symbol of order -1: ``gamma(x/2) (1 + cos(2 pi x)/2) n_-1(xi)``."""
    return truncate(make_ns(-1.0) * make_xmod(0.5, 1), 1)


def check_kernel_decay():
    spec = GridSpec(1, 9)
    P = build_partition(spec)
    S = paradiff_split(kernel_test_symbol(), P)
    ks = list(range(4, spec.K - 1))
    maxima = [band_kernel(S, k).max_abs() for k in ks]
    ratios = [maxima[i] / maxima[i + 1] for i in range(len(ks) - 1)]
    kfix = spec.K - 3
    r, prof = band_kernel(S, kfix).radial_profile()
    r0 = 2.0**-kfix

    def near(rr):
        sel = (r >= rr) & (r <= 1.1 * rr)
        return float(prof[sel].max())

    decade = near(10 * r0) / near(r0)
    rows = [[k, mx] for k, mx in zip(ks, maxima)] + [[-1, decade]]
    ok = min(ratios) >= 2.0 and decade < 1e-2
    detail = f"min band ratio {min(ratios):.2f} (need >= 2), decade decay {decade:.1e} at k={kfix} (need < 1e-2)"
    return ok, detail, ["band", "value"], rows


def _brute_gsq_sup(r: SequenceCoeffs, s, q):
    """``sup g^{s,q}(r)`` by explicit enumeration of cubes and cells."""
    spec = GridSpec(r.d, r.K)
    acc = np.zeros(spec.shape)
    for cube, value in r.items():
        w = cube.volume ** (-s / r.d - 0.5) * abs(value)
        sl = cube.cell_slices(r.K)
        if np.isinf(q):
            acc[sl] = np.maximum(acc[sl], w)
        else:
            acc[sl] += w**q
    return float(acc.max() if np.isinf(q) else acc.max() ** (1.0 / q))


def check_frames_atoms(seed=6):
    rng = np.random.default_rng(seed)
    rows = []
    worst_frame = 0.0
    for d, K in ((1, 8), (2, 5)):
        spec = GridSpec(d, K)
        frames = build_frames(spec)
        for i in range(20 if d == 1 else 10):
            f = _random_f(spec, rng, radius=frames.resolved_radius)
            g = phi_synthesis(phi_analysis(f, frames), frames)
            err = float(np.linalg.norm(g.values - f.values) / np.linalg.norm(f.values))
            worst_frame = max(worst_frame, err)
            rows.append([d, i, err])
    params = SpaceParams(0.5, 1.0, 0.5)
    worst_rec = 0.0
    worst_atom = 0.0
    for i in range(5):
        d, K = (1, 8) if i % 2 == 0 else (2, 5)
        b = SequenceCoeffs(d, K)
        for level in (2, 3):
            shape = b.levels[level].shape
            b.levels[level][...] = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (
                rng.random(shape) < 0.5
            )
        atoms = atom_decompose(b, params)
        total = SequenceCoeffs(d, K)
        for at in atoms:
            total = total + at.coeffs * at.lam
            if not all(at.cube.contains(Q) for Q, _ in at.coeffs.items()):
                worst_atom = np.inf
            bound = at.cube.volume ** (-1.0 / params.p)
            worst_atom = max(worst_atom, _brute_gsq_sup(at.coeffs, params.s, params.q) / bound - 1.0)
        rec = max(float(np.abs(x - y).max()) for x, y in zip(total.levels, b.levels))
        worst_rec = max(worst_rec, rec)
        rows.append([d, 100 + i, rec])
    ok = worst_frame <= 1e-8 and worst_rec <= 1e-10 and worst_atom <= 1e-12
    detail = (f"frame error {worst_frame:.1e} (tol 1e-8), atom reconstruction {worst_rec:.1e} (tol 1e-10), "
              f"atom bound excess {worst_atom:.1e}")
    return ok, detail, ["d", "draw", "error"], rows


def check_sharpness(seeds=64):
    fit = sharpness_growth(2, 1, 1, rho=0.5, L_list=range(4, 10), seeds=seeds, d=1, K=11, seed0=0)
    ctrl = sharpness_growth(2, 2, 2, rho=0.5, L_list=range(4, 10), seeds=seeds, d=1, K=11, seed0=0)
    ok_in = abs(fit.input_slope - 0.5) <= 0.15
    ok_out = abs(fit.output_slope - 1.0) <= 0.15
    ok_ctrl = abs(ctrl.ratio_slope) <= 0.1
    rows = [[int(L), i, o] for L, i, o in zip(fit.levels, fit.input_norm, fit.output_norm)]
    rows += [[int(L), i, o] for L, i, o in zip(ctrl.levels, ctrl.input_norm, ctrl.output_norm)]
    detail = (f"input slope {fit.input_slope:.3f} (1/2 +- 0.15), output slope {fit.output_slope:.3f} "
              f"(1 +- 0.15), control ratio slope {ctrl.ratio_slope:.3f} (0 +- 0.1)")
    return ok_in and ok_out and ok_ctrl, detail, ["L", "input", "output"], rows


def check_besov():
    tab = besov_family_check(2.0, 2.0, 0.5, range(4, 10), d=1, K=11)
    ok = tab.checks["h_within_factor_2"] and tab.checks["Sh_bounded_below"]
    hk, sk = tab.columns["h_scaled"], tab.columns["Sh_scaled"]
    detail = (f"h spread {hk.max() / hk.min():.3f}x (within 2x), "
              f"min S h / first {sk.min() / sk[0]:.3f} (>= 0.5)")
    names, rows = tab.rows()
    return ok, detail, ["k"] + names, rows


def check_criticality(n=64):
    rho = 0.5
    m_crit = -(1 - rho) * abs(0.5 - 1 / 2.0)
    params = SpaceParams(2.0, 2.0, 0.0)
    crit = probe_refinement(lambda: make_cmrho(m_crit, rho), params, params, "bandlimited", n, d=1, Ks=(6, 7, 8))
    sup = probe_refinement(lambda: make_cmrho(m_crit + 0.2, rho), params, params, "bandlimited", n, d=1,
                           Ks=(6, 7, 8))
    ok_crit = crit.variation < 0.2
    ok_sup = bool(np.all(np.diff(sup.maxima) > 0))
    rows = [[int(K), 0, mx] for K, mx in zip(crit.Ks, crit.maxima)]
    rows += [[int(K), 1, mx] for K, mx in zip(sup.Ks, sup.maxima)]
    detail = (f"critical spread {crit.variation:.1%} (< 20%), supercritical maxima "
              f"{', '.join(f'{v:.3f}' for v in sup.maxima)} (strictly increasing)")
    return ok_crit and ok_sup, detail, ["K", "supercritical", "max_ratio"], rows


CRITERIA = [
    (1, "partition identity", check_partition, 1.0),
    (2, "operator identities", check_operator_identities, 30.0),
    (3, "paradifferential reconstruction", check_paradiff, 60.0),
    (4, "compound reduction", check_reduction, 300.0),
    (5, "kernel decay", check_kernel_decay, 120.0),
    (6, "frame and atoms", check_frames_atoms, 60.0),
    (7, "sharpness exponents", check_sharpness, 900.0),
    (8, "Besov family", check_besov, 120.0),
    (9, "criticality contrast", check_criticality, 600.0),
]


def run_criterion(number, outdir=None) -> CriterionResult:
    for num, name, fn, budget in CRITERIA:
        if num == number:
            t0 = time.perf_counter()
            ok, detail, header, rows = fn()
            elapsed = time.perf_counter() - t0
            if elapsed > budget:
                ok = False
                detail += f"; over the {budget:g}s budget"
            res = CriterionResult(num, name, bool(ok), detail, elapsed, budget, header, rows)
            if outdir is not None:
                write_csv(os.path.join(outdir, f"criterion_{num:02d}.csv"), header, rows,
                          [("criterion", num), ("name", name)])
            return res
    raise KeyError(number)


def check_determinism(first_dir, numbers=None) -> CriterionResult:
    """Rerun the selected criteria into a fresh directory and compare CSV bytes with ``first_dir``."""
    numbers = numbers or [c[0] for c in CRITERIA]
    t0 = time.perf_counter()
    mismatched = []
    with tempfile.TemporaryDirectory() as again:
        for n in numbers:
            run_criterion(n, again)
            name = f"criterion_{n:02d}.csv"
            with open(os.path.join(first_dir, name), "rb") as fa, open(os.path.join(again, name), "rb") as fb:
                if fa.read() != fb.read():
                    mismatched.append(n)
    elapsed = time.perf_counter() - t0
    detail = f"{len(numbers)} runs repeated; " + ("all CSVs byte-identical" if not mismatched
                                                  else f"mismatch in {mismatched}")
    return CriterionResult(10, "determinism", not mismatched, detail, elapsed, float("inf"),
                           ["criterion", "identical"], [[n, int(n not in mismatched)] for n in numbers])


def run_all(outdir=None, echo=print, determinism=True, numbers=None):
    """Run the acceptance criteria (all by default), then optionally the determinism rerun."""
    numbers = numbers or [c[0] for c in CRITERIA]
    results = []
    with tempfile.TemporaryDirectory() as scratch:
        first = outdir if outdir is not None else scratch
        for num in numbers:
            res = run_criterion(num, first)
            results.append(res)
            if echo:
                echo(res.line())
        if determinism:
            res = check_determinism(first, numbers)
            results.append(res)
            if echo:
                echo(res.line())
    return results
