import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpfield.acceptance import random_smooth_symbol
from lpfield.errors import ContractError, ConvergenceError, DomainError
from lpfield.grid import GridFunction, GridSpec
from lpfield.lp_decomp import build_partition, window
from lpfield.psido import apply
from lpfield.symbols import (
    CompoundSymbol,
    FunctionSymbol,
    TableSymbol,
    compound_adjoint,
    gamma_cutoff,
    make_cmrho,
    make_gamma,
    make_modulation,
    make_ns,
    make_one,
    make_xmod,
    paradiff_split,
    parse_symbol,
    reduce_compound,
    seminorm_estimate,
    truncate,
)


def _lattice(d, n=40):
    ax = np.arange(-n, n + 1, dtype=float)
    if d == 1:
        return ax[:, None]
    g = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    return g.reshape(-1, 2)


class TestModelSymbols:
    def test_cmrho_origin(self):
        c = make_cmrho(-0.7, 0.4)
        assert c(np.zeros(1), np.zeros(1)) == pytest.approx(1.0)
        assert c(np.zeros(2), np.zeros(2)) == pytest.approx(1.0)

    @given(m=st.floats(-3, 3), rho=st.floats(0.01, 0.99), d=st.sampled_from([1, 2]))
    def test_cmrho_modulus(self, m, rho, d):
        xi = _lattice(d, 12)
        vals = make_cmrho(m, rho)(np.zeros(d), xi)
        np.testing.assert_allclose(np.abs(vals), (1 + (xi**2).sum(-1)) ** (m / 2), rtol=1e-12)

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5])
    def test_cmrho_rho_range(self, rho):
        with pytest.raises(DomainError):
            make_cmrho(0, rho)

    def test_ns(self):
        xi = _lattice(2, 10)
        assert np.all(make_ns(0)(np.zeros(2), xi) == 1)
        np.testing.assert_allclose(make_ns(2)(np.zeros(2), xi) * make_ns(-2)(np.zeros(2), xi), 1, rtol=1e-14)
        assert make_ns(1)(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(26**0.5, rel=1e-15)
        assert make_ns(1).x_independent

    def test_one_and_modulation(self):
        s = GridSpec(1, 4)
        assert np.all(make_one().table(s) == 1)
        x = s.points()
        vals = make_modulation([3])(x, np.ones_like(x))
        np.testing.assert_allclose(vals, np.exp(2j * np.pi * 3 * x[..., 0]))

    def test_product_class(self):
        p = make_cmrho(-0.5, 0.5) * make_ns(1.0)
        assert p.m == pytest.approx(0.5)
        s = GridSpec(1, 5)
        np.testing.assert_allclose(p.table(s), make_cmrho(-0.5, 0.5).table(s) * make_ns(1.0).table(s))


class TestRegistry:
    def test_parse(self):
        s = GridSpec(1, 5)
        a = parse_symbol("cmrho:m=-0.25,rho=0.5")
        np.testing.assert_array_equal(a.table(s), make_cmrho(-0.25, 0.5).table(s))
        b = parse_symbol("product:ns:s=1*xmod:amp=0.3,freq=2")
        np.testing.assert_allclose(b.table(s), make_ns(1).table(s) * make_xmod(0.3, 2).table(s))
        assert parse_symbol("modulation:v0=2").table(s)[3, 0] == pytest.approx(np.exp(2j * np.pi * 2 * 3 / s.N))

    @pytest.mark.parametrize("text", ["nosuch:a=1", "cmrho:m=1,zz=3", "ns:s", "ns:s=abc", "", "cmrho:m=0,rho=2"])
    def test_errors(self, text):
        with pytest.raises(ContractError):
            parse_symbol(text)

    def test_unresolved_message(self):
        with pytest.raises(ContractError, match="unresolved registry name"):
            parse_symbol("bogus")


class TestSeminorm:
    def test_one(self):
        T = seminorm_estimate(make_one(), (2, 2), GridSpec(1, 7), m=0)
        assert T.value(0, 0) == pytest.approx(1.0)
        for (a, b), v in T.entries().items():
            if (a, b) != (0, 0):
                assert v < 1e-10

    @pytest.mark.parametrize("s", [1.0, -0.5, 2.0])
    def test_ns_first_derivative(self, s):
        # closed form d/dxi (1 + xi^2)^(s/2) = s xi (1 + xi^2)^(s/2 - 1)
        spec = GridSpec(1, 9)
        T = seminorm_estimate(make_ns(s), (2, 1), spec)
        assert T.is_stable()
        assert all(np.isfinite(v) for v in T.entries().values())
        from lpfield.symbols import _dyad_samples

        for j, pts in enumerate(_dyad_samples(spec, 4, spec.K - 1)):
            if j < 3:
                continue  # a unit step is coarse at the lowest dyads
            xi = pts[:, 0]
            exact = np.max(np.abs(s * xi * (1 + xi**2) ** (s / 2 - 1)) * (1 + np.abs(xi)) ** (1 - s))
            assert T.per_dyad[(1, 0)][j] == pytest.approx(exact, rel=1e-2)

    def test_cmrho_class_detection(self):
        spec = GridSpec(1, 9)
        c = make_cmrho(0.0, 0.5)
        good = seminorm_estimate(c, (1, 0), spec)
        assert abs(good.growth_rate(1, 0)) < 0.1 and good.is_stable()
        bad = seminorm_estimate(c, (1, 0), spec, rho=0.9)
        # wrong claim rho' = 0.9 shows up as growth ~ (0.9 - 0.5) per dyad
        assert bad.growth_rate(1, 0) > 0.3

    def test_x_derivative(self):
        spec = GridSpec(1, 8)
        T = seminorm_estimate(make_xmod(0.5, 1), (0, 2), spec, n_x=64)
        # d/dx amp cos(2 pi x) peaks at 2 pi amp; sampled x grid includes x = 1/4
        assert T.value(0, 1) == pytest.approx(np.pi, rel=1e-3)
        assert T.value(0, 2) == pytest.approx(2 * np.pi**2, rel=1e-3)

    def test_truncation_uniform_in_tau(self):
        spec = GridSpec(1, 9)
        a = make_cmrho(-0.25, 0.5) * make_xmod(0.5, 1)
        base = seminorm_estimate(a, (1, 1), spec).entries()
        ratios = []
        for tau in (0, 1, 2, 3):
            e = seminorm_estimate(truncate(a, tau), (1, 1), spec).entries()
            ratios.append(max(e[k] / base[k] for k in e))
        # smallest tau is the worst case; larger tau never increases the constants
        assert ratios[2] == ratios[3] == 1.0
        assert ratios[0] >= ratios[1] >= ratios[2]
        assert ratios[0] < 10

    def test_underflow(self):
        with pytest.raises(ContractError, match="underflow"):
            seminorm_estimate(make_one(), (2, 2), GridSpec(1, 23))

    def test_needs_spec(self):
        with pytest.raises(ContractError):
            seminorm_estimate(make_one())


class TestTruncate:
    def test_large_tau_identity(self):
        a = make_cmrho(-0.5, 0.5) * make_xmod()
        assert truncate(a, 2) is a and truncate(a, 5.5) is a
        s = GridSpec(1, 6)
        np.testing.assert_array_equal(make_gamma(2).table(s), 1)

    @pytest.mark.parametrize("tau", [0, 0.5, 1])
    def test_one(self, tau):
        s = GridSpec(2, 4)
        t = truncate(make_one(), tau).table(s)
        gamma = gamma_cutoff(s.points().reshape(-1, 2), tau)
        np.testing.assert_allclose(t, np.repeat(gamma[:, None], s.size, axis=1))

    def test_gamma_profile(self):
        x = np.linspace(-0.5, 0.5, 1001)[:, None]
        g = gamma_cutoff(x, 0)
        assert np.all(g[np.abs(x[:, 0]) <= 1 / 8] == 1)
        assert np.all(g[np.abs(x[:, 0]) >= 1 / 4] == 0)
        np.testing.assert_allclose(gamma_cutoff(x + 1, 0), g)  # periodic

    def test_class_kept(self):
        a = make_cmrho(-0.25, 0.5)
        assert truncate(a, 0).declared_class == a.declared_class

    def test_negative(self):
        with pytest.raises(DomainError):
            truncate(make_one(), -1)


class TestParadiff:
    def test_x_independent(self):
        s = GridSpec(1, 7)
        P = build_partition(s)
        a = make_cmrho(-0.25, 0.5)
        S = paradiff_split(a, P)
        assert np.abs(S.part(1)).max() < 1e-14
        cols = S.resolved_mask()
        np.testing.assert_allclose((S.part(2) + S.part(3))[:, cols], a.table(s)[:, cols], atol=1e-13)
        for j in range(1, s.K):
            assert np.abs(S.a_jk(j, 3)).max() < 1e-14

    @pytest.mark.parametrize("j0", [2, 4])
    def test_pure_tone_rows(self, j0):
        s = GridSpec(1, 7)
        P = build_partition(s)
        v = 3 * 2 ** (j0 - 1)
        a = make_modulation([v]) * make_cmrho(0.0, 0.5)
        S = paradiff_split(a, P)
        cols = S.resolved_mask()
        for j in range(s.K):
            row = sum(S.a_jk(j, k) for k in range(s.K))
            if abs(j - j0) > 1:
                assert np.abs(row).max() < 1e-13
            np.testing.assert_allclose(row[:, cols], window(float(v), j) * a.table(s)[:, cols], atol=1e-12)

    def test_reconstruction_random(self, rng):
        s = GridSpec(1, 8)
        P = build_partition(s)
        for _ in range(5):
            a = random_smooth_symbol(s, rng)
            S = paradiff_split(a, P)
            cols = S.resolved_mask()
            assert np.abs(S.reconstruct() - a.table(s))[:, cols].max() <= 1e-10

    def test_families_sum_to_parts(self, rng):
        s = GridSpec(1, 7)
        S = paradiff_split(random_smooth_symbol(s, rng), build_partition(s))
        np.testing.assert_allclose(sum(S.a_k(k) for k in range(s.K)), S.part(2), atol=1e-12)
        np.testing.assert_allclose(sum(S.b_k(k) for k in range(s.K)), S.part(3), atol=1e-12)

    def test_family_symbol_matches_table(self, rng):
        s = GridSpec(1, 6)
        S = paradiff_split(make_cmrho(-0.25, 0.5) * make_xmod(0.4, 2), build_partition(s))
        np.testing.assert_allclose(S.family_symbol("a", 3).table(s), S.a_k(3), atol=1e-13)
        # off-grid x goes through trigonometric interpolation of the same data
        x = np.array([[0.3141]])
        xi = np.array([[5.0]])
        direct = S.family_symbol("b", 4)(x, xi)
        via_table = S.table_symbol("b", 4)(x, xi)
        assert direct == pytest.approx(via_table, abs=1e-12)

    def test_bk_uniform(self):
        # b_k seminorm constants stay bounded uniformly in k for c_{m,rho} times an x-modulation
        s = GridSpec(1, 7)
        S = paradiff_split(make_cmrho(-0.25, 0.5) * make_xmod(0.5, 1), build_partition(s))
        tables = [seminorm_estimate(S.family_symbol("b", k), (1, 1), s).entries() for k in range(3, s.K)]
        for key in tables[0]:
            vals = np.array([t[key] for t in tables])
            assert vals.max() <= 2 * vals[0] + 1e-12

    def test_band_range(self):
        s = GridSpec(1, 5)
        S = paradiff_split(make_one(), build_partition(s))
        with pytest.raises(ContractError):
            S.a_k(5)
        with pytest.raises(ContractError):
            S.part(4)


class TestCompound:
    def test_adjoint_of_real_multiplier(self):
        a = make_ns(-1.0)
        A = compound_adjoint(a)
        assert A.y_independent and A.x_independent
        x = np.array([0.1])
        y = np.array([0.7])
        xi = np.array([5.0])
        assert A(x, y, xi) == pytest.approx(a(x, xi))

    def test_adjoint_of_constant_i(self):
        a = FunctionSymbol(lambda xi: np.full(xi.shape[:-1], 1j), x_independent=True)
        A = compound_adjoint(a)
        s = GridSpec(1, 4)
        np.testing.assert_array_equal(A.slab(s, 3), -1j)

    def test_adjoint_class(self):
        a = make_cmrho(-0.3, 0.6)
        assert compound_adjoint(a).declared_class == (-0.3, 0.6, 0.0, 0.0)

    def test_slab_block_generic(self):
        s = GridSpec(1, 4)
        A = CompoundSymbol(lambda x, y, xi: np.cos(2 * np.pi * (x - 2 * y))[..., 0] * (1 + xi[..., 0] ** 2) ** -0.5)
        blk = A.slab_block(s, slice(2, 5))
        for i, ix in enumerate(range(2, 5)):
            np.testing.assert_allclose(blk[i], A.slab(s, ix))


class TestReduce:
    def test_y_independent(self):
        s = GridSpec(1, 6)
        a = make_cmrho(-0.25, 0.5) * make_xmod(0.4, 1, 0.1)
        A = CompoundSymbol(lambda x, y, xi: a(x, xi), y_independent=True)
        R = reduce_compound(A, s, (0.25, 0.125, 0.0625, 0.03125))
        assert np.abs(R.table(s) - a.table(s)).max() <= 1e-6
        # the default schedule stays within its own error estimate
        R3 = reduce_compound(A, s)
        assert np.abs(R3.table(s) - a.table(s)).max() <= R3.error_estimate

    def test_multiplier(self):
        s = GridSpec(1, 6)
        c = make_cmrho(-0.25, 0.5)
        A = CompoundSymbol(lambda x, y, xi: np.conj(c(y, xi)), x_independent=True, y_independent=True)
        R = reduce_compound(A, s, (0.25, 0.125, 0.0625, 0.03125))
        assert np.abs(R.table(s) - np.conj(c.table(s))).max() <= 1e-6

    def test_operator_agreement(self, rng):
        from lpfield.psido import apply_compound

        s = GridSpec(1, 6)
        a = make_cmrho(-0.25, 0.5) * make_xmod(0.4, 1, 0.1)
        A = compound_adjoint(a)
        R = reduce_compound(A, s)
        r = s.freq_norm()
        for _ in range(5):
            g = GridFunction.from_spectrum(s, rng.standard_normal(s.shape) * (r <= 2 ** (s.K - 2)))
            diff = apply(R, g).values - apply_compound(A, g).values
            assert np.linalg.norm(diff) <= 1e-4 * np.linalg.norm(g.values)

    def test_double_adjoint_round_trip(self, rng):
        s = GridSpec(1, 6)
        a = make_cmrho(-0.25, 0.5) * make_xmod(0.4, 1, 0.1)
        back = reduce_compound(compound_adjoint(reduce_compound(compound_adjoint(a), s)), s)
        r = s.freq_norm()
        for _ in range(5):
            g = GridFunction.from_spectrum(s, (rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape))
                                           * (r <= 2 ** (s.K - 2)))
            diff = apply(back, g).values - apply(a, g).values
            assert np.linalg.norm(diff) <= 1e-4 * np.linalg.norm(g.values)

    def test_nonconvergent_schedule(self):
        s = GridSpec(1, 5)
        a = make_cmrho(-0.25, 0.5) * make_xmod(0.4, 1)
        A = CompoundSymbol(lambda x, y, xi: a(x, xi), y_independent=True)
        with pytest.raises(ConvergenceError) as err:
            reduce_compound(A, s, (1.0, 0.99, 0.5))
        eps = [e for e, _ in err.value.trace]
        assert eps == [1.0, 0.99, 0.5]
        assert err.value.trace[2][1] > err.value.trace[1][1]

    @pytest.mark.parametrize("sched", [(0.25, 0.125), (0.1, 0.2, 0.05), (0.25, 0.0, -0.1)])
    def test_schedule_validation(self, sched):
        with pytest.raises(DomainError):
            reduce_compound(compound_adjoint(make_one()), GridSpec(1, 4), sched)

    def test_reduced_is_table_symbol(self):
        s = GridSpec(1, 5)
        R = reduce_compound(compound_adjoint(make_ns(-1)), s)
        assert isinstance(R, TableSymbol)
        assert len(R.trace) == 3 and len(R.stages) == 3
        with pytest.raises(ContractError):
            R.table(GridSpec(1, 6))
