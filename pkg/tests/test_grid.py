import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpfield.errors import ContractError, DomainError
from lpfield.grid import (
    FREQUENCY,
    PHYSICAL,
    GridFunction,
    GridSpec,
    fourier_matrix,
    inner_product,
    load_grid_function,
    lp_norm,
    periodic_distance,
    read_csv,
    save_grid_function,
    transform,
    write_csv,
)


def _random(spec, rng):
    return GridFunction(spec, PHYSICAL, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))


def brute_dft(f):
    """O(N^{2d}) forward transform straight from the defining sum."""
    spec = f.spec
    x = spec.points().reshape(-1, spec.d)
    xi = spec.frequencies().reshape(-1, spec.d)
    out = np.zeros(spec.size, dtype=complex)
    vals = f.values.reshape(-1)
    for j in range(spec.size):
        out[j] = np.sum(vals * np.exp(-2j * np.pi * (x @ xi[j]))) / spec.size
    return out.reshape(spec.shape)


class TestGridSpec:
    def test_sizes(self):
        s = GridSpec(2, 5)
        assert s.N == 64 and s.shape == (64, 64) and s.size == 4096

    @pytest.mark.parametrize("d,K", [(3, 5), (0, 5), (1, 3), (1, 4.5)])
    def test_rejects(self, d, K):
        with pytest.raises(DomainError):
            GridSpec(d, K)

    def test_lattice_holds_all_annuli(self):
        s = GridSpec(1, 6)
        r = s.freq_norm()
        for k in range(s.K):
            assert np.any(r >= 2.0 ** (k + 1))

    def test_frequencies_fft_order(self):
        s = GridSpec(1, 4)
        assert list(s.frequencies()[:, 0]) == list(np.fft.fftfreq(32, 1 / 32).astype(int))


class TestTransform:
    def test_constant(self):
        s = GridSpec(1, 5)
        fhat = transform(GridFunction(s, PHYSICAL, np.ones(s.shape)), "forward").values
        expect = np.zeros(s.shape)
        expect[0] = 1
        np.testing.assert_allclose(fhat, expect, atol=1e-15)

    @pytest.mark.parametrize("d", [1, 2])
    def test_pure_tone(self, d):
        s = GridSpec(d, 4)
        v = np.array([3, -5][:d])
        f = GridFunction.from_function(s, lambda x: np.exp(2j * np.pi * (x @ v)))
        fhat = transform(f, "forward").values
        idx = tuple(int(c) % s.N for c in v)
        assert abs(fhat[idx] - 1) < 1e-13
        fhat_rest = fhat.copy()
        fhat_rest[idx] = 0
        assert np.abs(fhat_rest).max() < 1e-13

    def test_round_trip_100(self, rng):
        for d, K in [(1, 7), (2, 4)]:
            s = GridSpec(d, K)
            for _ in range(50):
                f = _random(s, rng)
                back = transform(transform(f, "forward"), "inverse")
                assert np.linalg.norm(back.values - f.values) <= 1e-12 * np.linalg.norm(f.values)

    @pytest.mark.parametrize("d,K", [(1, 5), (2, 4)])
    def test_against_brute_force(self, d, K, rng):
        s = GridSpec(d, K)
        f = _random(s, rng)
        np.testing.assert_allclose(transform(f, "forward").values, brute_dft(f), atol=1e-12)

    def test_side_contract(self):
        s = GridSpec(1, 4)
        f = GridFunction(s, FREQUENCY, np.zeros(s.shape))
        with pytest.raises(ContractError):
            transform(f, "forward")
        with pytest.raises(ContractError):
            transform(GridFunction(s, PHYSICAL, np.zeros(s.shape)), "inverse")
        with pytest.raises(ContractError):
            transform(f, "sideways")

    def test_fourier_matrix_matches_exponentials(self):
        s = GridSpec(2, 4)
        x = s.points().reshape(-1, 2)
        xi = s.frequencies().reshape(-1, 2)
        direct = np.exp(2j * np.pi * (x @ xi.T))
        np.testing.assert_allclose(fourier_matrix(s), direct, atol=1e-12)


class TestNorms:
    @given(c=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
           p=st.sampled_from([0.3, 0.5, 1.0, 2.0, 3.7, np.inf]))
    def test_constant(self, c, p):
        s = GridSpec(1, 4)
        f = GridFunction(s, PHYSICAL, np.full(s.shape, c))
        assert lp_norm(f, p) == pytest.approx(abs(c), rel=1e-12, abs=1e-300)

    def test_sup(self, rng):
        s = GridSpec(1, 5)
        f = _random(s, rng)
        assert lp_norm(f, np.inf) == np.abs(f.values).max()

    def test_half_indicator(self):
        s = GridSpec(1, 6)
        ind = np.zeros(s.shape)
        ind[: s.N // 2] = 1
        assert abs(lp_norm(GridFunction(s, PHYSICAL, ind), 2) - 2**-0.5) < 1e-12

    @given(p=st.sampled_from([0.25, 0.8, 1.0, 2.0, 5.0, np.inf]), lam=st.floats(-50, 50).filter(lambda v: v != 0),
           seed=st.integers(0, 2**16))
    def test_homogeneous_and_monotone(self, p, lam, seed):
        rng = np.random.default_rng(seed)
        s = GridSpec(1, 4)
        f = _random(s, rng)
        assert lp_norm(f * lam, p) == pytest.approx(abs(lam) * lp_norm(f, p), rel=1e-12)
        bigger = GridFunction(s, PHYSICAL, f.values * (1 + rng.random(s.shape)))
        assert lp_norm(bigger, p) >= lp_norm(f, p) * (1 - 1e-14)

    @pytest.mark.parametrize("p", [0, -1.0])
    def test_bad_p(self, p):
        s = GridSpec(1, 4)
        with pytest.raises(DomainError) as err:
            lp_norm(GridFunction(s, PHYSICAL, np.ones(s.shape)), p)
        assert err.value.key == "p"

    def test_rejects_frequency_side(self):
        s = GridSpec(1, 4)
        with pytest.raises(ContractError):
            lp_norm(GridFunction(s, FREQUENCY, np.ones(s.shape)), 2)


class TestInnerProduct:
    def test_self_pairing(self, rng):
        s = GridSpec(1, 5)
        f = _random(s, rng)
        assert inner_product(f, f) == pytest.approx(lp_norm(f, 2) ** 2, rel=1e-12)

    def test_orthogonality(self):
        s = GridSpec(2, 4)
        one = GridFunction(s, PHYSICAL, np.ones(s.shape))
        tone = GridFunction.from_function(s, lambda x: np.exp(2j * np.pi * (x @ np.array([2, -1]))))
        assert abs(inner_product(one, tone)) < 1e-14

    def test_conjugate_symmetry(self, rng):
        s = GridSpec(1, 5)
        f, g = _random(s, rng), _random(s, rng)
        assert inner_product(f, g) == pytest.approx(np.conj(inner_product(g, f)), rel=1e-13)

    @pytest.mark.parametrize("d,K", [(1, 5), (2, 4)])
    def test_parseval_constant(self, d, K, rng):
        # <f, g>_physical = N^d <fhat, ghat>_frequency with the brute-force transform
        s = GridSpec(d, K)
        f, g = _random(s, rng), _random(s, rng)
        lhs = np.sum(f.values * np.conj(g.values)) / s.size
        rhs = np.sum(brute_dft(f) * np.conj(brute_dft(g)))
        assert inner_product(f, g) == pytest.approx(lhs, rel=1e-13)
        assert lhs == pytest.approx(rhs, rel=1e-11)
        fh, gh = transform(f, "forward"), transform(g, "forward")
        assert inner_product(f, g) == pytest.approx(s.size * inner_product(fh, gh), rel=1e-12)

    def test_mismatch(self):
        f = GridFunction(GridSpec(1, 4), PHYSICAL, np.zeros(32))
        g = GridFunction(GridSpec(1, 5), PHYSICAL, np.zeros(64))
        with pytest.raises(ContractError):
            inner_product(f, g)


class TestGridFunction:
    def test_immutable(self):
        f = GridFunction(GridSpec(1, 4), PHYSICAL, np.zeros(32))
        with pytest.raises(ValueError):
            f.values[0] = 1

    def test_shape_contract(self):
        with pytest.raises(ContractError):
            GridFunction(GridSpec(1, 4), PHYSICAL, np.zeros(31))
        with pytest.raises(ContractError):
            GridFunction(GridSpec(1, 4), "middle", np.zeros(32))

    def test_periodic_distance(self):
        assert periodic_distance([0.9]) == pytest.approx(0.1)
        assert periodic_distance([[0.75, 0.25]])[0] == pytest.approx(np.hypot(0.25, 0.25))


class TestCsv:
    @pytest.mark.parametrize("d,side", [(1, PHYSICAL), (2, PHYSICAL), (1, FREQUENCY)])
    def test_round_trip_exact(self, tmp_path, rng, d, side):
        s = GridSpec(d, 4)
        f = GridFunction(s, side, rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape))
        path = tmp_path / "f.csv"
        save_grid_function(path, f, [("note", "x")])
        g = load_grid_function(path)
        assert g.side == side and g.spec == s
        assert np.array_equal(g.values, f.values)  # 17 significant digits round-trip exactly
        meta, header, _ = read_csv(path)
        assert meta["note"] == "x" and header[-2:] == ["re", "im"]

    def test_write_once(self, tmp_path):
        path = tmp_path / "a.csv"
        write_csv(path, ["a"], [[1]])
        with pytest.raises(FileExistsError):
            write_csv(path, ["a"], [[2]])

    def test_missing_meta(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, ["i0", "re", "im"], [[0, 1.0, 0.0]], [("d", 1)])
        with pytest.raises(ContractError):
            load_grid_function(path)
