import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wa_distill import (
    Alphabet,
    Basis,
    BasisExhausted,
    CachedOracle,
    DegenerateHankel,
    ExtractionConfig,
    SpectralExtractor,
    WAOracle,
    WeightedAutomaton,
    dataset_sampler,
    enumerated_basis,
    extract,
    fill_hankels,
    generate_basis,
    kl_divergence,
    normalized,
    oracle_sampler,
    random_stochastic_wa,
    spectral_extraction,
    truncated_svd,
    uniform_sampler,
)
from wa_distill.spectral import _assemble

from _util import all_strings, level_scores, random_wa, two_state_wa

LAMBDA = ()


def minimal_basis():
    alphabet = Alphabet(2, ("a", "b"))
    return Basis(alphabet, (LAMBDA, (0,)), (LAMBDA, (0,)))


class TestBasis:
    def test_prefix_closure_enforced(self):
        with pytest.raises(ValueError, match="prefix-closed"):
            Basis(Alphabet(2), (LAMBDA, (0, 1)), (LAMBDA,))

    def test_empty_string_required_on_both_sides(self):
        with pytest.raises(ValueError):
            Basis(Alphabet(2), ((0,),), (LAMBDA,))
        with pytest.raises(ValueError):
            Basis(Alphabet(2), (LAMBDA,), ((0,),))

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Basis(Alphabet(2), (LAMBDA, (0,), (0,)), (LAMBDA,))

    def test_dump_parse_round_trip(self):
        basis = enumerated_basis(Alphabet(2), 2)
        parsed = Basis.parse(basis.dump(), basis.alphabet)
        assert parsed.prefixes == basis.prefixes
        assert parsed.suffixes == basis.suffixes


class TestGenerateBasis:
    def test_single_string_contributes_prefixes_and_suffixes(self):
        sampler = dataset_sampler([(0, 1)])
        basis = generate_basis(sampler, Alphabet(2), 3, 3, np.random.default_rng(0))
        assert set(basis.prefixes) == {LAMBDA, (0,), (0, 1)}
        assert set(basis.suffixes) == {LAMBDA, (1,), (0, 1)}

    def test_minimal_targets_need_no_sampling(self):
        sampler = uniform_sampler(Alphabet(2), 4)
        basis = generate_basis(sampler, Alphabet(2), 1, 1, np.random.default_rng(0))
        assert basis.prefixes == (LAMBDA,)
        assert basis.suffixes == (LAMBDA,)

    def test_duplicate_samples_are_deduplicated(self):
        draws = iter([(0,), (0,), (0, 1), (0, 1)])

        def sampler(rng):
            return next(draws)

        basis = generate_basis(sampler, Alphabet(2), 3, 1, np.random.default_rng(0))
        assert set(basis.prefixes) == {LAMBDA, (0,), (0, 1)}

    def test_stale_sampling_raises(self):
        sampler = uniform_sampler(Alphabet(2), 0)
        with pytest.raises(BasisExhausted):
            generate_basis(sampler, Alphabet(2), 2, 1, np.random.default_rng(0))

    def test_prefix_closure_holds_for_sampled_bases(self):
        rng = np.random.default_rng(39)
        sampler = uniform_sampler(Alphabet(3), 6)
        basis = generate_basis(sampler, Alphabet(3), 40, 55, rng)
        assert basis.num_prefixes >= 40
        assert basis.num_suffixes >= 55
        held = set(basis.prefixes)
        for w in basis.prefixes:
            for i in range(len(w)):
                assert w[:i] in held

    def test_oracle_generative_sampler(self):
        oracle = WAOracle(two_state_wa())
        basis = generate_basis(
            oracle_sampler(oracle, 8), oracle.alphabet, 20, 20, np.random.default_rng(3)
        )
        assert basis.num_prefixes >= 20

    def test_seeded_determinism(self):
        sampler = uniform_sampler(Alphabet(2), 5)
        one = generate_basis(sampler, Alphabet(2), 25, 25, np.random.default_rng(4))
        two = generate_basis(sampler, Alphabet(2), 25, 25, np.random.default_rng(4))
        assert one.prefixes == two.prefixes
        assert one.suffixes == two.suffixes


class TestFillHankels:
    def test_known_two_by_two_block(self):
        blocks = fill_hankels(WAOracle(two_state_wa()), minimal_basis())
        assert np.allclose(
            blocks.main, [[0.0, 1 / 24], [1 / 24, 1 / 32]], atol=1e-15
        )
        assert blocks.prefix_border == pytest.approx([0.0, 1 / 24], abs=1e-15)
        assert blocks.suffix_border == pytest.approx([0.0, 1 / 24], abs=1e-15)
        assert blocks.symbol_blocks[0, 0, 0] == pytest.approx(1 / 24, abs=1e-15)
        assert blocks.symbol_blocks[0, 1, 0] == pytest.approx(1 / 32, abs=1e-15)

    def test_alphabet_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fill_hankels(WAOracle(two_state_wa()), enumerated_basis(Alphabet(3), 1))

    def test_borders_equal_empty_row_and_column_exactly(self):
        rng = np.random.default_rng(43)
        wa = random_wa(rng, 5, 2)
        basis = generate_basis(
            uniform_sampler(wa.alphabet, 5), wa.alphabet, 15, 15, rng
        )
        blocks = fill_hankels(WAOracle(wa), basis)
        i = basis.prefix_index[LAMBDA]
        j = basis.suffix_index[LAMBDA]
        assert np.array_equal(blocks.prefix_border, blocks.main[:, j])
        assert np.array_equal(blocks.suffix_border, blocks.main[i, :])

    def test_query_budget(self):
        wa = two_state_wa()
        cache = CachedOracle(WAOracle(wa))
        basis = enumerated_basis(wa.alphabet, 2)
        fill_hankels(cache, basis)
        assert cache.misses <= basis.num_prefixes * basis.num_suffixes * 3

    def test_oracle_error_reports_query(self):
        class Broken(WAOracle):
            def score(self, string):
                if len(string) > 2:
                    raise DegenerateHankel("boom")
                return super().score(string)

        with pytest.raises(DegenerateHankel, match="query="):
            fill_hankels(Broken(two_state_wa()), enumerated_basis(Alphabet(2), 2))


class TestTruncatedSvd:
    def test_diagonal_truncation(self):
        u, d, v = truncated_svd(np.diag([2.0, 1.0]), 1)
        assert d == pytest.approx([2.0])
        residual = np.diag([2.0, 1.0]) - (u * d) @ v.T
        assert np.linalg.norm(residual) == pytest.approx(1.0, abs=1e-12)

    def test_full_rank_reconstruction(self):
        m = np.array([[0.0, 1 / 24], [1 / 24, 1 / 32]])
        u, d, v = truncated_svd(m, 2)
        assert np.linalg.norm(m - (u * d) @ v.T) <= 1e-12

    def test_zero_matrix_is_degenerate(self):
        with pytest.raises(DegenerateHankel):
            truncated_svd(np.zeros((3, 3)), 2)

    def test_orthonormal_columns_and_descending_values(self):
        rng = np.random.default_rng(47)
        m = rng.normal(size=(12, 9))
        u, d, v = truncated_svd(m, 5)
        assert np.allclose(u.T @ u, np.eye(5), atol=1e-9)
        assert np.allclose(v.T @ v, np.eye(5), atol=1e-9)
        assert all(d[i] >= d[i + 1] for i in range(len(d) - 1))

    def test_residual_is_optimal(self):
        rng = np.random.default_rng(53)
        m = rng.normal(size=(10, 10))
        spectrum = np.linalg.svd(m, compute_uv=False)
        u, d, v = truncated_svd(m, 4)
        residual = np.linalg.norm(m - (u * d) @ v.T)
        assert residual == pytest.approx(np.sqrt((spectrum[4:] ** 2).sum()), abs=1e-9)

    def test_rank_below_one_rejected(self):
        with pytest.raises(ValueError):
            truncated_svd(np.eye(2), 0)


class TestSpectralExtraction:
    def test_recovers_known_automaton_from_complete_basis(self):
        wa = two_state_wa()
        blocks = fill_hankels(WAOracle(wa), enumerated_basis(wa.alphabet, 3))
        recovered = spectral_extraction(blocks, 2)
        for w in all_strings(2, 5):
            assert recovered.evaluate(w) == pytest.approx(wa.evaluate(w), abs=1e-10)

    def test_rank_one_target_recovered_exactly(self):
        # Single state halving automaton: weight(w) = (1/4)^len * 1/2.
        target = WeightedAutomaton(
            Alphabet(2), [1.0], [0.5], [[[0.25]], [[0.25]]]
        )
        basis = Basis(target.alphabet, (LAMBDA, (0,)), (LAMBDA, (1,)))
        blocks = fill_hankels(WAOracle(target), basis)
        recovered = spectral_extraction(blocks, 1)
        assert recovered.num_states == 1
        for w in all_strings(2, 6):
            assert recovered.evaluate(w) == pytest.approx(
                0.5 * 0.25 ** len(w), abs=1e-12
            )

    def test_requested_rank_clamped_to_numerical_rank(self):
        wa = two_state_wa()
        blocks = fill_hankels(WAOracle(wa), enumerated_basis(wa.alphabet, 3))
        assert spectral_extraction(blocks, 100).num_states == 2

    def test_factorization_reproduces_truncated_approximation(self):
        rng = np.random.default_rng(59)
        wa = random_stochastic_wa(4, Alphabet(2), rng)
        blocks = fill_hankels(WAOracle(wa), enumerated_basis(wa.alphabet, 3))
        u, d, v = truncated_svd(blocks.main, 4)
        factor_p = u * d
        factor_s = v.T
        assert np.linalg.norm(factor_p @ factor_s - (u * d) @ v.T) <= 1e-9

    def test_gauge_freedom_sign_flips(self):
        wa = two_state_wa()
        blocks = fill_hankels(WAOracle(wa), enumerated_basis(wa.alphabet, 3))
        u, d, v = truncated_svd(blocks.main, 2)
        flip = np.diag([-1.0, 1.0])
        direct = _assemble(blocks, u, d, v)
        flipped = _assemble(blocks, u @ flip, d, v @ flip)
        rng = np.random.default_rng(61)
        for _ in range(30):
            w = tuple(rng.integers(0, 2, size=int(rng.integers(0, 7))))
            assert flipped.evaluate(w) == pytest.approx(direct.evaluate(w), abs=1e-9)

    def test_reconstruction_bound_for_true_rank_targets(self):
        rng = np.random.default_rng(67)
        for states, asize in [(2, 2), (3, 3), (5, 2), (4, 3)]:
            wa = random_stochastic_wa(states, Alphabet(asize), rng)
            blocks = fill_hankels(
                CachedOracle(WAOracle(wa)), enumerated_basis(wa.alphabet, 4)
            )
            recovered = spectral_extraction(blocks, 10)
            for truth, est in zip(level_scores(wa, 8), level_scores(recovered, 8)):
                assert np.all(np.abs(truth - est) <= 1e-8 * (1.0 + np.abs(truth)))


class TestExtract:
    def test_empty_only_basis_is_degenerate(self):
        config = ExtractionConfig(p=1, s=1, rank=1, max_len=6, seed=3)
        with pytest.raises(DegenerateHankel):
            extract(WAOracle(two_state_wa()), config)

    def test_same_seed_bit_identical(self):
        oracle = WAOracle(two_state_wa())
        config = ExtractionConfig(p=30, s=30, rank=2, max_len=6, seed=11)
        wa1, report1 = extract(oracle, config)
        wa2, report2 = extract(oracle, config)
        assert report1.to_text() == report2.to_text()
        assert np.array_equal(wa1.init_weights, wa2.init_weights)
        assert np.array_equal(wa1.final_weights, wa2.final_weights)
        assert np.array_equal(wa1.transitions, wa2.transitions)

    def test_uniform_sampling_reaches_low_divergence(self):
        target = two_state_wa()
        config = ExtractionConfig(p=50, s=50, rank=2, max_len=6, seed=7)
        learned, report = extract(WAOracle(target), config)
        support = list(all_strings(2, 8))
        ref = normalized([target.evaluate(w) for w in support])
        cand = [learned.evaluate(w) for w in support]
        assert kl_divergence(ref, cand) < 1e-6
        assert report.effective_rank == 2
        assert report.num_prefixes >= 50
        assert report.query_count <= report.num_prefixes * report.num_suffixes * 3

    def test_report_serialization_round_trip_fields(self):
        config = ExtractionConfig(p=20, s=20, rank=2, max_len=5, seed=5)
        _, report = extract(WAOracle(two_state_wa()), config)
        text = report.to_text()
        assert "seed 5" in text
        assert "effective_rank 2" in text
        assert "wall_time_s" not in text
        assert "wall_time_s" in report.to_text(include_timing=True)

    def test_dataset_sampling_mode(self):
        config = ExtractionConfig(
            p=6, s=6, rank=2, max_len=6, sampling="dataset", seed=2,
            dataset=((0,), (0, 1), (1, 0, 1), (0, 0, 1)),
        )
        learned, _ = extract(WAOracle(two_state_wa()), config)
        assert learned.num_states == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExtractionConfig(p=0, s=1, rank=1, max_len=1)
        with pytest.raises(ValueError):
            ExtractionConfig(p=1, s=1, rank=0, max_len=1)
        with pytest.raises(ValueError):
            ExtractionConfig(p=1, s=1, rank=1, max_len=1, sampling="magic")
        with pytest.raises(ValueError):
            ExtractionConfig(p=1, s=1, rank=1, max_len=1, sampling="dataset")


class TestSpectralExtractorEstimator:
    def test_fit_predict(self):
        target = two_state_wa()
        est = SpectralExtractor(p=40, s=40, rank=2, max_len=6, seed=7)
        assert est.fit(WAOracle(target)) is est
        strings = [(), (0,), (1,), (0, 1)]
        assert est.predict(strings) == pytest.approx(
            [target.evaluate(w) for w in strings], abs=1e-8
        )
        assert est.effective_rank_ == 2

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            SpectralExtractor().predict([()])

    def test_get_params_and_clone(self):
        est = SpectralExtractor(p=12, s=34, rank=5, seed=9)
        params = est.get_params()
        assert params["p"] == 12 and params["s"] == 34 and params["rank"] == 5
        cloned = clone(est)
        assert cloned.get_params() == params
