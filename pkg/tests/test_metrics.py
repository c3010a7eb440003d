import math

import numpy as np
import pytest

from wa_distill import (
    Alphabet,
    BlackBoxOracle,
    CapabilityMissing,
    EvalSet,
    WAOracle,
    build_eval_sets,
    clamp_probability,
    compute_report,
    kl_divergence,
    ndcg,
    normalized,
    perplexity,
    perplexity_ratio,
    random_stochastic_wa,
    ranking_metrics,
    wer,
)

from _util import two_state_wa


class TableOracle(BlackBoxOracle):
    """Fixed next-event values per prefix; scores are all one."""

    def __init__(self, table, alphabet_size=2):
        self.table = {tuple(k): np.asarray(v, dtype=float) for k, v in table.items()}
        self.alphabet = Alphabet(alphabet_size)

    def score(self, string):
        return 1.0

    def next_dist(self, string):
        return self.table[tuple(string)]


class TestClamp:
    def test_positive_passes_through(self):
        assert clamp_probability(0.3) == 0.3

    def test_negative_clamped(self):
        assert clamp_probability(-0.07) == 1e-30

    def test_zero_clamped(self):
        assert clamp_probability(0.0) == 1e-30

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            clamp_probability(0.5, epsilon=0.0)


class TestPerplexity:
    def test_uniform_self_perplexity(self):
        value, zeros = perplexity([0.5, 0.5], [0.5, 0.5])
        assert value == pytest.approx(2.0, abs=1e-12)
        assert zeros == 0.0

    def test_skewed_candidate(self):
        value, _ = perplexity([0.5, 0.5], [0.25, 0.75])
        assert value == pytest.approx(2.0 ** (2.0 - 0.5 * math.log2(3.0)), rel=1e-12)
        assert value == pytest.approx(2.30940, abs=1e-5)

    def test_singleton_negative_candidate_is_clamped_then_normalised(self):
        value, zeros = perplexity([1.0], [-0.1])
        assert value == pytest.approx(1.0, abs=1e-12)
        assert zeros == 100.0

    def test_reference_must_be_normalised(self):
        with pytest.raises(ValueError):
            perplexity([0.5, 0.6], [0.5, 0.5])

    def test_empty_eval_set_rejected(self):
        with pytest.raises(ValueError):
            perplexity([], [])

    def test_self_perplexity_is_two_to_the_entropy(self):
        rng = np.random.default_rng(3)
        ref = normalized(rng.random(40))
        entropy = -float(ref @ np.log2(ref))
        value, _ = perplexity(ref, ref)
        assert value == pytest.approx(2.0 ** entropy, rel=1e-9)


class TestPerplexityRatio:
    def test_identical_models(self):
        ref = [0.25, 0.75]
        assert perplexity_ratio(ref, [0.2, 0.6], [0.2, 0.6]) == pytest.approx(1.0)

    def test_reference_as_second_model_wins(self):
        rng = np.random.default_rng(5)
        ref = normalized(rng.random(30))
        other = rng.random(30)
        assert perplexity_ratio(ref, other, ref) >= 1.0 - 1e-12


class TestKlDivergence:
    def test_identity(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)

    def test_known_value(self):
        expected = 0.5 + 0.5 * math.log2(2.0 / 3.0)
        assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.20752, abs=1e-5)

    def test_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ref = normalized(rng.random(15))
            cand = rng.random(15)
            assert kl_divergence(ref, cand) >= -1e-12

    def test_decomposition_against_perplexity(self):
        rng = np.random.default_rng(9)
        ref = normalized(rng.random(25))
        cand = rng.random(25)
        entropy = -float(ref @ np.log2(ref))
        perp, _ = perplexity(ref, cand)
        assert kl_divergence(ref, cand) == pytest.approx(
            math.log2(perp) - entropy, abs=1e-9
        )


class TestNdcg:
    def test_identical_models_score_one(self):
        oracle = WAOracle(two_state_wa())
        strings = [(0,), (0, 1), (1, 1)]
        for n in (1, 3, 5):
            assert ndcg(oracle, oracle, strings, n) == 1.0

    def test_single_position_ratio(self):
        ref = TableOracle({(): [0.6, 0.3, 0.1]})
        cand = TableOracle({(): [0.2, 0.7, 0.1]})
        assert ndcg(ref, cand, [()], 1) == pytest.approx(0.5)

    def test_cutoff_truncates_at_event_count(self):
        ref = TableOracle({(): [0.6, 0.3, 0.1]})
        cand = TableOracle({(): [0.1, 0.3, 0.6]})
        value = ndcg(ref, cand, [()], 5)
        assert 0.0 <= value <= 1.0

    def test_invariant_under_positive_rescaling_of_candidate(self):
        ref = TableOracle({(): [0.5, 0.2, 0.3]})
        cand = TableOracle({(): [0.1, 0.6, 0.3]})
        scaled = TableOracle({(): [0.7, 4.2, 2.1]})
        for n in (1, 2, 3):
            assert ndcg(ref, cand, [()], n) == ndcg(ref, scaled, [()], n)

    def test_cutoff_validated(self):
        oracle = WAOracle(two_state_wa())
        with pytest.raises(ValueError):
            ndcg(oracle, oracle, [()], 0)


class TestWer:
    def test_identical_models(self):
        oracle = WAOracle(two_state_wa())
        assert wer(oracle, oracle, [(0, 1), (1,)]) == 0.0

    def test_one_mismatch_in_four_prefixes(self):
        # One length-3 string yields four prefixes; disagree only on (0,).
        ref = TableOracle(
            {(): [0.6, 0.3, 0.1], (0,): [0.6, 0.3, 0.1],
             (0, 0): [0.6, 0.3, 0.1], (0, 0, 0): [0.6, 0.3, 0.1]}
        )
        cand = TableOracle(
            {(): [0.6, 0.3, 0.1], (0,): [0.1, 0.8, 0.1],
             (0, 0): [0.9, 0.05, 0.05], (0, 0, 0): [0.6, 0.3, 0.1]}
        )
        assert wer(ref, cand, [(0, 0, 0)]) == 0.25

    def test_ties_break_by_symbol_index_end_last(self):
        ref = TableOracle({(): [0.4, 0.4, 0.2]})
        cand = TableOracle({(): [0.2, 0.2, 0.2]})
        # Both argmaxes resolve to symbol 0 under the tie rule.
        assert wer(ref, cand, [()]) == 0.0

    def test_bounded_by_one(self):
        ref = TableOracle({(): [0.6, 0.3, 0.1]})
        cand = TableOracle({(): [0.1, 0.3, 0.6]})
        assert wer(ref, cand, [()]) <= 1.0


class TestRankingMetrics:
    def test_degenerate_reference_prefixes_are_skipped_and_counted(self):
        wa = two_state_wa()
        # Prefix (0,) keeps full mass under the reference; craft a reference
        # automaton that dies after symbol 1 so (1,) is degenerate.
        from wa_distill import WeightedAutomaton

        dying = WeightedAutomaton(
            Alphabet(2), [1.0], [0.5], [[[0.5]], [[0.0]]]
        )
        scores = ranking_metrics(WAOracle(dying), WAOracle(wa), [(1, 0)])
        assert scores.skipped == 2  # prefixes (1,) and (1, 0)
        assert scores.prefixes == 1  # only the empty prefix survives

    def test_all_prefixes_counted(self):
        oracle = WAOracle(two_state_wa())
        scores = ranking_metrics(oracle, oracle, [(0, 1, 0), (1,)])
        assert scores.prefixes == 4 + 2


class TestEvalSets:
    def test_eval_set_validation(self):
        with pytest.raises(ValueError):
            EvalSet((), "S_test")
        with pytest.raises(ValueError):
            EvalSet(((0,),), "S_test", (0.5, 0.5))
        with pytest.raises(ValueError):
            EvalSet(((0,),), "S_test", (0.0,))

    def test_build_eval_sets_defaults(self):
        import inspect

        signature = inspect.signature(build_eval_sets)
        assert signature.parameters["n_test"].default == 1000
        assert signature.parameters["n_sampled"].default == 2000

    def test_build_eval_sets(self):
        oracle = WAOracle(two_state_wa())
        test_strings = [(0,), (1,), (0, 0), (1, 1)]
        s_test, s_rnn = build_eval_sets(
            oracle, test_strings, n_test=3, n_sampled=5,
            rng=np.random.default_rng(13), max_len=10,
        )
        assert s_test.strings == ((0,), (1,), (0, 0))
        assert s_test.role == "S_test"
        assert len(s_rnn.strings) == 5
        assert s_rnn.role == "S_RNN"

    def test_sampling_capability_required(self):
        class ScoreOnly(BlackBoxOracle):
            alphabet = Alphabet(2)

            def score(self, string):
                return 1.0

        with pytest.raises(CapabilityMissing):
            build_eval_sets(ScoreOnly(), [(0,)], n_sampled=1)

    def test_seeded_reproducibility(self):
        oracle = WAOracle(two_state_wa())
        one = build_eval_sets(oracle, [(0,)], 1, 50, np.random.default_rng(3))[1]
        two = build_eval_sets(oracle, [(0,)], 1, 50, np.random.default_rng(3))[1]
        assert one.strings == two.strings


class TestComputeReport:
    def test_candidate_equals_reference(self):
        oracle = WAOracle(two_state_wa())
        rng = np.random.default_rng(21)
        strings = tuple(oracle.sample(rng, 12) for _ in range(60))
        report = compute_report(oracle, oracle, EvalSet(strings, "S_RNN"))
        assert report.perplexity_ratio == pytest.approx(1.0, abs=1e-12)
        assert report.kld == pytest.approx(0.0, abs=1e-12)
        assert report.ndcg1 == 1.0
        assert report.ndcg5 == 1.0
        assert report.wer == 0.0
        assert report.zeros_pct == 0.0

    def test_zeros_pct_matches_brute_count(self):
        rng = np.random.default_rng(23)
        wa = random_stochastic_wa(3, Alphabet(2), rng)
        ref = WAOracle(wa)

        class Mangled(WAOracle):
            def score(self, string):
                value = super().score(string)
                return value - 0.02  # pushes rare strings negative

        cand = Mangled(wa)
        strings = tuple(ref.sample(rng, 10) for _ in range(80))
        report = compute_report(ref, cand, EvalSet(strings, "S_RNN"))
        brute = sum(1 for w in strings if cand.score(w) <= 0)
        assert report.zeros_pct == 100.0 * brute / len(strings)

    def test_ranking_skipped_without_capability(self):
        class ScoreOnly(BlackBoxOracle):
            alphabet = Alphabet(2)

            def score(self, string):
                return 0.5 ** (len(string) + 1)

        ref = ScoreOnly()
        cand = WAOracle(two_state_wa())
        report = compute_report(ref, cand, EvalSet(((0,), (1,)), "S_test"))
        assert report.ndcg5 is None
        assert report.wer is None
        assert "ranking_unavailable" in report.provenance

    def test_csv_row_shape(self):
        oracle = WAOracle(two_state_wa())
        report = compute_report(
            oracle, oracle, EvalSet(((0,), (1,)), "S_test"),
            provenance={"problem": "demo", "p": 10, "s": 10, "rank": 2,
                        "eff_rank": 2, "seed": 7},
        )
        row = report.csv_row()
        assert len(row) == 13
        assert row[0] == "demo"
        assert row[-1] == "7"

    def test_attached_probabilities_take_precedence(self):
        cand = WAOracle(two_state_wa())
        eval_set = EvalSet(((0,), (1,)), "S_test", (0.25, 0.75))
        report = compute_report(None, cand, eval_set, ranking=False)
        expected, _ = perplexity([0.25, 0.75], [cand.score((0,)), cand.score((1,))])
        assert report.perplexity == expected
