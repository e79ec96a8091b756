import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import random_channel
from qleak import (
    BudgetExceeded,
    DeterministicStrategy,
    Distribution,
    InteractiveChannel,
    SecretModel,
    VulnerabilityMeasure,
    leakage,
    minentropy_capacity_classical,
    posterior_distribution,
    scheduler_channel,
    shannon_capacity_classical,
    vulnerability,
)
from qleak.leakage import blahut_arimoto, classical_guess_value

MIN = VulnerabilityMeasure.min_entropy()
SHANNON = VulnerabilityMeasure.shannon()


def h2(p):
    return 0.0 if p in (0, 1) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def scheduler_model(n):
    ch = scheduler_channel(n)
    alice = {k: DeterministicStrategy.constant(ch, "alice", k) for k in (0, 1)}
    return ch, SecretModel(Distribution.uniform([0, 1]), alice), DeterministicStrategy.constant(ch, "bob", 1)


class TestVulnerability:
    def test_min_entropy_values(self):
        assert vulnerability(MIN, Distribution.uniform([0, 1])) == -1.0
        assert vulnerability(MIN, Distribution([0, 1], [7 / 8, 1 / 8])) == pytest.approx(math.log2(7 / 8), abs=1e-15)

    def test_shannon_is_negative_entropy(self):
        assert vulnerability(SHANNON, Distribution.uniform(range(4))) == pytest.approx(-2.0)

    def test_identity_gain_is_min_entropy(self):
        d = Distribution([0, 1, 2], [0.5, 0.3, 0.2])
        g = VulnerabilityMeasure.g_vulnerability([0, 1, 2], lambda w, k: float(w == k))
        assert vulnerability(g, d) == pytest.approx(vulnerability(MIN, d))

    def test_additive_gain(self):
        d = Distribution([0, 1], [0.25, 0.75])
        g = VulnerabilityMeasure.g_vulnerability(["any"], {"any": {0: 1.0, 1: 1.0}}, mode="additive")
        assert vulnerability(g, d) == pytest.approx(1.0)

    def test_gain_outside_unit_interval_rejected(self):
        g = VulnerabilityMeasure.g_vulnerability([0], lambda w, k: 2.0)
        with pytest.raises(ValueError):
            vulnerability(g, Distribution.uniform([0, 1]))

    def test_parse(self):
        assert VulnerabilityMeasure.parse("minentropy") == MIN
        assert VulnerabilityMeasure.parse("shannon") == SHANNON
        with pytest.raises(ValueError):
            VulnerabilityMeasure.parse("renyi")


class TestSchedulerLeakage:
    def test_posterior_after_grant(self):
        ch, model, sB = scheduler_model(1)
        from qleak.leakage import bob_view_law

        cond = {k: bob_view_law(ch, model.alice_map[k], sB) for k in (0, 1)}
        post = posterior_distribution(model.prior, cond, ((1, 1),))
        assert post.prob(0) == pytest.approx(2 / 3) and post.prob(1) == pytest.approx(1 / 3)
        post = posterior_distribution(model.prior, cond, ((1, 0),))
        assert post.prob(1) == 1.0

    def test_one_round_min_entropy(self):
        ch, model, sB = scheduler_model(1)
        assert leakage(MIN, model, ch, sB) == pytest.approx(math.log2(1.5), abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3])
    def test_point_posteriors_from_two_rounds(self, n):
        ch, model, sB = scheduler_model(n)
        assert leakage(MIN, model, ch, sB) == pytest.approx(1.0, abs=1e-12)
        assert leakage(SHANNON, model, ch, sB) == pytest.approx(1.0, abs=1e-12)

    def test_shannon_is_mutual_information(self):
        ch, model, sB = scheduler_model(1)
        # K=0 -> Y=1; K=1 -> Y uniform. I(K;Y) = H(Y) - H(Y|K)
        expected = h2(1 / 4) - 0.5 * 1.0
        assert leakage(SHANNON, model, ch, sB) == pytest.approx(expected, abs=1e-12)

    def test_alice_map_must_be_total(self):
        ch, model, _ = scheduler_model(1)
        with pytest.raises(ValueError):
            SecretModel(Distribution.uniform([0, 1, 2]), model.alice_map)


class TestClassicalCapacity:
    @pytest.mark.parametrize("method", ["dp", "enumerate"])
    def test_scheduler_one_round(self, method):
        assert minentropy_capacity_classical(scheduler_channel(1), method=method) == pytest.approx(math.log2(1.5), abs=1e-12)

    def test_scheduler_two_rounds_matches_oracle(self):
        ch = scheduler_channel(2)
        expected = oracles.classical_capacity(ch)
        assert minentropy_capacity_classical(ch) == pytest.approx(expected, abs=1e-12)
        assert minentropy_capacity_classical(ch, method="enumerate") == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=40)
    @given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
    def test_matches_brute_force(self, seed, rounds):
        ch = random_channel(seed, rounds)
        expected = oracles.classical_capacity(ch)
        assert minentropy_capacity_classical(ch) == pytest.approx(expected, abs=1e-9)
        assert minentropy_capacity_classical(ch, method="enumerate") == pytest.approx(expected, abs=1e-9)

    @settings(max_examples=25)
    @given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
    def test_zero_capacity_when_outputs_ignore_messages(self, seed, rounds):
        ch = random_channel(seed, rounds, zero_capacity=True)
        assert minentropy_capacity_classical(ch) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=25)
    @given(seed=st.integers(0, 100_000))
    def test_symbol_order_does_not_matter(self, seed):
        ch = random_channel(seed, 2)
        flipped = InteractiveChannel(
            2, {k: tuple(reversed(ch.alphabets[k].symbols)) for k in "ABXY"}, ch.transitions
        )
        assert minentropy_capacity_classical(flipped) == pytest.approx(minentropy_capacity_classical(ch), abs=1e-12)

    @settings(max_examples=25)
    @given(seed=st.integers(0, 100_000))
    def test_guess_value_matches_brute_force(self, seed):
        ch = random_channel(seed, 2)
        rng = np.random.default_rng(seed)
        g = {t: int(rng.integers(2)) for t in ch.bob_views()}
        assert classical_guess_value(ch, [0, 1], g) == pytest.approx(oracles.classical_guess(ch, g), abs=1e-9)

    def test_budget(self, monkeypatch):
        monkeypatch.setenv("QLEAK_BUDGET", "3")
        with pytest.raises(BudgetExceeded):
            minentropy_capacity_classical(scheduler_channel(2))

    @settings(max_examples=20)
    @given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
    def test_leakage_never_negative(self, seed, rounds):
        ch = random_channel(seed, rounds)
        rng = np.random.default_rng(seed)
        from qleak.channel import enumerate_strategies

        alice = list(enumerate_strategies(ch, "alice"))
        bob = list(enumerate_strategies(ch, "bob"))
        w = rng.random(3)
        model = SecretModel(Distribution(range(3), w / w.sum()), {k: alice[rng.integers(len(alice))] for k in range(3)})
        sB = bob[rng.integers(len(bob))]
        cap = minentropy_capacity_classical(ch)
        for V in (MIN, SHANNON):
            value = leakage(V, model, ch, sB)
            assert value >= -1e-12
            assert value <= cap + 1e-9


class TestShannonCapacity:
    @pytest.mark.parametrize("p", [0.0, 0.1, 0.25, 0.5])
    def test_binary_symmetric(self, p):
        def rule(hist, a, b):
            return {(0, a): 1 - p, (0, 1 - a): p} if p else {(0, a): 1.0}

        ch = InteractiveChannel.from_rule(1, {"A": (0, 1), "B": (0,), "X": (0,), "Y": (0, 1)}, rule)
        assert shannon_capacity_classical(ch) == pytest.approx(1 - h2(p), abs=1e-8)

    def test_iterates_increase(self):
        P = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
        cap, r, hist = blahut_arimoto(P, tol=1e-12)
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
        assert r.sum() == pytest.approx(1.0)

    @settings(max_examples=15)
    @given(seed=st.integers(0, 100_000))
    def test_below_min_entropy_capacity(self, seed):
        ch = random_channel(seed, 1)
        assert shannon_capacity_classical(ch) <= minentropy_capacity_classical(ch) + 1e-8
