import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import random_channel, random_quantum_strategy
from qleak import (
    Distribution,
    InvalidStrategy,
    QuantumJointStrategy,
    VulnerabilityMeasure,
    chsh_channel_strategy,
    entangled_leakage,
    entangled_trace_distribution,
    trace_distribution,
    validate_quantum_strategy,
)
from qleak.channel import enumerate_strategies

COS2 = math.cos(math.pi / 8) ** 2
MIN = VulnerabilityMeasure.min_entropy()


def assert_same_law(d, law, tol=1e-12):
    for t in set(d.support) | set(law):
        assert d.prob(t) == pytest.approx(law.get(t, 0.0), abs=tol)


class TestCHSHChannelStrategy:
    def test_valid(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        assert tuple(secrets) == (0, 1)
        assert validate_quantum_strategy(s, c_chsh, secrets) == []

    def test_matches_kronecker_simulation(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        for k in secrets:
            d = entangled_trace_distribution(c_chsh, s, k)
            assert d.total() == pytest.approx(1.0, abs=1e-12)
            assert_same_law(d, oracles.quantum_trace_law(c_chsh, s, k))

    def test_final_bit_is_right_with_relay_probability(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        for k in secrets:
            d = entangled_trace_distribution(c_chsh, s, k)
            hit = sum(p for t, p in d.items() if t[-1][3][1] == k)
            assert hit == pytest.approx((1 + COS2) / 2, abs=1e-12)

    def test_min_entropy_leakage(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        value = entangled_leakage(MIN, Distribution.uniform(secrets), c_chsh, s)
        assert value == pytest.approx(math.log2(1 + COS2), abs=1e-9)

    def test_shannon_leakage(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        p = (1 + COS2) / 2
        expected = 1 + p * math.log2(p) + (1 - p) * math.log2(1 - p)
        value = entangled_leakage(VulnerabilityMeasure.shannon(), Distribution.uniform(secrets), c_chsh, s)
        assert value == pytest.approx(expected, abs=1e-9)

    def test_operator_product_rule_agrees(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        for k in secrets:
            born = entangled_trace_distribution(c_chsh, s, k)
            prod = entangled_trace_distribution(c_chsh, s, k, rule="display")
            assert born.isclose(prod, 1e-12)


class TestValidation:
    def test_missing_family(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        alice = dict(s.alice)
        alice.pop(next(iter(alice)))
        broken = QuantumJointStrategy(s.dims, s.state, alice, s.bob)
        assert validate_quantum_strategy(broken, c_chsh, secrets)
        with pytest.raises(InvalidStrategy):
            entangled_leakage(MIN, Distribution.uniform(secrets), c_chsh, broken)

    def test_not_projective(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        bob = {h: {b: 0.5 * np.eye(2) for b in fam} for h, fam in s.bob.items()}
        broken = QuantumJointStrategy(s.dims, s.state, s.alice, bob)
        assert validate_quantum_strategy(broken, c_chsh, secrets)

    def test_unnormalised_state(self, c_chsh):
        s, secrets = chsh_channel_strategy()
        broken = QuantumJointStrategy(s.dims, 2 * s.state, s.alice, s.bob)
        assert validate_quantum_strategy(broken, c_chsh, secrets)


@settings(max_examples=30)
@given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
def test_random_strategies_match_kronecker_simulation(seed, rounds):
    ch = random_channel(seed, rounds)
    s = random_quantum_strategy(ch, seed)
    assert validate_quantum_strategy(s, ch, [0, 1]) == []
    for k in (0, 1):
        d = entangled_trace_distribution(ch, s, k)
        assert d.total() == pytest.approx(1.0, abs=1e-10)
        assert_same_law(d, oracles.quantum_trace_law(ch, s, k), 1e-10)
    assert entangled_leakage(MIN, Distribution.uniform([0, 1]), ch, s) >= -1e-12


@settings(max_examples=30)
@given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
def test_classical_embedding(seed, rounds):
    ch = random_channel(seed, rounds)
    rng = np.random.default_rng(seed)
    alice = list(enumerate_strategies(ch, "alice"))
    bob = list(enumerate_strategies(ch, "bob"))
    maps = {k: alice[rng.integers(len(alice))] for k in (0, 1)}
    sB = bob[rng.integers(len(bob))]
    s = QuantumJointStrategy.from_classical(ch, maps, sB)
    for k in (0, 1):
        assert entangled_trace_distribution(ch, s, k).isclose(trace_distribution(ch, maps[k], sB), 1e-12)
