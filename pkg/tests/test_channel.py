import math

import pytest
from hypothesis import given, strategies as st

from conftest import random_channel
from qleak import (
    ChannelError,
    DeterministicStrategy,
    Distribution,
    InteractiveChannel,
    InvalidStrategy,
    Side,
    project_trace,
    scheduler_channel,
    trace_distribution,
    validate_channel,
)
from qleak.channel import enumerate_strategies, strategy_count
from qleak.distribution import parse_probability


def const(ch, side, m):
    return DeterministicStrategy.constant(ch, side, m)


class TestDistribution:
    def test_accumulate_merges_repeats(self):
        d = Distribution.accumulate([("a", 0.25), ("b", 0.5), ("a", 0.25)])
        assert d.prob("a") == 0.5 and d.prob("b") == 0.5
        assert d.is_normalized()

    def test_uniform_and_point(self):
        assert Distribution.uniform(range(4)).prob(2) == 0.25
        assert Distribution.point("x").prob("x") == 1.0 and len(Distribution.point("x")) == 1

    @pytest.mark.parametrize("text,value", [("1/3", 1 / 3), ("0.25", 0.25), (0.5, 0.5), ("1", 1.0)])
    def test_parse_probability(self, text, value):
        assert parse_probability(text) == pytest.approx(value)

    @pytest.mark.parametrize("bad", ["1/2/3", "abc", "3/0"])
    def test_parse_probability_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_probability(bad)

    def test_map_pushes_forward(self):
        d = Distribution.uniform([0, 1, 2, 3]).map(lambda v: v % 2)
        assert d.isclose(Distribution.uniform([0, 1]))


class TestScheduler:
    def test_well_formed(self):
        for n in (1, 2, 3):
            assert validate_channel(scheduler_channel(n)) == []

    def test_tie_is_fair_coin(self):
        d = scheduler_channel(1).transition((), 1, 1)
        assert d.prob((1, 0)) == 0.5 and d.prob((0, 1)) == 0.5

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_uncontested_request_granted(self, n):
        ch = scheduler_channel(n)
        for hist in ch.reachable_prefixes(n - 1):
            assert ch.transition(hist, 0, 1).prob((0, 1)) == 1.0
            assert ch.transition(hist, 1, 0).prob((1, 0)) == 1.0
            assert ch.transition(hist, 0, 0).prob((0, 0)) == 1.0

    def test_fewer_grants_wins(self):
        ch = scheduler_channel(2)
        assert ch.transition(((1, 0, 1, 0),), 1, 1).prob((0, 1)) == 1.0
        assert ch.transition(((0, 1, 0, 1),), 1, 1).prob((1, 0)) == 1.0

    def test_rejects_zero_rounds(self):
        with pytest.raises(ChannelError):
            scheduler_channel(0)

    def test_trace_examples(self):
        ch = scheduler_channel(1)
        d = trace_distribution(ch, const(ch, "alice", 1), const(ch, "bob", 1))
        assert d.prob(((1, 1, 1, 0),)) == 0.5 and d.prob(((1, 1, 0, 1),)) == 0.5
        d = trace_distribution(ch, const(ch, "alice", 0), const(ch, "bob", 1))
        assert d.prob(((0, 1, 0, 1),)) == 1.0


class TestValidation:
    def _base(self):
        return scheduler_channel(1)

    def test_unnormalized_row(self):
        ch = self._base()
        tr = dict(ch.transitions)
        tr[((), 0, 0)] = Distribution([(0, 0)], [0.9])
        bad = validate_channel(InteractiveChannel(1, ch.alphabets, tr))
        assert [v.kind for v in bad] == ["unnormalized"]

    def test_missing_transition(self):
        ch = scheduler_channel(2)
        tr = dict(ch.transitions)
        hist = ((0, 0, 0, 0),)
        del tr[(hist, 1, 1)]
        bad = validate_channel(InteractiveChannel(2, ch.alphabets, tr))
        assert [v.kind for v in bad] == ["missing transition"]

    def test_out_of_alphabet(self):
        ch = self._base()
        tr = dict(ch.transitions)
        tr[((), 0, 0)] = Distribution.point((0, 7))
        bad = validate_channel(InteractiveChannel(1, ch.alphabets, tr))
        assert bad and all(v.kind == "out-of-alphabet" for v in bad)


class TestStrategies:
    def test_undefined_history_raises(self):
        ch = scheduler_channel(2)
        s = DeterministicStrategy(Side.ALICE, {(): 1})
        with pytest.raises(InvalidStrategy):
            trace_distribution(ch, s, const(ch, "bob", 1))

    def test_enumeration_count(self):
        ch = scheduler_channel(2)
        for side in Side:
            assert sum(1 for _ in enumerate_strategies(ch, side)) == strategy_count(ch, side)

    def test_project_trace(self):
        t = ((1, 0, 1, 0), (0, 1, 0, 1))
        assert project_trace(t, Side.ALICE) == ((1, 1), (0, 0))
        assert project_trace(t, Side.BOB) == ((0, 0), (1, 1))


@given(seed=st.integers(0, 10_000), rounds=st.integers(1, 2))
def test_random_trace_distributions_normalized(seed, rounds):
    ch = random_channel(seed, rounds)
    assert validate_channel(ch) == []
    for sA in list(enumerate_strategies(ch, Side.ALICE))[:4]:
        for sB in list(enumerate_strategies(ch, Side.BOB))[:4]:
            d = trace_distribution(ch, sA, sB)
            assert math.isclose(d.total(), 1.0, abs_tol=1e-12)
            # product formula: each weight is the product of the transition probabilities
            for t, p in d.items():
                w = math.prod(ch.prob(t[:j], a, b, x, y) for j, (a, b, x, y) in enumerate(t))
                assert p == pytest.approx(w, abs=1e-14)
