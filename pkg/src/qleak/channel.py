"""Finite n-round interactive channels and classical deterministic strategies.

A channel mediates ``rounds`` exchanges. In round ``i`` Alice sends ``a`` and
Bob sends ``b``; the channel answers with ``(x, y)`` drawn from a distribution
that may depend on the whole joint history. Alice sees ``(a, x)`` pairs, Bob
sees ``(b, y)`` pairs.

Histories and traces are tuples of ``(a, b, x, y)`` quadruples; own-view
histories are tuples of ``(a, x)`` or ``(b, y)`` pairs.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping

from qleak.distribution import NORMALIZATION_TOL, Distribution
from qleak.errors import ChannelError, InvalidStrategy


class Side(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"


def freeze(value):
    """Recursively turn lists into tuples so JSON symbols are hashable."""
    if isinstance(value, list):
        return tuple(freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class Alphabet:
    name: str
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(freeze(s) for s in self.symbols))
        if not self.symbols:
            raise ChannelError(f"alphabet {self.name} is empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ChannelError(f"alphabet {self.name} has repeated symbols")

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, s):
        return s in self.symbols

    def index(self, s) -> int:
        return self.symbols.index(s)


@dataclass(frozen=True)
class Violation:
    """One problem found by a validator."""

    kind: str
    detail: str
    where: tuple = ()

    def __str__(self):
        return f"{self.kind}: {self.detail}"


def project_trace(trace, side: Side | str) -> tuple:
    """Restrict a joint trace to one party's view."""
    side = Side(side)
    if side is Side.ALICE:
        return tuple((a, x) for a, _, x, _ in trace)
    return tuple((b, y) for _, b, _, y in trace)


class InteractiveChannel:
    """An n-round interactive channel with sparsely stored transitions.

    Parameters
    ----------
    rounds : int
        Number of rounds ``n >= 1``.
    alphabets : mapping
        ``{"A": ..., "B": ..., "X": ..., "Y": ...}``; values are symbol
        sequences or :class:`Alphabet` instances.
    transitions : mapping
        ``(history, a, b) -> Distribution`` over ``(x, y)`` pairs. Only
        histories reachable with positive probability need to be present.
    name : str, optional
        Label used in reports.
    """

    def __init__(self, rounds: int, alphabets: Mapping, transitions: Mapping, name: str = "channel"):
        if not isinstance(rounds, int) or rounds < 1:
            raise ChannelError(f"rounds must be a positive integer, got {rounds!r}")
        self.rounds = rounds
        self.alphabets = {
            key: (alphabets[key] if isinstance(alphabets[key], Alphabet) else Alphabet(key, alphabets[key]))
            for key in "ABXY"
        }
        self.transitions = dict(transitions)
        self.name = name

    @classmethod
    def from_rule(cls, rounds: int, alphabets: Mapping, rule: Callable, name: str = "channel") -> "InteractiveChannel":
        """Tabulate ``rule(history, a, b)`` on every reachable history.

        ``rule`` returns a :class:`Distribution` or a mapping ``(x, y) -> p``.
        Outcomes with zero probability are dropped from the stored table.
        """
        shell = cls(rounds, alphabets, {}, name=name)
        table = {}
        frontier = [()]
        for _ in range(rounds):
            nxt = []
            for hist in frontier:
                for a in shell.A:
                    for b in shell.B:
                        d = rule(hist, a, b)
                        if not isinstance(d, Distribution):
                            d = Distribution.from_mapping(d)
                        d = d.positive()
                        table[(hist, a, b)] = d
                        nxt.extend(hist + ((a, b, x, y),) for (x, y) in d.support)
            frontier = nxt
        return cls(rounds, shell.alphabets, table, name=name)

    A = property(lambda self: self.alphabets["A"].symbols)
    B = property(lambda self: self.alphabets["B"].symbols)
    X = property(lambda self: self.alphabets["X"].symbols)
    Y = property(lambda self: self.alphabets["Y"].symbols)

    def transition(self, history, a, b) -> Distribution:
        try:
            return self.transitions[(tuple(history), a, b)]
        except KeyError:
            raise ChannelError(
                f"no transition for round {len(history) + 1}, history={history!r}, a={a!r}, b={b!r}"
            ) from None

    def prob(self, history, a, b, x, y) -> float:
        return self.transition(history, a, b).prob((x, y))

    @cached_property
    def _levels(self) -> list[list[tuple]]:
        """Reachable joint prefixes grouped by length 0..n."""
        levels = [[()]]
        for _ in range(self.rounds):
            nxt = []
            for hist in levels[-1]:
                for a in self.A:
                    for b in self.B:
                        d = self.transitions.get((hist, a, b))
                        if d is None:
                            continue
                        nxt.extend(hist + ((a, b, x, y),) for (x, y), p in d.items() if p > 0)
            levels.append(nxt)
        return levels

    def reachable_prefixes(self, length: int) -> list[tuple]:
        """Joint prefixes of the given length with positive probability
        under some pair of strategies."""
        return self._levels[length]

    def traces(self) -> list[tuple]:
        return self._levels[self.rounds]

    @cached_property
    def _own_histories(self) -> dict:
        out = {}
        for side in Side:
            seen = {}
            for length in range(self.rounds):
                for hist in self._levels[length]:
                    seen.setdefault(project_trace(hist, side), None)
            out[side] = list(seen)
        return out

    def own_histories(self, side: Side | str) -> list[tuple]:
        """Reachable own-view histories of length < n, shortest first."""
        return self._own_histories[Side(side)]

    @cached_property
    def _bob_views(self) -> list[tuple]:
        return list(dict.fromkeys(project_trace(t, Side.BOB) for t in self.traces()))

    def bob_views(self) -> list[tuple]:
        """Reachable full-length Bob-view traces, in discovery order."""
        return self._bob_views

    def channel_weight(self, trace) -> float:
        """Product of the channel factors along ``trace``."""
        w = 1.0
        for i, (a, b, x, y) in enumerate(trace):
            w *= self.prob(trace[:i], a, b, x, y)
        return w

    def __repr__(self):
        sizes = "x".join(str(len(self.alphabets[k])) for k in "ABXY")
        return f"InteractiveChannel({self.name!r}, rounds={self.rounds}, |A|x|B|x|X|x|Y|={sizes})"


def validate_channel(channel: InteractiveChannel, tol: float = NORMALIZATION_TOL) -> list[Violation]:
    """Report problems with a channel; an empty list means well-formed.

    Only histories reachable with positive probability are required to have
    transitions.
    """
    report: list[Violation] = []
    A, B, X, Y = (channel.alphabets[k] for k in "ABXY")

    for (hist, a, b), d in channel.transitions.items():
        where = (len(hist) + 1, hist, a, b)
        bad = [
            s
            for step in hist
            for s, alph in zip(step, (A, B, X, Y))
            if s not in alph
        ]
        if a not in A or b not in B:
            bad.extend(s for s, alph in ((a, A), (b, B)) if s not in alph)
        if bad:
            report.append(Violation("out-of-alphabet", f"symbols {bad!r} in key of round {where[0]}", where))
        if len(hist) >= channel.rounds:
            report.append(Violation("out-of-alphabet", f"history of length {len(hist)} exceeds rounds", where))
        outside = [o for o in d.support if not (isinstance(o, tuple) and len(o) == 2 and o[0] in X and o[1] in Y)]
        if outside:
            report.append(Violation("out-of-alphabet", f"outputs {outside!r} at {where!r}", where))
        if min(d.weights, default=0.0) < -tol:
            report.append(Violation("negative", f"negative weight at {where!r}", where))
        if abs(d.total() - 1.0) > tol:
            report.append(Violation("unnormalized", f"weights sum to {d.total():.12g} at {where!r}", where))

    for length in range(channel.rounds):
        for hist in channel.reachable_prefixes(length):
            for a in A:
                for b in B:
                    if (hist, a, b) not in channel.transitions:
                        report.append(
                            Violation(
                                "missing transition",
                                f"round {length + 1}, history={hist!r}, a={a!r}, b={b!r}",
                                (length + 1, hist, a, b),
                            )
                        )
    return report


@dataclass
class DeterministicStrategy:
    """A deterministic strategy: own-view history -> next message."""

    side: Side
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        self.side = Side(self.side)

    def __call__(self, own_history):
        try:
            return self.table[tuple(own_history)]
        except KeyError:
            raise InvalidStrategy(
                f"{self.side.value} strategy undefined on history {tuple(own_history)!r}"
            ) from None

    @classmethod
    def from_function(cls, channel: InteractiveChannel, side, fn: Callable) -> "DeterministicStrategy":
        """Tabulate ``fn(own_history)`` on every reachable own-view history."""
        return cls(side, {h: fn(h) for h in channel.own_histories(side)})

    @classmethod
    def constant(cls, channel: InteractiveChannel, side, message) -> "DeterministicStrategy":
        return cls.from_function(channel, side, lambda h: message)


def trace_distribution(
    channel: InteractiveChannel, sA: DeterministicStrategy, sB: DeterministicStrategy
) -> Distribution:
    """Distribution of full joint traces when both parties play deterministically."""
    if sA.side is not Side.ALICE or sB.side is not Side.BOB:
        raise InvalidStrategy("trace_distribution needs an Alice strategy and a Bob strategy")
    out: dict = {}

    def walk(hist, alice_view, bob_view, w):
        if len(hist) == channel.rounds:
            out[hist] = out.get(hist, 0.0) + w
            return
        a, b = sA(alice_view), sB(bob_view)
        for (x, y), p in channel.transition(hist, a, b).items():
            if p > 0:
                walk(hist + ((a, b, x, y),), alice_view + ((a, x),), bob_view + ((b, y),), w * p)

    walk((), (), (), 1.0)
    return Distribution.from_mapping(out)


def enumerate_strategies(channel: InteractiveChannel, side) -> Iterable[DeterministicStrategy]:
    """All deterministic strategies on the reachable own-view histories.

    The first history varies slowest, so index order is deterministic.
    """
    side = Side(side)
    hists = channel.own_histories(side)
    msgs = channel.A if side is Side.ALICE else channel.B
    for choice in itertools.product(msgs, repeat=len(hists)):
        yield DeterministicStrategy(side, dict(zip(hists, choice)))


def strategy_count(channel: InteractiveChannel, side) -> int:
    side = Side(side)
    msgs = channel.A if side is Side.ALICE else channel.B
    return len(msgs) ** len(channel.own_histories(side))


def scheduler_channel(n: int) -> InteractiveChannel:
    """The fair resource scheduler over ``n`` rounds.

    Requests are ``1``, grants are ``1``. A contested request goes to the
    party granted fewer times so far, with a fair coin on ties.
    """
    if not isinstance(n, int) or n < 1:
        raise ChannelError(f"scheduler_channel needs n >= 1, got {n!r}")

    def rule(hist, a, b):
        if (a, b) != (1, 1):
            return Distribution.point((a, b))
        got_x = sum(step[2] for step in hist)
        got_y = sum(step[3] for step in hist)
        if got_x < got_y:
            return Distribution.point((1, 0))
        if got_x > got_y:
            return Distribution.point((0, 1))
        return Distribution(((1, 0), (0, 1)), (0.5, 0.5))

    bits = (0, 1)
    return InteractiveChannel.from_rule(
        n, {"A": bits, "B": bits, "X": bits, "Y": bits}, rule, name=f"scheduler({n})"
    )
