"""Two-player one-round non-local games and the game-to-channel compiler.

Questions are ``x`` (Alice) and ``y`` (Bob); answers are ``a`` and ``b``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from qleak.channel import InteractiveChannel
from qleak.distribution import Distribution
from qleak.errors import BudgetExceeded, InvalidStrategy
from qleak.measurements import check_family, check_state, max_entangled, rank_one


@dataclass
class NonLocalGame:
    """Question distribution ``mu`` and the set of winning ``(x, y, a, b)``."""

    questions_a: tuple
    questions_b: tuple
    answers_a: tuple
    answers_b: tuple
    mu: Distribution
    win: frozenset
    name: str = "game"

    def __post_init__(self):
        self.questions_a, self.questions_b = tuple(self.questions_a), tuple(self.questions_b)
        self.answers_a, self.answers_b = tuple(self.answers_a), tuple(self.answers_b)
        self.win = frozenset(self.win)
        if not self.mu.is_normalized():
            raise ValueError(f"question distribution sums to {self.mu.total()}")
        bad = [q for q in self.mu.support if q[0] not in self.questions_a or q[1] not in self.questions_b]
        if bad:
            raise ValueError(f"question pairs {bad!r} outside the question alphabets")

    @classmethod
    def from_predicate(cls, questions_a, questions_b, answers_a, answers_b, mu, predicate: Callable, name="game"):
        win = {
            (x, y, a, b)
            for x, y, a, b in itertools.product(questions_a, questions_b, answers_a, answers_b)
            if predicate(x, y, a, b)
        }
        return cls(questions_a, questions_b, answers_a, answers_b, mu, win, name)

    def decision(self, x, y, a, b) -> int:
        return int((x, y, a, b) in self.win)

    def payoff_tensor(self) -> np.ndarray:
        """``W[x, y, a, b] = mu(x, y) * D(x, y, a, b)`` in declared order."""
        W = np.zeros((len(self.questions_a), len(self.questions_b), len(self.answers_a), len(self.answers_b)))
        for i, x in enumerate(self.questions_a):
            for j, y in enumerate(self.questions_b):
                p = self.mu.prob((x, y))
                if p == 0:
                    continue
                for k, a in enumerate(self.answers_a):
                    for l, b in enumerate(self.answers_b):
                        W[i, j, k, l] = p * self.decision(x, y, a, b)
        return W


@dataclass
class GameQuantumStrategy:
    """Shared pure state and one projective measurement per question."""

    dims: tuple
    state: np.ndarray
    alice: dict = field(default_factory=dict)
    bob: dict = field(default_factory=dict)

    def violations(self, game: NonLocalGame) -> list:
        dA, dB = self.dims
        out = check_state(np.asarray(self.state), dA * dB)
        for side, meas, qs, ans, d in (
            ("alice", self.alice, game.questions_a, game.answers_a, dA),
            ("bob", self.bob, game.questions_b, game.answers_b, dB),
        ):
            for q in qs:
                if q not in meas:
                    out.append(check_family({}, ans, d, f"{side}[{q!r}]")[0])
                else:
                    out.extend(check_family(meas[q], ans, d, f"{side}[{q!r}]"))
        return out


def classical_game_value(game: NonLocalGame, budget: int | None = None) -> float:
    """Exact classical value over deterministic answer functions.

    Alice's functions are enumerated; Bob best-responds question by question.
    """
    from qleak.leakage import enumeration_budget

    limit = enumeration_budget(budget)
    nQA, nA = len(game.questions_a), len(game.answers_a)
    nQB, nB = len(game.questions_b), len(game.answers_b)
    if nA**nQA > limit or nB**nQB > limit:
        raise BudgetExceeded(
            f"enumeration budget exceeded: {nA ** nQA} Alice and {nB ** nQB} Bob answer functions, budget {limit}"
        )
    W = game.payoff_tensor()
    best = 0.0
    funcs = np.array(list(itertools.product(range(nA), repeat=nQA)), dtype=np.intp).reshape(-1, nQA)
    for chunk in np.array_split(funcs, max(1, len(funcs) // 4096)):
        # S[f, y, b] = sum_x W[x, y, f(x), b]
        S = sum(W[x][:, chunk[:, x], :].transpose(1, 0, 2) for x in range(nQA))
        best = max(best, float(S.max(axis=2).sum(axis=1).max()))
    return best


def quantum_game_value(game: NonLocalGame, s: GameQuantumStrategy) -> float:
    """Win probability of an explicit entangled strategy."""
    bad = s.violations(game)
    if bad:
        raise InvalidStrategy(f"invalid quantum strategy: {bad[0]}", bad)
    psi = np.asarray(s.state, dtype=complex)
    total = 0.0
    for (x, y, a, b) in game.win:
        p = game.mu.prob((x, y))
        if p == 0:
            continue
        Aop = s.alice[x].get(a)
        Bop = s.bob[y].get(b)
        if Aop is None or Bop is None:
            continue
        total += p * float(np.real(psi.conj() @ np.kron(Aop, Bop) @ psi))
    return total


def chsh_game() -> NonLocalGame:
    bits = (0, 1)
    return NonLocalGame.from_predicate(
        bits, bits, bits, bits,
        Distribution.uniform(itertools.product(bits, bits)),
        lambda x, y, a, b: (a ^ b) == (x & y),
        name="chsh",
    )


def chsh_strategy() -> GameQuantumStrategy:
    """Rank-one projectors at the standard CHSH angles on a Bell pair."""
    pi = math.pi
    alice = {0: {0: rank_one(0), 1: rank_one(pi / 2)}, 1: {0: rank_one(pi / 4), 1: rank_one(3 * pi / 4)}}
    bob = {0: {0: rank_one(pi / 8), 1: rank_one(5 * pi / 8)}, 1: {0: rank_one(-pi / 8), 1: rank_one(3 * pi / 8)}}
    return GameQuantumStrategy((2, 2), max_entangled(2), alice, bob)


_BUILTINS = {"chsh": lambda: (chsh_game(), chsh_strategy())}


def builtin_game(name: str):
    """Return ``(game, strategy)`` for a named builtin (currently ``"chsh"``)."""
    try:
        return _BUILTINS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown builtin game {name!r}; known: {sorted(_BUILTINS)}") from None


def compile_game_to_channel(game: NonLocalGame, secret_bits: int = 1) -> InteractiveChannel:
    """Two-round channel that relays Alice's bit to Bob when the game is won.

    Round 1 draws questions from ``mu`` and ignores the messages; Alice's
    message carries an answer and a payload bit ``u``. Round 2 judges the
    round-2 answers on the round-1 questions: on a win Bob's final bit is
    the round-1 payload, otherwise it is a fair coin. The other outputs are
    the first declared question symbols.
    """
    if secret_bits != 1:
        raise ValueError("only one-bit payloads are supported")
    A = tuple((a, u) for a in game.answers_a for u in (0, 1))
    B = game.answers_b
    X = game.questions_a
    Y = tuple((y, v) for y in game.questions_b for v in (0, 1))
    x0, y0 = game.questions_a[0], game.questions_b[0]

    def rule(hist, a, b):
        if not hist:
            return Distribution.accumulate(((x, (y, 0)), p) for (x, y), p in game.mu.items() if p > 0)
        (a1, u1), _, x1, (y1, _) = hist[0]
        if game.decision(x1, y1, a[0], b):
            return Distribution.point((x0, (y0, u1)))
        return Distribution(((x0, (y0, 0)), (x0, (y0, 1))), (0.5, 0.5))

    alphabets = {"A": A, "B": B, "X": X, "Y": Y}
    return InteractiveChannel.from_rule(2, alphabets, rule, name=f"C[{game.name}]")
