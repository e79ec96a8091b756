"""Generalised (non-signalling) strategies and their min-entropy capacity.

A generalised strategy gives, for every secret ``k`` and joint prefix ``t``,
a joint distribution ``g(k, t)`` over the next message pair ``(a, b)``. The
capacity LP works with the cumulative behaviour

    Q_j(k; a_1..a_j, b_1..b_j | x_1..x_{j-1}, y_1..y_{j-1})

which is the product of the tables along the path with the channel factors
divided out. Non-signalling is imposed on these marginals: Bob's marginal
may depend only on his own messages and inputs, Alice's only on hers and
``k``. In this form ``P(t | k)`` is linear in the variables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from qleak.channel import InteractiveChannel, Side, Violation, project_trace
from qleak.distribution import Distribution
from qleak.errors import BudgetExceeded, SolverError
from qleak.solvers import LinearProgram, solve_lp

NS_TOL = 1e-9
DEFAULT_GUESS_BUDGET = 10**6
DEFAULT_LP_BUDGET = 2 * 10**6


@dataclass
class GeneralisedStrategy:
    """Tables ``(k, prefix) -> Distribution over (a, b)``.

    ``alphabets`` holds the ``A, B, X, Y`` symbol tuples; prefixes are
    joint traces ``((a, b, x, y), ...)`` of length below ``rounds``.
    """

    rounds: int
    alphabets: dict
    secrets: tuple
    tables: dict = field(default_factory=dict)

    def table(self, k, prefix) -> Distribution:
        try:
            return self.tables[(k, tuple(prefix))]
        except KeyError:
            raise KeyError(f"no table for k={k!r} at prefix {prefix!r}") from None

    @classmethod
    def from_deterministic(cls, channel: InteractiveChannel, alice_maps: Mapping, sB) -> "GeneralisedStrategy":
        """Product strategy of per-secret Alice strategies and one Bob strategy.

        Every prefix over the full alphabets is tabulated; own histories the
        deterministic strategies never see fall back to the first message.
        """
        alph = _alphabets(channel)

        def pick(strategy, view, default):
            try:
                return strategy(view)
            except Exception:
                return default

        tables = {}
        for k, sA in alice_maps.items():
            for prefix in _all_prefixes(alph, channel.rounds):
                a = pick(sA, project_trace(prefix, Side.ALICE), alph["A"][0])
                b = pick(sB, project_trace(prefix, Side.BOB), alph["B"][0])
                tables[(k, prefix)] = Distribution.point((a, b))
        return cls(channel.rounds, alph, tuple(alice_maps), tables)


def _alphabets(channel: InteractiveChannel) -> dict:
    return {key: tuple(channel.alphabets[key].symbols) for key in "ABXY"}


def _all_prefixes(alph: Mapping, rounds: int) -> Iterable[tuple]:
    steps = list(itertools.product(alph["A"], alph["B"], alph["X"], alph["Y"]))
    for length in range(rounds):
        yield from itertools.product(steps, repeat=length)


def _prefix(msgs, ins):
    return tuple((a, b, x, y) for (a, b), (x, y) in zip(msgs, ins))


def generalized_trace_distribution(channel: InteractiveChannel, s: GeneralisedStrategy, k) -> Distribution:
    """Weight of ``t`` is the product over rounds of ``g(k, t_<i)(a_i, b_i) f_i(t_<i, a_i, b_i)(x_i, y_i)``."""
    out: dict = {}

    def walk(hist, w):
        if len(hist) == channel.rounds:
            out[hist] = out.get(hist, 0.0) + w
            return
        for (a, b), q in s.table(k, hist).items():
            if q <= 0:
                continue
            for (x, y), p in channel.transition(hist, a, b).items():
                if p > 0:
                    walk(hist + ((a, b, x, y),), w * q * p)

    walk((), 1.0)
    return Distribution.from_mapping(out)


def _behaviour(s: GeneralisedStrategy, k, j: int) -> dict:
    """``Q_j`` for one secret: ``(msgs, ins) -> mass`` over the full alphabets."""
    out = {((), ()): 1.0}
    alph = s.alphabets
    inputs = list(itertools.product(alph["X"], alph["Y"]))
    for i in range(j):
        nxt = {}
        for (msgs, ins), w in out.items():
            for xy in ([()] if i == 0 else inputs):
                ins2 = ins + ((xy,) if i else ())
                prefix = _prefix(msgs, ins2)
                if (k, prefix) not in s.tables:
                    continue
                for ab, q in s.tables[(k, prefix)].items():
                    nxt[(msgs + (ab,), ins2)] = nxt.get((msgs + (ab,), ins2), 0.0) + w * q
        out = nxt
    return out


def check_non_signalling(s: GeneralisedStrategy, tol: float = NS_TOL, mode: str = "marginal") -> list[Violation]:
    """Report violations of the two non-signalling conditions.

    Parameters
    ----------
    mode : {"marginal", "conditional"}
        ``"marginal"`` (default) compares the cumulative behaviours: Bob's
        marginal over his message sequence must not depend on ``k`` or on
        Alice's inputs, and Alice's must not depend on Bob's inputs. This is
        the form every quantum strategy satisfies. ``"conditional"``
        compares the per-prefix tables directly across prefixes with equal
        projections; it is stricter and rejects some quantum behaviours.
    """
    report: list[Violation] = []
    for (k, prefix), d in s.tables.items():
        if abs(d.total() - 1.0) > tol or any(p < -tol for p in d.weights):
            report.append(Violation("unnormalized", f"table for k={k!r} at {prefix!r} sums to {d.total():.12g}", (k, prefix)))
    if mode == "conditional":
        return report + _check_conditional(s, tol)
    if mode != "marginal":
        raise ValueError(f"unknown mode {mode!r}")
    for j in range(1, s.rounds + 1):
        bob: dict = {}
        alice: dict = {}
        for k in s.secrets:
            for (msgs, ins), w in _behaviour(s, k, j).items():
                a_seq = tuple(m[0] for m in msgs)
                b_seq = tuple(m[1] for m in msgs)
                x_seq = tuple(i[0] for i in ins)
                y_seq = tuple(i[1] for i in ins)
                bob.setdefault((b_seq, y_seq), {}).setdefault((k, x_seq), 0.0)
                bob[(b_seq, y_seq)][(k, x_seq)] += w
                alice.setdefault((k, a_seq, x_seq), {}).setdefault(y_seq, 0.0)
                alice[(k, a_seq, x_seq)][y_seq] += w
        x_all = list(itertools.product(s.alphabets["X"], repeat=j - 1))
        y_all = list(itertools.product(s.alphabets["Y"], repeat=j - 1))
        for (b_seq, y_seq), vals in bob.items():
            keys = [(k, x_seq) for k in s.secrets for x_seq in x_all]
            ref_key, ref = keys[0], vals.get(keys[0], 0.0)
            for key in keys:
                v = vals.get(key, 0.0)
                if abs(v - ref) > tol:
                    report.append(
                        Violation(
                            "non-signalling (i)",
                            f"round {j}: Bob marginal of b={b_seq!r} given y={y_seq!r} is {ref:.6g} for "
                            f"(k, x)={ref_key!r} but {v:.6g} for {key!r}",
                            (ref_key[0], key[0], b_seq, y_seq),
                        )
                    )
        for (k, a_seq, x_seq), vals in alice.items():
            ref_y, ref = y_all[0], vals.get(y_all[0], 0.0)
            for y_seq in y_all:
                v = vals.get(y_seq, 0.0)
                if abs(v - ref) > tol:
                    report.append(
                        Violation(
                            "non-signalling (ii)",
                            f"round {j}: Alice marginal of a={a_seq!r} (k={k!r}, x={x_seq!r}) differs "
                            f"between y={ref_y!r} and y={y_seq!r}",
                            (k, ref_y, y_seq, a_seq),
                        )
                    )
    return report


def _check_conditional(s: GeneralisedStrategy, tol: float) -> list[Violation]:
    report = []
    bob_groups: dict = {}
    alice_groups: dict = {}
    for (k, prefix), d in s.tables.items():
        marg_b = {b: sum(p for (a, bb), p in d.items() if bb == b) for b in s.alphabets["B"]}
        marg_a = {a: sum(p for (aa, b), p in d.items() if aa == a) for a in s.alphabets["A"]}
        bob_groups.setdefault(project_trace(prefix, Side.BOB), []).append((k, prefix, marg_b))
        alice_groups.setdefault((k, project_trace(prefix, Side.ALICE)), []).append((prefix, marg_a))
    for members in bob_groups.values():
        k0, t0, m0 = members[0]
        for k1, t1, m1 in members[1:]:
            for b in m0:
                if abs(m0[b] - m1[b]) > tol:
                    report.append(
                        Violation("non-signalling (i)", f"k={k0!r},k'={k1!r}, t={t0!r}, t'={t1!r}, b={b!r}", (k0, k1, t0, t1, b))
                    )
    for (k, _), members in alice_groups.items():
        t0, m0 = members[0]
        for t1, m1 in members[1:]:
            for a in m0:
                if abs(m0[a] - m1[a]) > tol:
                    report.append(Violation("non-signalling (ii)", f"k={k!r}, t={t0!r}, t'={t1!r}, a={a!r}", (k, t0, t1, a)))
    return report


# --------------------------------------------------------------------------
# guessing functions


def final_bit_guess(channel: InteractiveChannel) -> dict:
    """Guess the secret as the last component of Bob's final input."""
    out = {}
    for t in channel.bob_views():
        y = t[-1][1]
        out[t] = y[-1] if isinstance(y, tuple) else y
    return out


def _stirling_total(n: int, kmax: int) -> int:
    """Number of set partitions of ``n`` items into at most ``kmax`` blocks."""
    row = [1] + [0] * kmax
    for _ in range(n):
        new = [0] * (kmax + 1)
        for j in range(1, kmax + 1):
            new[j] = j * row[j] + row[j - 1]
        row = new
    return sum(row)


def _partitions(n: int, kmax: int):
    """Restricted growth strings of length ``n`` using at most ``kmax`` labels."""
    if n == 0:
        yield ()
        return
    word = [0] * n

    def rec(i, used):
        if i == n:
            yield tuple(word)
            return
        for v in range(min(used + 1, kmax)):
            word[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(1, 1)


def guessing_functions(channel: InteractiveChannel, secrets: Sequence, guess="exhaustive", budget: int | None = None):
    """Resolve a guess specification into ``(list_of_maps, exhaustive_flag)``.

    ``"exhaustive"`` enumerates guessing functions up to relabelling of the
    secrets, which leaves every capacity objective unchanged. With at least
    as many secrets as Bob views a single injective guess is enough: any
    guess ``g`` is matched by renaming each secret ``g(t)`` to ``t``.
    """
    views = channel.bob_views()
    secrets = list(secrets)
    if guess == "final-bit":
        g = final_bit_guess(channel)
        missing = {v for v in g.values() if v not in secrets}
        if missing:
            raise ValueError(f"final-bit guess produces values {sorted(map(repr, missing))} outside the secret set")
        return [g], False
    if guess == "exhaustive":
        if len(secrets) >= len(views):
            return [dict(zip(views, secrets))], True
        limit = DEFAULT_GUESS_BUDGET if budget is None else budget
        total = _stirling_total(len(views), len(secrets))
        if total > limit:
            raise BudgetExceeded(
                f"{total} guessing functions (|views|={len(views)}, |K|={len(secrets)}) exceed the budget of {limit}"
            )
        return [{v: secrets[i] for v, i in zip(views, rgs)} for rgs in _partitions(len(views), len(secrets))], True
    maps = [guess] if isinstance(guess, Mapping) else list(guess)
    for g in maps:
        bad = [t for t in views if g.get(t) not in secrets]
        if bad:
            raise ValueError(f"guessing function undefined or outside the secret set on view {bad[0]!r}")
    return maps, False


# --------------------------------------------------------------------------
# the LP


class _NSLayout:
    """Variable and constraint layout of the behaviour polytope."""

    def __init__(self, channel: InteractiveChannel, secrets: Sequence):
        self.channel = channel
        self.secrets = list(secrets)
        alph = _alphabets(channel)
        self.alph = alph
        n = channel.rounds
        msg_pairs = list(itertools.product(alph["A"], alph["B"]))
        inputs = list(itertools.product(alph["X"], alph["Y"]))
        self.index: dict = {}
        self.levels = []
        for j in range(1, n + 1):
            level = [
                (msgs, ins)
                for msgs in itertools.product(msg_pairs, repeat=j)
                for ins in itertools.product(inputs, repeat=j - 1)
            ]
            self.levels.append(level)
        self.q_count = len(self.secrets) * sum(len(lv) for lv in self.levels)

    def build(self):
        rows, cols, vals, rhs = [], [], [], []
        var = {}

        def v(key):
            if key not in var:
                var[key] = len(var)
            return var[key]

        def row(entries, b=0.0):
            r = len(rhs)
            for c, val in entries:
                rows.append(r)
                cols.append(c)
                vals.append(val)
            rhs.append(b)

        for k in self.secrets:
            for j, level in enumerate(self.levels, start=1):
                for msgs, ins in level:
                    v(("Q", k, msgs, ins))
        for k in self.secrets:
            row([(v(("Q", k, msgs, ins)), 1.0) for msgs, ins in self.levels[0]], 1.0)
            for j in range(2, len(self.levels) + 1):
                groups: dict = {}
                for msgs, ins in self.levels[j - 1]:
                    groups.setdefault((msgs[:-1], ins), []).append(v(("Q", k, msgs, ins)))
                for (parent, ins), children in groups.items():
                    row([(c, 1.0) for c in children] + [(v(("Q", k, parent, ins[:-1])), -1.0)])
        for j, level in enumerate(self.levels, start=1):
            bob: dict = {}
            alice: dict = {}
            for k in self.secrets:
                for msgs, ins in level:
                    a_seq = tuple(m[0] for m in msgs)
                    b_seq = tuple(m[1] for m in msgs)
                    x_seq = tuple(i[0] for i in ins)
                    y_seq = tuple(i[1] for i in ins)
                    q = v(("Q", k, msgs, ins))
                    bob.setdefault((b_seq, y_seq, k, x_seq), []).append(q)
                    alice.setdefault((k, a_seq, x_seq, y_seq), []).append(q)
            for (b_seq, y_seq, k, x_seq), qs in bob.items():
                row([(q, 1.0) for q in qs] + [(v(("H", j, b_seq, y_seq)), -1.0)])
            for (k, a_seq, x_seq, y_seq), qs in alice.items():
                row([(q, 1.0) for q in qs] + [(v(("G", j, k, a_seq, x_seq)), -1.0)])
        self.var = var
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), len(var)))
        return A, np.array(rhs)

    def objective_terms(self):
        """``(bob_view, k-independent list of (msgs, ins, weight))`` per reachable trace."""
        ch = self.channel
        out = []
        for t in ch.traces():
            msgs = tuple((a, b) for a, b, _, _ in t)
            ins = tuple((x, y) for _, _, x, y in t)[:-1]
            out.append((project_trace(t, Side.BOB), msgs, ins, ch.channel_weight(t)))
        return out


@dataclass
class NSCapacityResult:
    bits: float
    raw: float
    exhaustive: bool
    guess: dict
    strategy: GeneralisedStrategy
    lp_count: int
    residuals: dict = field(default_factory=dict)

    @property
    def bound(self) -> str:
        return "exact" if self.exhaustive else "lower"


def _strategy_from_solution(layout: _NSLayout, x: np.ndarray) -> GeneralisedStrategy:
    alph = layout.alph
    pairs = list(itertools.product(alph["A"], alph["B"]))
    tables = {}
    for k in layout.secrets:
        for j, level in enumerate(layout.levels, start=1):
            groups: dict = {}
            for msgs, ins in level:
                groups.setdefault((msgs[:-1], ins), {})[msgs[-1]] = max(float(x[layout.var[("Q", k, msgs, ins)]]), 0.0)
            for (parent, ins), children in groups.items():
                total = sum(children.values())
                prefix = _prefix(parent, ins)
                if total > 1e-12:
                    tables[(k, prefix)] = Distribution(pairs, [children.get(ab, 0.0) / total for ab in pairs])
                else:
                    tables[(k, prefix)] = Distribution.uniform(pairs)
    return GeneralisedStrategy(layout.channel.rounds, alph, tuple(layout.secrets), tables)


def solve_ns_capacity(
    channel: InteractiveChannel,
    secrets: Sequence | None = None,
    guess="exhaustive",
    budget: int | None = None,
    tol: float = 1e-7,
) -> NSCapacityResult:
    """Non-signalling min-entropy capacity with the maximising strategy.

    Parameters
    ----------
    secrets : sequence, optional
        Defaults to Bob's reachable views.
    guess : "exhaustive", "final-bit", mapping, or list of mappings
        Explicit guesses give a lower bound on the exhaustive value.
    budget : int, optional
        Caps both the number of guessing functions and LP variables.
    """
    secrets = list(channel.bob_views()) if secrets is None else list(secrets)
    guesses, exhaustive = guessing_functions(channel, secrets, guess, budget)
    layout = _NSLayout(channel, secrets)
    lp_budget = DEFAULT_LP_BUDGET if budget is None else budget
    if layout.q_count > lp_budget:
        raise BudgetExceeded(f"LP would have {layout.q_count} behaviour variables, budget is {lp_budget}")
    A_eq, b_eq = layout.build()
    terms = layout.objective_terms()
    best = None
    for g in guesses:
        c = np.zeros(len(layout.var))
        for view, msgs, ins, w in terms:
            k = g.get(view)
            if k is not None and k in secrets:
                c[layout.var[("Q", k, msgs, ins)]] += w
        res = solve_lp(LinearProgram(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), sense="max"), tol=tol)
        if res.status == "infeasible":
            raise SolverError("non-signalling LP reported infeasible; the constraint set is inconsistent", res.status)
        if res.status != "optimal":
            raise SolverError(f"non-signalling LP {res.status}: {res.message}", res.status, res.residuals)
        if best is None or res.value > best[0].value:
            best = (res, g)
    res, g = best
    strategy = _strategy_from_solution(layout, res.x)
    return NSCapacityResult(math.log2(res.value), res.value, exhaustive, g, strategy, len(guesses), res.residuals)


def ns_minentropy_capacity(
    channel: InteractiveChannel, secrets: Sequence | None = None, guess="exhaustive", budget: int | None = None
) -> float:
    """Non-signalling min-entropy capacity in bits (see :func:`solve_ns_capacity`)."""
    return solve_ns_capacity(channel, secrets, guess, budget).bits
