"""Vulnerability measures, leakage, and exact classical capacities.

All logarithms are base 2, so leakage is reported in bits.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from qleak.channel import (
    DeterministicStrategy,
    InteractiveChannel,
    Side,
    enumerate_strategies,
    project_trace,
    strategy_count,
    trace_distribution,
)
from qleak.distribution import Distribution
from qleak.errors import BudgetExceeded, SolverError

DEFAULT_BUDGET = 2**20


def enumeration_budget(budget: int | None = None) -> int:
    """Resolve the per-side strategy budget (``QLEAK_BUDGET`` overrides the default)."""
    if budget is not None:
        return int(budget)
    env = os.environ.get("QLEAK_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


# --------------------------------------------------------------------------
# vulnerability measures


@dataclass(frozen=True)
class VulnerabilityMeasure:
    """Shannon, min-entropy, or g-vulnerability.

    For ``kind == "g"``, ``gain`` maps a guess ``w`` and a secret ``k`` to a
    reward in [0, 1]; it may be a callable ``gain(w, k)`` or a nested mapping
    ``gain[w][k]`` (missing entries count as 0).
    """

    kind: str
    guesses: tuple = ()
    gain: object = None
    mode: str = "multiplicative"

    def __post_init__(self):
        if self.kind not in ("shannon", "min-entropy", "g"):
            raise ValueError(f"unknown vulnerability kind {self.kind!r}")
        if self.kind == "g":
            if not self.guesses:
                raise ValueError("g-vulnerability needs a nonempty guess set")
            if self.mode not in ("additive", "multiplicative"):
                raise ValueError(f"unknown g-vulnerability mode {self.mode!r}")

    @classmethod
    def shannon(cls) -> "VulnerabilityMeasure":
        return cls("shannon")

    @classmethod
    def min_entropy(cls) -> "VulnerabilityMeasure":
        return cls("min-entropy")

    @classmethod
    def g_vulnerability(cls, guesses, gain, mode="multiplicative") -> "VulnerabilityMeasure":
        return cls("g", tuple(guesses), gain, mode)

    def gain_value(self, w, k) -> float:
        if callable(self.gain):
            v = float(self.gain(w, k))
        else:
            v = float(self.gain.get(w, {}).get(k, 0.0))
        if not -1e-12 <= v <= 1 + 1e-12:
            raise ValueError(f"gain g({w!r}, {k!r}) = {v} is outside [0, 1]")
        return v

    @classmethod
    def parse(cls, name: str) -> "VulnerabilityMeasure":
        key = name.lower().replace("_", "-")
        if key in ("shannon", "mutual-information"):
            return cls.shannon()
        if key in ("minentropy", "min-entropy", "bayes"):
            return cls.min_entropy()
        raise ValueError(f"unknown measure {name!r}")


def vulnerability(V: VulnerabilityMeasure, d: Distribution) -> float:
    """Vulnerability of ``d`` in bits (or raw gain for additive g)."""
    if V.kind == "shannon":
        return math.fsum(p * math.log2(p) for p in d.weights if p > 0)
    if V.kind == "min-entropy":
        return math.log2(d.max())
    best = max(math.fsum(p * V.gain_value(w, k) for k, p in d.items()) for w in V.guesses)
    if V.mode == "additive":
        return best
    return math.log2(best) if best > 0 else -math.inf


def posterior_distribution(prior: Distribution, conditional: Mapping, observation) -> Distribution:
    """Bayes posterior on the secret after seeing ``observation``.

    ``conditional[k]`` is the distribution of observations given secret ``k``.
    """
    joint = [(k, pk * conditional[k].prob(observation)) for k, pk in prior.items() if pk > 0]
    marginal = math.fsum(w for _, w in joint)
    if marginal <= 0:
        raise ValueError(f"observation {observation!r} has zero probability under the prior")
    return Distribution([k for k, _ in joint], [w / marginal for _, w in joint])


def information_gain(V: VulnerabilityMeasure, prior: Distribution, conditional: Mapping) -> float:
    """Posterior vulnerability minus prior vulnerability.

    For Shannon entropy and additive gain the posterior vulnerability is the
    expected vulnerability of the Bayes posterior. For the log-scaled
    measures (min-entropy, multiplicative gain) the expectation is taken
    before the log, so that the posterior term is ``log2`` of Bob's expected
    success probability, e.g. ``log2 sum_o max_k p(k) p(o|k)``.
    """
    observations = {}
    for k, pk in prior.items():
        if pk > 0:
            for o, p in conditional[k].items():
                if p > 0:
                    observations[o] = observations.get(o, 0.0) + pk * p
    values = [(m, vulnerability(V, posterior_distribution(prior, conditional, o))) for o, m in observations.items()]
    if V.kind == "min-entropy" or (V.kind == "g" and V.mode == "multiplicative"):
        posterior = math.log2(math.fsum(m * 2.0**v for m, v in values))
    else:
        posterior = math.fsum(m * v for m, v in values)
    return posterior - vulnerability(V, prior)


@dataclass
class SecretModel:
    """A secret with a prior and Alice's strategy for each of its values.

    Randomized Alice strategies are modelled by folding her coin into the
    secret set.
    """

    prior: Distribution
    alice_map: Mapping[Hashable, DeterministicStrategy] = field(default_factory=dict)

    def __post_init__(self):
        missing = [k for k in self.prior.support if k not in self.alice_map]
        if missing:
            raise ValueError(f"alice_map is not total: missing secrets {missing!r}")


def bob_view_law(channel: InteractiveChannel, sA: DeterministicStrategy, sB: DeterministicStrategy) -> Distribution:
    return trace_distribution(channel, sA, sB).map(lambda t: project_trace(t, Side.BOB))


def leakage(V: VulnerabilityMeasure, secret: SecretModel, channel: InteractiveChannel, sB: DeterministicStrategy) -> float:
    """V-leakage of the secret to Bob, computed exactly by enumeration."""
    conditional = {
        k: bob_view_law(channel, secret.alice_map[k], sB) for k, pk in secret.prior.items() if pk > 0
    }
    return information_gain(V, secret.prior, conditional)


# --------------------------------------------------------------------------
# classical capacities


def _check_budget(channel: InteractiveChannel, budget: int, sides=(Side.ALICE, Side.BOB)) -> dict:
    counts = {side: strategy_count(channel, side) for side in Side}
    over = {s.value: counts[s] for s in sides if counts[s] > budget}
    if over:
        raise BudgetExceeded(
            f"enumeration budget exceeded: {counts[Side.ALICE]} Alice and {counts[Side.BOB]} Bob "
            f"deterministic strategies, budget {budget} per side"
        )
    return counts


def _best_alice_response_per_view(channel: InteractiveChannel) -> dict:
    """For every reachable Bob view ``t``, the max over deterministic Alice
    strategies of ``P(t)`` when Bob sends the messages recorded in ``t``."""
    n = channel.rounds
    memo: dict = {}

    def best(hist):
        if hist in memo:
            return memo[hist]
        if len(hist) == n:
            memo[hist] = {(): 1.0}
            return memo[hist]
        res: dict = {}
        for b in channel.B:
            merged: dict = {}
            for a in channel.A:
                d = channel.transitions.get((hist, a, b))
                if d is None:
                    continue
                acc: dict = {}
                for (x, y), p in d.items():
                    if p <= 0:
                        continue
                    for suffix, v in best(hist + ((a, b, x, y),)).items():
                        key = ((b, y),) + suffix
                        acc[key] = acc.get(key, 0.0) + p * v
                for key, v in acc.items():
                    if v > merged.get(key, -1.0):
                        merged[key] = v
            res.update(merged)
        memo[hist] = res
        return res

    return best(())


def _bob_tree_max(values: Mapping[tuple, float]) -> float:
    """max over Bob strategies of the sum of leaf values reachable under it."""

    def total(prefix, depth):
        if depth == len(next(iter(values))):
            return values.get(prefix, 0.0)
        by_b: dict = {}
        for t in children[prefix]:
            b, y = t[-1]
            by_b.setdefault(b, []).append(t)
        return max(math.fsum(total(c, depth + 1) for c in group) for group in by_b.values())

    children: dict = {}
    for t in values:
        for i in range(len(t)):
            children.setdefault(t[:i], set()).add(t[: i + 1])
    children = {k: sorted(v, key=repr) for k, v in children.items()}
    return total((), 0)


class _AliceEnumerator:
    """Vectorized evaluation of Bob-view laws for every deterministic Alice
    strategy at once. Strategy ``i`` is the mixed-radix number whose digit
    for Alice history ``j`` is the index of the message sent there (first
    history most significant)."""

    def __init__(self, channel: InteractiveChannel):
        self.channel = channel
        self.hist_index = {h: j for j, h in enumerate(channel.own_histories(Side.ALICE))}
        self.views = channel.bob_views()
        self.view_index = {t: j for j, t in enumerate(self.views)}
        nA, H = len(channel.A), len(self.hist_index)
        self.count = nA**H
        idx = np.arange(self.count, dtype=np.int64)
        dtype = np.uint8 if nA < 256 else np.uint32
        self.digits = np.empty((self.count, H), dtype=dtype)
        for j in range(H):
            self.digits[:, j] = (idx // nA ** (H - 1 - j)) % nA

    def matrix(self, sB: DeterministicStrategy) -> np.ndarray:
        """``P[i, j]`` = probability Bob sees view ``j`` when Alice plays ``i``."""
        ch = self.channel
        P = np.zeros((self.count, len(self.views)))
        A = ch.A

        def walk(hist, alive, w, alice_view, bob_view):
            if len(hist) == ch.rounds:
                P[alive, self.view_index[bob_view]] += w
                return
            b = sB(bob_view)
            col = self.digits[alive, self.hist_index[alice_view]]
            for ai, a in enumerate(A):
                sel = col == ai
                if not sel.any():
                    continue
                sub, wsub = alive[sel], w[sel]
                for (x, y), p in ch.transition(hist, a, b).items():
                    if p > 0:
                        walk(hist + ((a, b, x, y),), sub, wsub * p, alice_view + ((a, x),), bob_view + ((b, y),))

        walk((), np.arange(self.count), np.ones(self.count), (), ())
        return P


def minentropy_capacity_classical(
    channel: InteractiveChannel, budget: int | None = None, method: str = "dp"
) -> float:
    """Classical min-entropy capacity in bits.

    This is ``max_{s_B} log2 sum_t max_{s_A} P(t | s_A, s_B)`` over
    deterministic strategies, ``t`` ranging over Bob's views.

    Parameters
    ----------
    budget : int, optional
        Maximum number of deterministic strategies per side.
    method : {"dp", "enumerate"}
        ``"dp"`` computes the per-view Alice maximum and Bob's choice by
        backward induction; ``"enumerate"`` tabulates every strategy pair.
        Both give the same value.
    """
    counts = _check_budget(channel, enumeration_budget(budget))
    if method == "dp":
        best = _best_alice_response_per_view(channel)
        return math.log2(_bob_tree_max(best))
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    enum_ = _AliceEnumerator(channel)
    best_total = 0.0
    for sB in enumerate_strategies(channel, Side.BOB):
        P = enum_.matrix(sB)
        best_total = max(best_total, float(P.max(axis=0).sum()))
    del counts
    return math.log2(best_total)


def classical_guess_value(
    channel: InteractiveChannel,
    secrets: Sequence,
    guess: Mapping,
    budget: int | None = None,
) -> float:
    """``max sum_t P(t | g(t))`` over deterministic classical strategies.

    Alice's strategy may depend on the secret; ``guess`` maps each Bob view
    to a secret. This is the classical counterpart of the objective used by
    the non-signalling LP and the moment relaxation, so the three can be
    compared for the same guessing function. Returns the raw sum (not log).
    """
    _check_budget(channel, enumeration_budget(budget))
    enum_ = _AliceEnumerator(channel)
    masks = {k: np.array([guess.get(t) == k for t in enum_.views]) for k in secrets}
    best = 0.0
    for sB in enumerate_strategies(channel, Side.BOB):
        P = enum_.matrix(sB)
        total = sum(float(P[:, m].sum(axis=1).max()) for m in masks.values() if m.any())
        best = max(best, total)
    return best


def blahut_arimoto(P: np.ndarray, tol: float = 1e-9, max_iter: int = 100_000):
    """Shannon capacity (bits) of the row-stochastic matrix ``P``.

    Returns ``(capacity, input_distribution, lower_bounds)`` where
    ``lower_bounds`` is the nondecreasing sequence of iterates. Stops when
    the gap to the standard upper bound ``max_x D(P_x || q)`` is below
    ``tol`` bits.
    """
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    r = np.full(m, 1.0 / m)
    logP = np.where(P > 0, np.log2(np.where(P > 0, P, 1.0)), 0.0)
    history = []
    for _ in range(int(max_iter)):
        q = r @ P
        logq = np.where(q > 0, np.log2(np.where(q > 0, q, 1.0)), 0.0)
        d = (P * (logP - logq)).sum(axis=1)
        lower = float(r @ d)
        upper = float(d.max())
        history.append(lower)
        if upper - lower <= tol:
            return max(lower, 0.0), r, history
        c = np.exp2(d - upper)
        r = r * c
        r /= r.sum()
    raise SolverError(
        f"Blahut-Arimoto did not converge in {max_iter} iterations",
        status="stalled",
        residuals={"gap": upper - lower},
    )


def shannon_capacity_classical(
    channel: InteractiveChannel,
    budget: int | None = None,
    tolerance: float = 1e-9,
    max_iter: int = 100_000,
) -> float:
    """Classical Shannon capacity in bits, maximized over Bob's deterministic strategies."""
    _check_budget(channel, enumeration_budget(budget))
    enum_ = _AliceEnumerator(channel)
    best = 0.0
    for sB in enumerate_strategies(channel, Side.BOB):
        rows = np.unique(np.round(enum_.matrix(sB), 15), axis=0)
        if rows.shape[0] < 2:
            continue
        cap, _, _ = blahut_arimoto(rows, tol=tolerance, max_iter=max_iter)
        best = max(best, cap)
    return best
