"""Entangled joint strategies on interactive channels.

Alice's measurements are indexed by ``(k, alice_history)`` and Bob's by
``bob_history``; each family maps messages to projectors on the local
factor. The shared state lives on ``H_A (x) H_B`` with Alice's factor first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qleak.channel import InteractiveChannel, Side, Violation, project_trace
from qleak.distribution import Distribution
from qleak.errors import InvalidStrategy
from qleak.games import builtin_game
from qleak.leakage import VulnerabilityMeasure, information_gain
from qleak.measurements import check_family, check_state, deterministic_family, max_entangled

_PRUNE = 1e-15


@dataclass
class QuantumJointStrategy:
    dims: tuple
    state: np.ndarray
    alice: dict = field(default_factory=dict)
    bob: dict = field(default_factory=dict)

    @classmethod
    def from_classical(cls, channel: InteractiveChannel, alice_maps: dict, sB) -> "QuantumJointStrategy":
        """Embed deterministic strategies as one-dimensional projector families.

        ``alice_maps`` maps each secret to a :class:`DeterministicStrategy`.
        """
        alice = {
            (k, h): deterministic_family(channel.A, sA(h))
            for k, sA in alice_maps.items()
            for h in channel.own_histories(Side.ALICE)
        }
        bob = {h: deterministic_family(channel.B, sB(h)) for h in channel.own_histories(Side.BOB)}
        return cls((1, 1), np.ones(1, dtype=complex), alice, bob)


def _walk(channel, s, k, on_leaf, on_missing, rule="born"):
    """Depth-first enumeration of traces with positive weight for secret ``k``."""
    dA, dB = s.dims
    psi = np.asarray(s.state, dtype=complex).reshape(dA, dB)

    def rec(hist, hA, hB, Phi, OA, OB, w):
        if len(hist) == channel.rounds:
            if rule == "born":
                amp = float(np.vdot(Phi, Phi).real)
            else:
                amp = float(np.real(np.vdot(psi, OA @ psi @ OB.T)))
            on_leaf(hist, amp * w)
            return
        famA = s.alice.get((k, hA))
        famB = s.bob.get(hB)
        if famA is None or famB is None:
            on_missing(hist, k, hA if famA is None else None, hB if famB is None else None)
            return
        for a in channel.A:
            Aop = famA.get(a)
            if Aop is None:
                continue
            for b in channel.B:
                Bop = famB.get(b)
                if Bop is None:
                    continue
                Phi2 = Aop @ Phi @ Bop.T
                if rule == "born" and float(np.vdot(Phi2, Phi2).real) <= _PRUNE:
                    continue
                OA2, OB2 = (Aop @ OA, Bop @ OB) if rule != "born" else (OA, OB)
                for (x, y), p in channel.transition(hist, a, b).items():
                    if p > 0:
                        rec(hist + ((a, b, x, y),), hA + ((a, x),), hB + ((b, y),), Phi2, OA2, OB2, w * p)

    eye = (np.eye(dA, dtype=complex), np.eye(dB, dtype=complex))
    rec((), (), (), psi, eye[0], eye[1], 1.0)


def validate_quantum_strategy(s: QuantumJointStrategy, channel: InteractiveChannel, secrets) -> list[Violation]:
    """Check the state, every family, and coverage of reached histories."""
    dA, dB = s.dims
    report = check_state(np.asarray(s.state), dA * dB)
    for (k, h), fam in s.alice.items():
        report.extend(check_family(fam, channel.A, dA, f"alice[k={k!r}, {h!r}]"))
    for h, fam in s.bob.items():
        report.extend(check_family(fam, channel.B, dB, f"bob[{h!r}]"))
    if report:
        return report
    seen = set()

    def missing(hist, k, hA, hB):
        for side, h in (("alice", hA), ("bob", hB)):
            if h is not None and (side, k if side == "alice" else None, h) not in seen:
                seen.add((side, k if side == "alice" else None, h))
                label = f"k={k!r}, {h!r}" if side == "alice" else repr(h)
                report.append(Violation("coverage", f"no {side} measurement for reached history {label}", (side, k, h)))

    for k in secrets:
        _walk(channel, s, k, lambda t, w: None, missing)
    return report


def entangled_trace_distribution(
    channel: InteractiveChannel, s: QuantumJointStrategy, k, rule: str = "born", validate: bool = True
) -> Distribution:
    """Distribution of joint traces under an entangled strategy for secret ``k``.

    The weight of ``t`` is ``|| (A_t (x) B_t) psi ||^2`` times the channel
    factors, where ``A_t`` and ``B_t`` are the ordered projector products
    with round 1 rightmost. ``rule="display"`` uses the bare expectation
    ``<psi| A_t (x) B_t |psi>`` instead; the two agree whenever each party's
    projectors along a path commute, which is always the case for one-round
    channels and for deterministic round-1 families.
    """
    if rule not in ("born", "display"):
        raise ValueError(f"unknown rule {rule!r}")
    if validate:
        bad = validate_quantum_strategy(s, channel, [k])
        if bad:
            raise InvalidStrategy(f"invalid quantum strategy: {bad[0]}", bad)
    out: dict = {}

    def leaf(t, w):
        out[t] = out.get(t, 0.0) + w

    def missing(hist, k_, hA, hB):
        raise InvalidStrategy(f"strategy undefined at history {hist!r}")

    _walk(channel, s, k, leaf, missing, rule=rule)
    return Distribution.from_mapping(out)


def entangled_leakage(
    V: VulnerabilityMeasure, prior: Distribution, channel: InteractiveChannel, s: QuantumJointStrategy, rule: str = "born"
) -> float:
    """Leakage of the secret to Bob under an entangled strategy."""
    secrets = [k for k, p in prior.items() if p > 0]
    bad = validate_quantum_strategy(s, channel, secrets)
    if bad:
        raise InvalidStrategy(f"invalid quantum strategy: {bad[0]}", bad)
    conditional = {
        k: entangled_trace_distribution(channel, s, k, rule=rule, validate=False).map(
            lambda t: project_trace(t, Side.BOB)
        )
        for k in secrets
    }
    return information_gain(V, prior, conditional)


def chsh_channel_strategy():
    """Two-qubit strategy for the compiled CHSH channel.

    Round 1: Alice sends ``(0, k)`` and Bob sends ``0`` with certainty.
    Round 2: both measure in the CHSH bases for their round-1 question;
    Alice tags her answer with ``k`` again. Returns ``(strategy, secrets)``.
    """
    game, gs = builtin_game("chsh")
    A = tuple((a, u) for a in game.answers_a for u in (0, 1))
    secrets = (0, 1)
    zero = np.zeros((2, 2), dtype=complex)
    alice, bob = {}, {}
    for k in secrets:
        alice[(k, ())] = deterministic_family(A, (game.answers_a[0], k), dim=2)
        for m1 in A:
            for x in game.questions_a:
                alice[(k, ((m1, x),))] = {
                    (a, u): (gs.alice[x][a] if u == k else zero) for (a, u) in A
                }
    bob[()] = deterministic_family(game.answers_b, game.answers_b[0], dim=2)
    for b1 in game.answers_b:
        for y in game.questions_b:
            for v in (0, 1):
                bob[((b1, (y, v)),)] = dict(gs.bob[y])
    return QuantumJointStrategy((2, 2), max_entangled(2), alice, bob), secrets
