"""JSON encodings for channels, games and strategies.

Symbols may be numbers, strings or (nested) lists; lists are read back as
tuples so that compiled-channel symbols such as ``(answer, bit)`` survive a
round trip. Probabilities may be numbers or fraction strings like ``"1/3"``.
Complex matrix entries are numbers or ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from qleak.channel import InteractiveChannel, freeze
from qleak.distribution import Distribution, parse_probability
from qleak.errors import ChannelError
from qleak.games import GameQuantumStrategy, NonLocalGame
from qleak.nonsignalling import GeneralisedStrategy
from qleak.quantum import QuantumJointStrategy


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    return value


def _need(obj: dict, key: str, where: str):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise ChannelError(f"{where}: missing field {key!r}") from None


def _either(obj: dict, keys: tuple, where: str):
    """Value of the first of ``keys`` present (snake_case or camelCase spellings)."""
    for key in keys:
        if isinstance(obj, dict) and key in obj:
            return obj[key]
    raise ChannelError(f"{where}: missing field {keys[0]!r}")


def _dist(pairs, where: str) -> Distribution:
    try:
        return Distribution.accumulate((freeze(o), parse_probability(p)) for o, p in pairs)
    except (TypeError, ValueError) as exc:
        raise ChannelError(f"{where}: bad distribution ({exc})") from None


def _encode_dist(d: Distribution) -> list:
    return [[_thaw(o), float(p)] for o, p in d.items()]


def _matrix(data, where: str) -> np.ndarray:
    try:
        rows = [[complex(e[0], e[1]) if isinstance(e, list) else complex(e) for e in row] for row in data]
        return np.array(rows, dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise ChannelError(f"{where}: bad matrix ({exc})") from None


def _encode_matrix(M: np.ndarray) -> list:
    M = np.asarray(M)
    if np.allclose(M.imag, 0):
        return [[float(v.real) for v in row] for row in M]
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def _vector(data, where: str) -> np.ndarray:
    try:
        return np.array([complex(e[0], e[1]) if isinstance(e, list) else complex(e) for e in data], dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise ChannelError(f"{where}: bad state vector ({exc})") from None


def _encode_vector(v) -> list:
    v = np.asarray(v)
    if np.allclose(v.imag, 0):
        return [float(e.real) for e in v]
    return [[float(e.real), float(e.imag)] for e in v]


def _family(meas, messages, where: str) -> dict:
    """``meas`` is a list of ``[message, matrix]`` pairs or a dict keyed by JSON-encoded messages."""
    if isinstance(meas, dict):
        lookup = {json.dumps(_thaw(m)): m for m in messages} | {str(_thaw(m)): m for m in messages}
        out = {}
        for key, M in meas.items():
            if key not in lookup:
                raise ChannelError(f"{where}: unknown message {key!r}")
            out[lookup[key]] = _matrix(M, where)
        return out
    return {freeze(m): _matrix(M, where) for m, M in meas}


def _encode_family(fam: dict) -> list:
    return [[_thaw(m), _encode_matrix(M)] for m, M in fam.items()]


# --------------------------------------------------------------------------
# channels


def channel_to_json(channel: InteractiveChannel) -> dict:
    return {
        "type": "channel",
        "name": channel.name,
        "rounds": channel.rounds,
        "alphabets": {k: [_thaw(s) for s in channel.alphabets[k].symbols] for k in "ABXY"},
        "transitions": [
            {"history": _thaw(hist), "a": _thaw(a), "b": _thaw(b), "dist": _encode_dist(d)}
            for (hist, a, b), d in channel.transitions.items()
        ],
    }


def channel_from_json(obj: dict) -> InteractiveChannel:
    where = "channel"
    alph = _need(obj, "alphabets", where)
    alphabets = {k: [freeze(s) for s in _need(alph, k, f"{where}.alphabets")] for k in "ABXY"}
    transitions = {}
    for i, tr in enumerate(_need(obj, "transitions", where)):
        loc = f"{where}.transitions[{i}]"
        hist = freeze(_need(tr, "history", loc))
        key = (hist, freeze(_need(tr, "a", loc)), freeze(_need(tr, "b", loc)))
        if key in transitions:
            raise ChannelError(f"{loc}: duplicate transition for history {hist!r}")
        transitions[key] = _dist(_need(tr, "dist", loc), loc)
    return InteractiveChannel(_need(obj, "rounds", where), alphabets, transitions, name=obj.get("name", "channel"))


# --------------------------------------------------------------------------
# games


def game_to_json(game: NonLocalGame) -> dict:
    return {
        "type": "game",
        "name": game.name,
        "questions_a": [_thaw(s) for s in game.questions_a],
        "questions_b": [_thaw(s) for s in game.questions_b],
        "answers_a": [_thaw(s) for s in game.answers_a],
        "answers_b": [_thaw(s) for s in game.answers_b],
        "mu": _encode_dist(game.mu),
        "win": sorted(_thaw(w) for w in game.win),
    }


def game_from_json(obj: dict) -> NonLocalGame:
    where = "game"
    qa = [freeze(s) for s in _either(obj, ("questions_a", "questionsA"), where)]
    qb = [freeze(s) for s in _either(obj, ("questions_b", "questionsB"), where)]
    mu = obj.get("mu", "uniform")
    if mu == "uniform":
        mu_d = Distribution.uniform([(x, y) for x in qa for y in qb])
    elif mu and all(isinstance(e, dict) for e in mu):
        # record form: [{"x": .., "y": .., "p": ..}, ...]
        mu_d = _dist([[[e.get("x"), e.get("y")], _need(e, "p", f"{where}.mu")] for e in mu], f"{where}.mu")
    else:
        mu_d = _dist(mu, f"{where}.mu")
    return NonLocalGame(
        tuple(qa),
        tuple(qb),
        tuple(freeze(s) for s in _either(obj, ("answers_a", "answersA"), where)),
        tuple(freeze(s) for s in _either(obj, ("answers_b", "answersB"), where)),
        mu_d,
        frozenset(freeze(w) for w in _need(obj, "win", where)),
        name=obj.get("name", "game"),
    )


def game_strategy_to_json(s: GameQuantumStrategy) -> dict:
    return {
        "type": "game-strategy",
        "dims": list(s.dims),
        "state": _encode_vector(s.state),
        "alice": [{"question": _thaw(x), "meas": _encode_family(f)} for x, f in s.alice.items()],
        "bob": [{"question": _thaw(y), "meas": _encode_family(f)} for y, f in s.bob.items()],
    }


def game_strategy_from_json(obj: dict, game: NonLocalGame) -> GameQuantumStrategy:
    where = "game-strategy"
    if "aliceMeas" in obj:
        # keyed form: {"dimA", "dimB", "aliceMeas": {question: {answer: matrix}}, "bobMeas": ...}
        dims = (_need(obj, "dimA", where), _need(obj, "dimB", where))
        alice = _keyed_families(_need(obj, "aliceMeas", where), game.questions_a, game.answers_a, f"{where}.aliceMeas")
        bob = _keyed_families(_need(obj, "bobMeas", where), game.questions_b, game.answers_b, f"{where}.bobMeas")
        return GameQuantumStrategy(dims, _vector(_need(obj, "state", where), where), alice, bob)
    alice = {
        freeze(e["question"]): _family(_need(e, "meas", where), game.answers_a, f"{where}.alice")
        for e in _need(obj, "alice", where)
    }
    bob = {
        freeze(e["question"]): _family(_need(e, "meas", where), game.answers_b, f"{where}.bob")
        for e in _need(obj, "bob", where)
    }
    return GameQuantumStrategy(tuple(_need(obj, "dims", where)), _vector(_need(obj, "state", where), where), alice, bob)


def _keyed_families(data: dict, questions, answers, where: str) -> dict:
    by_name = {json.dumps(_thaw(q)): q for q in questions} | {str(_thaw(q)): q for q in questions}
    out = {}
    for key, meas in data.items():
        if key not in by_name:
            raise ChannelError(f"{where}: unknown question {key!r}")
        out[by_name[key]] = _family(meas, answers, f"{where}[{key}]")
    return out


# --------------------------------------------------------------------------
# channel strategies


def quantum_strategy_to_json(s: QuantumJointStrategy, secrets=None) -> dict:
    out = {
        "type": "quantum-strategy",
        "dims": list(s.dims),
        "state": _encode_vector(s.state),
        "alice": [{"k": _thaw(k), "history": _thaw(h), "meas": _encode_family(f)} for (k, h), f in s.alice.items()],
        "bob": [{"history": _thaw(h), "meas": _encode_family(f)} for h, f in s.bob.items()],
    }
    if secrets is not None:
        out["secrets"] = [_thaw(k) for k in secrets]
    return out


def quantum_strategy_from_json(obj: dict, channel: InteractiveChannel) -> QuantumJointStrategy:
    where = "quantum-strategy"
    alice = {}
    for i, e in enumerate(_need(obj, "alice", where)):
        loc = f"{where}.alice[{i}]"
        alice[(freeze(_need(e, "k", loc)), freeze(_need(e, "history", loc)))] = _family(_need(e, "meas", loc), channel.A, loc)
    bob = {}
    for i, e in enumerate(_need(obj, "bob", where)):
        loc = f"{where}.bob[{i}]"
        bob[freeze(_need(e, "history", loc))] = _family(_need(e, "meas", loc), channel.B, loc)
    return QuantumJointStrategy(tuple(_need(obj, "dims", where)), _vector(_need(obj, "state", where), where), alice, bob)


def generalised_strategy_to_json(s: GeneralisedStrategy) -> dict:
    return {
        "type": "generalised-strategy",
        "rounds": s.rounds,
        "alphabets": {k: [_thaw(v) for v in s.alphabets[k]] for k in "ABXY"},
        "secrets": [_thaw(k) for k in s.secrets],
        "tables": [{"k": _thaw(k), "prefix": _thaw(t), "dist": _encode_dist(d)} for (k, t), d in s.tables.items()],
    }


def generalised_strategy_from_json(obj: dict) -> GeneralisedStrategy:
    where = "generalised-strategy"
    alph = _need(obj, "alphabets", where)
    tables = {}
    for i, e in enumerate(_need(obj, "tables", where)):
        loc = f"{where}.tables[{i}]"
        tables[(freeze(_need(e, "k", loc)), freeze(_need(e, "prefix", loc)))] = _dist(_need(e, "dist", loc), loc)
    return GeneralisedStrategy(
        _need(obj, "rounds", where),
        {k: tuple(freeze(v) for v in _need(alph, k, where)) for k in "ABXY"},
        tuple(freeze(k) for k in _need(obj, "secrets", where)),
        tables,
    )


def deterministic_strategies_from_json(obj: dict, channel: InteractiveChannel):
    """``{"prior": [[k, p], ...], "alice": [{"k": k, "table": [[history, a], ...]}], "bob": [[history, b], ...]}``."""
    from qleak.channel import DeterministicStrategy, Side

    where = "strategy"
    prior = _dist(_need(obj, "prior", where), f"{where}.prior")
    alice = {}
    for i, e in enumerate(_need(obj, "alice", where)):
        loc = f"{where}.alice[{i}]"
        alice[freeze(_need(e, "k", loc))] = DeterministicStrategy(
            Side.ALICE, {freeze(h): freeze(a) for h, a in _need(e, "table", loc)}
        )
    bob = DeterministicStrategy(Side.BOB, {freeze(h): freeze(b) for h, b in _need(obj, "bob", where)})
    return prior, alice, bob


def guesses_from_json(obj) -> list[dict]:
    """A list of guessing functions, each a list of ``[bob_view, k]`` pairs."""
    maps = obj.get("guesses") if isinstance(obj, dict) else obj
    if not isinstance(maps, list):
        raise ChannelError("guess file: expected a list of guessing functions")
    return [{freeze(view): freeze(k) for view, k in g} for g in maps]


def load_json(text: str, source: str = "<input>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1)
