"""Moment-matrix relaxations for games and interactive channels.

Operators are projectors ``('A', label, outcome)`` and ``('B', label,
outcome)``. For channels an Alice label is ``(k, alice_history)`` and a
Bob label is ``bob_history``; for games the label is the question. A word
is a tuple of symbols; the empty tuple is the identity and :data:`ZERO`
is the zero operator.

The moment matrix is indexed by words and ``Gamma[S, T] = <psi|S^dagger T|psi>``
is shared between all pairs whose ``S^dagger T`` has the same canonical
form. All coefficients are real, so a complex feasible matrix can be
replaced by its real part (itself PSD) without changing the objective; we
therefore optimise over real symmetric matrices and additionally identify
each word with its reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence


from qleak.channel import InteractiveChannel, Side, project_trace
from qleak.errors import BudgetExceeded, SolverError
from qleak.games import NonLocalGame
from qleak.nonsignalling import guessing_functions
from qleak.solvers import SemidefiniteProgram, solve_sdp, write_sdpa

ONE = "1"
ZERO = "0"
DEFAULT_INDEX_BUDGET = 4000
NPA_WARNING = (
    "moment relaxation bounds are upper bounds only; the hierarchy need not "
    "converge to the entangled capacity"
)


def family(symbol) -> tuple:
    return symbol[0], symbol[1]


def path_commute(s, t) -> bool:
    """Whether two same-side channel projectors commute in the dilated model.

    Measurements of one party in rounds ``i < j`` commute when the round-``j``
    history extends the round-``i`` inputs (and, for Alice, the secret is
    the same). Each round can then be realised as a unitary controlled on
    the registers recording earlier outcomes, which leaves those registers
    untouched.
    """
    if s[0] != t[0]:
        return True
    if s[0] == "A":
        (k, h), (k2, h2) = s[1], t[1]
        if k != k2:
            return False
    else:
        h, h2 = s[1], t[1]
    if len(h) == len(h2):
        return False
    if len(h) > len(h2):
        h, h2 = h2, h
    return all(e[1] == f[1] for e, f in zip(h, h2))


def _reduce(syms, commute):
    """Merge equal projectors and zero orthogonal ones, moving through commuting symbols."""
    out: list = []
    for s in syms:
        fam = family(s)
        for i in range(len(out) - 1, -1, -1):
            if family(out[i]) != fam:
                continue
            # symbols forced to stay between out[i] and s must commute with s
            between = [i]
            for j in range(i + 1, len(out)):
                if any(not commute(out[b], out[j]) for b in between):
                    between.append(j)
            if all(commute(out[j], s) for j in between[1:]):
                if out[i][2] != s[2]:
                    return None
                break
            out.append(s)
            break
        else:
            out.append(s)
    return out


def _lex_normal(syms, commute):
    rest, out = list(syms), []
    while rest:
        free = [i for i in range(len(rest)) if all(commute(rest[j], rest[i]) for j in range(i))]
        i = min(free, key=lambda i: repr(rest[i]))
        out.append(rest.pop(i))
    return out


def canonicalize_word(word, commute=None):
    """Normal form of a product of projectors.

    Drops identities, maps anything containing ``ZERO`` to ``ZERO``, moves
    Alice symbols left of Bob symbols (keeping each side's order), then
    merges equal neighbours and sends neighbours from one family with
    different outcomes to ``ZERO``. With ``commute`` (a predicate on two
    same-side symbols), neighbours are taken modulo those commutations and
    each side is put in lexicographic normal form.

    Examples
    --------
    >>> a0, a1 = ("A", 0, 0), ("A", 0, 1)
    >>> canonicalize_word([a0, a0])
    (('A', 0, 0),)
    >>> canonicalize_word([a0, a1])
    '0'
    """
    if word == ZERO:
        return ZERO
    syms = []
    for s in word:
        if s == ZERO:
            return ZERO
        if s != ONE:
            syms.append(tuple(s))
    out = []
    for side in ("A", "B"):
        part = [s for s in syms if s[0] == side]
        if commute is None:
            stack = []
            for s in part:
                if stack and family(stack[-1]) == family(s):
                    if stack[-1][2] != s[2]:
                        return ZERO
                    continue
                stack.append(s)
        else:
            stack = _reduce(part, commute)
            if stack is None:
                return ZERO
            stack = _lex_normal(stack, commute)
        out.extend(stack)
    return tuple(out)


def adjoint(word):
    return ZERO if word == ZERO else tuple(reversed(word))


def _sort_key(word):
    return (len(word), repr(word))


def moment_key(word, commute=None):
    """Shared variable name for ``word``: canonical, and identified with its adjoint."""
    w = canonicalize_word(word, commute)
    if w == ZERO or not w:
        return w
    r = canonicalize_word(adjoint(w), commute)
    return min(w, r, key=_sort_key)


# --------------------------------------------------------------------------
# index construction


def _side_words(symbols: Sequence, max_len: int):
    """All words over one side's symbols without equal-family neighbours."""
    by_len = [[()]]
    for _ in range(max_len):
        nxt = []
        for w in by_len[-1]:
            for s in symbols:
                if w and family(w[-1]) == family(s):
                    continue
                nxt.append(w + (s,))
        by_len.append(nxt)
    return by_len


def _path_words(symbols: Sequence, max_len: int, successors):
    """Words along causal paths, latest round first.

    ``successors(s)`` lists symbols of the next round that extend the path
    through ``s``; a path word ``(s_m, ..., s_1)`` has ``s_{j+1}`` in
    ``successors(s_j)``.
    """
    by_len = [[()], [(s,) for s in symbols]]
    for _ in range(1, max_len):
        by_len.append([(nxt,) + w for w in by_len[-1] for nxt in successors(w[0])])
    return by_len[: max_len + 1]


def _combine(alice_by_len, bob_by_len, level, budget):
    count = sum(
        len(alice_by_len[p]) * len(bob_by_len[q])
        for p in range(len(alice_by_len))
        for q in range(len(bob_by_len))
        if p + q <= level
    )
    if count > budget:
        raise BudgetExceeded(f"moment matrix index would have {count} words, budget is {budget}")
    index = []
    for total in range(level + 1):
        for p in range(total + 1):
            q = total - p
            if p < len(alice_by_len) and q < len(bob_by_len):
                index.extend(a + b for a in alice_by_len[p] for b in bob_by_len[q])
    return index


# --------------------------------------------------------------------------
# problem container


@dataclass
class MomentProblem:
    """A built relaxation ready for the SDP solver.

    ``keys`` lists the free moment variables (the identity is the constant
    1 and ``ZERO`` the constant 0). ``p_expr`` maps ``(view, k)`` to a
    linear expression ``{variable: coefficient}`` for ``P(view | k)``.
    """

    level: int
    index: list
    keys: list
    key_id: dict
    sdp: SemidefiniteProgram
    p_expr: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    index_mode: str = "full"
    commute: object = None

    def gamma_key(self, i: int, j: int):
        return moment_key(adjoint(self.index[i]) + self.index[j], self.commute)

    @property
    def size(self) -> int:
        return len(self.index)


def _add_completeness(sdp, index, pos, key_id, families, commute=None):
    """``sum_o Gamma[S, F_o T] = Gamma[S, T]`` when every ``F_o T`` is indexed."""
    seen = set()
    for T in index:
        for fam, outs in families.items():
            ext = []
            for o in outs:
                w = canonicalize_word(((fam[0], fam[1], o),) + T, commute)
                if w == ZERO or w not in pos:
                    break
                ext.append(w)
            else:
                for S in index:
                    coeffs: dict = {}
                    rhs = 0.0
                    for w, sign in [(T, -1.0)] + [(e, 1.0) for e in ext]:
                        key = moment_key(adjoint(S) + w, commute)
                        if key == ZERO:
                            continue
                        if key == ():
                            rhs -= sign
                        else:
                            v = key_id[key]
                            coeffs[v] = coeffs.get(v, 0.0) + sign
                    coeffs = {v: c for v, c in coeffs.items() if c != 0}
                    sig = (tuple(sorted(coeffs.items())), rhs)
                    if coeffs and sig not in seen:
                        seen.add(sig)
                        sdp.add_equality(coeffs, rhs)
                    elif abs(rhs) > 0:
                        raise ValueError("completeness relation contradicts the identity normalisation")


def _assemble(index, level, completeness, families, commute=None):
    """Moment matrix, variables and the PSD block for a given index."""
    pos = {w: i for i, w in enumerate(index)}
    key_id: dict = {}
    keys: list = []
    entries = []
    for i, S in enumerate(index):
        Sd = adjoint(S)
        for j in range(i, len(index)):
            key = moment_key(Sd + index[j], commute)
            if key == ZERO:
                continue
            if key == ():
                entries.append((i, j, None))
                continue
            v = key_id.get(key)
            if v is None:
                v = key_id[key] = len(keys)
                keys.append(key)
            entries.append((i, j, v))
    sdp = SemidefiniteProgram(len(keys))
    blk = sdp.add_block(len(index))
    for i, j, v in entries:
        sdp.add_entry(blk, j, i, v, 1.0)
    if completeness:
        _add_completeness(sdp, index, pos, key_id, families, commute)
    return sdp, keys, key_id


def _linear_in_keys(word, key_id, commute=None) -> tuple[dict, float]:
    key = moment_key(word, commute)
    if key == ZERO:
        return {}, 0.0
    if key == ():
        return {}, 1.0
    if key not in key_id:
        raise ValueError(f"moment {key!r} does not appear in the moment matrix; raise the level or use the full index")
    return {key_id[key]: 1.0}, 0.0


def _channel_symbols(channel: InteractiveChannel, secrets):
    alice = [("A", (k, h), a) for k in secrets for h in channel.own_histories(Side.ALICE) for a in channel.A]
    bob = [("B", h, b) for h in channel.own_histories(Side.BOB) for b in channel.B]
    return alice, bob


def _expand(word, outcomes) -> dict:
    """Write a path word as a combination of words whose latest symbol is not last."""
    if not word:
        return {(): 1.0}
    head, rest = word[0], word[1:]
    if head[2] != outcomes[-1]:
        return {word: 1.0}
    out = dict(_expand(rest, outcomes))
    for o in outcomes[:-1]:
        w = ((head[0], head[1], o),) + rest
        out[w] = out.get(w, 0.0) - 1.0
    return out


def build_moment_problem(
    channel: InteractiveChannel,
    secrets: Sequence,
    guess: Mapping,
    level: int,
    index: str = "full",
    completeness: bool = True,
    budget: int | None = None,
    commute: bool = True,
) -> MomentProblem:
    """Level-``level`` relaxation of ``max sum_t P(t | guess(t))``.

    Parameters
    ----------
    index : {"full", "paths", "auto"}
        ``"auto"`` picks ``"full"`` when it fits in ``budget`` and
        ``"paths"`` otherwise. ``"full"`` uses every canonical word of length at most ``level``.
        ``"paths"`` uses, per side, products along one causal path starting
        in round 1 (latest round first), and products of one Alice and one
        Bob such word of total length at most ``level``. Completeness is
        then built in by leaving out words whose latest symbol has the last
        outcome of its family. Every ``"paths"`` word is a combination of
        words of the full index, so the result is still an upper bound.
    completeness : bool
        For the full index, impose ``sum_o F_o = 1`` for every measurement
        family as linear constraints.
    commute : bool
        Identify words modulo :func:`path_commute`. Switching this off gives
        a looser relaxation.
    """
    n = channel.rounds
    if level < n:
        raise ValueError(f"level {level} is below the minimum level {n} (the number of rounds)")
    secrets = list(secrets)
    budget = DEFAULT_INDEX_BUDGET if budget is None else budget
    alice, bob = _channel_symbols(channel, secrets)
    families: dict = {}
    for s in alice + bob:
        families.setdefault(family(s), []).append(s[2])
    commute = path_commute if commute else None
    if index == "auto":
        try:
            return build_moment_problem(channel, secrets, guess, level, "full", completeness, budget, commute is not None)
        except BudgetExceeded:
            index = "paths"
    if index == "full":
        words = _combine(_side_words(alice, level), _side_words(bob, level), level, budget)
        index_words = list(dict.fromkeys(w for w in (canonicalize_word(w, commute) for w in words) if w != ZERO))
        sdp, keys, key_id = _assemble(index_words, level, completeness, families, commute)
        expand_a = expand_b = lambda w: {w: 1.0}
    elif index == "paths":
        alice_set, bob_set = set(alice), set(bob)
        last_a, last_b = channel.A[-1], channel.B[-1]

        def succ_a(s):
            (k, h), a = s[1], s[2]
            return [t for x in channel.X for a2 in channel.A if (t := ("A", (k, h + ((a, x),)), a2)) in alice_set]

        def succ_b(s):
            h, b = s[1], s[2]
            return [t for y in channel.Y for b2 in channel.B if (t := ("B", h + ((b, y),), b2)) in bob_set]

        paths_a = _path_words([s for s in alice if not s[1][1]], n, succ_a)
        paths_b = _path_words([s for s in bob if not s[1]], n, succ_b)
        paths_a = [[w for w in ws if not w or w[0][2] != last_a] for ws in paths_a]
        paths_b = [[w for w in ws if not w or w[0][2] != last_b] for ws in paths_b]
        index_words = _combine(paths_a, paths_b, level, budget)
        sdp, keys, key_id = _assemble(index_words, level, False, families, commute)
        expand_a = lambda w: _expand(w, channel.A)
        expand_b = lambda w: _expand(w, channel.B)
    else:
        raise ValueError(f"unknown index mode {index!r}")

    p_expr: dict = {}
    for t in channel.traces():
        view = project_trace(t, Side.BOB)
        w = channel.channel_weight(t)
        a_view = project_trace(t, Side.ALICE)
        B_s = tuple(("B", view[:j], t[j][1]) for j in reversed(range(n)))
        for k in secrets:
            A_s = tuple(("A", (k, a_view[:j]), t[j][0]) for j in reversed(range(n)))
            expr = p_expr.setdefault((view, k), {})
            for Si, ci in expand_a(A_s).items():
                for Tj, dj in expand_b(B_s).items():
                    coeffs, const = _linear_in_keys(adjoint(Si) + Tj, key_id, commute)
                    for v, c in coeffs.items():
                        expr[v] = expr.get(v, 0.0) + w * ci * dj * c
                    if const:
                        expr[None] = expr.get(None, 0.0) + w * ci * dj * const
    for (view, k), expr in p_expr.items():
        const = expr.get(None, 0.0)
        lin = {v: c for v, c in expr.items() if v is not None and c != 0}
        if lin:
            sdp.add_inequality(lin, 1.0 - const)
            sdp.add_inequality({v: -c for v, c in lin.items()}, const)
    objective: dict = {}
    for view in channel.bob_views():
        k = guess.get(view)
        if k is None or (view, k) not in p_expr:
            continue
        for v, c in p_expr[(view, k)].items():
            objective[v] = objective.get(v, 0.0) + c
    for v, c in objective.items():
        if v is not None:
            sdp.c[v] += c
    return MomentProblem(level, index_words, keys, key_id, sdp, p_expr, objective, index, commute)


def _objective_constant(problem: MomentProblem) -> float:
    return problem.objective.get(None, 0.0)


@dataclass
class NPABound:
    bits: float
    raw: float
    label: str
    level: int
    index_size: int
    residuals: dict = field(default_factory=dict)
    warnings: tuple = (NPA_WARNING,)


def _solve(problem: MomentProblem, tol: float, backend: str):
    res = solve_sdp(problem.sdp, tol=tol, backend=backend)
    if res.status in ("infeasible", "unbounded") or res.value is None:
        raise SolverError(f"moment relaxation solve failed: {res.status}", res.status, res.residuals)
    if res.status != "optimal":
        raise SolverError(
            f"moment relaxation did not converge within tolerance {tol:g}: residuals {res.residuals}",
            res.status,
            res.residuals,
        )
    return res.upper_bound + _objective_constant(problem), res


def npa_channel_bound_report(
    channel: InteractiveChannel,
    secrets: Sequence | None = None,
    guess_functions="exhaustive",
    level: int | None = None,
    sdp_tolerance: float = 1e-6,
    index: str = "auto",
    completeness: bool = True,
    backend: str = "auto",
    budget: int | None = None,
) -> NPABound:
    """Upper bound (bits) on the commuting-operator min-entropy capacity.

    The bound is the log of the largest relaxation optimum over the guessing
    functions. It is an upper bound only when those functions are
    exhaustive; otherwise the label reads ``"partial (lower bound on
    opt_i)"``.
    """
    secrets = list(channel.bob_views()) if secrets is None else list(secrets)
    level = channel.rounds if level is None else level
    guesses, exhaustive = guessing_functions(channel, secrets, guess_functions)
    best, best_res, size = -math.inf, None, 0
    for g in guesses:
        problem = build_moment_problem(channel, secrets, g, level, index=index, completeness=completeness, budget=budget)
        value, res = _solve(problem, sdp_tolerance, backend)
        size = problem.size
        if value > best:
            best, best_res = value, res
    label = "upper" if exhaustive else "partial (lower bound on opt_i)"
    return NPABound(math.log2(best), best, label, level, size, best_res.residuals)


def npa_channel_bound(channel, secrets=None, guess_functions="exhaustive", level=None, sdp_tolerance=1e-6, **kwargs) -> float:
    """Bits; see :func:`npa_channel_bound_report`."""
    return npa_channel_bound_report(channel, secrets, guess_functions, level, sdp_tolerance, **kwargs).bits


# --------------------------------------------------------------------------
# games


def build_game_problem(game: NonLocalGame, level: int = 1, completeness: bool = True, budget: int | None = None) -> MomentProblem:
    if level < 1:
        raise ValueError(f"level {level} is below the minimum level 1")
    alice = [("A", x, a) for x in game.questions_a for a in game.answers_a]
    bob = [("B", y, b) for y in game.questions_b for b in game.answers_b]
    budget = DEFAULT_INDEX_BUDGET if budget is None else budget
    index_words = _combine(_side_words(alice, level), _side_words(bob, level), level, budget)
    families: dict = {}
    for s in alice + bob:
        families.setdefault(family(s), []).append(s[2])
    sdp, keys, key_id = _assemble(index_words, level, completeness, families)
    objective: dict = {}
    for (x, y), p in game.mu.items():
        for a in game.answers_a:
            for b in game.answers_b:
                if game.decision(x, y, a, b):
                    coeffs, const = _linear_in_keys((("A", x, a), ("B", y, b)), key_id)
                    for v, c in coeffs.items():
                        objective[v] = objective.get(v, 0.0) + p * c
                    if const:
                        objective[None] = objective.get(None, 0.0) + p * const
    for v, c in objective.items():
        if v is not None:
            sdp.c[v] += c
    return MomentProblem(level, index_words, keys, key_id, sdp, {}, objective, "full")


def npa_game_bound(
    game: NonLocalGame, level: int = 1, sdp_tolerance: float = 1e-7, completeness: bool = True, backend: str = "auto"
) -> float:
    """Upper bound on the commuting-operator value of ``game``."""
    problem = build_game_problem(game, level, completeness)
    value, _ = _solve(problem, sdp_tolerance, backend)
    return value


def export_sdp(problem: MomentProblem, stream=None) -> str:
    """SDPA sparse text of the relaxation (see :func:`qleak.solvers.write_sdpa`)."""
    return write_sdpa(problem.sdp, stream)
