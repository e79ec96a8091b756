"""Command-line front end.

Every subcommand reads JSON inputs (``-`` or no path means stdin), prints a
report and exits with 0 on success, 2 on bad input and 3 when an
enumeration budget or a solver fails. ``--json`` switches the report to a
machine-readable object::

    {"command": ..., "inputs_digest": sha256, "quantities": [
        {"name": ..., "value": ..., "bound": "exact" | "lower" | "upper",
         "tolerance": ...}], "warnings": [...]}
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field

from qleak import io as qio
from qleak.channel import validate_channel
from qleak.errors import BudgetExceeded, InvalidStrategy, QleakError, SolverError
from qleak.games import builtin_game, classical_game_value, compile_game_to_channel, quantum_game_value
from qleak.leakage import (
    SecretModel,
    VulnerabilityMeasure,
    leakage,
    minentropy_capacity_classical,
    shannon_capacity_classical,
)
from qleak.nonsignalling import check_non_signalling, solve_ns_capacity
from qleak.npa import NPA_WARNING, build_game_problem, build_moment_problem, export_sdp, npa_channel_bound_report, npa_game_bound
from qleak.quantum import chsh_channel_strategy, entangled_leakage, validate_quantum_strategy

EXIT_OK, EXIT_INPUT, EXIT_FAILURE = 0, 2, 3


@dataclass
class AnalysisReport:
    command: str
    inputs_digest: str = ""
    quantities: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    payload: object = None

    def add(self, name, value, bound, tolerance=0.0):
        if bound not in ("exact", "lower", "upper"):
            raise ValueError(f"bad bound direction {bound!r}")
        self.quantities.append({"name": name, "value": value, "bound": bound, "tolerance": tolerance})

    def as_dict(self) -> dict:
        out = {
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "quantities": self.quantities,
            "warnings": self.warnings,
        }
        if self.payload is not None:
            out["output"] = self.payload
        return out

    def render(self) -> str:
        if self.payload is not None and not self.quantities:
            return qio.dumps(self.payload)
        lines = [f"{self.command}"]
        width = max((len(q["name"]) for q in self.quantities), default=4)
        for q in self.quantities:
            v = q["value"]
            shown = f"{v:.10g}" if isinstance(v, float) else str(v)
            tol = f"  (tol {q['tolerance']:g})" if q["tolerance"] else ""
            lines.append(f"  {q['name']:<{width}}  {shown:>16}  {q['bound']}{tol}")
        lines.extend(f"  warning: {w}" for w in self.warnings)
        return "\n".join(lines)


class InputError(QleakError):
    pass


def _read(path, digest):
    if path in (None, "-"):
        text = sys.stdin.read()
        source = "<stdin>"
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"{path}: {exc.strerror}") from None
        source = path
    digest.update(text.encode())
    return qio.load_json(text, source), source


def _expect(obj, kind, source):
    found = obj.get("type") if isinstance(obj, dict) else None
    if found != kind:
        raise InputError(f"{source}: expected a {kind} file, found type {found!r}")
    return obj


def _secrets(channel, choice):
    if choice in (None, "views"):
        return None
    if choice == "bits":
        return [0, 1]
    return [int(s) if s.lstrip("-").isdigit() else s for s in choice.split(",")]


def _guess(choice, digest):
    if choice in (None, "exhaustive", "final-bit"):
        return choice or "exhaustive"
    obj, _ = _read(choice, digest)
    return qio.guesses_from_json(obj)


# --------------------------------------------------------------------------
# subcommands


def cmd_builtin(args, report, digest):
    if args.name == "chsh":
        game, strategy = builtin_game("chsh")
        if args.strategy:
            report.payload = qio.game_strategy_to_json(strategy)
        elif args.channel_strategy:
            s, secrets = chsh_channel_strategy()
            report.payload = qio.quantum_strategy_to_json(s, secrets)
        else:
            report.payload = qio.game_to_json(game)
    else:
        from qleak.channel import scheduler_channel

        report.payload = qio.channel_to_json(scheduler_channel(args.rounds))


def cmd_validate(args, report, digest):
    obj, source = _read(args.file, digest)
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind == "channel":
        problems = validate_channel(qio.channel_from_json(obj))
    elif kind == "game":
        qio.game_from_json(obj)
        problems = []
    elif kind == "game-strategy":
        game_obj, _ = _read(args.against, digest)
        game = qio.game_from_json(_expect(game_obj, "game", args.against))
        problems = qio.game_strategy_from_json(obj, game).violations(game)
    elif kind == "quantum-strategy":
        ch_obj, _ = _read(args.against, digest)
        channel = qio.channel_from_json(_expect(ch_obj, "channel", args.against))
        s = qio.quantum_strategy_from_json(obj, channel)
        problems = validate_quantum_strategy(s, channel, [qio.freeze(k) for k in obj.get("secrets", [0, 1])])
    elif kind == "generalised-strategy":
        problems = check_non_signalling(qio.generalised_strategy_from_json(obj))
    else:
        raise InputError(f"{source}: unknown file type {kind!r}")
    report.add("violations", len(problems), "exact")
    report.warnings.extend(str(p) for p in problems)
    return EXIT_OK if not problems else EXIT_INPUT


def cmd_classical_capacity(args, report, digest):
    obj, source = _read(args.file, digest)
    channel = qio.channel_from_json(_expect(obj, "channel", source))
    _check_channel(channel, source)
    if args.measure == "minentropy":
        report.add("min-entropy capacity (bits)", minentropy_capacity_classical(channel, args.budget, args.method), "exact", 1e-12)
    else:
        cap = shannon_capacity_classical(channel, args.budget, tolerance=args.tol)
        report.add("shannon capacity (bits)", cap, "exact", args.tol)


def _check_channel(channel, source):
    problems = validate_channel(channel)
    if problems:
        raise InputError(f"{source}: invalid channel: {problems[0]}")


def cmd_leakage(args, report, digest):
    ch_obj, source = _read(args.channel, digest)
    channel = qio.channel_from_json(_expect(ch_obj, "channel", source))
    _check_channel(channel, source)
    st_obj, st_source = _read(args.strategy, digest)
    V = VulnerabilityMeasure.parse(args.measure)
    kind = st_obj.get("type") if isinstance(st_obj, dict) else None
    if kind == "quantum-strategy":
        from qleak.distribution import Distribution

        s = qio.quantum_strategy_from_json(st_obj, channel)
        secrets = [qio.freeze(k) for k in st_obj.get("secrets", [0, 1])]
        report.add(f"{args.measure} leakage (bits)", entangled_leakage(V, Distribution.uniform(secrets), channel, s), "exact", 1e-9)
        report.warnings.append("a fixed entangled strategy gives a lower bound on the entangled capacity")
    elif kind == "strategy":
        prior, alice, bob = qio.deterministic_strategies_from_json(st_obj, channel)
        secret = SecretModel(prior, alice)
        report.add(f"{args.measure} leakage (bits)", leakage(V, secret, channel, bob), "exact", 1e-12)
    else:
        raise InputError(f"{st_source}: expected a strategy or quantum-strategy file, found type {kind!r}")


def cmd_game_value(args, report, digest):
    obj, source = _read(args.file, digest)
    game = qio.game_from_json(_expect(obj, "game", source))
    if args.quantum:
        st_obj, st_source = _read(args.quantum, digest)
        s = qio.game_strategy_from_json(_expect(st_obj, "game-strategy", st_source), game)
        report.add("quantum strategy value", quantum_game_value(game, s), "exact", 1e-9)
        report.warnings.append("a fixed quantum strategy gives a lower bound on the entangled value")
    else:
        report.add("classical value", classical_game_value(game, args.budget), "exact", 1e-12)


def cmd_compile_game(args, report, digest):
    obj, source = _read(args.file, digest)
    game = qio.game_from_json(_expect(obj, "game", source))
    report.payload = qio.channel_to_json(compile_game_to_channel(game))


def cmd_ns_capacity(args, report, digest):
    obj, source = _read(args.file, digest)
    channel = qio.channel_from_json(_expect(obj, "channel", source))
    _check_channel(channel, source)
    guess = _guess(args.guess, digest)
    secrets = _secrets(channel, args.secrets or ("bits" if args.guess == "final-bit" else None))
    res = solve_ns_capacity(channel, secrets, guess, args.budget)
    report.add("non-signalling min-entropy capacity (bits)", res.bits, res.bound, 1e-7)
    if not res.exhaustive:
        report.warnings.append("explicit guessing functions: value is a lower bound on the exhaustive optimum")


def cmd_npa_bound(args, report, digest):
    obj, source = _read(args.file, digest)
    if args.target == "game":
        game = qio.game_from_json(_expect(obj, "game", source))
        value = npa_game_bound(game, args.level or 1, args.tol)
        report.add(f"moment relaxation level {args.level or 1}", value, "upper", args.tol)
        return
    channel = qio.channel_from_json(_expect(obj, "channel", source))
    _check_channel(channel, source)
    guess = _guess(args.guess, digest)
    secrets = _secrets(channel, args.secrets or ("bits" if args.guess == "final-bit" else None))
    res = npa_channel_bound_report(
        channel, secrets, guess, args.level, args.tol, index=args.index, budget=args.budget
    )
    report.add(f"moment relaxation level {res.level} (bits)", res.bits, "upper" if res.label == "upper" else "lower", args.tol)
    if res.label != "upper":
        report.warnings.append(f"bound is {res.label}: guessing functions were not exhaustive")
    report.warnings.append(NPA_WARNING)


def cmd_export_sdp(args, report, digest):
    obj, source = _read(args.file, digest)
    if args.target == "game":
        problem = build_game_problem(qio.game_from_json(_expect(obj, "game", source)), args.level or 1)
    else:
        from qleak.nonsignalling import guessing_functions

        channel = qio.channel_from_json(_expect(obj, "channel", source))
        secrets = _secrets(channel, args.secrets or ("bits" if args.guess == "final-bit" else None))
        secrets = list(channel.bob_views()) if secrets is None else secrets
        guesses, _ = guessing_functions(channel, secrets, _guess(args.guess, digest))
        if len(guesses) != 1:
            raise InputError("export-sdp needs exactly one guessing function (use --guess final-bit or a file)")
        problem = build_moment_problem(channel, secrets, guesses[0], args.level or channel.rounds, index=args.index, budget=args.budget)
    text = export_sdp(problem)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        report.add("moment matrix size", problem.size, "exact")
        report.add("moment variables", len(problem.keys), "exact")
    else:
        sys.stdout.write(text)
        return "raw"


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qleak", description="Leakage of interactive channels under classical, quantum and non-signalling strategies.")
    p.add_argument("--json", action="store_true", help="emit a JSON report")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="emit a JSON report")
        return sp

    sp = add("builtin", cmd_builtin, "print a builtin game, strategy, or channel")
    sp.add_argument("name", choices=["chsh", "scheduler"])
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--strategy", action="store_true", help="print the builtin game strategy instead")
    sp.add_argument("--channel-strategy", action="store_true", help="print the entangled strategy for the compiled channel")

    sp = add("validate", cmd_validate, "check a channel, game or strategy file")
    sp.add_argument("file", nargs="?")
    sp.add_argument("--against", help="game or channel file a strategy refers to")

    sp = add("classical-capacity", cmd_classical_capacity, "classical capacity of a channel")
    sp.add_argument("file", nargs="?")
    sp.add_argument("--measure", choices=["minentropy", "shannon"], default="minentropy")
    sp.add_argument("--method", choices=["dp", "enumerate"], default="dp")
    sp.add_argument("--budget", type=int)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = add("leakage", cmd_leakage, "leakage of explicit strategies")
    sp.add_argument("channel")
    sp.add_argument("strategy")
    sp.add_argument("--measure", choices=["minentropy", "shannon"], default="minentropy")

    sp = add("game-value", cmd_game_value, "classical value or value of a quantum strategy")
    sp.add_argument("file", nargs="?")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--classical", action="store_true", default=True)
    g.add_argument("--quantum", metavar="STRATEGY")
    sp.add_argument("--budget", type=int)

    sp = add("compile-game", cmd_compile_game, "compile a game into a two-round channel")
    sp.add_argument("file", nargs="?")

    for name, fn, help_ in (
        ("ns-capacity", cmd_ns_capacity, "non-signalling min-entropy capacity"),
        ("npa-bound", cmd_npa_bound, "moment relaxation upper bound"),
        ("export-sdp", cmd_export_sdp, "write the moment relaxation in SDPA sparse format"),
    ):
        sp = add(name, fn, help_)
        sp.add_argument("file", nargs="?")
        sp.add_argument("--guess", default="exhaustive", help="exhaustive, final-bit, or a JSON file of guessing functions")
        sp.add_argument("--secrets", help="views (default), bits, or a comma-separated list")
        sp.add_argument("--budget", type=int)
        if name != "ns-capacity":
            sp.add_argument("--level", type=int)
            sp.add_argument("--target", choices=["channel", "game"], default="channel")
            sp.add_argument("--index", choices=["auto", "full", "paths"], default="auto")
            sp.add_argument("--tol", type=float, default=1e-6)
        if name == "export-sdp":
            sp.add_argument("-o", "--output")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    report = AnalysisReport(args.command)
    digest = hashlib.sha256()
    try:
        code = args.func(args, report, digest)
    except (InputError, InvalidStrategy, ValueError, KeyError) as exc:
        print(f"qleak {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BudgetExceeded, SolverError) as exc:
        print(f"qleak {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if code == "raw":
        return EXIT_OK
    report.inputs_digest = digest.hexdigest()
    if args.json:
        print(json.dumps(report.as_dict(), indent=1, default=str), file=stdout)
    else:
        print(report.render(), file=stdout)
    return code if isinstance(code, int) else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
