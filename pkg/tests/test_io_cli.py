import io
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channel, random_quantum_strategy
from qleak import (
    ChannelError,
    Distribution,
    VulnerabilityMeasure,
    chsh_channel_strategy,
    entangled_leakage,
    quantum_game_value,
    scheduler_channel,
)
from qleak import io as qio
from qleak.cli import run
from qleak.nonsignalling import GeneralisedStrategy, generalized_trace_distribution
from qleak.solvers import read_sdpa, solve_sdp

COS2 = math.cos(math.pi / 8) ** 2
LOG15 = math.log2(1.5)


def text(obj):
    return qio.dumps(obj)


def cli(argv, stdin=None, monkeypatch=None):
    """Run the CLI in-process; returns (exit code, stdout)."""
    if stdin is not None:
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin))
    out = io.StringIO()
    code = run(argv, stdout=out)
    return code, out.getvalue()


def quantity(output):
    report = json.loads(output)
    assert set(report) >= {"command", "inputs_digest", "quantities", "warnings"}
    (q,) = report["quantities"]
    assert q["bound"] in ("exact", "lower", "upper")
    return q


@pytest.fixture
def files(tmp_path, chsh, c_chsh):
    game, strat = chsh
    s, secrets = chsh_channel_strategy()
    paths = {
        "game": tmp_path / "chsh.json",
        "strategy": tmp_path / "chsh_strategy.json",
        "channel": tmp_path / "c_chsh.json",
        "cstrategy": tmp_path / "c_chsh_strategy.json",
        "scheduler": tmp_path / "scheduler.json",
        "scheduler2": tmp_path / "scheduler2.json",
    }
    paths["game"].write_text(text(qio.game_to_json(game)))
    paths["strategy"].write_text(text(qio.game_strategy_to_json(strat)))
    paths["channel"].write_text(text(qio.channel_to_json(c_chsh)))
    paths["cstrategy"].write_text(text(qio.quantum_strategy_to_json(s, secrets)))
    paths["scheduler"].write_text(text(qio.channel_to_json(scheduler_channel(1))))
    paths["scheduler2"].write_text(text(qio.channel_to_json(scheduler_channel(2))))
    return {k: str(v) for k, v in paths.items()}


class TestRoundTrips:
    @settings(max_examples=20)
    @given(seed=st.integers(0, 100_000), rounds=st.integers(1, 2))
    def test_channel(self, seed, rounds):
        ch = random_channel(seed, rounds)
        back = qio.channel_from_json(json.loads(text(qio.channel_to_json(ch))))
        assert back.rounds == ch.rounds and back.alphabets == ch.alphabets
        for key, d in ch.transitions.items():
            assert back.transitions[key].isclose(d, 1e-15)

    def test_compiled_symbols_survive(self, c_chsh):
        back = qio.channel_from_json(json.loads(text(qio.channel_to_json(c_chsh))))
        assert back.A == c_chsh.A and back.transitions.keys() == c_chsh.transitions.keys()

    def test_game_and_strategy(self, chsh):
        game, s = chsh
        g2 = qio.game_from_json(json.loads(text(qio.game_to_json(game))))
        s2 = qio.game_strategy_from_json(json.loads(text(qio.game_strategy_to_json(s))), g2)
        assert quantum_game_value(g2, s2) == pytest.approx(COS2, abs=1e-12)

    def test_uniform_mu_and_fractions(self):
        obj = {
            "questions_a": [0, 1], "questions_b": [0], "answers_a": [0], "answers_b": [0],
            "win": [[0, 0, 0, 0]],
        }
        assert qio.game_from_json(obj).mu.prob((1, 0)) == 0.5
        ch = {"rounds": 1, "alphabets": {"A": [0], "B": [0], "X": [0], "Y": [0, 1]},
              "transitions": [{"history": [], "a": 0, "b": 0, "dist": [[[0, 0], "1/3"], [[0, 1], "2/3"]]}]}
        assert qio.channel_from_json(ch).transition((), 0, 0).prob((0, 1)) == pytest.approx(2 / 3)

    @settings(max_examples=10)
    @given(seed=st.integers(0, 100_000))
    def test_quantum_strategy(self, seed):
        ch = random_channel(seed, 2)
        s = random_quantum_strategy(ch, seed)
        back = qio.quantum_strategy_from_json(json.loads(text(qio.quantum_strategy_to_json(s))), ch)
        V, prior = VulnerabilityMeasure.min_entropy(), Distribution.uniform([0, 1])
        assert entangled_leakage(V, prior, ch, back) == pytest.approx(entangled_leakage(V, prior, ch, s), abs=1e-12)

    def test_generalised_strategy(self):
        ch = scheduler_channel(1)
        tables = {(k, ()): Distribution([(0, 1), (1, 1)], [0.5, 0.5]) for k in (0, 1)}
        s = GeneralisedStrategy(1, {k: (0, 1) for k in "ABXY"}, (0, 1), tables)
        back = qio.generalised_strategy_from_json(json.loads(text(qio.generalised_strategy_to_json(s))))
        assert generalized_trace_distribution(ch, back, 0).isclose(generalized_trace_distribution(ch, s, 0))

    def test_malformed_json_reports_location(self):
        with pytest.raises(ChannelError, match="line 2, column"):
            qio.load_json('{"a": 1,\n  ]', "bad.json")

    def test_missing_field_named(self):
        with pytest.raises(ChannelError, match="'transitions'"):
            qio.channel_from_json({"rounds": 1, "alphabets": {k: [0] for k in "ABXY"}})

    def test_duplicate_transition(self):
        obj = qio.channel_to_json(scheduler_channel(1))
        obj["transitions"].append(obj["transitions"][0])
        with pytest.raises(ChannelError, match="duplicate"):
            qio.channel_from_json(obj)


class TestCommands:
    def test_builtin_game_value(self, monkeypatch):
        code, game = cli(["builtin", "chsh"])
        assert code == 0
        code, out = cli(["--json", "game-value", "--classical"], game, monkeypatch)
        q = quantity(out)
        assert code == 0 and q["value"] == 0.75 and q["bound"] == "exact"

    def test_quantum_game_value(self, files):
        code, out = cli(["game-value", files["game"], "--quantum", files["strategy"], "--json"])
        q = quantity(out)
        assert q["value"] == pytest.approx(COS2, abs=1e-9) and q["bound"] == "exact"
        assert json.loads(out)["warnings"]

    def test_compile_then_capacity(self, files, monkeypatch, c_chsh):
        from qleak import minentropy_capacity_classical

        code, channel = cli(["compile-game", files["game"]])
        assert code == 0
        code, out = cli(["--json", "classical-capacity", "--measure", "minentropy"], channel, monkeypatch)
        assert quantity(out)["value"] == pytest.approx(minentropy_capacity_classical(c_chsh), abs=1e-12)

    def test_shannon_capacity(self, files):
        code, out = cli(["--json", "classical-capacity", files["scheduler"], "--measure", "shannon"])
        assert code == 0 and 0 < quantity(out)["value"] <= LOG15 + 1e-9

    def test_entangled_leakage(self, files):
        code, out = cli(["--json", "leakage", files["channel"], files["cstrategy"]])
        assert quantity(out)["value"] == pytest.approx(math.log2(1 + COS2), abs=1e-9)

    def test_deterministic_leakage(self, tmp_path, files):
        strat = {
            "type": "strategy",
            "prior": [[0, 0.5], [1, 0.5]],
            "alice": [{"k": 0, "table": [[[], 0]]}, {"k": 1, "table": [[[], 1]]}],
            "bob": [[[], 1]],
        }
        path = tmp_path / "s.json"
        path.write_text(text(strat))
        code, out = cli(["--json", "leakage", files["scheduler"], str(path)])
        assert quantity(out)["value"] == pytest.approx(LOG15, abs=1e-12)

    def test_ns_capacity_final_bit(self, files):
        code, out = cli(["--json", "ns-capacity", files["channel"], "--guess", "final-bit"])
        q = quantity(out)
        assert code == 0 and q["value"] == pytest.approx(1.0, abs=1e-6) and q["bound"] == "lower"

    def test_npa_game(self, files):
        code, out = cli(["--json", "npa-bound", "--target", "game", files["game"], "--level", "1"])
        q = quantity(out)
        assert q["bound"] == "upper" and 0.8535 <= q["value"] <= 0.8540

    def test_npa_channel_carries_warning(self, files):
        from qleak.npa import NPA_WARNING

        code, out = cli(["--json", "npa-bound", files["scheduler"], "--secrets", "bits"])
        report = json.loads(out)
        assert NPA_WARNING in report["warnings"]
        assert quantity(out)["value"] == pytest.approx(LOG15, abs=1e-6)

    def test_bound_directions_are_consistent(self, files):
        values = {}
        for argv in (["classical-capacity"], ["ns-capacity"], ["npa-bound"]):
            _, out = cli(["--json", *argv, files["scheduler"]])
            q = quantity(out)
            values.setdefault(q["bound"], []).append(q["value"])
        tol = 1e-6
        lowers = values.get("lower", []) + values.get("exact", [])
        uppers = values.get("upper", []) + values.get("exact", [])
        assert max(lowers) <= min(uppers) + tol

    def test_export_sdp(self, files, tmp_path):
        target = tmp_path / "p.sdpa"
        code, out = cli(["export-sdp", files["scheduler"], "--guess", "final-bit", "-o", str(target)])
        assert code == 0
        res = solve_sdp(read_sdpa(target.read_text()))
        assert math.log2(res.value) <= LOG15 + 1e-6

    def test_export_sdp_needs_one_guess(self, files):
        assert cli(["export-sdp", files["scheduler"], "--secrets", "bits"])[0] == 2

    def test_validate(self, files):
        assert cli(["validate", files["channel"]])[0] == 0
        assert cli(["validate", files["strategy"], "--against", files["game"]])[0] == 0
        assert cli(["validate", files["cstrategy"], "--against", files["channel"]])[0] == 0

    def test_validate_flags_bad_channel(self, tmp_path):
        obj = qio.channel_to_json(scheduler_channel(1))
        obj["transitions"][0]["dist"] = [[[0, 0], 0.5]]
        path = tmp_path / "bad.json"
        path.write_text(text(obj))
        code, out = cli(["validate", str(path)])
        assert code == 2 and "unnormalized" in out


class TestExitCodes:
    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "x.json"
        path.write_text('{"type": "channel",\n oops}')
        assert cli(["classical-capacity", str(path)])[0] == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self):
        assert cli(["classical-capacity", "/nonexistent/file.json"])[0] == 2

    def test_wrong_file_type(self, files):
        assert cli(["classical-capacity", files["game"]])[0] == 2

    def test_budget(self, files, monkeypatch):
        monkeypatch.setenv("QLEAK_BUDGET", "3")
        assert cli(["classical-capacity", files["scheduler2"]])[0] == 3

    def test_level_too_low(self, files):
        assert cli(["npa-bound", files["scheduler2"], "--level", "1"])[0] == 2


@pytest.mark.parametrize("argv", [["classical-capacity"], ["ns-capacity"], ["npa-bound"]])
def test_builtin_round_trip_reproduces_output(argv, monkeypatch):
    _, first = cli(["builtin", "scheduler"])
    reparsed = text(qio.channel_to_json(qio.channel_from_json(json.loads(first))))
    _, a = cli([*argv, "-"], first, monkeypatch)
    _, b = cli([*argv, "-"], reparsed, monkeypatch)
    assert reparsed == first.strip()
    assert a == b


def test_camel_case_game_and_keyed_strategy(chsh):
    game, s = chsh
    obj = {
        "questionsA": [0, 1], "questionsB": [0, 1], "answersA": [0, 1], "answersB": [0, 1],
        "mu": [{"x": x, "y": y, "p": "1/4"} for x in (0, 1) for y in (0, 1)],
        "win": [[x, y, a, b] for x in (0, 1) for y in (0, 1) for a in (0, 1) for b in (0, 1) if a ^ b == x & y],
    }
    g = qio.game_from_json(obj)
    enc = lambda M: [[[float(v.real), float(v.imag)] for v in row] for row in M]
    strat = {
        "dimA": s.dims[0], "dimB": s.dims[1],
        "state": [[float(v.real), float(v.imag)] for v in s.state],
        "aliceMeas": {str(x): {str(a): enc(M) for a, M in fam.items()} for x, fam in s.alice.items()},
        "bobMeas": {str(y): {str(b): enc(M) for b, M in fam.items()} for y, fam in s.bob.items()},
    }
    assert quantum_game_value(g, qio.game_strategy_from_json(strat, g)) == pytest.approx(COS2, abs=1e-12)
