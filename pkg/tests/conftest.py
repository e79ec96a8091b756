import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qleak import Distribution, InteractiveChannel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_channel(seed, rounds=1, sizes=(2, 2, 2, 2), zero_capacity=False, sparsity=0.3):
    """Random channel; with ``zero_capacity`` the outputs ignore every message."""
    rng = np.random.default_rng(seed)
    nA, nB, nX, nY = sizes
    alph = {"A": tuple(range(nA)), "B": tuple(range(nB)), "X": tuple(range(nX)), "Y": tuple(range(nY))}
    outcomes = [(x, y) for x in alph["X"] for y in alph["Y"]]
    cache = {}

    def rule(hist, a, b):
        key = tuple((s[2], s[3]) for s in hist) if zero_capacity else (hist, a, b)
        if key not in cache:
            w = rng.random(len(outcomes)) * (rng.random(len(outcomes)) > sparsity)
            if w.sum() == 0:
                w[rng.integers(len(outcomes))] = 1.0
            cache[key] = Distribution(outcomes, w / w.sum())
        return cache[key]

    return InteractiveChannel.from_rule(rounds, alph, rule, name=f"random({seed})")


@pytest.fixture(scope="session")
def chsh():
    from qleak import builtin_game

    return builtin_game("chsh")


@pytest.fixture(scope="session")
def c_chsh(chsh):
    from qleak import compile_game_to_channel

    return compile_game_to_channel(chsh[0])


def random_quantum_strategy(ch, seed, secrets=(0, 1), dims=(2, 2)):
    """Random projective measurements on a random pure state."""
    import oracles
    from qleak import QuantumJointStrategy, Side

    rng = np.random.default_rng(seed)
    alice = {(k, h): oracles.random_projective(rng, ch.A, dims[0]) for k in secrets for h in ch.own_histories(Side.ALICE)}
    bob = {h: oracles.random_projective(rng, ch.B, dims[1]) for h in ch.own_histories(Side.BOB)}
    return QuantumJointStrategy(dims, oracles.random_state(rng, dims[0] * dims[1]), alice, bob)
