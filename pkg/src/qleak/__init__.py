"""Leakage capacity of finite interactive channels under classical,
entangled, commuting-operator and non-signalling adversaries."""

from qleak.distribution import Distribution, parse_probability
from qleak.errors import (
    BudgetExceeded,
    ChannelError,
    InvalidStrategy,
    QleakError,
    SolverError,
)
from qleak.channel import (
    Alphabet,
    DeterministicStrategy,
    InteractiveChannel,
    Side,
    project_trace,
    scheduler_channel,
    trace_distribution,
    validate_channel,
)
from qleak.leakage import (
    SecretModel,
    VulnerabilityMeasure,
    leakage,
    minentropy_capacity_classical,
    posterior_distribution,
    shannon_capacity_classical,
    vulnerability,
)
from qleak.games import (
    GameQuantumStrategy,
    NonLocalGame,
    builtin_game,
    classical_game_value,
    compile_game_to_channel,
    quantum_game_value,
)
from qleak.quantum import (
    QuantumJointStrategy,
    chsh_channel_strategy,
    entangled_leakage,
    entangled_trace_distribution,
    validate_quantum_strategy,
)
from qleak.nonsignalling import (
    GeneralisedStrategy,
    check_non_signalling,
    generalized_trace_distribution,
    ns_minentropy_capacity,
    solve_ns_capacity,
)
from qleak.npa import (
    build_game_problem,
    build_moment_problem,
    canonicalize_word,
    export_sdp,
    npa_channel_bound,
    npa_channel_bound_report,
    npa_game_bound,
)
from qleak.solvers import LinearProgram, SemidefiniteProgram, solve_lp, solve_sdp

__version__ = "0.1.0"
