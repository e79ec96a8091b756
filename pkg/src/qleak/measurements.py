"""Projective measurements, states, and their validation."""

from __future__ import annotations

import numpy as np

from qleak.channel import Violation

PROJECTOR_TOL = 1e-9


def ket(theta: float) -> np.ndarray:
    """Real qubit vector ``cos(theta)|0> + sin(theta)|1>``."""
    return np.array([np.cos(theta), np.sin(theta)], dtype=complex)


def rank_one(theta: float) -> np.ndarray:
    v = ket(theta)
    return np.outer(v, v.conj())


def max_entangled(d: int = 2) -> np.ndarray:
    psi = np.zeros(d * d, dtype=complex)
    psi[:: d + 1] = 1.0 / np.sqrt(d)
    return psi


def deterministic_family(messages, chosen, dim: int = 1) -> dict:
    """Family with the identity on ``chosen`` and zero elsewhere."""
    return {m: (np.eye(dim, dtype=complex) if m == chosen else np.zeros((dim, dim), dtype=complex)) for m in messages}


def check_state(state: np.ndarray, dim: int, tol: float = PROJECTOR_TOL) -> list[Violation]:
    state = np.asarray(state)
    out = []
    if state.shape != (dim,):
        out.append(Violation("state-shape", f"state has shape {state.shape}, expected ({dim},)"))
    elif abs(np.linalg.norm(state) - 1.0) > tol:
        out.append(Violation("state-norm", f"state norm is {np.linalg.norm(state):.12g}"))
    return out


def check_family(family: dict, messages, dim: int, label: str, tol: float = PROJECTOR_TOL) -> list[Violation]:
    """Check that ``family`` is a projective measurement indexed by ``messages``.

    Missing messages count as zero operators; unknown keys are reported.
    """
    out = []
    extra = [m for m in family if m not in messages]
    if extra:
        out.append(Violation("unknown-outcome", f"{label}: outcomes {extra!r} not in alphabet", (label,)))
    ops = {}
    for m in messages:
        E = np.asarray(family.get(m, np.zeros((dim, dim))), dtype=complex)
        if E.shape != (dim, dim):
            out.append(Violation("shape", f"{label}[{m!r}] has shape {E.shape}, expected {(dim, dim)}", (label, m)))
            return out
        ops[m] = E
    for m, E in ops.items():
        if np.abs(E - E.conj().T).max(initial=0.0) > tol:
            out.append(Violation("hermiticity", f"{label}[{m!r}] is not Hermitian", (label, m)))
        if np.abs(E @ E - E).max(initial=0.0) > tol:
            out.append(Violation("idempotence", f"{label}[{m!r}] is not idempotent", (label, m)))
    keys = list(ops)
    for i, m in enumerate(keys):
        for m2 in keys[i + 1 :]:
            if np.abs(ops[m] @ ops[m2]).max(initial=0.0) > tol:
                out.append(Violation("orthogonality", f"{label}[{m!r}] and [{m2!r}] are not orthogonal", (label, m, m2)))
    total = sum(ops.values(), np.zeros((dim, dim), dtype=complex))
    if np.abs(total - np.eye(dim)).max(initial=0.0) > tol:
        out.append(Violation("completeness", f"{label} does not sum to the identity", (label,)))
    return out
