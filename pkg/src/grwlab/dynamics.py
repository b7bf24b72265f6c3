"""Deterministic evolution: unitary steps, von Neumann pointer coupling, decoherence.

Units use hbar = 1. Every pointer/environment register starts in its
"ready" state, basis index 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hilbert import (NORM_TOL, SPECTRAL_TOL, Observable, SpaceError, SpaceSpec,
                      StateVector, embed_matrix)

READY_INDEX = 0


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    space: SpaceSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise SpaceError(f"hamiltonian shape {m.shape} != ({d}, {d})")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > NORM_TOL:
            raise ValueError("hamiltonian not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def zero(cls, space: SpaceSpec) -> "Hamiltonian":
        return cls(space, np.zeros((space.total_dim,) * 2))

    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    def scaled(self, factor: float) -> "Hamiltonian":
        return Hamiltonian(self.space, factor * self.matrix)


def propagator(h: Hamiltonian, dt: float) -> np.ndarray:
    """``exp(-i h dt)`` from the exact eigendecomposition of ``h``."""
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    w, v = np.linalg.eigh(h.matrix)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def schrodinger_step(state: StateVector, h: Hamiltonian, dt: float) -> StateVector:
    if state.space != h.space:
        raise SpaceError("state and hamiltonian live on different spaces")
    if h.is_zero():
        return state
    return StateVector.normalized(state.space, propagator(h, dt) @ state.amplitudes)


def shift_generator(dim: int, shift: int) -> np.ndarray:
    """Hermitian ``g`` with ``exp(-i g)`` the cyclic shift ``|x> -> |x + shift>``.

    Built in the Fourier basis where the shift is diagonal, so the unit-time
    propagator is exact and ``exp(-i s g)`` interpolates continuously in s.
    """
    k = np.arange(dim)
    f = np.exp(2j * np.pi * np.outer(np.arange(dim), k) / dim) / np.sqrt(dim)
    phases = 2 * np.pi * k * (shift % dim) / dim
    return (f * phases) @ f.conj().T


def measurement_coupling(system_obs: Observable, pointer_label: str, strength: float,
                         space: SpaceSpec,
                         pointer_sites: Sequence[int] | None = None) -> Hamiltonian:
    """von Neumann coupling ``H = strength * sum_k P_k (x) G_k``.

    ``P_k`` are the spectral projectors of ``system_obs`` (ascending
    eigenvalues) and ``G_k`` generates the pointer shift from the ready site
    to ``pointer_sites[k]`` (default ``k``). Evolving for unit time at unit
    strength maps ``sum_k mu_k |s_k>|ready>`` to ``sum_k mu_k |s_k>|p_k>``.
    """
    eig = system_obs.eigensystem
    n_vals = len(eig.eigenvalues)
    dp = space.dim(pointer_label)
    if pointer_label in system_obs.space.labels:
        raise SpaceError("pointer must be distinct from the measured system")
    if dp < n_vals:
        raise ValueError(f"pointer dim {dp} < {n_vals} distinct eigenvalues")
    sites = list(range(n_vals)) if pointer_sites is None else [int(s) for s in pointer_sites]
    if len(sites) != n_vals or len(set(sites)) != n_vals or not all(0 <= s < dp for s in sites):
        raise ValueError(f"need {n_vals} distinct pointer sites in [0, {dp})")
    op_space = system_obs.space + space.sub([pointer_label])
    local = sum(np.kron(p, shift_generator(dp, s - READY_INDEX))
                for p, s in zip(eig.projectors, sites))
    return Hamiltonian(space, strength * embed_matrix(local, op_space, space))


# --------------------------------------------------------------------------- #
#                                 Decoherence                                 #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class DecoherenceSpec:
    """Controlled record of ``pointer_obs`` eigenspaces in environment ``env_label``.

    ``epsilon`` is the pairwise overlap of environment records; 0 is
    ``perfect`` (orthogonal records), 1 leaves no which-path information.
    """

    pointer_obs: Observable
    env_label: str
    coupling: str = "perfect"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.coupling not in ("perfect", "partial"):
            raise ValueError(f"coupling must be 'perfect' or 'partial', got {self.coupling!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.coupling == "perfect" and self.epsilon != 0.0:
            raise ValueError("perfect coupling has epsilon = 0")

    def overlap(self) -> float:
        return 0.0 if self.coupling == "perfect" else self.epsilon


def environment_records(n: int, epsilon: float) -> np.ndarray:
    """Columns are ``n`` unit vectors in C^n with pairwise overlap ``epsilon``.

    The symmetric square root of the Gram matrix ``(1-eps) I + eps J``.
    """
    a = np.sqrt(1.0 - epsilon)
    c = (np.sqrt(1.0 - epsilon + epsilon * n) - a) / n
    return a * np.eye(n) + c * np.ones((n, n))


def decohere(state: StateVector, spec: DecoherenceSpec) -> StateVector:
    space = state.space
    env = spec.env_label
    if env in spec.pointer_obs.space.labels:
        raise SpaceError("environment cannot be part of the pointer observable")
    eig = spec.pointer_obs.eigensystem
    n_vals = len(eig.eigenvalues)
    de = space.dim(env)
    if de < n_vals:
        raise ValueError(f"environment dim {de} < {n_vals} pointer eigenvalues")

    ax = space.index(env)
    t = np.moveaxis(state.tensor_view(), ax, -1)
    ready_part = t[..., READY_INDEX]
    overlap = float(np.sum(np.abs(ready_part) ** 2))
    if overlap < 1.0 - SPECTRAL_TOL:
        raise ValueError(f"environment not in ready state (overlap {overlap:.3g})")

    rest = space.without([env])
    psi_rest = ready_part.reshape(-1)
    records = environment_records(n_vals, spec.overlap())
    out = np.zeros((rest.total_dim, de), dtype=complex)
    for k, p in enumerate(eig.projectors):
        branch = embed_matrix(p, spec.pointer_obs.space, rest) @ psi_rest
        out[:, :n_vals] += np.outer(branch, records[:, k])
    out = np.moveaxis(out.reshape(rest.dims + (de,)), -1, ax)
    return StateVector.normalized(space, out.reshape(-1))
