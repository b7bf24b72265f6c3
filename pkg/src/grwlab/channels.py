"""Kraus channels and their Stinespring isometries.

A dilation is stored as the isometry ``V: C^d -> C^d (x) C^e`` with the
system factor first (``V[(s, i), s'] = K_i[s, s']``) and the environment
ready in basis state 0. No unitary completion is ever formed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hilbert import (SPECTRAL_TOL, DensityOperator, SpaceError, SpaceSpec, StateVector,
                      embed_matrix, make_space, partial_trace, trace_distance)


@dataclass(frozen=True, eq=False)
class Channel:
    space: SpaceSpec
    kraus: tuple

    def __post_init__(self):
        ks = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise ValueError("a channel needs at least one Kraus operator")
        d = self.space.total_dim
        for k in ks:
            if k.shape != (d, d):
                raise SpaceError(f"Kraus shape {k.shape} != ({d}, {d})")
            k.setflags(write=False)
        object.__setattr__(self, "kraus", ks)
        err = completeness_error(ks)
        if err > SPECTRAL_TOL:
            raise ValueError(f"Kraus set not trace preserving (error {err:.3g})")

    @classmethod
    def identity(cls, space: SpaceSpec) -> "Channel":
        return cls(space, (np.eye(space.total_dim),))

    @classmethod
    def unitary(cls, space: SpaceSpec, u) -> "Channel":
        return cls(space, (np.asarray(u, dtype=complex),))

    @classmethod
    def dephasing(cls, space: SpaceSpec) -> "Channel":
        """Complete dephasing in the computational basis."""
        d = space.total_dim
        return cls(space, tuple(np.diag(np.eye(d)[i]) for i in range(d)))

    @classmethod
    def projective(cls, projectors: Sequence[np.ndarray], space: SpaceSpec) -> "Channel":
        """Non-selective Lüders measurement."""
        return cls(space, tuple(projectors))

    @property
    def n_kraus(self) -> int:
        return len(self.kraus)

    def embedded(self, space: SpaceSpec) -> "Channel":
        """Same channel acting on a subset of ``space``'s labels."""
        return Channel(space, tuple(embed_matrix(k, self.space, space) for k in self.kraus))

    def to_dict(self) -> dict:
        return {"kind": "channel", "space": self.space.to_list(),
                "kraus": [{"re": k.real.tolist(), "im": k.imag.tolist()} for k in self.kraus]}

    @classmethod
    def from_dict(cls, d: dict) -> "Channel":
        space = make_space([tuple(s) for s in d["space"]])
        ks = []
        for k in d["kraus"]:
            re = np.array(k["re"], dtype=float)
            m = np.empty(re.shape, dtype=complex)
            m.real = re
            m.imag = np.array(k["im"], dtype=float)
            ks.append(m)
        return cls(space, tuple(ks))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Channel":
        return cls.from_dict(json.loads(text))


def completeness_error(kraus) -> float:
    d = kraus[0].shape[1]
    s = sum(k.conj().T @ k for k in kraus)
    return float(np.max(np.abs(s - np.eye(d))))


def apply_channel(ch: Channel, rho: DensityOperator) -> DensityOperator:
    if ch.space != rho.space:
        raise SpaceError("channel and state spaces differ")
    out = sum(k @ rho.matrix @ k.conj().T for k in ch.kraus)
    return DensityOperator.from_matrix(rho.space, out)


def compose(first: Channel, second: Channel) -> Channel:
    """``second`` after ``first``, reduced to at most d^2 Kraus operators."""
    if first.space != second.space:
        raise SpaceError("cannot compose channels on different spaces")
    ks = [b @ a for b in second.kraus for a in first.kraus]
    return minimal_kraus(Channel(first.space, tuple(ks)))


def iterate(ch: Channel, n: int) -> Channel:
    out = Channel.identity(ch.space)
    for _ in range(n):
        out = compose(out, ch)
    return out


def choi(ch: Channel) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) E(|i><j|)``, input factor first."""
    d = ch.space.total_dim
    vecs = np.stack([k.reshape(-1) for k in ch.kraus])  # rows: vec(K) row-major
    # vec(K)[s*d + s'] = K[s, s']; Choi index (s', s)
    vecs = vecs.reshape(-1, d, d).transpose(0, 2, 1).reshape(len(ch.kraus), -1)
    return vecs.T @ vecs.conj()


def minimal_kraus(ch: Channel, tol: float = 1e-13) -> Channel:
    d = ch.space.total_dim
    w, v = np.linalg.eigh(choi(ch))
    ks = []
    for lam, vec in zip(w[::-1], v.T[::-1]):
        if lam <= tol:
            break
        ks.append(np.sqrt(lam) * vec.reshape(d, d).T)
    return Channel(ch.space, tuple(ks))


# --------------------------------------------------------------------------- #
#                                   Dilation                                  #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Dilation:
    isometry: np.ndarray
    env_dim: int
    env_ready_index: int = 0
    space: SpaceSpec | None = None
    env_label: str = "E"

    def __post_init__(self):
        v = np.array(self.isometry, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "isometry", v)
        if v.shape[0] != v.shape[1] * self.env_dim:
            raise ValueError("isometry shape inconsistent with env_dim")

    def isometry_error(self) -> float:
        v = self.isometry
        return float(np.max(np.abs(v.conj().T @ v - np.eye(v.shape[1]))))

    def joint_space(self) -> SpaceSpec:
        return self.space + make_space([(self.env_label, self.env_dim)])

    def reduced_matrix(self, rho: np.ndarray) -> np.ndarray:
        """``Tr_E[V rho V^dagger]`` with no renormalization."""
        d = self.isometry.shape[1]
        big = self.isometry @ rho @ self.isometry.conj().T
        return np.einsum("aebe->ab", big.reshape(d, self.env_dim, d, self.env_dim))

    def reduced(self, rho: DensityOperator) -> DensityOperator:
        return DensityOperator.from_matrix(rho.space, self.reduced_matrix(rho.matrix))


def stinespring_dilate(ch: Channel, env_label: str = "E") -> Dilation:
    if completeness_error(ch.kraus) > SPECTRAL_TOL:
        raise ValueError("input Kraus set violates completeness")
    d = ch.space.total_dim
    e = ch.n_kraus
    v = np.stack(ch.kraus, axis=1)  # (d, e, d): [s, i, s'] = K_i[s, s']
    dil = Dilation(v.reshape(d * e, d), e, 0, ch.space, env_label)
    if dil.isometry_error() > SPECTRAL_TOL:
        raise ValueError("constructed V is not an isometry")
    return dil


def verify_dilation(ch: Channel, dil: Dilation,
                    test_states: Sequence[DensityOperator]) -> float:
    """Max trace distance between ``Tr_E[V rho V^+]`` and the Kraus output."""
    worst = 0.0
    for rho in test_states:
        out = sum(k @ rho.matrix @ k.conj().T for k in ch.kraus)
        worst = max(worst, trace_distance(dil.reduced_matrix(rho.matrix), out))
    return worst


def iterate_dilation(dil: Dilation, state: StateVector, n: int) -> StateVector:
    """Apply ``V`` ``n`` times, each with a fresh environment factor ``E1..En``."""
    d = dil.isometry.shape[1]
    e = dil.env_dim
    psi = state.amplitudes.reshape(d, 1)
    for _ in range(n):
        # psi: (d, rest) -> V acting on system gives (d, e, rest)
        psi = (dil.isometry @ psi).reshape(d, e, -1)
        psi = psi.transpose(0, 2, 1).reshape(d, -1)  # new env is the last factor
    envs = [(f"{dil.env_label}{k + 1}", e) for k in range(n)]
    space = state.space + make_space(envs)
    return StateVector.normalized(space, psi.reshape(-1))


def iterated_reduced(dil: Dilation, rho: DensityOperator, n: int) -> DensityOperator:
    """Reduced system state after ``n`` fresh-ancilla dilation steps.

    Mixed inputs are handled through their spectral decomposition.
    """
    w, v = np.linalg.eigh(rho.matrix)
    acc = np.zeros_like(rho.matrix)
    for lam, vec in zip(w, v.T):
        if lam <= 1e-15:
            continue
        joint = iterate_dilation(dil, StateVector.normalized(rho.space, vec), n)
        acc += lam * partial_trace(joint, rho.space.labels).matrix
    return DensityOperator.from_matrix(rho.space, acc)

