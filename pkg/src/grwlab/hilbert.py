"""Finite-dimensional tensor-product Hilbert spaces.

Basis convention: subsystem-major. For a space with subsystems
``[(l_0, d_0), (l_1, d_1), ...]`` the flat index of the product basis
state ``|i_0, i_1, ...>`` is ``((i_0 * d_1) + i_1) * d_2 + ...``, i.e. the
first label varies slowest (the same order as ``numpy.kron`` and C-order
reshapes). Serialized states use this order.
"""

from __future__ import annotations

import functools
import math
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-10
SPECTRAL_TOL = 1e-9
PROB_FLOOR = 1e-14


class SpaceError(ValueError):
    """Raised for malformed or incompatible spaces."""


# --------------------------------------------------------------------------- #
#                                   Spaces                                    #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SpaceSpec:
    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(lab), int(d)) for lab, d in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        labels = [lab for lab, _ in subs]
        if len(set(labels)) != len(labels):
            raise SpaceError(f"duplicate subsystem label in {labels}")
        for lab, d in subs:
            if d < 1:
                raise SpaceError(f"subsystem {lab!r} has dimension {d} < 1")
        # derived views, computed once (hot in trajectory loops)
        object.__setattr__(self, "_labels", tuple(labels))
        object.__setattr__(self, "_dims", tuple(d for _, d in subs))
        object.__setattr__(self, "_pos", {lab: i for i, lab in enumerate(labels)})
        object.__setattr__(self, "_total", int(np.prod(self._dims, dtype=np.int64)))

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def total_dim(self) -> int:
        return self._total

    def dim(self, label: str) -> int:
        return self._dims[self.index(label)]

    def index(self, label: str) -> int:
        try:
            return self._pos[label]
        except KeyError:
            raise SpaceError(f"unknown label {label!r}; have {self.labels}") from None

    def sub(self, labels: Iterable[str]) -> "SpaceSpec":
        """Subspace on ``labels``, kept in this space's order."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        return SpaceSpec(tuple(s for s in self.subsystems if s[0] in wanted))

    def without(self, labels: Iterable[str]) -> "SpaceSpec":
        drop = set(labels)
        for lab in drop:
            self.index(lab)
        return SpaceSpec(tuple(s for s in self.subsystems if s[0] not in drop))

    def __add__(self, other: "SpaceSpec") -> "SpaceSpec":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise SpaceError(f"label collision: {sorted(clash)}")
        return SpaceSpec(self.subsystems + other.subsystems)

    def to_list(self) -> list:
        return [[lab, d] for lab, d in self.subsystems]


def make_space(subsystems: Sequence[tuple[str, int]]) -> SpaceSpec:
    """Build a :class:`SpaceSpec` from ``(label, dim)`` pairs."""
    return SpaceSpec(tuple(tuple(s) for s in subsystems))


def basis_index(space: SpaceSpec, indices: Mapping[str, int]) -> int:
    """Flat index of a product basis state; missing labels default to 0."""
    for lab in indices:
        space.index(lab)
    multi = tuple(int(indices.get(lab, 0)) for lab in space.labels)
    return int(np.ravel_multi_index(multi, space.dims)) if space.subsystems else 0


# --------------------------------------------------------------------------- #
#                              States & operators                             #
# --------------------------------------------------------------------------- #


def _as_complex(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit vector over ``space`` (norm checked to 1e-10)."""

    space: SpaceSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _as_complex(self.amplitudes).reshape(-1)
        if amps.shape != (self.space.total_dim,):
            raise SpaceError(
                f"amplitude length {amps.size} != total_dim {self.space.total_dim}")
        n = math.sqrt(np.vdot(amps, amps).real)
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized (norm={n!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, space: SpaceSpec, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = np.linalg.norm(amps)
        if n < PROB_FLOOR:
            raise ValueError("cannot normalize a zero vector")
        return cls(space, amps / n)

    @classmethod
    def basis(cls, space: SpaceSpec, indices: Mapping[str, int] | None = None):
        amps = np.zeros(space.total_dim, dtype=complex)
        amps[basis_index(space, indices or {})] = 1.0
        return cls(space, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.dims)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def inner(self, other: "StateVector") -> complex:
        _check_same(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.inner(other)) ** 2

    def expectation(self, op) -> float:
        m = _matrix_of(op)
        return float(np.real(np.vdot(self.amplitudes, m @ self.amplitudes)))

    def to_dict(self) -> dict:
        return {"kind": "state", "space": self.space.to_list(),
                "re": self.amplitudes.real.tolist(), "im": self.amplitudes.imag.tolist()}


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive operator on ``space``."""

    space: SpaceSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex(self.matrix)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise SpaceError(f"matrix shape {m.shape} != ({d}, {d})")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > NORM_TOL:
            raise ValueError("density operator not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density operator trace {tr!r} != 1")
        if np.linalg.eigvalsh(m).min(initial=0.0) < -NORM_TOL:
            raise ValueError("density operator not positive")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def _psd(cls, space: SpaceSpec, matrix) -> "DensityOperator":
        """For matrices positive by construction (Gram or partial-trace forms)."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        m = m / np.trace(m).real
        m.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "space", space)
        object.__setattr__(obj, "matrix", m)
        if m.shape != (space.total_dim,) * 2:
            raise SpaceError(f"matrix shape {m.shape} != {space.total_dim}")
        return obj

    @classmethod
    def from_matrix(cls, space: SpaceSpec, matrix) -> "DensityOperator":
        """Hermitize and renormalize trace before validation."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(space, m / np.trace(m).real)

    @classmethod
    def mixture(cls, members: Iterable[tuple[float, "DensityOperator"]]):
        members = list(members)
        space = members[0][1].space
        m = sum(p * r.matrix for p, r in members)
        return cls.from_matrix(space, m)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expectation(self, op) -> float:
        return float(np.real(np.trace(self.matrix @ _matrix_of(op))))

    def to_dict(self) -> dict:
        return {"kind": "density", "space": self.space.to_list(),
                "re": self.matrix.real.tolist(), "im": self.matrix.imag.tolist()}


@dataclass(frozen=True)
class Eigensystem:
    eigenvalues: tuple[float, ...]
    projectors: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator on ``space``; spectral data computed lazily."""

    space: SpaceSpec
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _as_complex(self.matrix)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise SpaceError(f"matrix shape {m.shape} != ({d}, {d})")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > NORM_TOL:
            raise ValueError("observable not Hermitian")
        object.__setattr__(self, "matrix", m)

    @functools.cached_property
    def eigensystem(self) -> Eigensystem:
        return eigendecompose(self)

    def to_dict(self) -> dict:
        return {"kind": "observable", "space": self.space.to_list(),
                "re": self.matrix.real.tolist(), "im": self.matrix.imag.tolist()}


def _matrix_of(op) -> np.ndarray:
    return op.matrix if hasattr(op, "matrix") else np.asarray(op, dtype=complex)


def _check_same(a: SpaceSpec, b: SpaceSpec):
    if a != b:
        raise SpaceError(f"space mismatch: {a.labels}{a.dims} vs {b.labels}{b.dims}")


# --------------------------------------------------------------------------- #
#                                 Operations                                  #
# --------------------------------------------------------------------------- #


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; ``a``'s labels come first."""
    space = a.space + b.space
    return StateVector.normalized(space, np.kron(a.amplitudes, b.amplitudes))


def tensor_density(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    return DensityOperator.from_matrix(a.space + b.space, np.kron(a.matrix, b.matrix))


def partial_trace(rho: DensityOperator | StateVector, keep: Iterable[str]) -> DensityOperator:
    """Reduced operator on ``keep`` (kept in the original label order)."""
    space = rho.space
    keep = set(keep)
    for lab in keep:
        space.index(lab)
    kept = [i for i, lab in enumerate(space.labels) if lab in keep]
    traced = [i for i, lab in enumerate(space.labels) if lab not in keep]
    dims = space.dims
    dk = int(np.prod([dims[i] for i in kept], dtype=np.int64))
    if isinstance(rho, StateVector):
        psi = np.transpose(rho.tensor_view(), kept + traced).reshape(dk, -1)
        return DensityOperator._psd(space.sub(keep), psi @ psi.conj().T)
    else:
        n = len(dims)
        t = rho.matrix.reshape(dims + dims)
        t = np.transpose(t, kept + traced + [n + i for i in kept] + [n + i for i in traced])
        dt = rho.space.total_dim // dk
        red = np.einsum("ajbj->ab", t.reshape(dk, dt, dk, dt))
    return DensityOperator.from_matrix(space.sub(keep), red)


def eigendecompose(obs: Observable | np.ndarray, tol: float = SPECTRAL_TOL) -> Eigensystem:
    """Ascending eigenvalues; eigenvalues closer than ``tol`` share one projector."""
    m = _matrix_of(obs)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > NORM_TOL:
        raise ValueError("eigendecompose needs a Hermitian matrix")
    w, v = np.linalg.eigh(m)
    groups: list[list[int]] = []
    for i in range(len(w)):
        if groups and w[i] - w[groups[-1][-1]] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    values, projs = [], []
    for g in groups:
        vecs = v[:, g]
        values.append(float(np.mean(w[g])))
        p = vecs @ vecs.conj().T
        p.setflags(write=False)
        projs.append(p)
    return Eigensystem(tuple(values), tuple(projs))


def embed(op: Observable | np.ndarray, space: SpaceSpec, op_space: SpaceSpec | None = None):
    """Lift an operator on a subset of ``space``'s labels; identity elsewhere.

    Returns an :class:`Observable` if given one, else a bare matrix.
    """
    if op_space is None:
        op_space = op.space
    mat = _matrix_of(op)
    full = embed_matrix(mat, op_space, space)
    if isinstance(op, Observable):
        return Observable(space, full)
    return full


def embed_matrix(mat: np.ndarray, op_space: SpaceSpec, space: SpaceSpec) -> np.ndarray:
    for lab in op_space.labels:
        if lab not in space.labels or space.dim(lab) != op_space.dim(lab):
            raise SpaceError(f"operator label {lab!r} not in target space {space.labels}")
    if op_space.labels == space.labels:
        return np.asarray(mat, dtype=complex)
    rest = space.without(op_space.labels)
    big = np.kron(mat, np.eye(rest.total_dim))
    order = list(op_space.labels) + list(rest.labels)
    src_dims = [space.dim(lab) for lab in order]
    perm = [order.index(lab) for lab in space.labels]
    n = len(order)
    t = big.reshape(src_dims + src_dims)
    t = np.transpose(t, perm + [n + p for p in perm])
    return t.reshape(space.total_dim, space.total_dim)


def apply_local(state: StateVector, mat: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    """Raw amplitudes of ``mat`` acting on the ``labels`` factor (not renormalized)."""
    space = state.space
    axes = [space.index(lab) for lab in labels]
    sub_dims = [space.dims[a] for a in axes]
    t = np.moveaxis(state.tensor_view(), axes, range(len(axes)))
    shape = t.shape
    out = mat @ t.reshape(int(np.prod(sub_dims)), -1)
    out = np.moveaxis(out.reshape(shape), range(len(axes)), axes)
    return out.reshape(-1)


def born_probabilities(state: StateVector, obs: Observable) -> list[tuple[float, float]]:
    """``[(eigenvalue, probability), ...]`` in ascending eigenvalue order."""
    _check_same(state.space, obs.space)
    psi = state.amplitudes
    out = []
    for val, p in zip(obs.eigensystem.eigenvalues, obs.eigensystem.projectors):
        out.append((val, float(np.real(np.vdot(psi, p @ psi)))))
    return out


def project(state: StateVector, projector) -> tuple[StateVector, float]:
    """Lüders update: ``(P psi / |P psi|, |P psi|^2)``."""
    p = _matrix_of(projector)
    if p.shape != (state.space.total_dim,) * 2:
        raise SpaceError("projector shape does not match state")
    if (np.max(np.abs(p - p.conj().T)) > SPECTRAL_TOL
            or np.max(np.abs(p @ p - p)) > SPECTRAL_TOL):
        raise ValueError("not an orthogonal projector")
    v = p @ state.amplitudes
    prob = float(np.real(np.vdot(v, v)))
    if prob < PROB_FLOOR:
        raise ValueError(f"projection probability {prob:.3g} below {PROB_FLOOR}")
    return StateVector(state.space, v / np.sqrt(prob)), prob


# --------------------------------------------------------------------------- #
#                                  Distances                                  #
# --------------------------------------------------------------------------- #


def trace_distance(a, b) -> float:
    ma, mb = _matrix_of(a), _matrix_of(b)
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def commutator_norm(a, b) -> float:
    """Spectral norm of ``[a, b]``."""
    ma, mb = _matrix_of(a), _matrix_of(b)
    return float(np.linalg.norm(ma @ mb - mb @ ma, ord=2))


# --------------------------------------------------------------------------- #
#                                Standard pieces                              #
# --------------------------------------------------------------------------- #

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
# |+z> is basis index 0
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def qubit_space(label: str) -> SpaceSpec:
    return make_space([(label, 2)])


def pauli(which: str, label: str) -> Observable:
    mats = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
    return Observable(qubit_space(label), mats[which])


def random_state(space: SpaceSpec, rng: np.random.Generator) -> StateVector:
    d = space.total_dim
    return StateVector.normalized(space, rng.normal(size=d) + 1j * rng.normal(size=d))


def random_density(space: SpaceSpec, rng: np.random.Generator, rank: int | None = None):
    """Ginibre-distributed density operator."""
    d = space.total_dim
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    return DensityOperator.from_matrix(space, g @ g.conj().T)


def random_observable(space: SpaceSpec, rng: np.random.Generator) -> Observable:
    d = space.total_dim
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return Observable(space, 0.5 * (g + g.conj().T))


# --------------------------------------------------------------------------- #
#                                Serialization                                #
# --------------------------------------------------------------------------- #


def to_json(obj) -> str:
    return json.dumps(obj.to_dict())


def from_dict(d: dict):
    space = make_space([tuple(s) for s in d["space"]])
    re = np.array(d["re"], dtype=float)
    arr = np.empty(re.shape, dtype=complex)
    arr.real = re
    arr.imag = np.array(d["im"], dtype=float)
    kind = d.get("kind", "state" if arr.ndim == 1 else "density")
    if kind == "state":
        return StateVector(space, arr)
    if kind == "density":
        return DensityOperator(space, arr)
    if kind == "observable":
        return Observable(space, arr)
    raise ValueError(f"unknown kind {kind!r}")


def from_json(text: str):
    return from_dict(json.loads(text))
