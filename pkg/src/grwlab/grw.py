"""Bell's discrete GRW model on 1-D position lattices.

Each positional subsystem is a periodic lattice of ``M`` sites with
spacing ``a``. A subsystem carrying ``N`` wavefunction arguments (the
collective-coordinate approximation: one lattice coordinate stands in for
``N`` particles) contributes ``N / tau`` to the jump rate. A jump centred
at ``c`` multiplies the amplitudes by the Gaussian factor

    j_c(x) = K exp(-(x - c)^2 / (2 delta^2)),   sum_x a j_c(x)^2 = 1,

with ``x - c`` the minimal-image distance on the ring. Because the ring is
translation invariant, ``sum_c a j_c(x)^2 = 1`` as well, so the centre
weights ``a |j_c psi|^2`` form a probability distribution for every state.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import Hamiltonian
from .hilbert import (PROB_FLOOR, SpaceError, SpaceSpec, StateVector,
                      embed_matrix)

# Standard GRW constants: delta in cm, tau in seconds.
DELTA_CM = 1e-5
TAU_S = 1e15


@dataclass(frozen=True)
class Lattice:
    sites: int
    spacing: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        if int(self.sites) < 2:
            raise ValueError("lattice needs at least 2 sites")
        if not self.spacing > 0:
            raise ValueError("lattice spacing must be positive")
        object.__setattr__(self, "sites", int(self.sites))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", float(self.origin))

    @property
    def extent(self) -> float:
        return self.sites * self.spacing

    @property
    def coordinates(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.sites)

    def coordinate(self, site: int) -> float:
        return self.origin + self.spacing * int(site)

    def site_of(self, x: float) -> int:
        """Site index of an on-lattice coordinate."""
        f = (x - self.origin) / self.spacing
        i = round(f)
        if abs(f - i) > 1e-9 or not 0 <= i < self.sites:
            raise ValueError(f"coordinate {x!r} is not a lattice site")
        return int(i)

    def distance(self, x, y):
        """Minimal-image distance on the ring."""
        d = np.mod(np.asarray(x) - np.asarray(y), self.extent)
        return np.minimum(d, self.extent - d)


@dataclass(frozen=True)
class GrwParams:
    delta: float = DELTA_CM
    tau: float = TAU_S
    particle_counts: Mapping[str, float] = field(default_factory=dict)
    lattices: Mapping[str, Lattice] = field(default_factory=dict)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        counts = dict(self.particle_counts)
        for lab, n in counts.items():
            if n < 0:
                raise ValueError(f"particle count for {lab!r} is negative")
            if n > 0 and lab not in self.lattices:
                raise ValueError(f"subsystem {lab!r} has particles but no lattice")
        object.__setattr__(self, "particle_counts", counts)
        object.__setattr__(self, "lattices", dict(self.lattices))

    def __hash__(self):
        return hash((self.delta, self.tau, tuple(sorted(self.particle_counts.items())),
                     tuple(sorted(self.lattices.items()))))

    @property
    def total_particles(self) -> float:
        return float(sum(self.particle_counts.values()))

    def jumping_labels(self) -> list[str]:
        return [lab for lab, n in self.particle_counts.items() if n > 0]

    def replace(self, **kw) -> "GrwParams":
        d = dict(delta=self.delta, tau=self.tau, particle_counts=self.particle_counts,
                 lattices=self.lattices)
        d.update(kw)
        return GrwParams(**d)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "tau": self.tau,
                "particle_counts": dict(sorted(self.particle_counts.items())),
                "lattices": {k: {"sites": v.sites, "spacing": v.spacing, "origin": v.origin}
                             for k, v in sorted(self.lattices.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GrwParams":
        lat = {k: Lattice(**v) for k, v in d.get("lattices", {}).items()}
        return cls(delta=float(d.get("delta", DELTA_CM)), tau=float(d.get("tau", TAU_S)),
                   particle_counts={k: float(v) for k, v in d.get("particle_counts", {}).items()},
                   lattices=lat)


def total_jump_rate(params: GrwParams) -> float:
    """Jumps per unit time, ``sum(N) / tau``; independent of the state."""
    return params.total_particles / params.tau


def no_jump_probability(params: GrwParams, t: float) -> float:
    return math.exp(-total_jump_rate(params) * t)


# --------------------------------------------------------------------------- #
#                                 Jump factor                                 #
# --------------------------------------------------------------------------- #


@functools.lru_cache(maxsize=64)
def factor_table(lattice: Lattice, delta: float) -> np.ndarray:
    """Row ``c`` holds ``j_c(x)`` for centre site ``c``; read-only."""
    x = lattice.coordinates
    dist = lattice.distance(x[None, :], x[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(-dist ** 2 / (2.0 * delta ** 2)) if np.isfinite(delta) else np.ones_like(dist)
    g /= np.sqrt(lattice.spacing * np.sum(g ** 2, axis=1, keepdims=True))
    g.setflags(write=False)
    return g


@functools.lru_cache(maxsize=64)
def _centre_weights(lattice: Lattice, delta: float) -> np.ndarray:
    """``a * j_c(x)^2``: centre probability kernel."""
    w = lattice.spacing * factor_table(lattice, delta) ** 2
    w.setflags(write=False)
    return w


def localization_factor(center: float, delta: float, lattice: Lattice) -> np.ndarray:
    """Diagonal of the jump operator centred at coordinate ``center``."""
    return factor_table(lattice, float(delta))[lattice.site_of(center)].copy()


def _split(state: StateVector, label: str) -> np.ndarray:
    """``(before, label, after)`` view of the amplitudes."""
    ax = state.space.index(label)
    dims = state.space.dims
    return state.amplitudes.reshape(math.prod(dims[:ax]), dims[ax], -1)


def _weights_on(state: StateVector, label: str) -> np.ndarray:
    v = _split(state, label)
    return (v.real ** 2 + v.imag ** 2).sum(axis=(0, 2))


def _lattice_for(state: StateVector, label: str, params: GrwParams) -> Lattice:
    if label not in params.lattices:
        raise SpaceError(f"subsystem {label!r} is not positional")
    lat = params.lattices[label]
    if state.space.dim(label) != lat.sites:
        raise SpaceError(f"subsystem {label!r} dim != lattice size {lat.sites}")
    return lat


def jump_center_distribution(state: StateVector, subsystem: str,
                             params: GrwParams) -> np.ndarray:
    """Probability of each lattice site being the jump centre."""
    lat = _lattice_for(state, subsystem, params)
    table = factor_table(lat, float(params.delta))
    p = lat.spacing * (table ** 2) @ _weights_on(state, subsystem)
    return p / p.sum()


@dataclass(frozen=True)
class JumpEvent:
    time: float
    subsystem: str
    center: float
    site: int
    pre_jump_prob_density: float
    branch_weights: dict

    def to_dict(self) -> dict:
        return {"t": self.time, "subsystem": self.subsystem, "center": self.center,
                "site": self.site, "pre_jump_prob_density": self.pre_jump_prob_density,
                "branch_weights": self.branch_weights}


def apply_jump(state: StateVector, subsystem: str, params: GrwParams,
               rng: np.random.Generator, time: float = 0.0,
               ) -> tuple[StateVector, JumpEvent]:
    lat = _lattice_for(state, subsystem, params)
    table = factor_table(lat, float(params.delta))
    v = _split(state, subsystem)
    weights = (v.real ** 2 + v.imag ** 2).sum(axis=(0, 2))
    probs = _centre_weights(lat, float(params.delta)) @ weights
    cdf = np.cumsum(probs)
    c = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), lat.sites - 1)
    probs = probs / cdf[-1]

    amps = v * table[c][None, :, None]
    n2 = float(np.vdot(amps, amps).real)
    if n2 < PROB_FLOOR:
        raise RuntimeError("jump annihilated the state; centre sampling is inconsistent")
    new = StateVector(state.space, amps.reshape(-1) / math.sqrt(n2))
    event = JumpEvent(
        time=float(time), subsystem=subsystem, center=lat.coordinate(c), site=c,
        pre_jump_prob_density=float(probs[c] / lat.spacing),
        branch_weights={int(i): float(w) for i, w in enumerate(weights) if w > 1e-12},
    )
    return new, event


# --------------------------------------------------------------------------- #
#                                 Trajectories                                #
# --------------------------------------------------------------------------- #


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index`` of a run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed),
                                                                        int(index)])))


@dataclass
class Trajectory:
    seed: int
    times: list
    states: list
    jumps: list
    final_state: StateVector
    index: int = 0

    def to_jsonl(self) -> str:
        lines = [json.dumps(ev.to_dict(), sort_keys=True) for ev in self.jumps]
        return "".join(line + "\n" for line in lines)

    def final_state_json(self) -> str:
        return json.dumps(self.final_state.to_dict())


def evolve_grw(state: StateVector, h: Hamiltonian | None, params: GrwParams,
               t_total: float, rng: np.random.Generator, seed: int = 0,
               record_states: bool = True) -> Trajectory:
    """Unitary segments between Poisson-timed jumps.

    At each jump the subsystem is chosen with probability ``N_label / sum N``
    (uniform over the total set of arguments).
    """
    if t_total < 0:
        raise ValueError("t_total must be non-negative")
    if h is not None and h.space != state.space:
        raise SpaceError("hamiltonian space differs from state space")
    rate = total_jump_rate(params)
    labels = params.jumping_labels()
    choice_p = np.array([params.particle_counts[lab] for lab in labels], dtype=float)
    choice_p = choice_p / choice_p.sum() if labels else choice_p

    if h is None or h.is_zero():
        def step(s, dt):
            return s
    else:
        w, v = np.linalg.eigh(h.matrix)
        vh = v.conj().T

        def step(s, dt):
            return StateVector.normalized(s.space, (v * np.exp(-1j * w * dt)) @ (vh @ s.amplitudes))

    times, states, jumps = [0.0], [state], []
    t = 0.0
    psi = state
    while True:
        wait = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        if t + wait >= t_total:
            psi = step(psi, t_total - t)
            t = t_total
            break
        psi = step(psi, wait)
        t += wait
        if len(labels) > 1:
            k = int(np.searchsorted(np.cumsum(choice_p), rng.random(), side="right"))
            lab = labels[min(k, len(labels) - 1)]
        else:
            lab = labels[0]
        psi, ev = apply_jump(psi, lab, params, rng, time=t)
        jumps.append(ev)
        if record_states:
            times.append(t)
            states.append(psi)
    if record_states:
        times.append(t)
        states.append(psi)
    else:
        times.append(t)
    return Trajectory(seed=seed, times=times, states=states if record_states else [psi],
                      jumps=jumps, final_state=psi)


# --------------------------------------------------------------------------- #
#                                   Channel                                   #
# --------------------------------------------------------------------------- #


def grw_channel(params: GrwParams, dt: float, space: SpaceSpec):
    """First-order (at most one jump) GRW channel for a time step ``dt``.

    Kraus operators: ``sqrt(1-p) I`` and, for every jumping subsystem ``l``
    and centre ``c``, ``sqrt(p * (N_l / sum N) * a) diag(j_c)``; ``p = rate*dt``.
    """
    from .channels import Channel

    rate = total_jump_rate(params)
    p = rate * dt
    if p > 0.1 + 1e-15:
        raise ValueError(f"rate*dt = {p:.3g} exceeds 0.1")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    d = space.total_dim
    kraus = [np.sqrt(1.0 - p) * np.eye(d, dtype=complex)]
    if p > 0:
        total_n = params.total_particles
        for lab in params.jumping_labels():
            lat = params.lattices[lab]
            if space.dim(lab) != lat.sites:
                raise SpaceError(f"subsystem {lab!r} dim != lattice size {lat.sites}")
            table = factor_table(lat, float(params.delta))
            w = p * params.particle_counts[lab] / total_n * lat.spacing
            sub = space.sub([lab])
            for c in range(lat.sites):
                kraus.append(np.sqrt(w) * embed_matrix(np.diag(table[c]), sub, space))
    return Channel(space, tuple(kraus))

