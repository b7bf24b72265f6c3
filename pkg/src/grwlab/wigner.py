"""Wigner's-friend experiment with an O-type observable.

Subsystems: ``P`` spin (index 0 = +z), ``A`` observer memory (periodic
position lattice, ready at site 0, "see up"/"see down" at two sites
``branch_separation * delta`` apart), optional ``B`` (second observer or
record), ``E`` (environment, decoherence regime) and ``R`` (O-outcome
register, ready 0, +1 -> 1, -1 -> 2).

Regimes:
  ``unitary``      no-collapse dynamics throughout
  ``grw``          A (and a massive B) undergo GRW jumps after coupling
  ``decoherence``  A's memory is copied into orthogonal environment records
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import DecoherenceSpec, decohere, measurement_coupling, propagator
from .grw import GrwParams, Lattice, evolve_grw, trajectory_rng
from .hilbert import (NORM_TOL, Observable, StateVector, apply_local, born_probabilities,
                      commutator_norm, embed, make_space, partial_trace, pauli, project,
                      tensor)

P, A, B, E, R = "P", "A", "B", "E", "R"
REGIMES = ("unitary", "grw", "decoherence")
MICRO_RECORD_DIM = 3
COLLAPSED = 1.0 - 1e-6


def _complex(z) -> complex:
    if isinstance(z, (list, tuple)):
        return complex(float(z[0]), float(z[1]))
    return complex(z)


def memory_sites(n_sites: int, sep: int) -> tuple[int, int]:
    """``(up, down)`` sites; centred on the ring so both gaps are large."""
    up = (n_sites - sep) // 2
    return up, up + sep


@dataclass
class WignerConfig:
    alpha: complex = 1 / math.sqrt(2)
    beta: complex = 1 / math.sqrt(2)
    pointer_sites: int = 16
    branch_separation: float = 6.0
    # only delta, tau and the A particle count are read; lattices follow
    # pointer_sites / record_sites
    grw: GrwParams = field(default_factory=lambda: GrwParams(
        delta=1.0, tau=1.0, particle_counts={A: 20.0}, lattices={A: Lattice(16)}))
    regime: str = "grw"
    n_trials: int = 10_000
    master_seed: int = 0
    communicate_to_B: bool = False
    measurement_duration: float = 1.0
    # B as a massive position record instead of a 3-level register
    record_massive: bool = False
    record_particles: float = 20.0
    record_sites: int = 16

    def __post_init__(self):
        self.alpha, self.beta = _complex(self.alpha), _complex(self.beta)
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1.0) > NORM_TOL:
            raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.branch_separation < 5.0:
            raise ValueError("branch_separation must be at least 5 (units of delta)")
        delta = self.grw.delta
        self.sep_sites = int(round(self.branch_separation * delta))
        self._check_ring(self.pointer_sites, "pointer_sites")
        if self.record_massive:
            self._check_ring(self.record_sites, "record_sites")

    def _check_ring(self, n: int, name: str):
        delta = self.grw.delta
        if self.sep_sites < 5 * delta - 1e-9 or n - self.sep_sites < 5 * delta - 1e-9:
            raise ValueError(f"{name}={n} cannot hold two branches 5 delta apart both ways")
        up, _ = memory_sites(n, self.sep_sites)
        if up < 1:
            raise ValueError(f"{name}={n} leaves no room for the ready site")

    @property
    def params(self) -> GrwParams:
        """GRW parameters with the lattices this experiment uses."""
        counts = {A: float(self.grw.particle_counts.get(A, 0.0))}
        lats = {A: Lattice(self.pointer_sites)}
        if self.record_massive:
            counts[B] = float(self.record_particles)
            lats[B] = Lattice(self.record_sites)
        return GrwParams(delta=self.grw.delta, tau=self.grw.tau,
                         particle_counts=counts, lattices=lats)

    def echo(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("grw", "alpha", "beta")}
        d["alpha"] = [self.alpha.real, self.alpha.imag]
        d["beta"] = [self.beta.real, self.beta.imag]
        d["grw"] = self.grw.to_dict()
        d.pop("sep_sites", None)
        return d


# --------------------------------------------------------------------------- #
#                            Static pieces per config                         #
# --------------------------------------------------------------------------- #


class _Setup:
    """Precomputed operators shared by all trials of one config."""

    def __init__(self, cfg: WignerConfig):
        self.cfg = cfg
        m = cfg.pointer_sites
        self.up, self.down = memory_sites(m, cfg.sep_sites)
        self.space = make_space([(P, 2), (A, m)])
        if cfg.record_massive:
            self.b_dim = cfg.record_sites
            self.b_up, self.b_down = memory_sites(cfg.record_sites, cfg.sep_sites)
        else:
            self.b_dim, self.b_up, self.b_down = MICRO_RECORD_DIM, 2, 1

        sz = pauli("z", P)
        h = measurement_coupling(sz, A, 1.0, self.space, pointer_sites=(self.down, self.up))
        self.spin_u = propagator(h, 1.0)
        self.psi1 = record_state(cfg)
        self.initial = build_initial(cfg)
        self.o_obs = _o_from(self.psi1)
        self.memory = memory_observable(cfg)
        self._b_u = {}
        self._embedded = {}

    @functools.cached_property
    def o2_obs(self) -> Observable:
        phi = communicate(StateVector(self.space, self.psi1.amplitudes), self.cfg, None, self)
        return extend_with_o2(phi, self.cfg)[0]

    def embedded(self, obs: Observable, space):
        key = (id(obs), space)
        if key not in self._embedded:
            self._embedded[key] = embed(obs, space)
        return self._embedded[key]

    def b_coupling(self, space):
        if space not in self._b_u:
            h = measurement_coupling(self.memory, B, 1.0, space,
                                     pointer_sites=(self.b_down, 0, self.b_up))
            self._b_u[space] = propagator(h, 1.0)
        return self._b_u[space]


def build_initial(cfg: WignerConfig) -> StateVector:
    """``(alpha|+z> + beta|-z>) (x) |ready>_A``."""
    spin = StateVector.normalized(make_space([(P, 2)]), [cfg.alpha, cfg.beta])
    return tensor(spin, StateVector.basis(make_space([(A, cfg.pointer_sites)])))


def record_state(cfg: WignerConfig) -> StateVector:
    """Exact post-measurement superposition ``alpha|+z,up> + beta|-z,down>``."""
    m = cfg.pointer_sites
    up, down = memory_sites(m, cfg.sep_sites)
    amps = np.zeros((2, m), dtype=complex)
    amps[0, up] = cfg.alpha
    amps[1, down] = cfg.beta
    return StateVector(make_space([(P, 2), (A, m)]), amps.reshape(-1))


def memory_observable(cfg: WignerConfig) -> Observable:
    """+1 on "see up", -1 on "see down", 0 on every other memory site."""
    up, down = memory_sites(cfg.pointer_sites, cfg.sep_sites)
    diag = np.zeros(cfg.pointer_sites)
    diag[up], diag[down] = 1.0, -1.0
    return Observable(make_space([(A, cfg.pointer_sites)]), np.diag(diag))


def _o_from(state: StateVector) -> Observable:
    v = state.amplitudes
    return Observable(state.space, 2 * np.outer(v, v.conj()) - np.eye(len(v)))


def prob_of(probs, value: float) -> float:
    """Probability attached to ``value`` in a ``born_probabilities`` list."""
    return sum(p for v, p in probs if abs(v - value) < 1e-9)


def _setup(cfg, setup):
    return setup if setup is not None else _Setup(cfg)


def _params_for(cfg: WignerConfig, space) -> GrwParams:
    p = cfg.params
    keep = {k: v for k, v in p.particle_counts.items() if k in space.labels}
    return p.replace(particle_counts=keep,
                     lattices={k: v for k, v in p.lattices.items() if k in space.labels})


# --------------------------------------------------------------------------- #
#                                   Stages                                    #
# --------------------------------------------------------------------------- #


def run_spin_measurement(state: StateVector, cfg: WignerConfig, rng: np.random.Generator,
                         setup: _Setup | None = None):
    """A measures the z-spin. Returns ``(state, trajectory_or_None)``.

    The pointer coupling acts for unit time; in the ``grw`` regime the
    memory then records for ``measurement_duration`` under GRW jumps.
    """
    s = _setup(cfg, setup)
    coupled = StateVector.normalized(state.space, s.spin_u @ state.amplitudes)
    if cfg.regime == "unitary":
        return coupled, None
    if cfg.regime == "grw":
        traj = evolve_grw(coupled, None, _params_for(cfg, coupled.space),
                          cfg.measurement_duration, rng, record_states=False)
        return traj.final_state, traj
    env = StateVector.basis(make_space([(E, MICRO_RECORD_DIM)]))
    joint = tensor(coupled, env)
    return decohere(joint, DecoherenceSpec(s.memory, E)), None


def communicate(state: StateVector, cfg: WignerConfig, rng: np.random.Generator | None = None,
                setup: _Setup | None = None) -> StateVector:
    """A tells B her result: B's pointer copies A's memory observable."""
    s = _setup(cfg, setup)
    if B not in state.space.labels:
        state = tensor(state, StateVector.basis(make_space([(B, s.b_dim)])))
    u = s.b_coupling(make_space([(A, cfg.pointer_sites), (B, s.b_dim)]))
    state = StateVector.normalized(state.space, apply_local(state, u, [A, B]))
    if cfg.regime == "grw" and rng is not None:
        state = evolve_grw(state, None, _params_for(cfg, state.space),
                           cfg.measurement_duration, rng, record_states=False).final_state
    return state


def o_observable(cfg: WignerConfig) -> Observable:
    """``2|Psi1><Psi1| - I`` on P+A."""
    if abs(cfg.alpha) < 1e-12 or abs(cfg.beta) < 1e-12:
        raise ValueError("alpha and beta must both be non-zero")
    return _o_from(record_state(cfg))


def o_commutators(cfg: WignerConfig) -> dict:
    o = o_observable(cfg)
    space = o.space
    return {
        "spin_z": commutator_norm(o, embed(pauli("z", P), space)),
        "memory": commutator_norm(o, embed(memory_observable(cfg), space)),
    }


def _measure(state: StateVector, obs: Observable, rng: np.random.Generator):
    probs = born_probabilities(state, obs)
    u = rng.random()
    acc = 0.0
    k = len(probs) - 1
    for i, (_, p) in enumerate(probs):
        acc += p
        if u < acc:
            k = i
            break
    post, _ = project(state, obs.eigensystem.projectors[k])
    return probs[k][0], post, probs


def measure_o(state: StateVector, obs: Observable, rng: np.random.Generator,
              record_label: str | None = None):
    """Born-sample ``obs`` (embedded if needed) and apply the Lüders update.

    With ``record_label`` the outcome is also written into a separate
    register (appended in its ready state if absent).
    """
    if obs.space != state.space:
        obs = embed(obs, state.space)
    outcome, post, _ = _measure(state, obs, rng)
    outcome = int(round(outcome))
    if record_label is not None:
        post = record_outcome(post, record_label, outcome)
    return outcome, post


def record_outcome(state: StateVector, label: str, outcome: int) -> StateVector:
    if label not in state.space.labels:
        state = tensor(state, StateVector.basis(make_space([(label, MICRO_RECORD_DIM)])))
    dim = state.space.dim(label)
    if dim < 3:
        raise ValueError("record register needs at least 3 levels")
    ready = partial_trace(state, [label]).matrix[0, 0].real
    if ready < 1.0 - 1e-9:
        raise ValueError(f"record register {label!r} not in its ready state")
    site = 1 if outcome > 0 else 2
    perm = np.eye(dim)
    perm[[0, site]] = perm[[site, 0]]
    return StateVector.normalized(state.space, apply_local(state, perm, [label]))


def extend_with_o2(state, cfg: WignerConfig):
    """``O2 = 2|Phi><Phi| - I`` for the pure P+A+B state ``Phi``.

    Accepts a state vector (possibly carrying further factors) or a density
    operator; the P+A+B reduction must be pure.
    """
    if hasattr(state, "amplitudes") and set(state.space.labels) == {P, A, B}:
        phi = state
    else:
        red = partial_trace(state, [P, A, B])
        if red.purity < 1.0 - 1e-9:
            raise ValueError(f"P+A+B state is not pure (purity {red.purity:.6g})")
        w, v = np.linalg.eigh(red.matrix)
        phi = StateVector.normalized(red.space, v[:, -1])
    return _o_from(phi), phi


# --------------------------------------------------------------------------- #
#                                    Trials                                   #
# --------------------------------------------------------------------------- #


@dataclass
class TrialRecord:
    trial: int
    regime: str
    spin_branch: str
    o_outcome: int
    p_plus: float
    anticorrelated: float
    psi1_fidelity: float
    n_jumps: int


def _pa_tensor(state: StateVector) -> np.ndarray:
    """Amplitudes as (P, A, rest)."""
    space = state.space
    t = np.moveaxis(state.tensor_view(), [space.index(P), space.index(A)], [0, 1])
    return t.reshape(2, space.dim(A), -1)


def _memory_weights(state: StateVector, s: _Setup) -> tuple[float, float]:
    w = np.sum(np.abs(_pa_tensor(state)) ** 2, axis=(0, 2))
    return float(w[s.up]), float(w[s.down])


def _spin_branch(state: StateVector, s: _Setup) -> str:
    w_up, w_down = _memory_weights(state, s)
    if w_up >= COLLAPSED:
        return "up"
    if w_down >= COLLAPSED:
        return "down"
    return "superposed"


def anticorrelated_probability(state: StateVector, cfg: WignerConfig) -> float:
    """Probability of ``+z`` with "see down" or ``-z`` with "see up"."""
    up, down = memory_sites(cfg.pointer_sites, cfg.sep_sites)
    t = np.abs(_pa_tensor(state)) ** 2
    return float(t[0, down].sum() + t[1, up].sum())


def _psi1_fidelity(state: StateVector, s: _Setup) -> float:
    t = _pa_tensor(state).reshape(2 * s.cfg.pointer_sites, -1)
    proj = s.psi1.amplitudes.conj() @ t
    return float(np.sum(np.abs(proj) ** 2))


def run_trial(cfg: WignerConfig, index: int, setup: _Setup | None = None,
              level: str = "O") -> TrialRecord:
    s = _setup(cfg, setup)
    rng = trajectory_rng(cfg.master_seed, index)
    state, traj = run_spin_measurement(s.initial, cfg, rng, s)
    n_jumps = len(traj.jumps) if traj is not None else 0
    branch = _spin_branch(state, s) if cfg.regime == "grw" else "superposed"
    if level == "O2":
        state = communicate(state, cfg, rng, s)
        obs = s.embedded(s.o2_obs, state.space)
    else:
        if cfg.communicate_to_B:
            state = communicate(state, cfg, rng, s)
        obs = s.embedded(s.o_obs, state.space)
    outcome, post, probs = _measure(state, obs, rng)
    p_plus = prob_of(probs, 1.0)
    return TrialRecord(index, cfg.regime, branch, int(round(outcome)), float(p_plus),
                       anticorrelated_probability(post, cfg), _psi1_fidelity(post, s), n_jumps)


def _run_chunk(args):
    cfg, indices, level = args
    s = _Setup(cfg)
    return [run_trial(cfg, i, s, level) for i in indices]


def _run_trials(cfg: WignerConfig, jobs: int, level: str) -> list[TrialRecord]:
    n = cfg.n_trials
    if jobs <= 1:
        return _run_chunk((cfg, range(n), level))
    bounds = np.linspace(0, n, jobs * 4 + 1).astype(int)
    chunks = [(cfg, range(a, b), level) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(jobs) as ex:
        parts = list(ex.map(_run_chunk, chunks))
    return [rec for part in parts for rec in part]


# --------------------------------------------------------------------------- #
#                                   Results                                   #
# --------------------------------------------------------------------------- #


def _binomial(k: int, n: int) -> dict:
    if n == 0:
        return {"est": None, "stderr": None, "n": 0}
    p = k / n
    return {"est": p, "stderr": math.sqrt(p * (1 - p) / n), "n": n}


@dataclass
class WignerResult:
    config: WignerConfig
    level: str
    p_o_plus: float
    p_o_plus_stderr: float
    p_o_plus_born: float
    conditionals: dict
    analytic_refs: dict
    max_anticorrelated: float
    min_psi1_fidelity: float
    trials: list

    @property
    def p_o_plus_given_up(self):
        return self.conditionals["up"]["est"]

    @property
    def p_o_plus_given_down(self):
        return self.conditionals["down"]["est"]

    @property
    def option_a_prediction(self) -> dict:
        return {"up": self.analytic_refs["option_a_up"], "down": self.analytic_refs["option_a_down"]}

    @property
    def option_b_prediction(self) -> float:
        return self.analytic_refs["option_b"]

    def to_dict(self) -> dict:
        return {
            "config_echo": self.config.echo(),
            "level": self.level,
            "p_o_plus": {"est": self.p_o_plus, "stderr": self.p_o_plus_stderr},
            "p_o_plus_born_mean": self.p_o_plus_born,
            "conditionals": self.conditionals,
            "analytic_refs": self.analytic_refs,
            "max_anticorrelated_prob": self.max_anticorrelated,
            "min_psi1_fidelity": self.min_psi1_fidelity,
            "n_trials": self.config.n_trials,
            "master_seed": self.config.master_seed,
        }

    def trials_csv(self) -> str:
        lines = ["trial,regime,spin_branch,o_outcome"]
        lines += [f"{t.trial},{t.regime},{t.spin_branch},{t.o_outcome}" for t in self.trials]
        return "\n".join(lines) + "\n"


def analytic_refs(cfg: WignerConfig) -> dict:
    a2, b2 = abs(cfg.alpha) ** 2, abs(cfg.beta) ** 2
    return {"option_b": 1.0, "option_a_up": a2, "option_a_down": b2,
            "mixture": a2 * a2 + b2 * b2}


def _aggregate(cfg: WignerConfig, trials: list[TrialRecord], level: str) -> WignerResult:
    n = len(trials)
    plus = sum(t.o_outcome == 1 for t in trials)
    overall = _binomial(plus, n)
    cond = {}
    for br in ("up", "down"):
        sub = [t for t in trials if t.spin_branch == br]
        cond[br] = _binomial(sum(t.o_outcome == 1 for t in sub), len(sub))
    cond["spin_up_fraction"] = sum(t.spin_branch == "up" for t in trials) / n
    return WignerResult(
        config=cfg, level=level, p_o_plus=overall["est"], p_o_plus_stderr=overall["stderr"],
        p_o_plus_born=float(np.mean([t.p_plus for t in trials])),
        conditionals=cond, analytic_refs=analytic_refs(cfg),
        max_anticorrelated=max(t.anticorrelated for t in trials),
        min_psi1_fidelity=min(t.psi1_fidelity for t in trials),
        trials=trials,
    )


def run_experiment(cfg: WignerConfig, jobs: int = 1) -> WignerResult:
    """Repeated spin measurement followed by an O-measurement."""
    return _aggregate(cfg, _run_trials(cfg, jobs, "O"), "O")


def run_o2_experiment(cfg: WignerConfig, jobs: int = 1) -> WignerResult:
    """Next level: B learns A's result, then ``O2`` is measured on P+A+B.

    ``O2`` has the no-collapse post-communication state as its +1 eigenstate.
    """
    return _aggregate(cfg, _run_trials(cfg, jobs, "O2"), "O2")


def recoherence_check(cfg: WignerConfig) -> dict:
    """Exact O-statistics for the decohered state, on P+A and on P+A+E."""
    dec = WignerConfig(**{**_fields(cfg), "regime": "decoherence"})
    s = _Setup(dec)
    state, _ = run_spin_measurement(s.initial, dec, np.random.default_rng(0), s)
    p_pa = prob_of(born_probabilities(state, embed(s.o_obs, state.space)), 1.0)
    p_pae = prob_of(born_probabilities(state, _o_from(state)), 1.0)
    return {"p_plus_PA": p_pa, "p_plus_PAE": p_pae,
            "mixture": analytic_refs(cfg)["mixture"],
            "reduced_offdiag_max": _pa_offdiag(state, s)}


def _pa_offdiag(state: StateVector, s: _Setup) -> float:
    red = partial_trace(state, [P, A]).matrix
    i_up = s.up  # (P=0, A=up)
    i_down = s.cfg.pointer_sites + s.down  # (P=1, A=down)
    return float(abs(red[i_up, i_down]))


def _fields(cfg: WignerConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
