"""Experiment drivers behind the command-line runner.

Each driver takes a parameter mapping and a master seed and returns
``(summary, files)``: a dict of scalar results and a mapping
``filename -> text`` of extra payloads. Per-trial randomness always comes
from :func:`grwlab.grw.trajectory_rng` so results are reproducible and
independent of worker count.
"""

from __future__ import annotations

import json
import math
from typing import Mapping

import numpy as np

from . import wigner
from .channels import (apply_channel, iterate, iterated_reduced, stinespring_dilate,
                       verify_dilation)
from .grw import (GrwParams, Lattice, apply_jump, evolve_grw, grw_channel, total_jump_rate,
                  trajectory_rng)
from .hilbert import (DensityOperator, StateVector, make_space, random_density,
                      trace_distance)
from .protocols import (Ensemble, attempt_cloning, bit_commitment_demo, check_no_signaling,
                        steer)
from .channels import Channel


class ConfigError(ValueError):
    """A configuration value is missing or invalid; ``key`` names it."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _get(params: Mapping, key: str, default=None, kind=float):
    if key not in params:
        if default is None:
            raise ConfigError(key, "required parameter missing")
        return default
    try:
        return kind(params[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {params[key]!r}") from None


def _amplitude(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (bool, str)):
        raise ValueError
    return complex(v)


_amplitude.__name__ = "amplitude (number or [re, im])"


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    raise ValueError


_bool.__name__ = "bool"


# --------------------------------------------------------------------------- #
#                                    Wigner                                   #
# --------------------------------------------------------------------------- #

WIGNER_KEYS = {"alpha", "beta", "pointer_sites", "branch_separation", "delta", "tau",
               "particles", "regime", "n_trials", "communicate_to_B", "measurement_duration",
               "record_massive", "record_particles", "record_sites", "level"}


def wigner_config(params: Mapping, seed: int) -> wigner.WignerConfig:
    unknown = set(params) - WIGNER_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown wigner parameter")
    delta = _get(params, "delta", 1.0)
    grw = GrwParams(delta=delta, tau=_get(params, "tau", 1.0),
                    particle_counts={"A": _get(params, "particles", 20.0)},
                    lattices={"A": Lattice(_get(params, "pointer_sites", 16, int))})
    kw = dict(
        alpha=_get(params, "alpha", 1 / math.sqrt(2), _amplitude),
        beta=_get(params, "beta", 1 / math.sqrt(2), _amplitude),
        pointer_sites=_get(params, "pointer_sites", 16, int),
        branch_separation=_get(params, "branch_separation", 6.0),
        grw=grw, regime=_get(params, "regime", "grw", str),
        n_trials=_get(params, "n_trials", 10_000, int), master_seed=seed,
        communicate_to_B=_get(params, "communicate_to_B", False, _bool),
        measurement_duration=_get(params, "measurement_duration", 1.0),
        record_massive=_get(params, "record_massive", False, _bool),
        record_particles=_get(params, "record_particles", 20.0),
        record_sites=_get(params, "record_sites", 16, int),
    )
    try:
        return wigner.WignerConfig(**kw)
    except (ValueError, TypeError) as exc:
        named = [k for k in sorted(WIGNER_KEYS) if k in str(exc)]
        raise ConfigError(named[0] if named else "parameters", str(exc)) from None


def run_wigner(params: Mapping, seed: int, jobs: int = 1):
    cfg = wigner_config(params, seed)
    level = _get(params, "level", "O", str)
    if level not in ("O", "O2"):
        raise ConfigError("level", "must be 'O' or 'O2'")
    res = (wigner.run_o2_experiment if level == "O2" else wigner.run_experiment)(cfg, jobs=jobs)
    summary = res.to_dict()
    summary["o_commutators"] = wigner.o_commutators(cfg)
    if cfg.regime == "decoherence":
        summary["recoherence"] = wigner.recoherence_check(cfg)
    return summary, {"trials.csv": res.trials_csv()}


# --------------------------------------------------------------------------- #
#                                GRW trajectory                               #
# --------------------------------------------------------------------------- #

TRAJ_KEYS = {"sites", "spacing", "delta", "tau", "particles", "t_total", "n_trajectories",
             "branch_site", "branch_separation", "alpha", "beta", "record_trajectories"}


def _two_branch(params: Mapping):
    m = _get(params, "sites", 32, int)
    a = _get(params, "spacing", 1.0)
    delta = _get(params, "delta", 1.0)
    sep = int(round(_get(params, "branch_separation", 8.0) * delta / a))
    s0 = _get(params, "branch_site", max(1, (m - sep) // 2), int)
    s1 = s0 + sep
    if not 0 <= s0 < s1 < m:
        raise ConfigError("branch_separation", f"branches {s0}, {s1} do not fit on {m} sites")
    alpha = complex(params.get("alpha", 1 / math.sqrt(2)))
    beta = complex(params.get("beta", 1 / math.sqrt(2)))
    space = make_space([("X", m)])
    amps = np.zeros(m, dtype=complex)
    amps[s0], amps[s1] = alpha, beta
    try:
        state = StateVector(space, amps)
        lat = Lattice(m, a)
        gp = GrwParams(delta=delta, tau=_get(params, "tau", 1.0),
                       particle_counts={"X": _get(params, "particles", 1.0)},
                       lattices={"X": lat})
    except ValueError as exc:
        raise ConfigError("parameters", str(exc)) from None
    return state, gp, s0, s1


def single_jump_kill_probability(state: StateVector, params: GrwParams, s0: int, s1: int,
                                 threshold: float = 1e-6) -> float:
    """Exact probability that one jump leaves the minority branch below ``threshold``."""
    from .grw import factor_table, jump_center_distribution

    lat = params.lattices["X"]
    table = factor_table(lat, float(params.delta))
    p = jump_center_distribution(state, "X", params)
    w0 = abs(state.amplitudes[s0]) ** 2 * table[:, s0] ** 2
    w1 = abs(state.amplitudes[s1]) ** 2 * table[:, s1] ** 2
    minority = np.minimum(w0, w1) / (w0 + w1)
    return float(np.sum(p[minority <= threshold]))


def run_grw_trajectory(params: Mapping, seed: int, jobs: int = 1):
    unknown = set(params) - TRAJ_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown grw-trajectory parameter")
    state, gp, s0, s1 = _two_branch(params)
    t_total = _get(params, "t_total", 1.0)
    n = _get(params, "n_trajectories", 10_000, int)
    keep = _get(params, "record_trajectories", 10, int)

    counts, collapsed, first_branch = [], 0, 0
    kill = 0
    lines = []
    final0 = None
    for i in range(n):
        rng = trajectory_rng(seed, i)
        traj = evolve_grw(state, None, gp, t_total, rng, seed=seed, record_states=False)
        traj.index = i
        counts.append(len(traj.jumps))
        w0 = abs(traj.final_state.amplitudes[s0]) ** 2
        collapsed += int(max(w0, 1 - w0) >= 1 - 1e-6)
        first_branch += int(w0 >= 1 - 1e-6)
        if i < keep:
            for ev in traj.jumps:
                lines.append(json.dumps({"trajectory": i, **ev.to_dict()}, sort_keys=True))
        if i == 0:
            final0 = traj.final_state
        # independent single-jump probe of branch killing
        post, _ = apply_jump(state, "X", gp, trajectory_rng(seed, n + i))
        w = abs(post.amplitudes[s0]) ** 2
        kill += int(min(w, 1 - w) <= 1e-6)
    counts = np.array(counts)
    expected = total_jump_rate(gp) * t_total
    summary = {
        "n_trajectories": n,
        "expected_jumps": expected,
        "mean_jumps": float(counts.mean()),
        "var_jumps": float(counts.var()),
        "jump_prob": float(np.mean(counts > 0)),
        "collapse_prob": collapsed / n,
        "analytic_collapse_prob": -math.expm1(-expected),
        "branch0_fraction": first_branch / n,
        "branch0_given_collapse": first_branch / collapsed if collapsed else None,
        "born_branch0": float(abs(state.amplitudes[s0]) ** 2),
        "single_jump_kill_mc": kill / n,
        "single_jump_kill_exact": single_jump_kill_probability(state, gp, s0, s1),
        "params": gp.to_dict(),
        "t_total": t_total,
        "master_seed": seed,
    }
    files = {"trajectories.jsonl": "".join(line + "\n" for line in lines),
             "final_state.json": json.dumps(final0.to_dict())}
    return summary, files


# --------------------------------------------------------------------------- #
#                                  Protocols                                  #
# --------------------------------------------------------------------------- #


def run_protocols(params: Mapping, seed: int, jobs: int = 1):
    rng = trajectory_rng(seed, 0)
    n_random = _get(params, "n_random", 100, int)
    reports = []

    worst = 0.0
    ns_space = make_space([("alice", 2), ("bob", 3)])
    for i in range(n_random):
        r = trajectory_rng(seed, 1000 + i)
        joint = random_density(ns_space, r)
        ch = _random_channel(make_space([("alice", 2)]), r, n_kraus=3)
        rep = check_no_signaling(joint, [ch])
        worst = max(worst, rep.metrics["max_trace_distance"])
    ns = check_no_signaling(random_density(ns_space, rng),
                            [_random_channel(make_space([("alice", 2)]), rng, 2)])
    ns.metrics["sweep_max_trace_distance"] = worst
    ns.metrics["sweep_size"] = float(n_random)
    reports.append(ns)

    q = make_space([("q", 2)])
    zero, one = StateVector.basis(q, {"q": 0}), StateVector.basis(q, {"q": 1})
    plus = StateVector.normalized(q, [1, 1])
    reports.append(attempt_cloning(zero, one))
    reports.append(attempt_cloning(zero, plus))

    half = DensityOperator(q, np.eye(2) / 2)
    minus = StateVector.normalized(q, [1, -1])
    for kets in ((zero, one), (plus, minus)):
        ens = Ensemble(tuple((0.5, k.density()) for k in kets))
        reports.append(steer(half, ens)[2])

    bc = params.get("bit_commitment", {})
    gp = GrwParams(delta=_get(bc, "delta", 1.0), tau=_get(bc, "tau", 1.0),
                   particle_counts={"bob": _get(bc, "particles", 20.0)},
                   lattices={"bob": Lattice(_get(bc, "sites", 16, int))})
    for regime in ("unitary", "grw"):
        reports.append(bit_commitment_demo(_get(bc, "bit", 1, int), regime, gp,
                                           _get(bc, "hold_time", 1.0), master_seed=seed,
                                           n_runs=_get(bc, "n_runs", 1000, int)))
    summary = {"reports": [r.to_dict() for r in reports], "master_seed": seed}
    transcript = "".join(
        json.dumps({"protocol": r.name, **e}, sort_keys=True) + "\n"
        for r in reports for e in r.transcript)
    return summary, {"transcripts.jsonl": transcript}


def _random_channel(space, rng: np.random.Generator, n_kraus: int) -> Channel:
    d = space.total_dim
    g = rng.normal(size=(d * n_kraus, d)) + 1j * rng.normal(size=(d * n_kraus, d))
    v, _ = np.linalg.qr(g)
    return Channel(space, tuple(v[k * d:(k + 1) * d] for k in range(n_kraus)))


random_channel = _random_channel


# --------------------------------------------------------------------------- #
#                                   Dilation                                  #
# --------------------------------------------------------------------------- #


def run_dilation(params: Mapping, seed: int, jobs: int = 1):
    m = _get(params, "sites", 6, int)
    gp = GrwParams(delta=_get(params, "delta", 1.0), tau=_get(params, "tau", 1.0),
                   particle_counts={"X": _get(params, "particles", 1.0)},
                   lattices={"X": Lattice(m)})
    dt = _get(params, "dt", 0.05)
    space = make_space([("X", m)])
    try:
        ch = grw_channel(gp, dt, space)
    except ValueError as exc:
        raise ConfigError("dt", str(exc)) from None
    dil = stinespring_dilate(ch)
    n_states = _get(params, "n_states", 100, int)
    states = [random_density(space, trajectory_rng(seed, i)) for i in range(n_states)]
    one_step = verify_dilation(ch, dil, states)
    n_steps = _get(params, "n_steps", 5, int)
    iter_ch = iterate(ch, n_steps)
    worst = 0.0
    for rho in states[:10]:
        a = apply_channel(iter_ch, rho)
        b = iterated_reduced(dil, rho, n_steps)
        worst = max(worst, trace_distance(a, b))
    summary = {"env_dim": dil.env_dim, "n_kraus": ch.n_kraus,
               "verify_max_trace_distance": one_step,
               "iterated_max_trace_distance": worst, "n_steps": n_steps,
               "rate_dt": total_jump_rate(gp) * dt, "master_seed": seed}
    return summary, {"channel.json": ch.to_json()}


# --------------------------------------------------------------------------- #
#                                    Sweeps                                   #
# --------------------------------------------------------------------------- #

DRIVERS = {"wigner": run_wigner, "grw-trajectory": run_grw_trajectory,
           "protocols": run_protocols, "dilation": run_dilation}

ROW_FIELDS = {
    "wigner": lambda s: {"p_o_plus": s["p_o_plus"]["est"],
                         "p_o_plus_stderr": s["p_o_plus"]["stderr"],
                         "mixture": s["analytic_refs"]["mixture"]},
    "grw-trajectory": lambda s: {k: s[k] for k in (
        "expected_jumps", "mean_jumps", "jump_prob", "collapse_prob", "analytic_collapse_prob",
        "single_jump_kill_mc", "single_jump_kill_exact")},
    "dilation": lambda s: {k: s[k] for k in ("verify_max_trace_distance",
                                              "iterated_max_trace_distance")},
}


def sweep(experiment: str, axis: str, values, base: Mapping, seed: int, jobs: int = 1):
    """One row per axis value: ``[{axis: value, **summary_stats}, ...]``."""
    if experiment not in ROW_FIELDS:
        raise ConfigError("parameters.experiment", f"cannot sweep {experiment!r}")
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError("parameters.values", "need a non-empty list")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("parameters.axis", f"axis {axis!r} is not numeric (value {v!r})")
    base_value = base.get(axis)
    if base_value is not None and (isinstance(base_value, bool)
                                   or not isinstance(base_value, (int, float))):
        raise ConfigError("parameters.axis", f"axis {axis!r} is not numeric")
    rows = []
    for v in values:
        summary, _ = DRIVERS[experiment]({**base, axis: v}, seed, jobs)
        rows.append({axis: v, **ROW_FIELDS[experiment](summary)})
    return rows


def rows_to_csv(rows) -> str:
    cols = list(rows[0])
    out = [",".join(cols)]
    out += [",".join(repr(float(r[c])) if isinstance(r[c], float) else str(r[c]) for c in cols)
            for r in rows]
    return "\n".join(out) + "\n"


def run_sweep(params: Mapping, seed: int, jobs: int = 1):
    exp = _get(params, "experiment", None, str)
    axis = _get(params, "axis", None, str)
    rows = sweep(exp, axis, params.get("values"), params.get("base", {}), seed, jobs)
    return {"experiment": exp, "axis": axis, "rows": rows, "master_seed": seed}, \
        {"table.csv": rows_to_csv(rows)}


DRIVERS["sweep"] = run_sweep
