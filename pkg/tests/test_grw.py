import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from grwlab.channels import apply_channel, completeness_error
from grwlab.dynamics import Hamiltonian
from grwlab.grw import (DELTA_CM, TAU_S, GrwParams, Lattice, apply_jump, evolve_grw,
                        factor_table, grw_channel, jump_center_distribution,
                        localization_factor, no_jump_probability, total_jump_rate,
                        trajectory_rng)
from grwlab.hilbert import (SpaceError, StateVector, from_json, make_space, random_density,
                            random_observable, random_state)

import oracles
from oracles import FROZEN

seeds = st.integers(0, 2**32 - 1)


def params_for(label="X", m=16, n=1.0, delta=1.0, tau=1.0, a=1.0):
    return GrwParams(delta=delta, tau=tau, particle_counts={label: n},
                     lattices={label: Lattice(m, a)})


def two_branch(m, s0, s1, w0=0.5, label="X"):
    amps = np.zeros(m, complex)
    amps[s0], amps[s1] = math.sqrt(w0), math.sqrt(1 - w0)
    return StateVector(make_space([(label, m)]), amps)


# ---------------------------------------------------------------- params


def test_params_validation():
    with pytest.raises(ValueError):
        GrwParams(delta=0)
    with pytest.raises(ValueError):
        GrwParams(tau=-1)
    with pytest.raises(ValueError):
        GrwParams(particle_counts={"X": -1}, lattices={"X": Lattice(4)})
    with pytest.raises(ValueError):
        GrwParams(particle_counts={"X": 1})
    with pytest.raises(ValueError):
        Lattice(1)
    p = params_for(n=3)
    assert GrwParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_physical_constants_are_defaults():
    p = GrwParams()
    assert p.delta == DELTA_CM == 1e-5 and p.tau == TAU_S == 1e15


# ---------------------------------------------------------------- rate law


def test_rate_examples():
    lat = {"X": Lattice(4)}
    assert total_jump_rate(GrwParams(particle_counts={"X": 1}, lattices=lat)) == 1e-15
    assert total_jump_rate(GrwParams(particle_counts={"X": 1e23}, lattices=lat)) == \
        pytest.approx(1e8, rel=1e-15)
    assert total_jump_rate(GrwParams(particle_counts={"X": 0}, lattices=lat)) == 0.0


def test_rate_independent_of_state_and_additive():
    p = GrwParams(delta=1, tau=2, particle_counts={"X": 3, "Y": 5},
                  lattices={"X": Lattice(4), "Y": Lattice(4)})
    assert total_jump_rate(p) == 4.0


def test_microscopic_regime_analytic():
    for n in range(1, 11):
        p = GrwParams(particle_counts={"X": n}, lattices={"X": Lattice(4)})
        assert -math.expm1(-total_jump_rate(p) * 1.0) < 1e-13
        assert 1 - no_jump_probability(p, 1.0) < 1e-13


# ---------------------------------------------------------------- jump factor


def test_jump_factor_shape():
    lat = Lattice(16)
    j = localization_factor(5.0, 1.0, lat)
    assert np.argmax(j) == 5
    assert j[6] == pytest.approx(math.exp(-0.5) * j[5], rel=1e-12)
    assert j[4] == pytest.approx(math.exp(-0.5) * j[5], rel=1e-12)
    flat = localization_factor(5.0, math.inf, lat)
    assert np.allclose(flat, flat[0])
    with pytest.raises(ValueError):
        localization_factor(5.5, 1.0, lat)


def test_jump_factor_matches_oracle():
    table = factor_table(Lattice(16), 1.0)
    assert table[0, 0] == pytest.approx(FROZEN["jump_factor_peak_m16_d1"], abs=1e-15)
    for c in (0, 3, 15):
        assert np.allclose(table[c], oracles.jump_factor(c, 16, 1.0), atol=1e-15)
    t2 = factor_table(Lattice(10, 0.5), 0.7)
    assert np.allclose(t2[4], oracles.jump_factor(4, 10, 0.7, 0.5), atol=1e-14)


@given(st.integers(2, 40), st.floats(0.05, 50), st.floats(0.1, 3))
@settings(max_examples=60, deadline=None)
def test_normalization_convention(m, delta, a):
    t = factor_table(Lattice(m, a), delta)
    assert np.allclose(a * np.sum(t ** 2, axis=1), 1.0, atol=1e-12)
    assert np.allclose(a * np.sum(t ** 2, axis=0), 1.0, atol=1e-12)


# ---------------------------------------------------------------- centres


def test_centre_distribution_examples():
    p = params_for(m=16, delta=0.2)
    loc = StateVector.basis(make_space([("X", 16)]), {"X": 7})
    d = jump_center_distribution(loc, "X", p)
    assert np.argmax(d) == 7 and d[7] > 0.99
    two = two_branch(32, 4, 20)
    d2 = jump_center_distribution(two, "X", params_for(m=32))
    assert d2[:12].sum() == pytest.approx(0.5, abs=1e-6)
    assert np.allclose(d2, oracles.center_probabilities(two.amplitudes, 32, 1.0), atol=1e-14)
    wide = jump_center_distribution(loc, "X", params_for(m=16, delta=1e6))
    assert np.allclose(wide, 1 / 16, atol=1e-9)


def test_centre_distribution_not_positional():
    psi = StateVector.basis(make_space([("X", 4), ("S", 2)]))
    with pytest.raises(SpaceError):
        jump_center_distribution(psi, "S", params_for(m=4))


@given(seeds, st.integers(3, 12), st.floats(0.3, 5))
@settings(max_examples=40, deadline=None)
def test_centre_distribution_sums_to_one(seed, m, delta):
    rng = np.random.default_rng(seed)
    psi = random_state(make_space([("S", 2), ("X", m)]), rng)
    d = jump_center_distribution(psi, "X", params_for(m=m, delta=delta))
    assert abs(d.sum() - 1) <= 1e-10 and (d >= 0).all()


# ---------------------------------------------------------------- jumps


def test_jump_kills_far_branch():
    m, s0, s1 = 48, 12, 24  # 12 delta apart
    p = params_for(m=m)
    psi = two_branch(m, s0, s1)
    for i in range(200):
        post, ev = apply_jump(psi, "X", p, trajectory_rng(11, i))
        amp = np.abs(post.amplitudes)
        far = [x for x in range(m) if Lattice(m).distance(x, ev.center) > 5.0]
        assert amp[far].max() / amp.max() < 1e-4
        assert abs(post.norm - 1) <= 1e-10
        assert 0 <= ev.center < m and ev.time == 0.0


def test_jump_on_localized_state_with_wide_delta():
    psi = StateVector.basis(make_space([("X", 8)]), {"X": 3})
    post, _ = apply_jump(psi, "X", params_for(m=8, delta=100.0), np.random.default_rng(0))
    assert post.fidelity(psi) >= 1 - 1e-9


def test_branch_selection_born_frequencies():
    m, s0, s1, w0 = 32, 6, 20, 0.36
    p = params_for(m=m)
    psi = two_branch(m, s0, s1, w0)
    n = 10_000
    hits = 0
    for i in range(n):
        post, _ = apply_jump(psi, "X", p, trajectory_rng(5, i))
        hits += abs(post.amplitudes[s0]) ** 2 > 0.5
    sigma = math.sqrt(w0 * (1 - w0) / n)
    assert abs(hits / n - w0) <= 3 * sigma


def test_jump_event_serialization():
    psi = two_branch(16, 2, 10)
    _, ev = apply_jump(psi, "X", params_for(), np.random.default_rng(1), time=2.5)
    d = ev.to_dict()
    assert d["t"] == 2.5 and d["subsystem"] == "X"
    assert set(d["branch_weights"]) == {2, 10}
    json.dumps(d)


# ---------------------------------------------------------------- trajectories


def test_rate_zero_equals_schrodinger():
    rng = np.random.default_rng(0)
    s = make_space([("X", 6)])
    h = Hamiltonian(s, random_observable(s, rng).matrix)
    psi = random_state(s, rng)
    traj = evolve_grw(psi, h, params_for(m=6, n=0.0), 2.0, rng)
    from grwlab.dynamics import schrodinger_step
    assert not traj.jumps
    assert traj.final_state.fidelity(schrodinger_step(psi, h, 2.0)) >= 1 - 1e-12


def test_macroscopic_superposition_collapses():
    psi = two_branch(32, 8, 20, 0.5)
    p = params_for(m=32, n=1e4, tau=1.0)
    up = 0
    n = 2000
    for i in range(n):
        traj = evolve_grw(psi, None, p, 0.01, trajectory_rng(3, i), record_states=False)
        w = abs(traj.final_state.amplitudes[8]) ** 2
        assert min(w, 1 - w) < 1e-6
        up += w > 0.5
    assert abs(up / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_trajectory_invariants():
    rng = np.random.default_rng(8)
    s = make_space([("X", 12), ("S", 2)])
    h = Hamiltonian(s, 0.3 * random_observable(s, rng).matrix)
    psi = random_state(s, rng)
    traj = evolve_grw(psi, h, params_for(m=12, n=5), 3.0, rng, seed=9)
    times = [j.time for j in traj.jumps]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert all(t >= 0 for t in times)
    for st_ in traj.states:
        assert abs(st_.norm - 1) <= 1e-10
    lines = traj.to_jsonl().splitlines()
    assert len(lines) == len(traj.jumps)
    assert {"t", "subsystem", "center", "branch_weights"} <= set(json.loads(lines[0]))
    back = from_json(traj.final_state_json())
    assert back.amplitudes.tobytes() == traj.final_state.amplitudes.tobytes()


def test_two_subsystem_argument_selection():
    p = GrwParams(delta=1, tau=1, particle_counts={"X": 1.0, "Y": 3.0},
                  lattices={"X": Lattice(4), "Y": Lattice(4)})
    psi = StateVector.basis(make_space([("X", 4), ("Y", 4)]))
    counts = {"X": 0, "Y": 0}
    for i in range(500):
        for ev in evolve_grw(psi, None, p, 1.0, trajectory_rng(0, i),
                             record_states=False).jumps:
            counts[ev.subsystem] += 1
    n = counts["X"] + counts["Y"]
    assert abs(counts["Y"] / n - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / n)


def test_jump_counts_poisson_and_gaps_exponential():
    psi = two_branch(16, 3, 11)
    p = params_for(m=16, n=3.0)
    counts = []
    for i in range(10_000):
        traj = evolve_grw(psi, None, p, 1.0, trajectory_rng(21, i), record_states=False)
        counts.append(len(traj.jumps))
    counts = np.array(counts)
    lam = 3.0
    kmax = 8
    obs = [np.sum(counts == k) for k in range(kmax)] + [np.sum(counts >= kmax)]
    exp = [oracles.poisson_pmf(k, lam) * len(counts) for k in range(kmax)]
    exp.append(len(counts) - sum(exp))
    assert stats.chisquare(obs, exp).pvalue > 0.001
    # uncensored gaps from one long trajectory
    long = evolve_grw(psi, None, p, 10_001 / lam, trajectory_rng(22, 0), record_states=False)
    gaps = np.diff([0.0] + [j.time for j in long.jumps])[:10_000]
    assert len(gaps) > 9_000
    assert stats.kstest(gaps, "expon", args=(0, 1 / lam)).pvalue > 0.001


def test_determinism_per_index():
    psi = two_branch(16, 3, 11)
    p = params_for(m=16, n=4.0)
    a = evolve_grw(psi, None, p, 1.0, trajectory_rng(5, 17), record_states=False)
    b = evolve_grw(psi, None, p, 1.0, trajectory_rng(5, 17), record_states=False)
    assert a.to_jsonl() == b.to_jsonl()
    assert a.final_state.amplitudes.tobytes() == b.final_state.amplitudes.tobytes()


# ---------------------------------------------------------------- channel


def test_channel_examples():
    s = make_space([("X", 16)])
    ch0 = grw_channel(params_for(n=0.0), 0.5, s)
    assert ch0.n_kraus == 1 and np.allclose(ch0.kraus[0], np.eye(16))
    with pytest.raises(ValueError):
        grw_channel(params_for(n=1.0), 0.2, s)
    loc = StateVector.basis(s, {"X": 4}).density()
    wide = grw_channel(params_for(n=1.0, delta=1e4), 0.1, s)
    assert np.max(np.abs(apply_channel(wide, loc).matrix - loc.matrix)) <= 1e-6


def test_channel_offdiag_decay_matches_oracle():
    s = make_space([("X", 16)])
    ch = grw_channel(params_for(n=1.0), 0.05, s)
    rho = two_branch(16, 5, 11).density()
    out = apply_channel(ch, rho).matrix
    assert out[5, 11] / rho.matrix[5, 11] == pytest.approx(FROZEN["offdiag_m16_sep6_p0.05"],
                                                          abs=1e-12)
    assert FROZEN["offdiag_m16_sep6_p0.05"] == pytest.approx(
        oracles.grw_offdiag_factor(16, 5, 11, 1.0, 0.05), abs=1e-15)


@given(seeds, st.floats(0, 0.1))
@settings(max_examples=30, deadline=None)
def test_channel_completeness_and_positivity(seed, pdt):
    rng = np.random.default_rng(seed)
    s = make_space([("S", 2), ("X", 6)])
    ch = grw_channel(params_for(m=6, n=1.0), pdt, s)
    assert completeness_error(ch.kraus) <= 1e-9
    out = apply_channel(ch, random_density(s, rng)).matrix
    assert np.max(np.abs(out - out.conj().T)) <= 1e-9
    assert abs(np.trace(out) - 1) <= 1e-9
    assert np.linalg.eigvalsh(out).min() >= -1e-9
