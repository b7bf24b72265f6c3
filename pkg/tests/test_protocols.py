import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import sqrtm

from grwlab.channels import Channel
from grwlab.dynamics import Hamiltonian
from grwlab.experiments import random_channel
from grwlab.grw import GrwParams, Lattice, trajectory_rng
from grwlab.hilbert import (DensityOperator, SpaceError, StateVector, make_space,
                            partial_trace, random_density, random_observable, random_state)
from grwlab.protocols import (Ensemble, ProtocolReport, attempt_cloning, bit_commitment_demo,
                              check_no_signaling, check_no_signaling_grw,
                              commitment_ensembles, steer, steering_outcomes)

from oracles import FROZEN

seeds = st.integers(0, 2**32 - 1)
Q = make_space([("bob", 2)])


def ket(*amps, space=Q):
    return StateVector.normalized(space, amps)


def bob_params(n, sites=16):
    return GrwParams(delta=1.0, tau=1.0, particle_counts={"bob": n},
                     lattices={"bob": Lattice(sites)})


# ---------------------------------------------------------------- report


def test_report_rejects_nonfinite_and_serializes():
    with pytest.raises(ValueError):
        ProtocolReport("x", "pass", metrics={"m": float("nan")})
    r = ProtocolReport("x", "pass", metrics={"m": 1.0})
    r.log("e", a=1)
    assert json.loads(r.to_json())["transcript"] == [{"event": "e", "a": 1}]
    assert r.transcript_jsonl().count("\n") == 1


def test_ensemble_validation():
    with pytest.raises(ValueError):
        Ensemble(((0.7, ket(1, 0).density()), (0.7, ket(0, 1).density())))
    with pytest.raises(SpaceError):
        Ensemble(((0.5, ket(1, 0).density()),
                  (0.5, StateVector.basis(make_space([("c", 2)])).density())))


# ---------------------------------------------------------------- no signaling


def test_bell_sigma_z_measurement():
    s = make_space([("alice", 2), ("bob", 2)])
    bell = StateVector.normalized(s, [1, 0, 0, 1]).density()
    meas = Channel.dephasing(make_space([("alice", 2)]))
    rep = check_no_signaling(bell, [meas])
    assert rep.verdict == "pass" and rep.metrics["max_trace_distance"] <= 1e-12


def test_product_state_any_channel():
    rng = np.random.default_rng(0)
    a = random_density(make_space([("alice", 3)]), rng)
    b = random_density(make_space([("bob", 2)]), rng)
    from grwlab.hilbert import tensor_density
    joint = tensor_density(a, b)
    rep = check_no_signaling(joint, [random_channel(a.space, rng, 4) for _ in range(5)])
    assert rep.metrics["max_trace_distance"] <= 1e-12


def test_no_signaling_100_random_pairs():
    s = make_space([("alice", 2), ("bob", 3)])
    sa = make_space([("alice", 2)])
    worst = 0.0
    for i in range(100):
        rng = trajectory_rng(77, i)
        rep = check_no_signaling(random_density(s, rng), [random_channel(sa, rng, 3)])
        worst = max(worst, rep.metrics["max_trace_distance"])
        assert rep.verdict == "pass"
    assert worst <= 1e-12


def test_channel_touching_bob_rejected():
    s = make_space([("alice", 2), ("bob", 2)])
    rho = random_density(s, np.random.default_rng(1))
    bad = Channel.identity(make_space([("alice", 2), ("bob", 2)]))
    with pytest.raises(SpaceError):
        check_no_signaling(rho, [Channel.identity(make_space([("alice", 2)])), bad])


def test_no_signaling_under_grw_averaging():
    # Alice holds a massive pointer entangled with Bob's qubit
    s = make_space([("A", 12), ("bob", 2)])
    amps = np.zeros(24, complex)
    amps[2 * 2 + 0] = 0.6
    amps[2 * 9 + 1] = 0.8
    joint = StateVector(s, amps)
    p = GrwParams(delta=1.0, tau=1.0, particle_counts={"A": 2.0}, lattices={"A": Lattice(12)})
    h = Hamiltonian(make_space([("A", 12)]),
                    0.4 * random_observable(make_space([("A", 12)]),
                                            np.random.default_rng(3)).matrix)
    rep = check_no_signaling_grw(joint, p, 1.0, 10_000, master_seed=5, alice_hamiltonian=h)
    assert rep.verdict == "pass", rep.metrics
    assert rep.metrics["mean_jumps"] == pytest.approx(2.0, abs=0.1)


def test_grw_no_signaling_rejects_jumps_on_bob():
    s = make_space([("A", 4), ("bob", 4)])
    p = GrwParams(delta=1.0, tau=1.0, particle_counts={"bob": 1.0}, lattices={"bob": Lattice(4)})
    with pytest.raises(SpaceError):
        check_no_signaling_grw(StateVector.basis(s), p, 1.0, 2, 0, bob_labels=["bob"])


# ---------------------------------------------------------------- cloning


def test_cloning_examples():
    zero, one, plus = ket(1, 0), ket(0, 1), ket(1, 1)
    rep = attempt_cloning(zero, one)
    assert rep.verdict == "pass" and rep.metrics["min_fidelity"] >= 1 - 1e-9
    v = rep.data["cloner"]
    assert np.allclose(v.conj().T @ v, np.eye(2), atol=1e-12)
    imp = attempt_cloning(zero, plus)
    assert imp.verdict == "impossible"
    assert imp.metrics["residual"] == pytest.approx(FROZEN["cloning_residual_inv_sqrt2"],
                                                    abs=1e-9)
    same = attempt_cloning(plus, plus)
    assert same.verdict == "pass"
    with pytest.raises(SpaceError):
        attempt_cloning(zero, StateVector.basis(make_space([("c", 2)])))


@given(seeds, st.integers(2, 4), st.sampled_from(["random", "orthogonal", "same"]))
@settings(max_examples=60, deadline=None)
def test_cloning_verdict_is_orthogonality_predicate(seed, d, kind):
    rng = np.random.default_rng(seed)
    s = make_space([("x", d)])
    psi = random_state(s, rng)
    if kind == "random":
        phi = random_state(s, rng)
    elif kind == "orthogonal":
        r = random_state(s, rng).amplitudes
        r = r - np.vdot(psi.amplitudes, r) * psi.amplitudes
        phi = StateVector.normalized(s, r)
    else:
        phi = StateVector(s, np.exp(1j * rng.uniform(0, 6)) * psi.amplitudes)
    ov = abs(psi.inner(phi))
    rep = attempt_cloning(psi, phi)
    clonable = ov <= 1e-9 or ov >= 1 - 1e-9
    assert (rep.verdict == "pass") == clonable
    assert (rep.verdict == "impossible") == (not clonable)
    if not clonable:
        s_ = psi.inner(phi)
        assert rep.metrics["residual"] == pytest.approx(abs(s_ - s_ * s_), abs=1e-12)


# ---------------------------------------------------------------- steering


def test_two_ensembles_same_marginal():
    half = DensityOperator(Q, np.eye(2) / 2)
    z = Ensemble(((0.5, ket(1, 0).density()), (0.5, ket(0, 1).density())))
    x = Ensemble(((0.5, ket(1, 1).density()), (0.5, ket(1, -1).density())))
    pz, oz, rz = steer(half, z)
    px, ox, rx = steer(half, x)
    assert np.allclose(pz.amplitudes, px.amplitudes)
    for rep in (rz, rx):
        assert rep.verdict == "pass"
        assert rep.metrics["max_trace_distance"] <= 1e-9
        assert rep.metrics["max_prob_error"] <= 1e-9
    assert partial_trace(pz, ["bob"]).matrix == pytest.approx(np.eye(2) / 2, abs=1e-12)
    # the bell-type purification, measured in the z basis
    assert abs(oz.matrix[0, 1]) <= 1e-12 and abs(ox.matrix[0, 1]) > 0.1


def random_ensemble(rng, d, n):
    rho = random_density(make_space([("bob", d)]), rng)
    g = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    w, _ = np.linalg.qr(g)  # n x d, orthonormal columns
    root = sqrtm(rho.matrix)
    members = []
    for m in range(n):
        v = root @ w[m].conj()
        p = float(np.vdot(v, v).real)
        members.append((p, DensityOperator.from_matrix(rho.space, np.outer(v, v.conj()))))
    tot = sum(p for p, _ in members)
    return rho, Ensemble(tuple((p / tot, r) for p, r in members))


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_random_steering_3d_4_members(seed):
    rng = np.random.default_rng(seed)
    rho, ens = random_ensemble(rng, 3, 4)
    purif, obs, rep = steer(rho, ens)
    assert rep.verdict == "pass", rep.metrics
    # brute-force conditioning
    for val, p, cond in steering_outcomes(purif, obs, "alice"):
        i = int(round(val))
        assert p == pytest.approx(ens.members[i][0], abs=1e-9)
        assert np.abs(cond.matrix - ens.members[i][1].matrix).sum() / 2 <= 1e-8
    # ensemble-level no-signaling
    avg = sum(p * c.matrix for _, p, c in steering_outcomes(purif, obs, "alice") if c)
    assert np.max(np.abs(avg - rho.matrix)) <= 1e-9


def test_steering_mixed_members():
    rng = np.random.default_rng(12)
    rho = random_density(make_space([("bob", 3)]), rng)
    w, v = np.linalg.eigh(rho.matrix)
    a = DensityOperator.from_matrix(rho.space, w[0] * np.outer(v[:, 0], v[:, 0].conj())
                                    + w[1] * np.outer(v[:, 1], v[:, 1].conj()))
    b = DensityOperator.from_matrix(rho.space, np.outer(v[:, 2], v[:, 2].conj()))
    ens = Ensemble(((w[0] + w[1], a), (w[2], b)))
    _, _, rep = steer(rho, ens)
    assert rep.verdict == "pass"


def test_steer_rejects_wrong_average():
    half = DensityOperator(Q, np.eye(2) / 2)
    bad = Ensemble(((1.0, ket(1, 0).density()),))
    with pytest.raises(ValueError):
        steer(half, bad)


# ---------------------------------------------------------------- bit commitment


def test_commitment_ensembles_same_marginal():
    ens, marginal, kets = commitment_ensembles(Lattice(8), 1.0)
    assert np.allclose(ens[0].average(), ens[1].average())
    assert np.allclose(marginal.matrix, ens[0].average())
    with pytest.raises(ValueError):
        commitment_ensembles(Lattice(2), 1.0)


def test_bit_commitment_unitary_cheat_succeeds():
    for bit in (0, 1):
        rep = bit_commitment_demo(bit, "unitary", bob_params(20.0), 1.0, master_seed=0,
                                  n_runs=3)
        assert rep.metrics["cheat_success"] == pytest.approx(1.0, abs=1e-9)
        assert rep.metrics["reveal_pass_prob"] == pytest.approx(1.0, abs=1e-9)
        assert rep.verdict == "pass"


def test_bit_commitment_grw_zero_particles_equals_unitary():
    a = bit_commitment_demo(1, "grw", bob_params(0.0), 5.0, master_seed=3, n_runs=5)
    b = bit_commitment_demo(1, "unitary", bob_params(0.0), 5.0, master_seed=3, n_runs=5)
    assert a.metrics == b.metrics


def test_bit_commitment_grw_binding():
    rep = bit_commitment_demo(1, "grw", bob_params(20.0), 1.0, master_seed=4, n_runs=500)
    assert rep.metrics["cheat_success"] == 0.0
    assert rep.metrics["analytic_no_jump"] == pytest.approx(FROZEN["no_jump_e_minus_20"],
                                                            rel=1e-12)
    assert rep.metrics["reveal_pass_prob"] == pytest.approx(0.5, abs=1e-9)
    assert rep.verdict == "violation-detected"
    assert {"event": "binding", "commitment_binding_before_reveal": True} in rep.transcript


def test_bit_commitment_partial_collapse_statistics():
    # N t / tau = 1: cheat works exactly in the no-jump runs
    rep = bit_commitment_demo(0, "grw", bob_params(1.0), 1.0, master_seed=6, n_runs=2000)
    m = rep.metrics
    assert m["cheat_success"] == pytest.approx(m["no_jump_fraction"], abs=1e-12)
    sigma = math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / 2000)
    assert abs(m["cheat_success"] - math.exp(-1)) <= 3 * sigma


def test_bit_commitment_errors():
    with pytest.raises(ValueError):
        bit_commitment_demo(0, "magic", bob_params(1.0), 1.0, master_seed=0)
    with pytest.raises(ValueError):
        bit_commitment_demo(2, "grw", bob_params(1.0), 1.0, master_seed=0)
