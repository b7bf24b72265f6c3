"""No signaling, no cloning, steering and bit commitment, with and without
collapse on the party who holds the purification.

Run: python demos/03_no_go_protocols.py
"""
import numpy as np

from grwlab.channels import Channel
from grwlab.grw import GrwParams, Lattice
from grwlab.hilbert import DensityOperator, StateVector, make_space
from grwlab.protocols import (Ensemble, attempt_cloning, bit_commitment_demo,
                              check_no_signaling, steer)

ab = make_space([("alice", 2), ("bob", 2)])
bell = StateVector.normalized(ab, [1, 0, 0, 1]).density()
rep = check_no_signaling(bell, [Channel.dephasing(make_space([("alice", 2)]))])
print(f"no signaling: Alice measures half a Bell pair, Bob's state moves by "
      f"{rep.metrics['max_trace_distance']:.1e}")

q = make_space([("q", 2)])
zero, one = StateVector.basis(q, {"q": 0}), StateVector.basis(q, {"q": 1})
plus = StateVector.normalized(q, [1, 1])
print(f"cloning |0>,|1>: {attempt_cloning(zero, one).verdict}")
imp = attempt_cloning(zero, plus)
print(f"cloning |0>,|+>: {imp.verdict}, residual {imp.metrics['residual']:.6f}")

b = make_space([("bob", 2)])
half = DensityOperator(b, np.eye(2) / 2)
for name, kets in (("z", ([1, 0], [0, 1])), ("x", ([1, 1], [1, -1]))):
    ens = Ensemble(tuple((0.5, StateVector.normalized(b, k).density()) for k in kets))
    print(f"steering into the {name} ensemble: {steer(half, ens)[2].verdict}")

print("\nbit commitment: Alice commits to 0 and later tries to reveal 1")
for n in (0.0, 1.0, 5.0, 20.0):
    params = GrwParams(delta=1.0, tau=1.0, particle_counts={"bob": n},
                       lattices={"bob": Lattice(16)})
    regime = "unitary" if n == 0 else "grw"
    r = bit_commitment_demo(0, regime, params, 1.0, master_seed=4, n_runs=2000)
    print(f"  N t / tau = {n:4.0f}  cheat success {r.metrics['cheat_success']:.4f}"
          f"  (no-jump probability {r.metrics['analytic_no_jump']:.3g})")
