"""A collapse step is a channel, so it has a unitary dilation with an ancilla.

Run: python demos/04_ancilla.py
"""
from grwlab.channels import (apply_channel, iterate, iterated_reduced, stinespring_dilate,
                             verify_dilation)
from grwlab.grw import GrwParams, Lattice, grw_channel, trajectory_rng
from grwlab.hilbert import make_space, random_density, trace_distance

m = 6
space = make_space([("X", m)])
params = GrwParams(delta=1.0, tau=1.0, particle_counts={"X": 1.0},
                   lattices={"X": Lattice(m)})
ch = grw_channel(params, 0.05, space)
dil = stinespring_dilate(ch)
print(f"{ch.n_kraus} Kraus operators, ancilla dimension {dil.env_dim}, "
      f"isometry error {dil.isometry_error():.1e}")

states = [random_density(space, trajectory_rng(0, i)) for i in range(100)]
print(f"max trace distance, channel vs dilation, 100 states: "
      f"{verify_dilation(ch, dil, states):.1e}")

rho = states[0]
for n in range(1, 6):
    d = trace_distance(apply_channel(iterate(ch, n), rho), iterated_reduced(dil, rho, n))
    print(f"  {n} steps with a fresh ancilla each step: distance {d:.1e}")
