"""Spontaneous localization acting on a two-branch pointer state.

Run: python demos/02_collapse_dynamics.py
"""
import math

import numpy as np

from grwlab.experiments import sweep
from grwlab.grw import GrwParams, Lattice, evolve_grw, trajectory_rng
from grwlab.hilbert import StateVector, make_space

m, s0, s1 = 32, 8, 16
space = make_space([("X", m)])
amps = np.zeros(m, complex)
amps[s0], amps[s1] = 0.6, 0.8
psi = StateVector(space, amps)

print("One trajectory of a pointer with N t / tau = 3:")
params = GrwParams(delta=1.0, tau=1.0, particle_counts={"X": 3.0},
                   lattices={"X": Lattice(m)})
traj = evolve_grw(psi, None, params, 1.0, trajectory_rng(0, 0))
for ev in traj.jumps:
    w = {k: round(v, 6) for k, v in ev.branch_weights.items()}
    print(f"  t = {ev.time:.3f}  centre site {ev.site:2d}  branch weights {w}")
final = np.abs(traj.final_state.amplitudes) ** 2
print(f"  final weights: site {s0} {final[s0]:.6f}, site {s1} {final[s1]:.6f}\n")

print("Micro to macro: fraction of trajectories collapsed after t = 1, tau = 1e5")
rows = sweep("grw-trajectory", "particles", [1, 1e2, 1e4, 1e6],
             {"tau": 1e5, "n_trajectories": 4000, "sites": 24, "branch_separation": 6,
              "record_trajectories": 0}, seed=2)
for r in rows:
    print(f"  N = {r['particles']:>9.0f}  collapsed {r['collapse_prob']:.4f}"
          f"  (1 - exp(-N t / tau) = {1 - math.exp(-r['particles'] / 1e5):.4f})")

print("\nOne jump kills the far branch once the separation exceeds a few delta:")
rows = sweep("grw-trajectory", "branch_separation", [1, 2, 3, 4, 6, 8],
             {"sites": 40, "n_trajectories": 10, "record_trajectories": 0}, seed=3)
for r in rows:
    print(f"  separation {r['branch_separation']:>2} delta  "
          f"kill probability {r['single_jump_kill_exact']:.6f}")
