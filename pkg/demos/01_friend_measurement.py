"""An observer A measures a spin P; an outside agent then measures the joint
observable O whose +1 eigenstate is the entangled P+A record state.

Run: python demos/01_friend_measurement.py [n_trials]
"""
import sys

from grwlab.wigner import WignerConfig, o_commutators, recoherence_check, run_experiment

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
alpha, beta = 0.6, 0.8

print(f"spin state {alpha}|+z> + {beta}|-z>, {n} trials per regime\n")
cfg = WignerConfig(alpha=alpha, beta=beta, n_trials=n, master_seed=1)
comm = o_commutators(cfg)
print(f"||[O, spin_z]|| = {comm['spin_z']:.3f}, ||[O, memory]|| = {comm['memory']:.3f}")
print("O is incompatible with both the spin and the memory reading.\n")

for regime in ("unitary", "grw", "decoherence"):
    res = run_experiment(WignerConfig(alpha=alpha, beta=beta, regime=regime, n_trials=n,
                                      master_seed=1))
    line = f"{regime:12s} P(O=+1) = {res.p_o_plus:.4f} +- {res.p_o_plus_stderr:.4f}"
    if regime == "grw":
        up = res.conditionals["up"]
        line += f"   given 'up': {up['est']:.4f} (|alpha|^2 = {alpha**2:.2f})"
    print(line)

refs = res.analytic_refs
print(f"\nreference values: no collapse 1, collapsed mixture {refs['mixture']:.4f}")

rc = recoherence_check(cfg)
print("\nDecoherence only hides the coherence in E:")
print(f"  O on P+A          -> {rc['p_plus_PA']:.4f}")
print(f"  eigen-observable on P+A+E -> {rc['p_plus_PAE']:.10f}")
