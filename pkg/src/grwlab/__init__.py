"""Collapse vs no-collapse dynamics: GRW jumps, decoherence, no-go protocols,
and an O-type Wigner's-friend experiment on finite tensor-product spaces."""

from .hilbert import (DensityOperator, Observable, SpaceSpec, StateVector, born_probabilities,
                      eigendecompose, embed, make_space, partial_trace, project, tensor,
                      trace_distance)
from .dynamics import (DecoherenceSpec, Hamiltonian, decohere, measurement_coupling,
                       schrodinger_step)
from .grw import (GrwParams, Lattice, apply_jump, evolve_grw, grw_channel,
                  jump_center_distribution, localization_factor, total_jump_rate)
from .channels import Channel, Dilation, apply_channel, stinespring_dilate, verify_dilation
from .protocols import (Ensemble, ProtocolReport, attempt_cloning, bit_commitment_demo,
                        check_no_signaling, steer)
from .wigner import (WignerConfig, WignerResult, build_initial, extend_with_o2, measure_o,
                     o_observable, run_experiment, run_spin_measurement)

__version__ = "0.1.0"

__all__ = [
    "DensityOperator", "Observable", "SpaceSpec", "StateVector", "born_probabilities",
    "eigendecompose", "embed", "make_space", "partial_trace", "project", "tensor",
    "trace_distance", "DecoherenceSpec", "Hamiltonian", "decohere", "measurement_coupling",
    "schrodinger_step", "GrwParams", "Lattice", "apply_jump", "evolve_grw", "grw_channel",
    "jump_center_distribution", "localization_factor", "total_jump_rate", "Channel",
    "Dilation", "apply_channel", "stinespring_dilate", "verify_dilation", "Ensemble",
    "ProtocolReport", "attempt_cloning", "bit_commitment_demo", "check_no_signaling",
    "steer", "WignerConfig", "WignerResult", "build_initial", "extend_with_o2", "measure_o",
    "o_observable", "run_experiment", "run_spin_measurement",
]
