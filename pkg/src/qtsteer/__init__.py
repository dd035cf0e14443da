"""Monte Carlo trajectory unravellings of a resonantly driven two-level atom
and the two-party steering test that certifies their detector dependence.

The package simulates the same master equation under inequivalent monitoring
schemes, spectrally resolved adaptive photon counting (a jump process) and
X/Y homodyne detection (diffusions), builds the conditioned ensembles an
observer would reconstruct, and evaluates the steering sum whose violation of
1 rules out any measurement-independent pure-state trajectory for the atom.
Analytic results (closed-form no-click evolution, the stationary radial law
of the planar diffusion) back every Monte Carlo estimate.
"""

__version__ = "0.1.0"

from .bloch import (BlochState, JumpKind, JumpOperator, SteeringFunctionals,
                    steering_functionals, apply_jump, normalize)
from .lindblad import (SimConfig, exact_liouvillian, secular_liouvillian,
                       propagate_me, steady_state_lab)
from .said import (SaidState, JumpEvent, Channel, NoJumpSolution,
                   nojump_derivative, sample_waiting_time, run_said_trajectory,
                   said_ex2_analytic, said_ex2_mc)
from .beta_stationary import (beta_drift_diffusion, BetaDensity,
                              stationary_pdf, expected_beta)
from .homodyne import (DiffusiveSpec, NoiseIncrement, x_homodyne, y_homodyne,
                       y_secular, qsd, sample_noise, diffusive_step,
                       secular_y_step, homodyne_states_at,
                       homodyne_stationary_samples, run_homodyne_trajectory)
from .steering import (ConditionedEnsemble, SteeringResult, BinSpec,
                       simulate_bob_outcomes, bin_estimate, steering_sum,
                       critical_eta, pair_steering_sum, build_ensemble,
                       InconclusiveStatistics)
from .joint import build_joint_ensembles
from .records import TrajectoryRecord
