"""Unconditioned master-equation evolution of the driven two-level atom.

Two generators are provided, both acting on Bloch coordinates (w, x, y, z):

* the lab (interaction-frame) Liouvillian of resonant driving plus decay,
  with Rabi frequency Omega and decay rate gamma, and
* the secular generator obtained in the Omega-rotating frame for
  Omega >> gamma, a sum of three dissipators (the two fluorescence
  sidebands and the central band) with no Hamiltonian part.

Every conditioned ensemble produced elsewhere in the package must average
back to the flow generated here; the tests use that as the master oracle.

gamma = 1 fixes the unit of time throughout the package; the rotating-frame
phase reference t0 is fixed to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochState, check_positivity

__all__ = ["SimConfig", "exact_liouvillian", "secular_liouvillian",
           "propagate_me", "steady_state_lab", "lab_rhs", "secular_rhs"]

TRACE_TOL = 1e-10


@dataclass
class SimConfig:
    """Run parameters, all rates/times in units of gamma (= 1/gamma)."""

    omega: float = 5.0
    gamma: float = 1.0
    dt: float = 1e-3
    t_final: float = 40.0
    seed: int = 2024
    n_traj: int = 1000
    burn_in: float = 20.0

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_final <= 0.0:
            raise ValueError("t_final must be positive")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")

    def validate_lab_dt(self):
        """Lab-frame stepping must resolve the Rabi oscillation."""
        limit = 1e-2 / max(1.0, self.omega)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt} too large for lab frame at omega={self.omega}"
                f" (needs dt <= {limit:g})")


def lab_rhs(v: np.ndarray, omega: float, gamma: float) -> np.ndarray:
    """Lab Liouvillian on a Bloch 4-vector [w, x, y, z]."""
    w, x, y, z = v
    return np.array([
        0.0,
        -0.5 * gamma * x,
        -0.5 * gamma * y - omega * z,
        omega * y - gamma * (z + w),
    ])


def secular_rhs(v: np.ndarray, gamma: float) -> np.ndarray:
    """Secular three-dissipator generator on a Bloch 4-vector."""
    _, x, y, z = v
    return np.array([
        0.0,
        -0.5 * gamma * x,
        -0.75 * gamma * y,
        -0.75 * gamma * z,
    ])


def exact_liouvillian(state: BlochState, omega: float,
                      gamma: float = 1.0) -> np.ndarray:
    """d/dt of (w, x, y, z) under driving at omega and decay at gamma."""
    return lab_rhs(np.array([state.w, state.x, state.y, state.z]), omega, gamma)


def secular_liouvillian(state: BlochState, gamma: float = 1.0) -> np.ndarray:
    """d/dt of (w, x, y, z) under the secular generator."""
    return secular_rhs(np.array([state.w, state.x, state.y, state.z]), gamma)


def steady_state_lab(omega: float, gamma: float = 1.0) -> BlochState:
    """Stationary state of the lab-frame master equation."""
    d = gamma * gamma + 2.0 * omega * omega
    return BlochState(1.0, 0.0, 2.0 * omega * gamma / d, -gamma * gamma / d)


def propagate_me(state: BlochState, config: SimConfig,
                 frame: str = "lab") -> BlochState:
    """Propagate the master equation to config.t_final with fixed-step RK4.

    Fixed stepping (rather than adaptive) keeps step sequences deterministic,
    which the reproducibility contract of the trajectory engines relies on.
    """
    if frame == "lab":
        config.validate_lab_dt()
        rhs = lambda v: lab_rhs(v, config.omega, config.gamma)
    elif frame == "secular":
        rhs = lambda v: secular_rhs(v, config.gamma)
    else:
        raise ValueError(f"unknown frame {frame!r}")

    v = np.array([state.w, state.x, state.y, state.z], dtype=float)
    w0 = v[0]
    n_full, rem = divmod(config.t_final, config.dt)
    steps = [config.dt] * int(n_full)
    if rem > 1e-15:
        steps.append(rem)
    for h in steps:
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * h * k1)
        k3 = rhs(v + 0.5 * h * k2)
        k4 = rhs(v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if abs(v[0] - w0) > TRACE_TOL:
        raise RuntimeError(f"trace drifted by {abs(v[0]-w0):.3e} during propagation")
    out = BlochState(*v)
    try:
        return check_positivity(out)
    except Exception as exc:
        raise RuntimeError(f"integrator step too large: {exc}") from exc
