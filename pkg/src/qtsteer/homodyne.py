"""Diffusive unravellings of resonance fluorescence.

Lab (interaction) frame: interference with a strong local oscillator of
phase phi turns the decay channel into a diffusive measurement driven by a
complex Wiener increment dZ with

    <|dZ|^2> = eta dt,      <dZ^2> = upsilon dt,  |upsilon| <= eta,

where upsilon = e^{2 i phi} |upsilon| selects how quadrature-specific the
monitoring is: X homodyne is (eta, +eta), Y homodyne (eta, -eta), and
quantum-state diffusion the (1, 0) member.  The conditional state follows
the normalized nonlinear equation

    drho = L rho dt + sqrt(gamma) H[dZ* sigma_minus] rho,
    H[c] rho = c rho + rho c^dag - Tr[c rho + rho c^dag] rho.

Secular frame (Omega >> gamma): Y homodyne with detector bandwidth >> Omega
resolves the three fluorescence bands into one real noise (central band) and
one irreducibly complex noise (sidebands); the conditional state stays in the
x = 0 plane of the Bloch sphere.

Steppers are Euler-Maruyama (weak order 1) on Bloch components, renormalized
each step, with positivity overshoot clamped back onto the Bloch ball.  The
overshoot of an EM step scales with gamma*dt, so the clamp threshold does
too; genuinely oversized steps raise StepSizeError.

Ensemble engines advance fixed-size chunks of trajectories, each chunk on an
RNG substream keyed by (seed, tag, chunk index), and write results into
pre-allocated slots.  Worker processes therefore cannot change any output,
only the wall time.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bloch import BlochState
from .lindblad import SimConfig
from .records import TrajectoryRecord
from .seeding import substream

__all__ = [
    "DiffusiveSpec",
    "NoiseIncrement",
    "StepSizeError",
    "x_homodyne",
    "y_homodyne",
    "y_secular",
    "qsd",
    "sample_noise",
    "sample_noise_batch",
    "diffusive_step",
    "secular_y_step",
    "homodyne_states_at",
    "homodyne_stationary_samples",
    "run_homodyne_trajectory",
    "default_dt",
]

CHUNK = 1024                # trajectories per RNG substream (fixed layout)


class StepSizeError(RuntimeError):
    """Positivity overshoot beyond what an Euler-Maruyama step can produce."""


def _step_clamp_limit(gamma: float, dt: float) -> float:
    # EM overshoot per step is O(gamma dt * xi^2) for standard-normal xi;
    # 60 covers xi^2 tails far beyond anything seen in ~1e12 draws.
    return 1e-6 + 60.0 * gamma * dt


@dataclass(frozen=True)
class DiffusiveSpec:
    """One member (eta, upsilon) of the diffusive monitoring family."""

    eta: float
    upsilon: complex = 0.0
    frame: str = "lab"

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if abs(self.upsilon) > self.eta + 1e-12:
            raise ValueError("|upsilon| must not exceed eta")
        if self.frame not in ("lab", "secular_y"):
            raise ValueError(f"unknown frame {self.frame!r}")

    @property
    def phi(self) -> float:
        """LO quadrature phase, upsilon = e^{2 i phi} |upsilon|."""
        if abs(self.upsilon) == 0.0:
            return 0.0
        return cmath.phase(self.upsilon) / 2.0


def x_homodyne(eta: float) -> DiffusiveSpec:
    return DiffusiveSpec(eta, complex(eta), "lab")


def y_homodyne(eta: float) -> DiffusiveSpec:
    return DiffusiveSpec(eta, complex(-eta), "lab")


def y_secular(eta: float) -> DiffusiveSpec:
    return DiffusiveSpec(eta, complex(-eta), "secular_y")


def qsd(eta: float = 1.0) -> DiffusiveSpec:
    """Quadrature-unselective monitoring; (1, 0) is quantum state diffusion."""
    return DiffusiveSpec(eta, 0.0, "lab")


def default_dt(spec: DiffusiveSpec, omega: float) -> float:
    if spec.frame == "secular_y":
        return 1e-3
    return min(1e-3, 1e-2 / max(1.0, omega))


@dataclass(frozen=True)
class NoiseIncrement:
    """Noise increments for one step: dZ (lab), dV and dW_x (secular)."""

    dZ: complex
    dV: complex
    dW_x: float


def _ab(spec: DiffusiveSpec) -> tuple[float, float]:
    va = abs(spec.upsilon)
    return math.sqrt((spec.eta + va) / 2.0), math.sqrt((spec.eta - va) / 2.0)


def sample_noise(spec: DiffusiveSpec, dt: float, rng) -> NoiseIncrement:
    """Draw one step's increments with the spec's second moments.

    dZ = e^{i phi}(a dW1 + i b dW2) with a = sqrt((eta+|v|)/2),
    b = sqrt((eta-|v|)/2) gives <|dZ|^2> = eta dt and <dZ^2> = upsilon dt
    by construction.  dV is an independent unit complex increment and dW_x an
    independent real one (used by the secular stepper).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    sdt = math.sqrt(dt)
    a, b = _ab(spec)
    w1, w2, v1, v2, wx = rng.normal(0.0, sdt, 5)
    dz = cmath.exp(1j * spec.phi) * (a * w1 + 1j * b * w2)
    dv = (v1 + 1j * v2) / math.sqrt(2.0)
    return NoiseIncrement(dZ=dz, dV=dv, dW_x=wx)


def sample_noise_batch(spec: DiffusiveSpec, dt: float, size: int, rng) -> dict:
    """Vectorized :func:`sample_noise`; returns arrays keyed dZ, dV, dW_x."""
    sdt = math.sqrt(dt)
    a, b = _ab(spec)
    w = rng.normal(0.0, sdt, (5, size))
    dz = cmath.exp(1j * spec.phi) * (a * w[0] + 1j * b * w[1])
    dv = (w[2] + 1j * w[3]) / math.sqrt(2.0)
    return {"dZ": dz, "dV": dv, "dW_x": w[4]}


# ---------------------------------------------------------------------------
# Elementary Euler-Maruyama updates on Bloch components (array-friendly)
# ---------------------------------------------------------------------------

def _lab_update(x, y, z, re_dz, im_dz, omega, gamma, dt):
    """Lab-frame EM update of normalized components (returns new arrays)."""
    k = re_dz * x - im_dz * y
    sg = math.sqrt(gamma)
    nx = x - 0.5 * gamma * x * dt + sg * (re_dz * (1.0 + z) - k * x)
    ny = y + (-0.5 * gamma * y - omega * z) * dt + sg * (-im_dz * (1.0 + z) - k * y)
    nz = z + (omega * y - gamma * (z + 1.0)) * dt - sg * k * (1.0 + z)
    return nx, ny, nz


def _secular_y_update(x, y, z, dw1, dw2, dwx, eta, gamma, dt,
                      rotating_phase: float = 0.0):
    """Secular-frame Y-homodyne EM update of normalized components.

    The sideband increment enters only through u + i v = -e^{i psi} dV; any
    phase psi is a rotating-frame time-origin convention and leaves all
    observable statistics unchanged (it just rotates the two real noises into
    each other).  The x component is multiplied, never fed, so x = 0 is
    preserved exactly.
    """
    if rotating_phase != 0.0:
        c, s = math.cos(rotating_phase), math.sin(rotating_phase)
        dw1, dw2 = c * dw1 - s * dw2, s * dw1 + c * dw2
    u = -dw1 / math.sqrt(2.0)
    v = -dw2 / math.sqrt(2.0)
    se = math.sqrt(eta * gamma)
    k = v * z + u * y
    nx = x - 0.5 * gamma * x * dt - se * k * x
    ny = y - 0.75 * gamma * y * dt + se * (u + dwx * z - k * y)
    nz = z - 0.75 * gamma * z * dt + se * (v - dwx * y - k * z)
    return nx, ny, nz


def _renormalize(x, y, z, gamma, dt):
    """Clamp Bloch length onto the ball; raise on non-EM-sized overshoot."""
    r = np.sqrt(x * x + y * y + z * z)
    over = r - 1.0
    limit = _step_clamp_limit(gamma, dt)
    bad = over > limit
    if np.any(bad):
        raise StepSizeError(
            f"positivity overshoot {float(np.max(over)):.3e} exceeds {limit:.3e};"
            " reduce dt")
    f = np.where(r > 1.0, 1.0 / np.maximum(r, 1e-300), 1.0)
    return x * f, y * f, z * f


def diffusive_step(state: BlochState, spec: DiffusiveSpec, omega: float,
                   gamma: float, dt: float, noise: NoiseIncrement) -> BlochState:
    """One lab-frame EM step of the normalized conditional state."""
    if spec.frame != "lab":
        raise ValueError("diffusive_step is the lab-frame stepper")
    if not state.is_normalized():
        raise ValueError("state must be normalized")
    if dt > 1e-2 / max(1.0, omega):
        raise StepSizeError(f"dt={dt} does not resolve omega={omega}")
    x, y, z = _lab_update(state.x, state.y, state.z,
                          noise.dZ.real, noise.dZ.imag, omega, gamma, dt)
    x, y, z = _renormalize(np.asarray(x), np.asarray(y), np.asarray(z), gamma, dt)
    return BlochState(1.0, float(x), float(y), float(z))


def secular_y_step(state: BlochState, eta: float, gamma: float, dt: float,
                   noise: NoiseIncrement,
                   rotating_phase: float = 0.0) -> BlochState:
    """One secular-frame Y-homodyne EM step of the normalized state."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if not state.is_normalized():
        raise ValueError("state must be normalized")
    dw1 = math.sqrt(2.0) * noise.dV.real
    dw2 = math.sqrt(2.0) * noise.dV.imag
    x, y, z = _secular_y_update(state.x, state.y, state.z,
                                dw1, dw2, noise.dW_x, eta, gamma, dt,
                                rotating_phase)
    x, y, z = _renormalize(np.asarray(x), np.asarray(y), np.asarray(z), gamma, dt)
    return BlochState(1.0, float(x), float(y), float(z))


# ---------------------------------------------------------------------------
# Vectorized ensemble engines
# ---------------------------------------------------------------------------

def _chunk_plan(n: int):
    return [(i // CHUNK, i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def _initial_components(initial, m):
    x0, y0, z0 = initial
    return np.full(m, x0), np.full(m, y0), np.full(m, z0)


def _states_chunk(args):
    """One chunk of the fixed-time ensemble; top-level for process pools."""
    (spec, omega, gamma, dt, idx_grid, n_steps, initial, seed, seed_tag, ci, m) = args
    rng = substream(seed, seed_tag, ci)
    x, y, z = _initial_components(initial, m)
    out = np.empty((m, len(idx_grid), 3))
    secular = spec.frame == "secular_y"
    a, b = _ab(spec)
    cphi, sphi = math.cos(spec.phi), math.sin(spec.phi)
    sdt = math.sqrt(dt)
    for i in range(n_steps):
        if secular:
            w = rng.normal(0.0, sdt, (3, m))
            x, y, z = _secular_y_update(x, y, z, w[0], w[1], w[2],
                                        spec.eta, gamma, dt)
        else:
            w = rng.normal(0.0, sdt, (2, m))
            re = a * cphi * w[0] - b * sphi * w[1]
            im = a * sphi * w[0] + b * cphi * w[1]
            x, y, z = _lab_update(x, y, z, re, im, omega, gamma, dt)
        x, y, z = _renormalize(x, y, z, gamma, dt)
        for j in np.flatnonzero(idx_grid == i):
            out[:, j, 0] = x
            out[:, j, 1] = y
            out[:, j, 2] = z
    return out


def _stationary_chunk(args):
    """One chunk of the stationary-sampling ensemble; top-level for pools."""
    (spec, omega, gamma, dt, burn_in, stride, samples_per_traj, n_steps,
     initial, seed, seed_tag, ci, m) = args
    rng = substream(seed, seed_tag, ci)
    x, y, z = _initial_components(initial, m)
    jitter = rng.random(m)
    t_samp = burn_in + (jitter[None, :] + np.arange(samples_per_traj)[:, None]) * stride
    i_samp = np.minimum((t_samp / dt).astype(int), n_steps - 1)
    samples = np.empty((m * samples_per_traj, 3))
    halts = np.empty(m * samples_per_traj)
    secular = spec.frame == "secular_y"
    a, b = _ab(spec)
    cphi, sphi = math.cos(spec.phi), math.sin(spec.phi)
    sdt = math.sqrt(dt)
    for i in range(n_steps):
        if secular:
            w = rng.normal(0.0, sdt, (3, m))
            x, y, z = _secular_y_update(x, y, z, w[0], w[1], w[2],
                                        spec.eta, gamma, dt)
        else:
            w = rng.normal(0.0, sdt, (2, m))
            re = a * cphi * w[0] - b * sphi * w[1]
            im = a * sphi * w[0] + b * cphi * w[1]
            x, y, z = _lab_update(x, y, z, re, im, omega, gamma, dt)
        x, y, z = _renormalize(x, y, z, gamma, dt)
        rows, cols = np.nonzero(i_samp == i)
        if len(rows):
            flat = cols * samples_per_traj + rows
            samples[flat, 0] = x[cols]
            samples[flat, 1] = y[cols]
            samples[flat, 2] = z[cols]
            halts[flat] = t_samp[rows, cols]
    return samples, halts


def _run_chunks(fn, arg_list, workers: int):
    if workers <= 1 or len(arg_list) <= 1:
        return [fn(a) for a in arg_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, arg_list))


DEFAULT_INITIAL = (0.0, 0.0, -1.0)    # ground state


def homodyne_states_at(spec: DiffusiveSpec, omega: float, t_grid, n_traj: int,
                       seed: int, gamma: float = 1.0, dt: float | None = None,
                       initial=DEFAULT_INITIAL, seed_tag: int = 21,
                       workers: int = 1) -> np.ndarray:
    """Conditional Bloch vectors of n_traj trajectories at fixed times.

    Returns an (n_traj, len(t_grid), 3) array; the trajectory mean must agree
    with the matching-frame master equation from the same initial state.
    """
    if dt is None:
        dt = default_dt(spec, omega)
    t_grid = np.asarray(t_grid, dtype=float)
    idx_grid = np.maximum(np.rint(t_grid / dt).astype(int) - 1, 0)
    n_steps = int(idx_grid.max()) + 1
    plan = _chunk_plan(n_traj)
    args = [(spec, omega, gamma, dt, idx_grid, n_steps, tuple(initial),
             seed, seed_tag, ci, hi - lo) for ci, lo, hi in plan]
    blocks = _run_chunks(_states_chunk, args, workers)
    return np.concatenate(blocks, axis=0)


def homodyne_stationary_samples(spec: DiffusiveSpec, omega: float, n_traj: int,
                                seed: int, gamma: float = 1.0,
                                dt: float | None = None,
                                burn_in: float = 20.0, t_final: float = 40.0,
                                samples_per_traj: int = 8,
                                initial=DEFAULT_INITIAL, seed_tag: int = 22,
                                workers: int = 1):
    """Stationary conditional-state samples with decorrelating stride.

    Each trajectory is sampled samples_per_traj times on a jittered-stratified
    grid over (burn_in, t_final] (uniform marginal, stride >= 1/gamma), which
    realizes halt times drawn uniformly well past the relaxation time.
    Returns (samples (n, 3), halt_times (n,)).
    """
    if dt is None:
        dt = default_dt(spec, omega)
    span = t_final - burn_in
    stride = span / samples_per_traj
    if stride < 1.0 / gamma - 1e-9:
        raise ValueError("sampling stride below the 1/gamma decorrelation scale")
    n_steps = int(round(t_final / dt))
    plan = _chunk_plan(n_traj)
    args = [(spec, omega, gamma, dt, burn_in, stride, samples_per_traj,
             n_steps, tuple(initial), seed, seed_tag, ci, hi - lo)
            for ci, lo, hi in plan]
    blocks = _run_chunks(_stationary_chunk, args, workers)
    samples = np.concatenate([b[0] for b in blocks], axis=0)
    halts = np.concatenate([b[1] for b in blocks])
    return samples, halts


def run_homodyne_trajectory(config: SimConfig, spec: DiffusiveSpec,
                            rng_seed: int | None = None) -> TrajectoryRecord:
    """One trajectory's stationary samples as a TrajectoryRecord."""
    seed = config.seed if rng_seed is None else rng_seed
    span = config.t_final - config.burn_in
    per = max(int(span * config.gamma), 1)  # stride 1/gamma
    samples, halts = homodyne_stationary_samples(
        spec, config.omega, 1, seed, gamma=config.gamma, dt=config.dt,
        burn_in=config.burn_in, t_final=config.t_final, samples_per_traj=per)
    scheme = "y_secular" if spec.frame == "secular_y" else (
        "x_lab" if spec.upsilon.real >= 0 and spec.upsilon.imag == 0 else "y_lab")
    return TrajectoryRecord(scheme, spec.eta, halts, samples,
                            seed_keys=(seed,))
