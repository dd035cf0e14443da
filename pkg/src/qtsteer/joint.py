"""Simultaneous jump + Y-homodyne monitoring of one atom (secular frame).

When the detected fraction is split between a spectral click scheme at
efficiency eta_s and Y homodyne at eta_y (eta_s + eta_y <= 1), the atom's
best description conditions on both records at once.  Each side's own filter
then sees only a coarse-graining of that doubly-conditioned ensemble, so the
steering sum built from the two filters cannot exceed 1: this engine is the
operational form of that bound and the null model the steering test must
fail to beat.

Implementation notes.  The true state follows the secular generator plus the
click back-action at eta_s (feeding terms removed between clicks, projective
collapse onto an sx eigenstate at each click, LO feedback as in the pure
click scheme) plus the homodyne back-action at eta_y driven by fresh Wiener
increments.  The click filter is the closed-form two-population solution
restarted at each click, since clicks are delivered to that observer.  The
homodyne filter integrates the same Y-homodyne equation but driven by its
innovations: the measured currents are

    dI_1 = -sqrt(eta_y gamma / 2) <sy>_true dt + dW_1   (sideband quadrature)
    dI_2 = -sqrt(eta_y gamma / 2) <sz>_true dt + dW_2   (sideband quadrature)
    dI_x = dW_x                                          (central band; no mean)

and the filter replaces each dW with dI minus its own predicted mean.
"""

from __future__ import annotations

import math

import numpy as np

from .said import NoJumpSolution
from .steering import ConditionedEnsemble, _outcomes_batch, N_PER_AXIS
from .homodyne import _secular_y_update, _renormalize
from .seeding import substream

__all__ = ["build_joint_ensembles"]

CHUNK = 1024


def _joint_chunk(eta_s, eta_y, gamma, dt, n_steps, m, rng, i_samp, t_samp,
                 collect):
    """Advance one chunk of m doubly-conditioned trajectories."""
    # true state and its LO bookkeeping; a click is declared at t=0
    x = np.ones(m)
    y = np.zeros(m)
    z = np.zeros(m)
    lo = np.ones(m)
    age = np.zeros(m)
    yf = np.zeros(m)
    zf = np.zeros(m)
    sol = NoJumpSolution(eta_s, 1.0, 0.0, gamma)
    q = 0.25 * gamma * eta_s
    sey = math.sqrt(eta_y * gamma)
    cur = math.sqrt(eta_y * gamma / 2.0)
    sdt = math.sqrt(dt)
    for i in range(n_steps):
        w = rng.normal(0.0, sdt, (3, m))
        u_jump = rng.random(m)
        u_chan = rng.random(m)

        p_lo = 0.5 * (1.0 + lo * x)
        # click back-action on the true state, no-click branch (normalized):
        # Sum_k J_k rho has Bloch parts (1 + 4 p_lo; -x + 4 lo p_lo, 0, 0)
        w_j = 1.0 + 4.0 * p_lo
        x_j = -x + 4.0 * lo * p_lo
        nx = x - 0.5 * gamma * x * dt - q * (x_j - w_j * x) * dt
        ny = y - 0.75 * gamma * y * dt + q * w_j * y * dt
        nz = z - 0.75 * gamma * z * dt + q * w_j * z * dt
        # homodyne back-action at eta_y, shared with the plain Y stepper
        if eta_y > 0.0:
            u = -w[0] / math.sqrt(2.0)
            v = -w[1] / math.sqrt(2.0)
            k = v * z + u * y
            nx = nx - sey * k * x
            ny = ny + sey * (u + w[2] * z - k * y)
            nz = nz + sey * (v - w[2] * y - k * z)
        nx, ny, nz = _renormalize(nx, ny, nz, gamma, dt)

        # homodyne filter: same equation driven by innovations
        if eta_y > 0.0:
            dw1 = w[0] + cur * (yf - y) * dt
            dw2 = w[1] + cur * (zf - z) * dt
            _, nyf, nzf = _secular_y_update(np.zeros(m), yf, zf,
                                            dw1, dw2, w[2], eta_y, gamma, dt)
            _, nyf, nzf = _renormalize(np.zeros(m), nyf, nzf, gamma, dt)
        else:
            nyf, nzf = yf, zf

        # click decision from the true state's channel rates
        rate = q * (1.0 + 4.0 * p_lo)
        clicked = u_jump < rate * dt
        if clicked.any():
            p_plus = 0.5 * (1.0 + x[clicked])
            p_c = 2.0 * (1.0 + (lo * x)[clicked])
            tot = 1.0 + p_c
            uc = u_chan[clicked] * tot
            side_minus = uc < p_plus
            central = (uc >= p_plus) & (uc < p_plus + p_c)
            # sideband clicks project onto the fixed +/- eigenstates, the
            # central click onto the current LO eigenstate; the LO feedback
            # then always matches the freshly prepared eigenstate
            post = np.where(side_minus, -1.0,
                            np.where(central, lo[clicked], 1.0))
            nx[clicked] = post
            ny[clicked] = 0.0
            nz[clicked] = 0.0
            lo[clicked] = post
            age[clicked] = -dt  # advanced to 0 below

        x, y, z, yf, zf = nx, ny, nz, nyf, nzf
        age = age + dt

        rows, cols = np.nonzero(i_samp == i)
        if len(rows):
            collect(rows, cols, x, y, z,
                    lo * sol.x_aligned(age), yf, zf, t_samp)
    return None


def build_joint_ensembles(eta_s: float, eta_y: float, n_traj: int, seed: int,
                          gamma: float = 1.0, dt: float = 1e-3,
                          burn_in: float = 20.0, t_final: float = 40.0,
                          samples_per_traj: int = 8,
                          n_per_axis: int = N_PER_AXIS):
    """Doubly-conditioned runs -> (click-side, homodyne-side) ensembles.

    Both ensembles describe the same runs: labels come from the respective
    filters, Bob's outcomes are drawn from the true doubly-conditioned state.
    Requires eta_s + eta_y <= 1 (the remaining fraction is lost).
    """
    if eta_s < 0 or eta_y < 0 or eta_s + eta_y > 1.0 + 1e-12:
        raise ValueError("need eta_s, eta_y >= 0 with eta_s + eta_y <= 1")
    if eta_s == 0.0:
        raise ValueError("eta_s = 0 never clicks; use the plain Y ensemble instead")
    span = t_final - burn_in
    stride = span / samples_per_traj
    if stride < 1.0 / gamma:
        raise ValueError("sampling stride below the decorrelation scale")
    n_steps = int(round(t_final / dt))
    n_rec = n_traj * samples_per_traj

    true_states = np.empty((n_rec, 3))
    s_labels = np.empty(n_rec)
    y_labels = np.empty((n_rec, 2))
    halts = np.empty(n_rec)

    for ci in range(0, n_traj, CHUNK):
        m = min(CHUNK, n_traj - ci)
        rng = substream(seed, 51, ci // CHUNK)
        jitter = rng.random(m)
        t_samp = burn_in + (jitter[None, :] + np.arange(samples_per_traj)[:, None]) * stride
        i_samp = np.minimum((t_samp / dt).astype(int), n_steps - 1)

        def collect(rows, cols, x, y, z, xs_f, yf, zf, t_samp, base=ci):
            flat = (base + cols) * samples_per_traj + rows
            true_states[flat, 0] = x[cols]
            true_states[flat, 1] = y[cols]
            true_states[flat, 2] = z[cols]
            s_labels[flat] = xs_f[cols]
            y_labels[flat, 0] = yf[cols]
            y_labels[flat, 1] = zf[cols]
            halts[flat] = t_samp[rows, cols]

        _joint_chunk(eta_s, eta_y, gamma, dt, n_steps, m, rng, i_samp, t_samp,
                     collect)

    orng = substream(seed, 52)
    out_x = _outcomes_batch(true_states[:, 0], n_per_axis, orng)
    out_y = _outcomes_batch(true_states[:, 1], n_per_axis, orng)
    out_z = _outcomes_batch(true_states[:, 2], n_per_axis, orng)
    ens_s = ConditionedEnsemble("said", eta_s, s_labels[:, None], ("x",),
                                halts, outcomes={"x": out_x})
    ens_y = ConditionedEnsemble("y_secular", eta_y, y_labels, ("y", "z"),
                                halts, outcomes={"y": out_y, "z": out_z})
    return ens_s, ens_y
