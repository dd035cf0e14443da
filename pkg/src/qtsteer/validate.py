"""Release-gate invariant suite.

Each check exercises one structural property the physics engines must keep:
state-algebra bounds and convexity, conservation laws of the propagators,
closure of the conditioned flows (sx-diagonal for the click scheme, the
x = 0 plane for secular Y homodyne), the noise-family moments and their
decomposition, agreement between the stochastic steppers and the analytic
radial law, the bias correction of the binned estimator, the coarse-graining
bound on the doubly-conditioned null model, master-equation averages, dt
refinement and byte-level determinism of the command layer.

Every check returns (passed, measured, tolerance, detail); the CLI turns the
collection into a JSON report with exit status 1 on any failure.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np

from . import bloch
from .bloch import BlochState, steering_functionals, apply_jump, JumpOperator, JumpKind
from .lindblad import SimConfig, propagate_me, secular_rhs, lab_rhs
from .said import NoJumpSolution, nojump_derivative, SaidState, said_ex2_analytic
from .beta_stationary import beta_drift_diffusion, expected_beta
from .homodyne import (DiffusiveSpec, y_secular, sample_noise_batch,
                       _secular_y_update, _renormalize,
                       homodyne_states_at, homodyne_stationary_samples,
                       y_homodyne)
from .steering import (ConditionedEnsemble, bin_estimate, steering_sum,
                       _outcomes_batch)
from .joint import build_joint_ensembles
from .seeding import substream

__all__ = ["run_all", "CHECKS"]


def _random_states(rng, n):
    """Uniform over the Bloch ball (radius from cube-root law)."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = rng.random(n) ** (1.0 / 3.0)
    return v * r[:, None]


def check_functional_bound(seed=0):
    """f1 + f2 <= 1 over 1e5 random valid states."""
    rng = substream(seed, 61)
    pts = _random_states(rng, 100_000)
    s = (pts ** 2).sum(axis=1)
    worst = float(s.max())
    return worst <= 1.0 + 1e-12, worst, 1.0, "max f1+f2 over the ball"


def check_functional_convexity(seed=0):
    """f1, f2 convex under state mixing."""
    rng = substream(seed, 62)
    a = _random_states(rng, 20_000)
    b = _random_states(rng, 20_000)
    lam = rng.random(20_000)[:, None]
    mix = lam * a + (1 - lam) * b
    worst = -np.inf
    for cols, in (((0,),), ((1, 2),)):
        f_mix = (mix[:, cols] ** 2).sum(axis=1)
        f_a = (a[:, cols] ** 2).sum(axis=1)
        f_b = (b[:, cols] ** 2).sum(axis=1)
        gap = f_mix - (lam[:, 0] * f_a + (1 - lam[:, 0]) * f_b)
        worst = max(worst, float(gap.max()))
    return worst <= 1e-12, worst, 1e-12, "max convexity violation"


def check_me_conservation(seed=0):
    """Trace preservation and positivity of RK4 over 1e4 steps, both frames."""
    rng = substream(seed, 63)
    worst = 0.0
    for frame in ("lab", "secular"):
        for _ in range(4):
            v = _random_states(rng, 1)[0]
            st = BlochState(1.0, *v)
            cfg = SimConfig(omega=5.0, dt=1e-3, t_final=10.0)
            out = propagate_me(st, cfg, frame)
            worst = max(worst, abs(out.w - 1.0))
            if out.bloch_norm() > 1.0 + 1e-9:
                return False, out.bloch_norm(), 1.0 + 1e-9, f"positivity lost in {frame}"
    return worst <= 1e-10, worst, 1e-10, "max trace drift over 1e4 RK4 steps"


def check_me_linearity(seed=0):
    """Propagation commutes with mixing to 1e-10."""
    rng = substream(seed, 64)
    va, vb = _random_states(rng, 2)
    lam = 0.3173
    cfg = SimConfig(omega=5.0, dt=1e-3, t_final=3.0)
    worst = 0.0
    for frame in ("lab", "secular"):
        pa = propagate_me(BlochState(1.0, *va), cfg, frame)
        pb = propagate_me(BlochState(1.0, *vb), cfg, frame)
        pm = propagate_me(BlochState(1.0, *(lam * va + (1 - lam) * vb)), cfg, frame)
        mix = np.array([lam * pa.x + (1 - lam) * pb.x,
                        lam * pa.y + (1 - lam) * pb.y,
                        lam * pa.z + (1 - lam) * pb.z])
        worst = max(worst, float(np.abs(mix - np.array([pm.x, pm.y, pm.z])).max()))
    return worst <= 1e-10, worst, 1e-10, "max linearity defect"


def _nojump_rhs_full(v, eta, lo_sign, gamma=1.0):
    """No-click generator on a full Bloch 4-vector, built from the public
    jump-operator algebra (independent of the 2x2 closed form)."""
    base = secular_rhs(v, gamma)
    st = BlochState(*v)
    j1 = apply_jump(st, JumpOperator(JumpKind.LOWER_PLUS_MINUS))
    jc = apply_jump(st, JumpOperator(
        JumpKind.PROJECTOR_PLUS if lo_sign > 0 else JumpKind.PROJECTOR_MINUS))
    j3 = apply_jump(st, JumpOperator(JumpKind.LOWER_MINUS_PLUS))
    q = 0.25 * gamma * eta
    sub = np.array([j1.w + jc.w + j3.w, j1.x + jc.x + j3.x,
                    j1.y + jc.y + j3.y, j1.z + jc.z + j3.z])
    return base - q * sub


def check_said_xdiag_closure(seed=0):
    """Full-Bloch integration of the no-click flow stays sx-diagonal and
    matches the closed-form two-population solution."""
    eta = 0.65
    v = np.array([1.0, 1.0, 0.0, 0.0])
    dt = 1e-3
    worst_coh = 0.0
    for _ in range(3000):
        k1 = _nojump_rhs_full(v, eta, +1)
        k2 = _nojump_rhs_full(v + 0.5 * dt * k1, eta, +1)
        k3 = _nojump_rhs_full(v + 0.5 * dt * k2, eta, +1)
        k4 = _nojump_rhs_full(v + dt * k3, eta, +1)
        v = v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        worst_coh = max(worst_coh, abs(v[2]), abs(v[3]))
    sol = NoJumpSolution(eta, 1.0, 0.0)
    w_lo, w_anti = sol.populations(3.0)
    got = np.array([0.5 * (v[0] + v[1]), 0.5 * (v[0] - v[1])])
    err = float(np.abs(got - np.array([w_lo, w_anti])).max())
    ok = worst_coh <= 1e-12 and err <= 1e-9
    return ok, max(worst_coh, err), 1e-9, "coherence leak / closed-form mismatch"


def check_secular_confinement(seed=0):
    """x stays exactly 0 over 1e6 secular Y-homodyne steps."""
    rng = substream(seed, 65)
    m = 1000
    x = np.zeros(m)
    y = rng.uniform(-0.5, 0.5, m)
    z = rng.uniform(-0.5, 0.5, m)
    dt = 1e-3
    worst = 0.0
    for _ in range(1000):
        w = rng.normal(0.0, math.sqrt(dt), (3, m))
        x, y, z = _secular_y_update(x, y, z, w[0], w[1], w[2], 0.8, 1.0, dt)
        x, y, z = _renormalize(x, y, z, 1.0, dt)
        worst = max(worst, float(np.abs(x).max()))
    return worst <= 1e-14, worst, 1e-14, "max |x| over 1e6 steps"


def check_noise_moments(seed=0):
    """Sample moments of dZ match (eta dt, upsilon dt) within 5 SE; the
    (eta,v) + (1-eta,-v) sum reproduces the unselective (1,0) moments."""
    rng = substream(seed, 66)
    dt = 1e-3
    n = 1_000_000
    specs = [DiffusiveSpec(1.0, 1.0), DiffusiveSpec(1.0, 0.0),
             DiffusiveSpec(0.7, 0.3 * np.exp(1j * np.pi / 3))]
    worst = 0.0
    for spec in specs:
        dz = sample_noise_batch(spec, dt, n, rng)["dZ"]
        se_abs = (np.abs(dz) ** 2).std() / math.sqrt(n)
        dev = abs((np.abs(dz) ** 2).mean() - spec.eta * dt) / se_abs
        worst = max(worst, float(dev))
        se_sq = (dz ** 2).std() / math.sqrt(n)
        dev2 = abs((dz ** 2).mean() - spec.upsilon * dt) / se_sq
        worst = max(worst, float(dev2))
    eta, ups = 0.6, 0.3 * np.exp(0.4j)
    dz = sample_noise_batch(DiffusiveSpec(eta, ups), dt, n, rng)["dZ"] \
        + sample_noise_batch(DiffusiveSpec(1 - eta, -ups), dt, n, rng)["dZ"]
    dev = abs((np.abs(dz) ** 2).mean() - dt) / ((np.abs(dz) ** 2).std() / math.sqrt(n))
    worst = max(worst, float(dev))
    dev = abs((dz ** 2).mean() - 0.0) / ((dz ** 2).std() / math.sqrt(n))
    worst = max(worst, float(dev))
    return worst <= 5.0, worst, 5.0, "worst moment deviation in SE units"


def check_beta_drift(seed=0, rotating_phase=0.0):
    """Per-step increments of the secular stepper reproduce the radial drift
    and diffusion coefficients at pinned beta (4 SE)."""
    rng = substream(seed, 67)
    dt = 1e-4
    n = 400_000
    eta = 0.7
    worst = 0.0
    for beta in (0.2, 0.5, 0.8):
        th = rng.uniform(0, 2 * np.pi, n)
        y = math.sqrt(beta) * np.cos(th)
        z = math.sqrt(beta) * np.sin(th)
        w = rng.normal(0.0, math.sqrt(dt), (3, n))
        _, ny, nz = _secular_y_update(np.zeros(n), y, z, w[0], w[1], w[2],
                                      eta, 1.0, dt, rotating_phase)
        db = ny ** 2 + nz ** 2 - beta
        a_ref, b_ref = beta_drift_diffusion(beta, eta)
        se_m = db.std() / math.sqrt(n)
        worst = max(worst, float(abs(db.mean() - a_ref * dt) / se_m))
        var = db.var()
        se_v = np.sqrt(((db - db.mean()) ** 2).var() / n)
        worst = max(worst, float(abs(var - b_ref * dt) / se_v))
    return worst <= 4.0, worst, 4.0, "worst drift/variance deviation in SE units"


def check_bin_estimator_zero(seed=0):
    """Bias-corrected binned estimator recovers 0 on mean-zero outcomes where
    the naive squared mean would report ~1/n_bin."""
    rng = substream(seed, 68)
    n, m = 2000, 2
    labels = rng.uniform(-1, 1, n)[:, None]
    ens = ConditionedEnsemble("said", 0.5, labels, ("x",), np.full(n, 20.0),
                              outcomes={"x": _outcomes_batch(np.zeros(n), m, rng)})
    est = bin_estimate(ens, "f1")
    naive_scale = 50 / (n * m)     # what the uncorrected estimator would see
    return abs(est) < naive_scale / 3, est, naive_scale / 3, \
        f"corrected estimate (naive bias would be ~{naive_scale:.4f})"


def check_null_model(seed=0):
    """Doubly-conditioned runs with eta_s + eta_y <= 1 stay at S <= 1."""
    ens_s, ens_y = build_joint_ensembles(0.45, 0.45, 800, seed + 700)
    res = steering_sum(ens_s, ens_y, seed=seed)
    bound = 1.0 + 3.0 * res.mc_error
    return res.s_value <= bound, res.s_value, bound, \
        f"S at (0.45, 0.45), error {res.mc_error:.4f}"


def check_me_average(seed=0):
    """Secular-Y trajectory mean matches the master equation at t = 5."""
    n = 2000
    arr = homodyne_states_at(y_secular(0.7), 0.0, [5.0], n, seed + 71,
                             initial=(0.0, 0.6, 0.0))
    mean = arr[:, 0, :].mean(axis=0)
    se = arr[:, 0, :].std(axis=0) / math.sqrt(n)
    ref = propagate_me(BlochState(1.0, 0.0, 0.6, 0.0),
                       SimConfig(dt=1e-3, t_final=5.0), "secular")
    dev = np.abs(mean - np.array([ref.x, ref.y, ref.z])) / np.maximum(se, 1e-12)
    return float(dev.max()) <= 4.0, float(dev.max()), 4.0, \
        "worst component deviation in SE units"


def check_dt_refinement(seed=0, dt=1e-3):
    """Stationary E[beta] moves by less than the error bars under dt halving."""
    vals = []
    for k, d in enumerate((dt, dt / 2)):
        s, _ = homodyne_stationary_samples(y_secular(0.6), 0.0, 600, seed + 80 + k,
                                           dt=d)
        b = s[:, 1] ** 2 + s[:, 2] ** 2
        vals.append((b.mean(), b.std() / math.sqrt(len(b) / 4.0)))
    diff = abs(vals[0][0] - vals[1][0])
    bound = 3.0 * math.hypot(vals[0][1], vals[1][1])
    return diff <= bound, diff, bound, "E[beta] shift under dt halving"


def check_determinism(seed=0):
    """Identical (command, config, seed) produce byte-identical files."""
    from .cli import main
    with tempfile.TemporaryDirectory() as td:
        blobs = []
        for name in ("a.csv", "b.csv"):
            out = os.path.join(td, name)
            rc = main(["curve", "--scheme", "said", "--eta-grid", "0.4,0.8",
                       "--n-traj", "60", "--seed", str(seed + 5), "--out", out])
            if rc != 0:
                return False, rc, 0, "curve command failed"
            blobs.append(open(out, "rb").read().replace(name.encode(), b"OUT"))
        return blobs[0] == blobs[1], int(blobs[0] != blobs[1]), 0, \
            "byte difference between identical runs"


CHECKS = [
    ("functional_bound", check_functional_bound),
    ("functional_convexity", check_functional_convexity),
    ("me_conservation", check_me_conservation),
    ("me_linearity", check_me_linearity),
    ("said_xdiag_closure", check_said_xdiag_closure),
    ("secular_confinement", check_secular_confinement),
    ("noise_moments", check_noise_moments),
    ("beta_drift", check_beta_drift),
    ("bin_estimator_zero", check_bin_estimator_zero),
    ("null_model_bound", check_null_model),
    ("me_average", check_me_average),
    ("dt_refinement", check_dt_refinement),
    ("determinism", check_determinism),
]


def run_all(seed: int = 2024, names=None) -> dict:
    """Run the suite; returns the report dict used by the validate command."""
    results = []
    all_ok = True
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        try:
            ok, measured, tol, detail = fn(seed)
        except Exception as exc:   # a crash is a failure, not an abort
            ok, measured, tol, detail = False, float("nan"), float("nan"), \
                f"exception: {exc!r}"
        all_ok &= ok
        results.append({"check": name, "passed": bool(ok),
                        "measured": float(measured), "tolerance": float(tol),
                        "detail": detail})
    return {"passed": bool(all_ok), "checks": results, "seed": seed}
