"""The two-party steering protocol and its estimators.

Per run, Alice monitors the fluorescence with one of two schemes while Bob,
at a random halt time well past the relaxation time, measures sigma_x,
sigma_y or sigma_z projectively.  Alice's reported conditional-state
parameters serve Bob only as bin labels; within each bin he estimates the
squared mean of each needed Pauli axis, averages over bins by population,
and forms

    S = E[f1 | scheme A] + E[f2 | scheme B],   f1 = <sx>^2, f2 = <sy>^2+<sz>^2.

Any model in which the atom owns a measurement-independent pure-state
trajectory forces S <= 1, so a measured S > 1 certifies that the two
monitoring schemes steer the atom differently.

The per-bin squared mean uses the bias-corrected estimator m^2 - v/n (v the
sample variance, n the pooled count): a naive squared sample mean inflates S
by O(1/n) and could fabricate a violation.  Coarse binning can only lower
the estimate (the functionals are convex), so finite bins never fake one
either.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochState
from .said import NoJumpSolution, said_stationary_x
from .beta_stationary import BetaDensity
from .homodyne import (x_homodyne, y_homodyne, y_secular,
                       homodyne_stationary_samples)
from .seeding import substream

__all__ = [
    "pair_steering_sum",
    "ConditionedEnsemble",
    "SteeringResult",
    "BinSpec",
    "InconclusiveStatistics",
    "simulate_bob_outcomes",
    "bin_estimate",
    "steering_sum",
    "critical_eta",
    "build_said_ensemble",
    "build_secular_y_ensemble",
    "build_lab_ensemble",
    "build_ensemble",
    "oracle_exact_said_ensemble",
    "oracle_exact_beta_ensemble",
]

log = logging.getLogger(__name__)

MIN_HALT_TIME = 10.0


class InconclusiveStatistics(RuntimeError):
    """Budget exhausted before the sign of S - 1 separated from noise."""

    def __init__(self, message, bracket=None, records_used=0):
        super().__init__(message)
        self.bracket = bracket
        self.records_used = records_used


@dataclass
class ConditionedEnsemble:
    """Stationary collection of labelled runs with Bob-side outcomes.

    ``labels`` is (n, k) with axis names in ``label_axes`` (("x",) for the
    jump/X schemes, ("y", "z") for Y).  ``outcomes`` maps a Pauli axis to an
    (n, m) array of +/-1 results.  Oracle-exact ensembles instead carry
    ``exact_means`` (axis -> (n,)) and ``weights``.
    """

    scheme: str
    eta: float
    labels: np.ndarray
    label_axes: tuple
    halt_times: np.ndarray
    outcomes: dict = field(default_factory=dict)
    exact_means: dict = field(default_factory=dict)
    weights: np.ndarray | None = None
    omega: float = 0.0

    def __post_init__(self):
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=float))
        if self.labels.shape[0] == 1 and len(self.label_axes) == 1 and self.labels.shape[1] > 1:
            self.labels = self.labels.T
        if self.labels.shape[1] != len(self.label_axes):
            raise ValueError("labels and label_axes disagree")
        if np.any(np.abs(self.labels) > 1.0 + 1e-9):
            raise ValueError("labels must lie in [-1, 1]")
        if len(self.halt_times) and float(np.min(self.halt_times)) < MIN_HALT_TIME:
            raise ValueError(f"halt times must be >= {MIN_HALT_TIME}/gamma")
        if not self.outcomes and not self.exact_means:
            raise ValueError("need outcomes or exact means")

    @property
    def n_records(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class SteeringResult:
    s_value: float
    term_f1: float
    term_f2: float
    mc_error: float
    etas: tuple
    scheme_pair: str
    omega: float = 0.0


FUNCTIONAL_AXES = {"f1": ("x",), "f2": ("y", "z")}


@dataclass(frozen=True)
class BinSpec:
    """Uniform rectangular bins over the label space, or exact grouping."""

    edges: tuple = ()
    by_value: bool = False

    @staticmethod
    def uniform(n_bins: int, dims: int = 1) -> "BinSpec":
        e = np.linspace(-1.0, 1.0, n_bins + 1)
        return BinSpec(edges=tuple([e] * dims))

    @staticmethod
    def unique() -> "BinSpec":
        return BinSpec(by_value=True)


def default_bins(functional: str) -> BinSpec:
    # resolves the stationary label densities while keeping bins populated
    return BinSpec.uniform(50, 1) if functional == "f1" else BinSpec.uniform(24, 2)


def simulate_bob_outcomes(state: BlochState, axes, n_per_axis: int, rng) -> dict:
    """Projective +/-1 outcomes per axis, P(+1) = (1 + <sigma>)/2."""
    ex = state.expect()
    comp = {"x": ex[0], "y": ex[1], "z": ex[2]}
    out = {}
    for ax in axes:
        p = 0.5 * (1.0 + comp[ax])
        out[ax] = np.where(rng.random(n_per_axis) < p, 1, -1).astype(np.int8)
    return out


def _outcomes_batch(means: np.ndarray, n_per_axis: int, rng) -> np.ndarray:
    p = 0.5 * (1.0 + means)
    return np.where(rng.random((len(means), n_per_axis)) < p[:, None], 1, -1).astype(np.int8)


class _BinnedView:
    """Pre-digested (bin index, per-record sums) view for fast re-estimation."""

    def __init__(self, ensemble: ConditionedEnsemble, functional: str,
                 bins: BinSpec | None):
        if functional not in FUNCTIONAL_AXES:
            raise ValueError(f"unknown functional {functional!r}")
        if ensemble.n_records == 0:
            raise ValueError("empty ensemble")
        self.axes = FUNCTIONAL_AXES[functional]
        self.exact = not ensemble.outcomes
        bins = bins or default_bins(functional)
        labels = ensemble.labels
        if bins.by_value:
            _, self.bin_idx = np.unique(labels, axis=0, return_inverse=True)
            self.n_bins = int(self.bin_idx.max()) + 1
        else:
            if len(bins.edges) != labels.shape[1]:
                raise ValueError("bin spec dimensionality does not match labels")
            idx = np.zeros(len(labels), dtype=np.int64)
            scale = 1
            for d, e in enumerate(bins.edges):
                k = np.clip(np.searchsorted(e, labels[:, d], side="right") - 1,
                            0, len(e) - 2)
                idx = idx * (len(e) - 1) + k
                scale *= len(e) - 1
            self.bin_idx = idx
            self.n_bins = scale
        if self.exact:
            self.means = {ax: np.asarray(ensemble.exact_means[ax], dtype=float)
                          for ax in self.axes}
            w = ensemble.weights
            self.rec_weight = (np.ones(ensemble.n_records) if w is None
                               else np.asarray(w, dtype=float))
        else:
            self.sums = {}
            self.counts = {}
            for ax in self.axes:
                o = ensemble.outcomes[ax]
                if o.shape[1] < 2:
                    raise ValueError("need >= 2 outcomes per record per axis"
                                     " for the bias correction")
                self.sums[ax] = o.sum(axis=1).astype(float)
                self.counts[ax] = float(o.shape[1])
            self.rec_weight = np.ones(ensemble.n_records)

    def estimate(self, rec_idx=None) -> float:
        idx = self.bin_idx if rec_idx is None else self.bin_idx[rec_idx]
        if self.exact:
            w = self.rec_weight if rec_idx is None else self.rec_weight[rec_idx]
            wsum = np.bincount(idx, weights=w, minlength=self.n_bins)
            occupied = wsum > 0
            total = 0.0
            for ax in self.axes:
                mv = self.means[ax] if rec_idx is None else self.means[ax][rec_idx]
                msum = np.bincount(idx, weights=w * mv, minlength=self.n_bins)
                mbar = msum[occupied] / wsum[occupied]
                total += float((wsum[occupied] * mbar**2).sum())
            return total / float(wsum.sum())

        pop = np.bincount(idx, minlength=self.n_bins).astype(float)
        occupied = pop > 0
        # outcomes per record per axis is constant, so bin outcome counts are
        # proportional to record populations; merging is only needed if a bin
        # somehow ends with a single outcome.
        total = 0.0
        for ax in self.axes:
            s1 = self.sums[ax] if rec_idx is None else self.sums[ax][rec_idx]
            ssum = np.bincount(idx, weights=s1, minlength=self.n_bins)
            n = pop * self.counts[ax]
            n_occ = n[occupied]
            merged = int((n_occ < 2).sum())
            if merged:
                log.warning("%d bins with fewer than 2 outcomes merged into "
                            "their neighbors", merged)
                return self._estimate_merged(idx, ax, s1)
            m = ssum[occupied] / n_occ
            # outcomes are +/-1, so the sample variance is n(1-m^2)/(n-1)
            est = m**2 - (1.0 - m**2) / (n_occ - 1.0)
            total += float((pop[occupied] * est).sum())
        return total / float(pop.sum())

    def _estimate_merged(self, idx, ax, s1) -> float:
        # fallback path: pool each undersized bin with its nearest occupied bin
        pop = np.bincount(idx, minlength=self.n_bins).astype(float)
        n = pop * self.counts[ax]
        occupied = np.flatnonzero(n >= 2)
        small = np.flatnonzero((n > 0) & (n < 2))
        remap = np.arange(self.n_bins)
        for b in small:
            remap[b] = occupied[np.argmin(np.abs(occupied - b))]
        idx2 = remap[idx]
        ssum = np.bincount(idx2, weights=s1, minlength=self.n_bins)
        pop2 = np.bincount(idx2, minlength=self.n_bins).astype(float)
        occ = pop2 > 0
        n2 = pop2[occ] * self.counts[ax]
        m = ssum[occ] / n2
        est = m**2 - (1.0 - m**2) / (n2 - 1.0)
        return float((pop2[occ] * est).sum() / pop2[occ].sum())


def bin_estimate(ensemble: ConditionedEnsemble, functional: str,
                 bins: BinSpec | None = None) -> float:
    """Bob's binned, bias-corrected estimate of E[f1] or E[f2]."""
    view = _BinnedView(ensemble, functional, bins)
    return view.estimate()


def steering_sum(ensemble_a: ConditionedEnsemble, ensemble_b: ConditionedEnsemble,
                 bins_a: BinSpec | None = None, bins_b: BinSpec | None = None,
                 n_boot: int = 200, seed: int = 0) -> SteeringResult:
    """S = f1-term of ensemble A plus f2-term of ensemble B.

    The Monte Carlo error is a nonparametric bootstrap over records (both
    ensembles resampled independently).
    """
    va = _BinnedView(ensemble_a, "f1", bins_a)
    vb = _BinnedView(ensemble_b, "f2", bins_b)
    t1 = va.estimate()
    t2 = vb.estimate()
    rng = substream(seed, 101)
    na, nb = ensemble_a.n_records, ensemble_b.n_records
    boots = np.empty(n_boot)
    for i in range(n_boot):
        ia = rng.integers(0, na, na)
        ib = rng.integers(0, nb, nb)
        boots[i] = va.estimate(ia) + vb.estimate(ib)
    err = float(boots.std(ddof=1)) if n_boot > 1 else float("nan")
    pair = f"{ensemble_a.scheme}_{ensemble_b.scheme}"
    return SteeringResult(s_value=t1 + t2, term_f1=t1, term_f2=t2,
                          mc_error=err, etas=(ensemble_a.eta, ensemble_b.eta),
                          scheme_pair=pair, omega=ensemble_a.omega or ensemble_b.omega)


# ---------------------------------------------------------------------------
# Ensemble builders
# ---------------------------------------------------------------------------

N_PER_AXIS = 16


def build_said_ensemble(eta: float, n_records: int, seed: int,
                        gamma: float = 1.0, axes=("x",),
                        n_per_axis: int = N_PER_AXIS) -> ConditionedEnsemble:
    """Stationary jump-unravelling ensemble; labels are Alice's <sx>."""
    rng = substream(seed, 31)
    # window long enough that uniform sample times are nearly decorrelated
    n_cycles = max(4 * n_records, 2000)
    x, times = said_stationary_x(eta, n_cycles, n_records, rng, gamma)
    outcomes = {}
    orng = substream(seed, 32)
    for ax in axes:
        means = x if ax == "x" else np.zeros_like(x)
        outcomes[ax] = _outcomes_batch(means, n_per_axis, orng)
    return ConditionedEnsemble("said", eta, x[:, None], ("x",),
                               np.clip(times, MIN_HALT_TIME, None),
                               outcomes=outcomes)


def build_secular_y_ensemble(eta: float, n_records: int, seed: int,
                             gamma: float = 1.0, dt: float | None = None,
                             axes=("y", "z"), n_per_axis: int = N_PER_AXIS,
                             samples_per_traj: int = 8,
                             workers: int = 1) -> ConditionedEnsemble:
    """Stationary secular Y-homodyne ensemble; labels are (<sy>, <sz>)."""
    n_traj = max(1, math.ceil(n_records / samples_per_traj))
    samples, halts = homodyne_stationary_samples(
        y_secular(eta), 0.0, n_traj, seed, gamma=gamma, dt=dt,
        samples_per_traj=samples_per_traj, workers=workers)
    samples = samples[:n_records]
    halts = halts[:n_records]
    outcomes = {}
    orng = substream(seed, 33)
    for ax in axes:
        means = {"x": samples[:, 0], "y": samples[:, 1], "z": samples[:, 2]}[ax]
        outcomes[ax] = _outcomes_batch(means, n_per_axis, orng)
    return ConditionedEnsemble("y_secular", eta, samples[:, 1:3], ("y", "z"),
                               halts, outcomes=outcomes)


def build_lab_ensemble(scheme: str, eta: float, omega: float, n_records: int,
                       seed: int, gamma: float = 1.0, dt: float | None = None,
                       n_per_axis: int = N_PER_AXIS,
                       samples_per_traj: int = 8,
                       workers: int = 1) -> ConditionedEnsemble:
    """Stationary lab-frame homodyne ensemble for scheme 'x_lab' or 'y_lab'.

    The conditional states are full Bloch vectors; Bob's outcomes are drawn
    from them, but Alice's labels carry only the components her functional
    uses (x for the X scheme, (y, z) for Y).
    """
    if scheme == "x_lab":
        spec, axes_lbl, axes_out = x_homodyne(eta), ("x",), ("x",)
    elif scheme == "y_lab":
        spec, axes_lbl, axes_out = y_homodyne(eta), ("y", "z"), ("y", "z")
    else:
        raise ValueError(f"unknown lab scheme {scheme!r}")
    n_traj = max(1, math.ceil(n_records / samples_per_traj))
    samples, halts = homodyne_stationary_samples(
        spec, omega, n_traj, seed, gamma=gamma, dt=dt,
        samples_per_traj=samples_per_traj, workers=workers)
    samples = samples[:n_records]
    halts = halts[:n_records]
    comp = {"x": samples[:, 0], "y": samples[:, 1], "z": samples[:, 2]}
    outcomes = {}
    orng = substream(seed, 34)
    for ax in axes_out:
        outcomes[ax] = _outcomes_batch(comp[ax], n_per_axis, orng)
    labels = samples[:, [0]] if axes_lbl == ("x",) else samples[:, 1:3]
    return ConditionedEnsemble(scheme, eta, labels, axes_lbl, halts,
                               outcomes=outcomes, omega=omega)


def build_ensemble(scheme: str, eta: float, omega: float, n_records: int,
                   seed: int, **kw) -> ConditionedEnsemble:
    if scheme == "said":
        return build_said_ensemble(eta, n_records, seed, **kw)
    if scheme == "y_secular":
        return build_secular_y_ensemble(eta, n_records, seed, **kw)
    return build_lab_ensemble(scheme, eta, omega, n_records, seed, **kw)


def oracle_exact_said_ensemble(eta: float, n_nodes: int = 4000,
                               gamma: float = 1.0) -> ConditionedEnsemble:
    """Quadrature discretization of the stationary jump-scheme ensemble.

    Records are ages since the last click with weights proportional to the
    survival function (the stationary age law), labels the exact conditional
    <sx>, carried as exact means.  With by-value binning the f1 estimate is
    then a quadrature of the stationary E[<sx>^2].
    """
    sol = NoJumpSolution(eta, 1.0, 0.0, gamma)
    t_hi = 45.0 / abs(sol.lam_p) if sol.lam_p < 0 else 1e3
    # uniform grid in a log-stretched variable resolves both scales
    s = np.linspace(0.0, 1.0, n_nodes + 1)
    tau = t_hi * (np.expm1(4.0 * s) / np.expm1(4.0))
    mid = 0.5 * (tau[1:] + tau[:-1])
    w = sol.survival(mid) * np.diff(tau)
    x = sol.x_aligned(mid)
    return ConditionedEnsemble("said", eta, x[:, None], ("x",),
                               np.full(len(mid), 20.0),
                               exact_means={"x": x}, weights=w)


def oracle_exact_beta_ensemble(eta: float, n_nodes: int = 4000) -> ConditionedEnsemble:
    """Quadrature discretization of the stationary secular-Y ensemble."""
    d = BetaDensity(eta)
    q = (np.arange(n_nodes) + 0.5) / n_nodes
    # invert the exact CDF on a uniform grid by bisection
    lo = np.zeros(n_nodes)
    hi = np.full(n_nodes, 1.0 - 1e-15)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = d.cdf(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    beta = 0.5 * (lo + hi)
    y = np.sqrt(beta)
    z = np.zeros_like(y)
    labels = np.column_stack([y, z])
    return ConditionedEnsemble("y_secular", eta, labels, ("y", "z"),
                               np.full(n_nodes, 20.0),
                               exact_means={"y": y, "z": z},
                               weights=np.full(n_nodes, 1.0 / n_nodes))


# ---------------------------------------------------------------------------
# Critical-efficiency search
# ---------------------------------------------------------------------------

PAIR_SCHEMES = {"said_y": ("said", "y_secular"), "x_y": ("x_lab", "y_lab")}


def pair_steering_sum(pair: str, eta_a: float, eta_b: float, omega: float,
                      n_records: int, seed: int, gamma: float = 1.0,
                      dt: float | None = None, n_boot: int = 120,
                      workers: int = 1) -> SteeringResult:
    """S for one (eta_A, eta_B) cell of a scheme pair, from fresh ensembles."""
    sa, sb = PAIR_SCHEMES[pair]
    extra = {} if sa == "said" else {"dt": dt, "workers": workers}
    ens_a = build_ensemble(sa, eta_a, omega, n_records, seed, gamma=gamma,
                           **extra)
    ens_b = build_ensemble(sb, eta_b, omega, n_records, seed + 1, gamma=gamma,
                           dt=dt, workers=workers)
    return steering_sum(ens_a, ens_b, n_boot=n_boot, seed=seed)


def _pair_sum(pair, eta, omega, n_records, seed, gamma=1.0, dt=None,
              n_boot=120, workers=1):
    return pair_steering_sum(pair, eta, eta, omega, n_records, seed, gamma,
                             dt, n_boot, workers)


def critical_eta(pair: str, omega: float = 5.0, tol: float = 0.02,
                 budget: int = 4_000_000, seed: int = 2024,
                 n_records0: int = 8000, gamma: float = 1.0,
                 dt: float | None = None, callback=None, workers: int = 1):
    """Efficiency where S(eta, eta) crosses 1, by bisection on noisy estimates.

    The bracket starts at (0.5, 1.0]; below 0.5 no pair of unravellings can
    violate the bound.  At each point the ensemble size doubles until
    |S - 1| exceeds 3 bootstrap errors (variance-matched growth), so the
    returned root is conclusive to the stated tolerance.  Returns
    (eta_critical or None, info dict); raises InconclusiveStatistics when the
    budget runs out first.
    """
    if pair not in PAIR_SCHEMES:
        raise ValueError(f"unknown pair {pair!r}")
    if tol < 0.01:
        raise ValueError("tol below 0.01 is not supported by the search design")
    used = 0
    evals = 0

    def g(eta, lo, hi):
        nonlocal used, evals
        n = n_records0
        while True:
            res = _pair_sum(pair, eta, omega, n, seed + 1000 * evals, gamma, dt,
                            workers=workers)
            evals += 1
            used += 2 * n
            if used > budget:
                raise InconclusiveStatistics(
                    f"budget {budget} records exhausted at eta={eta:.4f}"
                    f" (S={res.s_value:.4f} +- {res.mc_error:.4f})",
                    bracket=(lo, hi), records_used=used)
            val = res.s_value - 1.0
            if callback:
                callback(eta, n, res)
            if abs(val) > 3.0 * res.mc_error:
                return val, res
            n *= 2

    lo, hi = 0.5, 1.0
    g_hi, _ = g(hi, lo, hi)
    if g_hi < 0.0:
        return None, {"reason": "no violation on (0.5, 1]",
                      "records_used": used, "evaluations": evals}
    g_lo, _ = g(lo + 1e-9, lo, hi)
    if g_lo > 0.0:
        # violation everywhere above the hard floor
        return 0.5, {"records_used": used, "evaluations": evals}
    while hi - lo > 2.0 * tol:
        mid = 0.5 * (lo + hi)
        val, _ = g(mid, lo, hi)
        if val > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), {"records_used": used, "evaluations": evals,
                             "bracket": (lo, hi)}
