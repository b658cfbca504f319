"""Collision-integral evaluation and a stochastic solver for the 1D limit.

Two pieces share the collision algebra of :mod:`granulab.core`:

* a Monte Carlo evaluator of the hard-sphere collision integral with
  finite-diameter gain/loss offsets, in one and three dimensions, acting on
  a caller-supplied two-particle density;
* a direct-simulation Monte Carlo (DSMC) solver for the one-dimensional
  kinetic equation of point particles: streaming plus per-cell randomized
  binary collisions with kernel |p - p1| under a per-cell majorant.

The gain term carries the pre-collision momenta and the 1/(1-2*eps)^2
weight (inverse-map Jacobian times the kernel scaling); density
corrections beyond the leading integral are exposed only as an order flag
that rejects orders >= 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Inelasticity
from .errors import (
    ConfigError,
    DtGuardError,
    MajorantError,
    NotImplementedOrderError,
)


@dataclass
class VelocityDensity:
    """One-particle phase density bundled with its sampler.

    ``evaluate(q, p)`` takes (M, d) arrays and returns (M,) densities;
    ``sample(n, rng)`` returns (n, d) position and momentum arrays.
    ``mass`` is the number density the evaluator integrates to per unit
    volume.
    """

    evaluate: object
    sample: object
    mass: float = 1.0


def maxwellian_product_f2(temperature: float = 1.0, density: float = 1.0,
                          d: int = 1):
    """Spatially uniform product two-particle density with Gaussian momenta."""
    norm = (2.0 * np.pi * temperature) ** (-0.5 * d)

    def f2(q1, p1, q2, p2):
        p1 = np.atleast_2d(p1)
        p2 = np.atleast_2d(p2)
        e1 = norm * np.exp(-0.5 * np.sum(p1 * p1, axis=-1) / temperature)
        e2 = norm * np.exp(-0.5 * np.sum(p2 * p2, axis=-1) / temperature)
        return density * density * e1 * e2

    return f2


def enskog_collision_integral(f2_eval, x1, sigma: float, eps: Inelasticity,
                              mc_budget: int, d: int = 1,
                              rng: np.random.Generator | None = None,
                              p_scale: float = 2.0, order: int = 0):
    """Monte Carlo gain-minus-loss collision integral at the phase point x1.

    ``f2_eval(q1, p1, q2, p2)`` must accept (M, d) arrays.  The gain is
    evaluated at pre-collision momenta and offset position q1 - sigma*eta,
    the loss at q1 + sigma*eta; in 1D the contact normal is the sign of the
    relative momentum, in 3D it is drawn uniformly from the approach
    half-sphere (measure 2*pi) and the prefactor sigma^2 applies.
    Momentum nodes use a centered Gaussian proposal of scale ``p_scale``.
    Returns (value, stderr).
    """
    if order != 0:
        raise NotImplementedOrderError(
            f"collision-integral corrections of order {order} are not "
            "implemented; only the leading (order 0) term is available")
    if d not in (1, 3):
        raise ConfigError(f"dimension must be 1 or 3, got {d}")
    if mc_budget < 2:
        raise ConfigError("mc_budget must be at least 2")
    rng = np.random.default_rng() if rng is None else rng
    q1, p1 = (np.asarray(a, dtype=float).reshape(d) for a in x1)
    m = int(mc_budget)

    p2 = rng.normal(0.0, p_scale, size=(m, d))
    rho = ((2.0 * np.pi * p_scale ** 2) ** (-0.5 * d)
           * np.exp(-0.5 * np.sum(p2 * p2, axis=1) / p_scale ** 2))
    g = p1[None, :] - p2
    if d == 1:
        eta = np.sign(g)
        eta[eta == 0.0] = 1.0
        measure = 1.0
        prefac = 1.0
    else:
        eta = rng.normal(size=(m, 3))
        eta /= np.linalg.norm(eta, axis=1, keepdims=True)
        flip = np.sum(eta * g, axis=1) < 0.0
        eta[flip] *= -1.0
        measure = 2.0 * np.pi
        prefac = sigma ** 2
    g_n = np.sum(eta * g, axis=1)

    fac = 1.0 - eps.epsilon
    kick = fac * eta * g_n[:, None]
    p1_pre = p1[None, :] - kick / (1.0 - 2.0 * eps.epsilon)
    p2_pre = p2 + kick / (1.0 - 2.0 * eps.epsilon)

    q1b = np.broadcast_to(q1, (m, d))
    gain = np.asarray(f2_eval(q1b, p1_pre, q1b - sigma * eta, p2_pre),
                      dtype=float)
    loss = np.asarray(f2_eval(q1b, np.broadcast_to(p1, (m, d)),
                              q1b + sigma * eta, p2), dtype=float)
    if not (np.all(np.isfinite(gain)) and np.all(np.isfinite(loss))):
        raise ConfigError("two-particle density returned non-finite values")

    vals = prefac * measure * g_n * (
        gain / (1.0 - 2.0 * eps.epsilon) ** 2 - loss) / rho
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(m))
    return value, stderr


# -- 1D DSMC ---------------------------------------------------------------

@dataclass
class DsmcState:
    """Stochastic representation of f1(t, q, p) on a periodic 1D interval.

    Each sample stands for ``weight`` physical particles; the number
    density is n_samples * weight / length.
    """

    q: np.ndarray
    p: np.ndarray
    length: float
    n_cells: int
    eps: Inelasticity
    weight: float
    time: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.p = np.asarray(self.p, dtype=float).ravel()
        if self.q.shape != self.p.shape:
            raise ConfigError("position and momentum sample counts differ")
        if self.length <= 0 or self.n_cells < 1 or self.weight <= 0:
            raise ConfigError("length, n_cells and weight must be positive")

    @property
    def n_samples(self) -> int:
        return self.q.size

    def copy(self) -> "DsmcState":
        return replace(self, q=self.q.copy(), p=self.p.copy())


def dsmc_init(f1_sampler, n_samples: int, n_cells: int, eps: Inelasticity,
              rng: np.random.Generator, density: float = 1.0) -> DsmcState:
    """Draw an initial DSMC ensemble from a one-particle sampler."""
    q, p = f1_sampler.sample(n_samples, rng)
    length = float(getattr(f1_sampler, "length", 1.0))
    return DsmcState(np.asarray(q)[:, 0], np.asarray(p)[:, 0], length,
                     n_cells, eps, weight=density * length / n_samples)


def granular_temperature(state: DsmcState) -> float:
    """Variance of the momentum samples (1D granular temperature)."""
    if state.n_samples < 2:
        raise ConfigError("temperature needs at least two samples")
    return float(np.var(state.p))


def dsmc_moments(state: DsmcState):
    """(mass, momentum, energy, temperature) of the represented density."""
    w = state.weight
    return (w * state.n_samples, w * float(state.p.sum()),
            0.5 * w * float(state.p @ state.p), granular_temperature(state))


def dsmc_step(state: DsmcState, dt: float,
              rng: np.random.Generator) -> DsmcState:
    """One streaming + collision step of the 1D DSMC scheme.

    Candidate pairs per cell follow the majorant rate with
    v_max = max p - min p in the cell; acceptance is |dp| / v_max and
    accepted pairs get post-collision momenta from the inelastic collision
    rule.  Aborts if any per-particle collision probability reaches 0.2.
    """
    if dt < 0:
        raise ConfigError("dt must be nonnegative")
    out = state.copy()
    out.time = state.time + dt
    if dt == 0.0:
        return out
    out.q = np.mod(out.q + out.p * dt, out.length)
    if state.n_samples < 2:
        return out

    cell_len = out.length / out.n_cells
    cells = np.minimum((out.q / cell_len).astype(np.int64), out.n_cells - 1)
    order = np.argsort(cells, kind="stable")
    bounds = np.searchsorted(cells[order], np.arange(out.n_cells + 1))
    fac = 1.0 - out.eps.epsilon
    rate = out.weight / cell_len * dt
    for c in range(out.n_cells):
        idx = order[bounds[c]:bounds[c + 1]]
        nc = idx.size
        if nc < 2:
            continue
        pc = out.p[idx]
        vmax = float(pc.max() - pc.min())
        if vmax <= 0.0:
            continue
        per_particle = rate * (nc - 1) * vmax
        if per_particle >= 0.2:
            raise DtGuardError(
                f"cell {c}: per-particle collision probability "
                f"{per_particle:.3f} >= 0.2; reduce dt")
        mean_cand = rate * nc * (nc - 1) / 2.0 * vmax
        n_cand = int(mean_cand) + (rng.random() < mean_cand - int(mean_cand))
        if n_cand == 0:
            continue
        ii = rng.integers(0, nc, size=n_cand)
        jj = rng.integers(0, nc - 1, size=n_cand)
        jj = np.where(jj >= ii, jj + 1, jj)
        u = rng.random(n_cand)
        for a, b, ua in zip(ii, jj, u):
            dp = pc[a] - pc[b]
            ratio = abs(dp) / vmax
            if ratio > 1.0 + 1e-12:
                raise MajorantError(
                    f"cell {c}: acceptance ratio {ratio:.3f} exceeds 1")
            if ua < ratio:
                kick = fac * dp
                pc[a] -= kick
                pc[b] += kick
        out.p[idx] = pc
    return out


def suggest_dt(state: DsmcState, safety: float = 0.5) -> float:
    """Largest dt keeping per-particle collision probabilities under the
    guard, scaled by ``safety``."""
    cell_len = state.length / state.n_cells
    cells = np.minimum((state.q / cell_len).astype(np.int64),
                       state.n_cells - 1)
    worst = 0.0
    for c in range(state.n_cells):
        pc = state.p[cells == c]
        if pc.size < 2:
            continue
        vmax = float(pc.max() - pc.min())
        worst = max(worst, state.weight / cell_len * (pc.size - 1) * vmax)
    if worst == 0.0:
        return np.inf
    return safety * 0.2 / worst


@dataclass
class PhaseHistogram:
    """Gridded weighted estimate of a phase-space density."""

    q_edges: np.ndarray
    p_edges: np.ndarray
    counts: np.ndarray
    sample_weight: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        self.q_edges = np.asarray(self.q_edges, dtype=float)
        self.p_edges = np.asarray(self.p_edges, dtype=float)
        if (np.any(np.diff(self.q_edges) <= 0)
                or np.any(np.diff(self.p_edges) <= 0)):
            raise ConfigError("histogram bin edges must be increasing")

    @classmethod
    def from_samples(cls, q, p, q_edges, p_edges, sample_weight: float = 1.0,
                     time: float = 0.0) -> "PhaseHistogram":
        counts, _, _ = np.histogram2d(np.ravel(q), np.ravel(p),
                                      bins=[q_edges, p_edges])
        return cls(q_edges, p_edges, counts * sample_weight,
                   sample_weight, time)

    @property
    def total_weight(self) -> float:
        return float(self.counts.sum())

    def density(self) -> np.ndarray:
        """Counts per unit phase-space area."""
        dq = np.diff(self.q_edges)[:, None]
        dp = np.diff(self.p_edges)[None, :]
        return self.counts / (dq * dp)

    def momentum_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=0)


@dataclass
class LimitSolution:
    """DSMC trajectory snapshots plus moment time series."""

    times: list = field(default_factory=list)
    histograms: list = field(default_factory=list)
    moments: list = field(default_factory=list)  # (t, mass, mom, E, T)
    final_state: DsmcState | None = None


def solve_limit_equation(f1_sampler, t_end: float, eps: Inelasticity,
                         seed: int, n_samples: int = 100_000,
                         n_cells: int = 64, density: float = 1.0,
                         snapshot_times=None, q_bins: int = 16,
                         p_bins: int = 48, p_range: float = 6.0,
                         dt_max: float | None = None) -> LimitSolution:
    """DSMC solve of the 1D limit equation up to t_end.

    Snapshots are gridded into PhaseHistograms at the requested times
    (default: t=0 and t_end); moments are recorded at every step.
    """
    rng = np.random.default_rng(seed)
    state = dsmc_init(f1_sampler, n_samples, n_cells, eps, rng,
                      density=density)
    q_edges = np.linspace(0.0, state.length, q_bins + 1)
    p_lim = p_range * np.sqrt(max(granular_temperature(state), 1e-12))
    p_edges = np.linspace(-p_lim, p_lim, p_bins + 1)
    if snapshot_times is None:
        snapshot_times = [0.0, t_end]
    pending = sorted(set(float(t) for t in snapshot_times))

    sol = LimitSolution()

    def record_snapshot(s):
        sol.times.append(s.time)
        sol.histograms.append(PhaseHistogram.from_samples(
            s.q, s.p, q_edges, p_edges, s.weight, time=s.time))

    sol.moments.append((state.time,) + dsmc_moments(state))
    while pending and pending[0] <= state.time + 1e-12:
        record_snapshot(state)
        pending.pop(0)
    while state.time < t_end - 1e-12:
        dt = suggest_dt(state)
        if dt_max is not None:
            dt = min(dt, dt_max)
        target = pending[0] if pending else t_end
        dt = min(dt, target - state.time, t_end - state.time)
        state = dsmc_step(state, dt, rng)
        sol.moments.append((state.time,) + dsmc_moments(state))
        while pending and pending[0] <= state.time + 1e-12:
            record_snapshot(state)
            pending.pop(0)
    sol.final_state = state
    return sol


def energy_moment_quadrature(p_samples, eps: Inelasticity,
                             number_density: float, bins: int = 256):
    """dT/dt of a homogeneous 1D gas by quadrature of the collision
    integral's energy moment at the empirical momentum distribution.

    Per collision of momenta (p, p1) the energy loss is
    eps*(1-eps)*(p-p1)^2 and the collision rate density carries the kernel
    |p-p1|; binning the samples reduces the pair sum to the histogram
    outer product.
    """
    p = np.ravel(np.asarray(p_samples, dtype=float))
    if p.size < 2:
        raise ConfigError("need at least two samples")
    lo, hi = p.min(), p.max()
    if hi - lo <= 0:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(p, bins=edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    frac = counts / p.size
    diff3 = np.abs(mids[:, None] - mids[None, :]) ** 3
    s = float(frac @ diff3 @ frac)
    return -eps.epsilon * (1.0 - eps.epsilon) * number_density * s
