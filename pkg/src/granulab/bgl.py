"""Boltzmann-Grad scaling study for the 1D rod gas.

Runs ensembles of event-driven rod systems at decreasing diameter with the
number density held fixed, builds empirical one- and two-particle
marginals, and compares against the diameter-free DSMC solution of the
limit equation.  The chaos metric is the L1 distance between the pair
distribution and the product of singles on a coarse grid, always reported
next to the same-sample-size floor measured on synthetic independent data
(finite ensembles never reach zero).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Inelasticity, UniformMaxwellian, sample_chaotic_state
from .dynamics import Simulation
from .errors import ConfigError
from .kinetic import PhaseHistogram, granular_temperature, solve_limit_equation


@dataclass
class PairHistogram:
    """Coarse gridded estimate of an ordered-pair phase distribution."""

    q_edges: np.ndarray
    p_edges: np.ndarray
    counts: np.ndarray  # shape (nq, np, nq, np)

    @property
    def total_weight(self) -> float:
        return float(self.counts.sum())


@dataclass
class MarginalEstimate:
    F1: PhaseHistogram
    F2: PairHistogram
    g2_norm: float
    per_replica_f1: np.ndarray  # (replicas, nq, np) probability masses
    n_pairs: int


@dataclass
class ChaosReport:
    config: dict
    per_sigma: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)


def _digitize(x, edges):
    idx = np.searchsorted(edges, x, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def empirical_marginals(snapshots, q_edges, p_edges,
                        max_pairs_per_replica: int = 20_000,
                        rng: np.random.Generator | None = None):
    """One- and two-particle marginals from replica snapshots.

    F1 pools all particles; F2 histograms ordered pairs within each
    replica (subsampled beyond ``max_pairs_per_replica``) and the chaos
    norm is the L1 distance between the pair probabilities and the outer
    product of the single-particle probabilities.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ConfigError("no snapshots given")
    if any(s.n < 2 for s in snapshots):
        raise ConfigError("pair marginal undefined for single-particle replicas")
    rng = np.random.default_rng() if rng is None else rng
    q_edges = np.asarray(q_edges, dtype=float)
    p_edges = np.asarray(p_edges, dtype=float)
    nq, npb = len(q_edges) - 1, len(p_edges) - 1

    f1_counts = np.zeros((nq, npb))
    per_replica = np.zeros((len(snapshots), nq, npb))
    pair_counts = np.zeros((nq * npb, nq * npb))
    n_pairs = 0
    for r, s in enumerate(snapshots):
        qi = _digitize(s.q[:, 0], q_edges)
        pi = _digitize(s.p[:, 0], p_edges)
        h = np.zeros((nq, npb))
        np.add.at(h, (qi, pi), 1.0)
        per_replica[r] = h / s.n
        f1_counts += h
        cell = qi * npb + pi
        n = s.n
        total = n * (n - 1)
        if total <= max_pairs_per_replica:
            i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            mask = i != j
            ii, jj = i[mask], j[mask]
        else:
            ii = rng.integers(0, n, size=max_pairs_per_replica)
            jj = rng.integers(0, n - 1, size=max_pairs_per_replica)
            jj = np.where(jj >= ii, jj + 1, jj)
        np.add.at(pair_counts, (cell[ii], cell[jj]), 1.0)
        n_pairs += len(ii)

    f1 = PhaseHistogram(q_edges, p_edges, f1_counts)
    f2 = PairHistogram(q_edges, p_edges,
                       pair_counts.reshape(nq, npb, nq, npb))
    pi1 = (f1_counts / f1_counts.sum()).ravel()
    pi2 = pair_counts / pair_counts.sum()
    g2 = float(np.abs(pi2 - np.outer(pi1, pi1)).sum())
    return MarginalEstimate(f1, f2, g2, per_replica, n_pairs)


def g2_iid_floor(f1_probs, n_replicas: int, n_particles: int,
                 pairs_per_replica: int, rng: np.random.Generator,
                 n_trials: int = 3) -> float:
    """Chaos-norm floor for truly independent particles at matched sizes."""
    k = f1_probs.size
    probs = f1_probs.ravel() / f1_probs.sum()
    floors = []
    for _ in range(n_trials):
        pair_counts = np.zeros((k, k))
        f1_counts = np.zeros(k)
        for _ in range(n_replicas):
            cell = rng.choice(k, size=n_particles, p=probs)
            np.add.at(f1_counts, cell, 1.0)
            m = min(pairs_per_replica, n_particles * (n_particles - 1))
            ii = rng.integers(0, n_particles, size=m)
            jj = rng.integers(0, n_particles - 1, size=m)
            jj = np.where(jj >= ii, jj + 1, jj)
            np.add.at(pair_counts, (cell[ii], cell[jj]), 1.0)
        pi1 = f1_counts / f1_counts.sum()
        pi2 = pair_counts / pair_counts.sum()
        floors.append(float(np.abs(pi2 - np.outer(pi1, pi1)).sum()))
    return float(np.mean(floors))


def _d1_distance(per_replica_f1, ref_probs):
    """Pooled L1 distance to the reference plus a jackknife stderr."""
    r = per_replica_f1.shape[0]
    pooled = per_replica_f1.mean(axis=0)
    d1 = float(np.abs(pooled - ref_probs).sum())
    if r < 2:
        return d1, np.inf
    loo = []
    for i in range(r):
        rest = (pooled * r - per_replica_f1[i]) / (r - 1)
        loo.append(float(np.abs(rest - ref_probs).sum()))
    loo = np.asarray(loo)
    stderr = float(np.sqrt((r - 1) / r * np.sum((loo - loo.mean()) ** 2)))
    return d1, stderr


def bg_study(config: dict) -> ChaosReport:
    """Scaling study: event-driven rod ensembles vs the limit equation.

    Expects keys: sigma_list, eps, t, replicas, seed, n_particles, length,
    temperature; optional q_bins, p_bins, pair_q_bins, pair_p_bins,
    max_pairs, dsmc_samples, dsmc_cells, tc_threshold.  The number density
    n_particles / length is the diameter-free scale shared with the DSMC
    reference, so distances across sigma reflect only the particle system.
    """
    cfg = dict(config)
    sigma_list = sorted(cfg["sigma_list"], reverse=True)
    eps = Inelasticity(float(cfg["eps"]))
    t = float(cfg["t"])
    replicas = int(cfg["replicas"])
    n = int(cfg["n_particles"])
    length = float(cfg["length"])
    temp = float(cfg.get("temperature", 1.0))
    q_bins = int(cfg.get("q_bins", 4))
    p_bins = int(cfg.get("p_bins", 24))
    pair_q = int(cfg.get("pair_q_bins", 2))
    pair_p = int(cfg.get("pair_p_bins", 8))
    max_pairs = int(cfg.get("max_pairs", 20_000))
    dsmc_samples = int(cfg.get("dsmc_samples", 100_000))
    dsmc_cells = int(cfg.get("dsmc_cells", 8))
    tc = cfg.get("tc_threshold", 1e-9)
    seed = int(cfg["seed"])

    density = n / length
    for sigma in sigma_list:
        if n * sigma / length >= 0.2:
            raise ConfigError(
                f"sigma {sigma} outside the dilute regime "
                f"(n*sigma/L = {n * sigma / length:.3f} >= 0.2)")

    p_lim = 6.0 * np.sqrt(temp)
    q_edges = np.linspace(0.0, length, q_bins + 1)
    p_edges = np.linspace(-p_lim, p_lim, p_bins + 1)
    pq_edges = np.linspace(0.0, length, pair_q + 1)
    pp_edges = np.linspace(-p_lim, p_lim, pair_p + 1)

    # diameter-free reference, computed once and reused for every sigma
    dsmc_sampler = UniformMaxwellian(length=1.0, temperature=temp)
    sol = solve_limit_equation(dsmc_sampler, t, eps, seed=seed,
                               n_samples=dsmc_samples, n_cells=dsmc_cells,
                               density=density)
    ref_state = sol.final_state
    ref_p, _ = np.histogram(ref_state.p, bins=p_edges)
    ref_probs = np.outer(np.full(q_bins, 1.0 / q_bins),
                         ref_p / ref_p.sum())
    ref_temperature = granular_temperature(ref_state)

    master = np.random.SeedSequence(seed)
    report = ChaosReport(config=cfg)
    sampler = UniformMaxwellian(length=length, temperature=temp)
    for si, sigma in enumerate(sigma_list):
        seeds = np.random.SeedSequence(entropy=master.entropy,
                                       spawn_key=(si,)).spawn(replicas)
        snapshots = []
        for rs in seeds:
            rng = np.random.default_rng(rs)
            state = sample_chaotic_state(n, sampler, sigma, eps, length, rng)
            sim = Simulation(state, tc_threshold=tc)
            sim.run(dt=t)
            snapshots.append(sim.state())
        est_rng = np.random.default_rng(np.random.SeedSequence(
            entropy=master.entropy, spawn_key=(si, 1)))
        fine = empirical_marginals(snapshots, q_edges, p_edges,
                                   max_pairs_per_replica=max_pairs,
                                   rng=est_rng)
        coarse = empirical_marginals(snapshots, pq_edges, pp_edges,
                                     max_pairs_per_replica=max_pairs,
                                     rng=est_rng)
        d1, d1_err = _d1_distance(fine.per_replica_f1, ref_probs)
        floor = g2_iid_floor(coarse.F1.counts, replicas, n,
                             max_pairs, est_rng)
        energy = float(np.mean([0.5 * np.sum(s.p ** 2) / s.n
                                for s in snapshots]))
        report.per_sigma.append({
            "sigma": float(sigma),
            "t": t,
            "D1": d1,
            "D1_err": d1_err,
            "G2": coarse.g2_norm,
            "G2_floor": floor,
            "energy_particle": energy,
            "energy_dsmc": 0.5 * ref_temperature,
        })

    rows = report.per_sigma
    report.verdicts["d1_nonincreasing"] = all(
        rows[i + 1]["D1"] <= rows[i]["D1"]
        + np.hypot(rows[i]["D1_err"], rows[i + 1]["D1_err"])
        for i in range(len(rows) - 1))
    smallest = rows[-1]
    report.verdicts["g2_within_2x_floor"] = bool(
        smallest["G2"] <= 2.0 * smallest["G2_floor"])
    report.verdicts["energy_within_5pct"] = bool(
        abs(smallest["energy_particle"] - smallest["energy_dsmc"])
        <= 0.05 * smallest["energy_dsmc"])
    return report
