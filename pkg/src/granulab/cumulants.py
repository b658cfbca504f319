"""Cumulants of hard-sphere semigroups and the observable/state duality.

The machinery here evaluates alternating partition sums of evolution
operators pathwise: every operator is a composition of exact flows from
:mod:`granulab.dynamics`, applied to sampled phase points rather than to
gridded densities.  Covered pieces:

* set-partition enumeration with cumulant coefficients (-1)^{|P|-1}(|P|-1)!;
* cumulants of semigroups applied to observables (blocks evolve as isolated
  subsystems, then the observable is read off the combined configuration);
* low-order marginal-observable expansions (s <= 2);
* scattering cumulants (interacting flow composed with inverse free flow)
  and the order-1 generating-operator identity;
* a truncated two-particle marginal functional of the state;
* a Monte Carlo duality harness comparing the observable picture against
  forward simulation with common random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Inelasticity, SystemState
from .dynamics import TrajectoryLog, advance, advance_inverse, evolve_rods_ensemble
from .errors import ConfigError

# element 0 of the index set stands for the distinguished cluster {Y\Z};
# elements 1..n are the adjoined singleton particles
CLUSTER = 0

_MAX_ORDER = 6


@dataclass(frozen=True)
class PartitionTerm:
    """One partition of the cumulant index set with its coefficient.

    ``blocks`` partition {0, 1, ..., n} where 0 is the distinguished
    cluster treated as a single element; the coefficient is
    (-1)^{|P|-1} (|P|-1)!.
    """

    blocks: tuple
    coefficient: int


def set_partitions(items):
    """Yield all partitions of a sequence as tuples of tuples."""
    items = list(items)
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for sub in set_partitions(rest):
        for k in range(len(sub)):
            yield sub[:k] + ((first,) + sub[k],) + sub[k + 1:]
        yield ((first,),) + sub


def enumerate_cumulant_terms(n: int):
    """All partition terms of the (1+n)th-order cumulant of semigroups."""
    if not 0 <= n <= _MAX_ORDER:
        raise ConfigError(f"cumulant order {n} outside [0, {_MAX_ORDER}]")
    terms = []
    for blocks in set_partitions(range(n + 1)):
        k = len(blocks)
        coeff = (-1) ** (k - 1) * math.factorial(k - 1)
        terms.append(PartitionTerm(tuple(tuple(sorted(b)) for b in blocks),
                                   coeff))
    return terms


def _element_particles(element: int, cluster_size: int):
    if element == CLUSTER:
        return list(range(cluster_size))
    return [cluster_size + element - 1]


def _evolve_block(q, p, idx, t, sigma, eps, box):
    """Evolve particles ``idx`` of (q, p) as an isolated subsystem."""
    if t == 0.0 or len(idx) == 0:
        return q, p
    sub = SystemState(q[idx], p[idx], sigma, eps, box)
    out = advance(sub, t)
    q2, p2 = q.copy(), p.copy()
    q2[idx] = out.q
    p2[idx] = out.p
    return q2, p2


def apply_cumulant(n: int, t: float, b, q, p, sigma: float,
                   eps: Inelasticity, cluster_size: int = 1,
                   box: float | None = None) -> float:
    """Evaluate the (1+n)th-order cumulant of semigroups on an observable.

    ``q``/``p`` hold ``cluster_size + n`` particles: the distinguished
    cluster first, then the adjoined singletons.  Each partition term
    evolves its blocks as independent subsystems for time ``t`` and reads
    the observable ``b(q, p)`` off the combined configuration.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    total = 0.0
    for term in enumerate_cumulant_terms(n):
        qq, pp = q, p
        for block in term.blocks:
            idx = [j for el in block for j in _element_particles(el, cluster_size)]
            qq, pp = _evolve_block(qq, pp, idx, t, sigma, eps, box)
        total += term.coefficient * float(b(qq, pp))
    return total


def evolve_marginal_observable(s: int, b1, t: float, q, p, sigma: float,
                               eps: Inelasticity, b2=None,
                               box: float | None = None) -> float:
    """Low-order marginal observable at time t.

    ``b1`` maps a single phase point (q_i, p_i) to a real; the optional
    ``b2`` maps a particle pair.  For s=2 the value is the cluster term on
    ``b2`` plus the second-order cumulant applied to b1(x1) + b1(x2); a
    purely additive observable keeps only the latter.
    """
    if s not in (1, 2):
        raise ConfigError(f"marginal observables implemented for s <= 2, got {s}")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if s == 1:
        return apply_cumulant(0, t, lambda qq, pp: b1(qq[0], pp[0]),
                              q, p, sigma, eps, cluster_size=1, box=box)
    additive = lambda qq, pp: b1(qq[0], pp[0]) + b1(qq[1], pp[1])
    value = apply_cumulant(1, t, additive, q, p, sigma, eps,
                           cluster_size=1, box=box)
    if b2 is not None:
        value += apply_cumulant(0, t, lambda qq, pp: b2(qq, pp),
                                q, p, sigma, eps, cluster_size=2, box=box)
    return value


# -- scattering cumulants --------------------------------------------------

def _scatter_map(q, p, idx, t, sigma, eps, box, orientation):
    """Scattering flow on the subset ``idx``: interacting evolution for t
    composed with the inverse free flow, with the adjoint Jacobian weight
    (1-2*eps)^(-collisions).

    ``orientation`` "observable": forward interacting flow, then free
    streaming backward.  "state": inverse interacting flow, then free
    streaming forward (the pullback used by the state functionals).
    """
    if t == 0.0 or len(idx) < 2:
        return q, p, 1.0
    sub = SystemState(q[idx], p[idx], sigma, eps, box)
    log = TrajectoryLog()
    if orientation == "observable":
        out = advance(sub, t, log=log)
        qs = out.q - out.p * t
    else:
        out = advance_inverse(sub, t, log=log)
        qs = out.q + out.p * t
    if box is not None:
        qs = np.mod(qs, box)
    weight = (1.0 - 2.0 * eps.epsilon) ** (-log.n_events)
    q2, p2 = q.copy(), p.copy()
    q2[idx] = qs
    p2[idx] = out.p
    return q2, p2, weight


def _apply_ops(ops, q, p, t, sigma, eps, box, orientation):
    weight = 1.0
    for subset in ops:
        q, p, w = _scatter_map(q, p, sorted(subset), t, sigma, eps, box,
                               orientation)
        weight *= w
    return q, p, weight


def scattering_term_list(n: int, cluster_size: int = 1):
    """Symbolic term list of the (1+n)th-order scattering cumulant.

    Each term is (coefficient, ops) where ops is a tuple of particle-index
    frozensets applied left to right; singleton scattering maps are
    identities and are dropped.
    """
    terms = []
    for pt in enumerate_cumulant_terms(n):
        ops = []
        for block in pt.blocks:
            idx = frozenset(j for el in block
                            for j in _element_particles(el, cluster_size))
            if len(idx) >= 2:
                ops.append(idx)
        terms.append((pt.coefficient, tuple(sorted(ops, key=sorted))))
    return combine_terms(terms)


def generating_term_list(n: int, cluster_size: int = 1):
    """Symbolic term list of the (1+n)th-order generating operator.

    Order 0 is the scattering operator itself; order 1 subtracts the
    cluster scattering operator composed with the one-extra-particle
    scattering cumulants of each cluster member.
    """
    if n == 0:
        return scattering_term_list(0, cluster_size)
    if n != 1:
        raise ConfigError(f"generating operators implemented for n <= 1, got {n}")
    s = cluster_size
    terms = list(scattering_term_list(1, cluster_size))
    cluster_ops = scattering_term_list(0, cluster_size)
    for i in range(s):
        # second-order scattering cumulant on (i, s): S({i,s}) - I
        inner = [(1, (frozenset((i, s)),)), (-1, ())]
        for c1, ops1 in cluster_ops:
            for c2, ops2 in inner:
                terms.append((-c1 * c2, ops1 + ops2))
    return combine_terms(terms)


def combine_terms(terms):
    """Merge terms with identical op sequences; drop zero coefficients."""
    acc = {}
    for coeff, ops in terms:
        acc[ops] = acc.get(ops, 0) + coeff
    return tuple(sorted(((c, ops) for ops, c in acc.items() if c != 0),
                        key=lambda t: (len(t[1]), sorted(map(sorted, t[1])))))


def scattering_cumulant(n: int, t: float, q, p, sigma: float,
                        eps: Inelasticity, cluster_size: int = 1,
                        box: float | None = None,
                        orientation: str = "observable"):
    """Evaluate the (1+n)th-order scattering cumulant pathwise.

    Returns a list of (coefficient, q_mapped, p_mapped, weight) terms; the
    weight carries the adjoint Jacobian and the allowed-configuration
    indicator of the input.
    """
    if n not in (0, 1):
        raise ConfigError(f"scattering cumulants implemented for n <= 1, got {n}")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    allowed = SystemState(q, p, sigma, eps, box).is_allowed(tol=1e-12)
    out = []
    for coeff, ops in scattering_term_list(n, cluster_size):
        if not allowed:
            out.append((coeff, q, p, 0.0))
            continue
        qq, pp, w = _apply_ops(ops, q, p, t, sigma, eps, box, orientation)
        out.append((coeff, qq, pp, w))
    return out


# -- marginal functionals of the state -------------------------------------

def _transported_density(f1_sampler, t, box):
    """Density of the free transport of the sampler's one-particle density."""
    def f1_t(qi, pi):
        q0 = qi - pi * t
        if box is not None:
            q0 = np.mod(q0, box)
        if hasattr(f1_sampler, "density"):
            return float(f1_sampler.density(q0, pi))
        vol = getattr(f1_sampler, "length", None)
        val = float(f1_sampler.momentum_pdf(pi[None, :])[0])
        if vol is not None:
            if box is None and not np.all((0.0 <= q0) & (q0 < vol)):
                return 0.0
            val /= vol
        return val
    return f1_t


def marginal_functional_F2(t: float, f1_sampler, x1, x2, sigma: float,
                           eps: Inelasticity, order: int = 0,
                           mc_samples: int = 0,
                           rng: np.random.Generator | None = None,
                           box: float | None = None):
    """Two-particle marginal functional of the state, truncated at ``order``.

    The one-particle input F1(t) is approximated by free transport of the
    sampler's density (exact when the sampler is spatially uniform on a
    periodic box).  Order 0 applies the leading generating operator as a
    pullback through the inverse interacting flow; order 1 adds a Monte
    Carlo estimate of the one-extra-particle correction.  Returns
    (value, stderr).
    """
    q1, p1 = (np.asarray(a, dtype=float) for a in x1)
    q2, p2 = (np.asarray(a, dtype=float) for a in x2)
    q = np.stack([q1, q2])
    p = np.stack([p1, p2])
    if not SystemState(q, p, sigma, eps, box).is_allowed(tol=1e-12):
        return 0.0, 0.0
    f1_t = _transported_density(f1_sampler, t, box)
    terms = scattering_cumulant(0, t, q, p, sigma, eps, cluster_size=2,
                                box=box, orientation="state")
    value = sum(c * w * f1_t(qq[0], pp[0]) * f1_t(qq[1], pp[1])
                for c, qq, pp, w in terms)
    stderr = 0.0
    if order >= 1:
        if order > 1:
            raise ConfigError(f"marginal functionals implemented to order 1, got {order}")
        if mc_samples < 1 or rng is None:
            raise ConfigError("order 1 requires mc_samples >= 1 and an rng")
        term_list = generating_term_list(1, cluster_size=2)
        samples = np.empty(mc_samples)
        for m in range(mc_samples):
            q3, p3 = f1_sampler.sample(1, rng)
            q3 = q3[0] + p3[0] * t  # propagate the proposal to time t
            if box is not None:
                q3 = np.mod(q3, box)
            qm = np.vstack([q, q3[None, :]])
            pm = np.vstack([p, p3])
            if not SystemState(qm, pm, sigma, eps, box).is_allowed(tol=1e-12):
                samples[m] = 0.0
                continue
            denom = f1_t(qm[2], pm[2])
            if denom <= 0.0:
                samples[m] = 0.0
                continue
            acc = 0.0
            for coeff, ops in term_list:
                qq, pp, w = _apply_ops(ops, qm, pm, t, sigma, eps, box, "state")
                acc += coeff * w * (f1_t(qq[0], pp[0]) * f1_t(qq[1], pp[1])
                                    * f1_t(qq[2], pp[2]))
            samples[m] = acc / denom
        value += float(samples.mean())
        stderr = float(samples.std(ddof=1) / np.sqrt(mc_samples)) \
            if mc_samples > 1 else np.inf
    return value, stderr


# -- duality harness -------------------------------------------------------

def _sorted_gap_positions(m: int, n: int, length: float, sigma: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Exact i.i.d.-uniform positions on [0, length) conditioned on sorted
    pairwise gaps >= sigma, vectorized over m rows (labels ordered)."""
    free = length - n * sigma
    if free <= 0:
        raise ConfigError(f"no allowed configuration: n*sigma >= {length}")
    u = np.sort(rng.uniform(0.0, free, size=(m, n)), axis=1)
    return u + sigma * np.arange(n)


def _subsets(n: int):
    out = []
    for mask in range(1, 1 << n):
        out.append(tuple(i for i in range(n) if mask >> i & 1))
    return out


def duality_residual(b1, f1_sampler, t: float, n_particles: int,
                     mc_samples: int, sigma: float, eps: Inelasticity,
                     seed: int, length: float = 1.0):
    """Monte Carlo residual of the observable/state duality.

    The state side evolves sampled configurations forward and evaluates the
    additive observable; the observable side sums cumulant expansions over
    all particle subsets of the same sampled configurations (common random
    numbers), which telescopes to the full-system evolution for a fixed
    particle number.  ``b1(q, p)`` must act elementwise on arrays of
    scalar 1D positions/momenta.  Returns (residual, stderr); the stderr
    carries a floor so the z-score is well defined when the coupled
    estimator is exact to rounding.
    """
    if n_particles < 2:
        raise ConfigError("duality harness needs n_particles >= 2")
    rng = np.random.default_rng(seed)
    m, n = mc_samples, n_particles
    q = _sorted_gap_positions(m, n, length, sigma, rng)
    temp = getattr(f1_sampler, "temperature", 1.0)
    p = rng.normal(0.0, np.sqrt(temp), size=(m, n))

    # b1 of particle j when the subset containing j evolves in isolation
    bvals = {}
    for sub in _subsets(n):
        if len(sub) == 1:
            j = sub[0]
            bvals[sub] = {j: b1(q[:, j] + p[:, j] * t, p[:, j])}
        else:
            cols = list(sub)
            qf, pf, _ = evolve_rods_ensemble(q[:, cols], p[:, cols], t,
                                             sigma, eps)
            bvals[sub] = {j: b1(qf[:, k], pf[:, k])
                          for k, j in enumerate(cols)}

    rhs = sum(bvals[tuple(range(n))][j] for j in range(n))
    lhs = np.zeros(m)
    for sub in _subsets(n):
        for blocks in set_partitions(sub):
            coeff = (-1) ** (len(blocks) - 1) * math.factorial(len(blocks) - 1)
            for block in blocks:
                key = tuple(sorted(block))
                for j in key:
                    lhs += coeff * bvals[key][j]

    res = lhs - rhs
    mean = float(res.mean())
    scale = float(np.abs(rhs).mean()) + 1.0
    stderr = float(res.std(ddof=1) / np.sqrt(m)) if m > 1 else np.inf
    stderr = max(stderr, 1e-14 * scale)
    return mean, stderr
