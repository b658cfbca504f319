"""Domain types, inelastic collision algebra, and chaotic-state samplers.

Conventions used throughout the package:

* unit particle mass, so momentum and velocity coincide;
* the inelasticity ``epsilon`` lies in [0, 1/2); the restitution coefficient
  is ``e = 1 - 2*epsilon``;
* the collision normal ``eta`` is a unit vector and the forward collision map
  requires an approaching pair, ``<eta, p1 - p2> >= 0``;
* in the event-driven simulator ``eta`` points from the second particle's
  center to the first particle's center at contact, and is negated before
  calling :func:`collide` so that the approach condition holds.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidCollisionError, SamplingFailureError

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Inelasticity:
    """Dissipation parameter of the collision algebra.

    The boundary value 1/2 (perfectly sticky) is rejected: the inverse
    collision map and the adjoint kernel weight 1/(1-2*epsilon)**2 are
    singular there.
    """

    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(
                f"epsilon must lie in [0, 0.5), got {self.epsilon!r}"
            )

    @property
    def restitution(self) -> float:
        return 1.0 - 2.0 * self.epsilon


@dataclass
class PhasePoint:
    """Position and momentum of a single particle in d in {1, 3} dimensions."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have the same dimension")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase coordinates must be finite")

    @property
    def d(self) -> int:
        return self.q.shape[0]


def unit_normal(eta) -> np.ndarray:
    """Validate and return a unit normal vector."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    norm = float(np.linalg.norm(eta))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"collision normal must be a unit vector, |eta|={norm}")
    return eta


def _normal_component(p1, p2, eta):
    # <eta, p1 - p2>, broadcasting over leading axes
    return np.sum(eta * (np.asarray(p1) - np.asarray(p2)), axis=-1)


def collide(p1, p2, eta, eps: Inelasticity, check: bool = True):
    """Forward inelastic collision map.

    p1* = p1 - (1-eps) * eta * <eta, p1-p2>, and symmetrically for p2*.
    Momentum sum and tangential components are preserved; the normal relative
    velocity is scaled by -(1 - 2*eps).

    Arrays broadcast over leading axes, so batches of collisions can be
    evaluated in one call.  With ``check=True`` a violated approach condition
    raises :class:`InvalidCollisionError`.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    eta = np.asarray(eta, dtype=float)
    g = _normal_component(p1, p2, eta)
    if check and np.any(g < 0.0):
        raise InvalidCollisionError(
            "approach condition <eta, p1-p2> >= 0 violated"
        )
    if eps.epsilon == 0.0 and p1.shape[-1] == 1:
        # elastic head-on exchange: swap outright so the momentum multiset
        # is preserved bitwise (the kick form rounds p1 - (p1 - p2))
        b1, b2 = np.broadcast_arrays(p1, p2)
        return b2.copy(), b1.copy()
    kick = (1.0 - eps.epsilon) * eta * g[..., None]
    return p1 - kick, p2 + kick


def precollide(p1, p2, eta, eps: Inelasticity):
    """Inverse of :func:`collide`: the pre-collision momenta.

    p1_pre = p1 - (1-eps)/(1-2*eps) * eta * <eta, p1-p2>.  Applying
    :func:`collide` to the result recovers (p1, p2) exactly.  The normal
    relative velocity is scaled by -1/(1 - 2*eps), which is the origin of
    the 1/(1-2*eps)**2 weight in the adjoint collision kernel.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    eta = np.asarray(eta, dtype=float)
    g = _normal_component(p1, p2, eta)
    factor = (1.0 - eps.epsilon) / (1.0 - 2.0 * eps.epsilon)
    kick = factor * eta * g[..., None]
    return p1 - kick, p2 + kick


def dissipation(p1, p2, eta, eps: Inelasticity):
    """Kinetic-energy change of a collision, -eps*(1-eps)*<eta, p1-p2>**2."""
    g = _normal_component(
        np.asarray(p1, dtype=float), np.asarray(p2, dtype=float),
        np.asarray(eta, dtype=float),
    )
    return -eps.epsilon * (1.0 - eps.epsilon) * g * g


def collision_jacobian(eps: Inelasticity, d: int = 1) -> float:
    """|det| of the forward collision map on (p1, p2).

    Only the two normal components transform non-trivially; the 1D block
    [[eps, 1-eps], [1-eps, eps]] has determinant of magnitude 1 - 2*eps,
    independent of the dimension.
    """
    if d not in (1, 3):
        raise ValueError("d must be 1 or 3")
    return 1.0 - 2.0 * eps.epsilon


@dataclass
class CollisionEvent:
    """One resolved collision: time, pair, contact normal, and bookkeeping.

    ``eta`` is the normal actually passed to :func:`collide` (approach
    condition satisfied), ``g_n`` the normal relative speed at impact and
    ``dE`` the kinetic-energy change (non-positive).
    """

    t: float
    i: int
    j: int
    eta: np.ndarray
    g_n: float
    dE: float


@dataclass
class SystemState:
    """Microscopic configuration of N hard spheres (rods in 1D).

    ``box`` is the side of a periodic box, or None for unbounded space.
    Positions are stored as an (N, d) array, momenta likewise.
    """

    q: np.ndarray
    p: np.ndarray
    sigma: float
    eps: Inelasticity
    box: float | None = None
    time: float = 0.0

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have matching shapes")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.box is not None and self.sigma >= self.box / 2.0:
            raise ValueError("sigma must be < box/2 under periodicity")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]

    def copy(self) -> "SystemState":
        return SystemState(self.q.copy(), self.p.copy(), self.sigma,
                           self.eps, self.box, self.time)

    def separation(self, i: int, j: int) -> float:
        """Minimum-image distance between particles i and j."""
        dq = self.q[i] - self.q[j]
        if self.box is not None:
            dq -= self.box * np.round(dq / self.box)
        return float(np.linalg.norm(dq))

    def min_separation(self) -> float:
        """Smallest pair distance (minimum image); O(N log N) in 1D."""
        if self.n < 2:
            return np.inf
        if self.d == 1:
            x = np.sort(self.q[:, 0])
            if self.box is not None:
                x = np.mod(x, self.box)
                x.sort()
                gaps = np.diff(x, append=x[0] + self.box)
            else:
                gaps = np.diff(x)
            return float(gaps.min())
        dq = self.q[:, None, :] - self.q[None, :, :]
        if self.box is not None:
            dq -= self.box * np.round(dq / self.box)
        dist = np.linalg.norm(dq, axis=-1)
        iu = np.triu_indices(self.n, 1)
        return float(dist[iu].min())

    def is_allowed(self, tol: float = 0.0) -> bool:
        """True when no pair overlaps: all separations >= sigma*(1 - tol)."""
        return self.min_separation() >= self.sigma * (1.0 - tol)

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.p * self.p))

    def total_momentum(self) -> np.ndarray:
        return self.p.sum(axis=0)


@dataclass
class UniformMaxwellian:
    """Product one-particle density: uniform positions, Gaussian momenta.

    Positions are uniform on [0, length)^d, momenta are centered Gaussians
    with variance ``temperature`` per component (which keeps the momentum
    density under the Gaussian bound required of initial data).
    """

    d: int = 1
    length: float = 1.0
    temperature: float = 1.0
    uniform_positions: bool = field(default=True, init=False)

    def sample(self, n: int, rng: np.random.Generator):
        q = rng.uniform(0.0, self.length, size=(n, self.d))
        p = rng.normal(0.0, np.sqrt(self.temperature), size=(n, self.d))
        return q, p

    def momentum_pdf(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        norm = (2.0 * np.pi * self.temperature) ** (-0.5 * self.d)
        return norm * np.exp(-0.5 * np.sum(p * p, axis=-1) / self.temperature)


def _config_allowed(q: np.ndarray, sigma: float, box: float | None) -> bool:
    n = q.shape[0]
    if n < 2:
        return True
    if q.shape[1] == 1:
        x = np.sort(q[:, 0])
        if box is not None:
            gaps = np.diff(x, append=x[0] + box)
        else:
            gaps = np.diff(x)
        return bool(gaps.min() >= sigma)
    dq = q[:, None, :] - q[None, :, :]
    if box is not None:
        dq -= box * np.round(dq / box)
    dist = np.linalg.norm(dq, axis=-1)
    iu = np.triu_indices(n, 1)
    return bool(dist[iu].min() >= sigma)


def _sample_tonks_positions(n: int, length: float, sigma: float,
                            rng: np.random.Generator) -> np.ndarray:
    # Exact uniform draw from the allowed set of n rods on a circle of
    # circumference `length`: sample the free volume, sort, re-insert the
    # excluded lengths, then rotate and relabel to restore exchangeability.
    free = length - n * sigma
    if free <= 0:
        raise SamplingFailureError(
            f"no allowed configuration: n*sigma = {n * sigma} >= L = {length}",
            acceptance_rate=0.0,
        )
    u = np.sort(rng.uniform(0.0, free, size=n))
    x = np.mod(u + sigma * np.arange(n) + rng.uniform(0.0, length), length)
    return x[rng.permutation(n), None]


def sample_chaotic_state(
    n: int,
    f1_sampler,
    sigma: float,
    eps: Inelasticity,
    box: float | None,
    rng: np.random.Generator,
    max_attempts: int = 100_000,
    method: str = "auto",
) -> SystemState:
    """Draw an N-particle chaotic (product) state on allowed configurations.

    The target measure is the i.i.d. product of the one-particle density
    conditioned *jointly* on the non-overlap event.  Two exact routes:

    * ``rejection`` -- resample whole configurations until one is allowed;
    * ``direct`` -- for uniform positions on a periodic 1D box, an exact
      gap-insertion construction (no rejection), used automatically for
      large N where whole-configuration rejection would never terminate.

    Raises :class:`SamplingFailureError` when the attempt budget is
    exhausted, reporting the observed acceptance rate.
    """
    d = getattr(f1_sampler, "d", 1)
    direct_ok = (
        d == 1 and box is not None
        and getattr(f1_sampler, "uniform_positions", False)
        and getattr(f1_sampler, "length", None) == box
    )
    if method == "auto":
        method = "direct" if (direct_ok and n > 16) else "rejection"
    if method == "direct":
        if not direct_ok:
            raise ValueError(
                "direct sampling requires uniform positions on a periodic 1D box"
            )
        q = _sample_tonks_positions(n, box, sigma, rng)
        _, p = f1_sampler.sample(n, rng)
        return SystemState(q, p, sigma, eps, box)
    if method != "rejection":
        raise ValueError(f"unknown sampling method {method!r}")

    for attempt in range(1, max_attempts + 1):
        q, p = f1_sampler.sample(n, rng)
        if _config_allowed(q, sigma, box):
            return SystemState(q, p, sigma, eps, box)
    raise SamplingFailureError(
        f"no allowed configuration in {max_attempts} attempts "
        f"(n={n}, sigma={sigma})",
        acceptance_rate=0.0,
    )


def sample_chaotic_ensemble(
    m: int,
    n: int,
    f1_sampler,
    sigma: float,
    box: float | None,
    rng: np.random.Generator,
    max_rounds: int = 10_000,
):
    """Vectorized joint-rejection sampler for m independent small systems.

    Returns (q, p) arrays of shape (m, n, d).  Intended for the Monte Carlo
    harnesses where n is 2 or 3 and m is large.
    """
    d = getattr(f1_sampler, "d", 1)
    q = np.empty((m, n, d))
    p = np.empty((m, n, d))
    pending = np.arange(m)
    for _ in range(max_rounds):
        k = pending.size
        if k == 0:
            return q, p
        qk, pk = f1_sampler.sample(k * n, rng)
        qk = qk.reshape(k, n, d)
        pk = pk.reshape(k, n, d)
        dq = qk[:, :, None, :] - qk[:, None, :, :]
        if box is not None:
            dq -= box * np.round(dq / box)
        dist = np.linalg.norm(dq, axis=-1)
        iu, ju = np.triu_indices(n, 1)
        ok = dist[:, iu, ju].min(axis=1) >= sigma if n > 1 else np.ones(k, bool)
        q[pending[ok]] = qk[ok]
        p[pending[ok]] = pk[ok]
        pending = pending[~ok]
    raise SamplingFailureError(
        f"ensemble rejection did not converge ({pending.size}/{m} rows left)",
        acceptance_rate=1.0 - pending.size / m,
    )
