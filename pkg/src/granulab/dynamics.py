"""Exact event-driven dynamics of inelastic hard spheres.

Free flight between collisions, earliest-event scheduling with invalidation
counters, momentum updates through the single collision algebra in
:mod:`granulab.core`.  Two engines share the event loop:

* a 1D engine using sorted-order adjacency (rods never pass each other, so
  only neighbours can collide), with lazy per-particle times -- this is the
  fast path used for large runs;
* an all-pairs engine for any dimension, retained as the correctness oracle
  and used for 3D few-body work.

The inverse-collision flow (free flight backward in time, pre-collision
momenta at contacts) is exposed through :func:`advance_inverse`; it is the
pathwise realization of the adjoint evolution on states.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import CollisionEvent, Inelasticity, SystemState
from .errors import EventStormError

_TINY = 1e-14
# relative overlap slack tolerated when validating post-event configurations
_OVERLAP_SLACK = 1e-9


@dataclass
class TrajectoryLog:
    """Ordered collision events plus optional state snapshots."""

    events: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @property
    def n_events(self) -> int:
        return len(self.events)

    def total_dissipation(self) -> float:
        return sum(ev.dE for ev in self.events)

    def record_snapshot(self, state: SystemState):
        self.snapshot_times.append(state.time)
        self.snapshots.append(state.copy())


def pair_collision_time(state: SystemState, i: int, j: int):
    """Earliest contact time of pair (i, j) under free flight, or None.

    Solves |dq + dv (t - t0)| = sigma for the inward root.  On the 1D circle
    both gap closures (through either image) are considered.
    """
    dq = state.q[i] - state.q[j]
    dv = state.p[i] - state.p[j]
    box = state.box
    candidates = []
    if box is not None:
        dq = dq - box * np.round(dq / box)
        if state.d == 1:
            # second image: approach around the other side of the circle
            shift = -np.sign(dq) * box if dq[0] != 0.0 else np.array([box])
            candidates.append(dq + shift)
    candidates.insert(0, dq)
    best = None
    for dqc in candidates:
        a = float(dv @ dv)
        b = 2.0 * float(dqc @ dv)
        c = float(dqc @ dqc) - state.sigma**2
        if a <= _TINY or b >= 0.0:
            continue  # parallel motion or receding
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            continue
        if c < 0.0:
            trel = 0.0  # already touching within round-off
        else:
            trel = (-b - np.sqrt(disc)) / (2.0 * a)
        if trel >= 0.0 and (best is None or trel < best):
            best = trel
    return None if best is None else state.time + best


class Simulation:
    """Event-driven run of one hard-sphere system.

    ``rule`` selects the forward flow ("forward": collide at approaching
    contacts) or the inverse flow used internally by
    :func:`advance_inverse`.  ``tc_threshold`` optionally switches a
    collision to elastic when either participant collided less than
    ``tc_threshold`` time units earlier (the TC-model regularization of
    inelastic collapse: rapid event sequences stop dissipating, so a
    collapsing cluster sorts its velocities elastically and disperses);
    it is off by default.  ``storm_limit`` aborts the run when any particle
    exceeds that many events within one unit of time.
    """

    def __init__(self, state: SystemState, log: TrajectoryLog | None = None,
                 rule: str = "forward", engine: str = "auto",
                 tc_threshold: float | None = None,
                 storm_limit: float = 1e5):
        if rule not in ("forward", "inverse"):
            raise ValueError(f"unknown rule {rule!r}")
        if not state.is_allowed(tol=_OVERLAP_SLACK):
            raise ValueError("initial configuration has overlapping particles")
        if engine == "auto":
            engine = "adjacent" if state.d == 1 else "allpairs"
        self.engine = engine
        self.rule = rule
        self.log = log
        self.tc_threshold = tc_threshold
        self.storm_limit = storm_limit
        self.sigma = state.sigma
        self.eps = state.eps
        self.box = state.box
        self.d = state.d
        self.n = state.n
        self._template = state
        self.t = state.time
        self.n_events = 0

        # lazy per-particle positions: x[i] is the position at local time tl[i]
        self.v = state.p.copy()
        if self.rule == "inverse":
            self.v = -self.v
        self.tl = np.full(self.n, self.t)
        self.cnt = np.zeros(self.n, dtype=np.int64)
        self._last_event = np.full(self.n, -np.inf)
        self._storm_t0 = np.full(self.n, self.t)
        self._storm_cnt = np.zeros(self.n, dtype=np.int64)
        self.heap: list = []

        if self.engine == "adjacent":
            if self.d != 1:
                raise ValueError("adjacency engine requires d == 1")
            order = np.argsort(state.q[:, 0], kind="stable")
            self.order = order                       # sorted slot -> label
            self.x = state.q[order, 0].copy()        # unwrapped, stays sorted
            self.v = self.v[order, 0].copy()
            npairs = self.n if self.box is not None else self.n - 1
            for k in range(max(npairs, 0)):
                self._push_adjacent(k)
        elif self.engine == "allpairs":
            self.x = state.q.copy()
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    self._push_pair(i, j)
        else:
            raise ValueError(f"unknown engine {self.engine!r}")

    # -- prediction -------------------------------------------------------

    def _push_adjacent(self, k: int):
        i = k
        j = (k + 1) % self.n
        if j == 0 and self.box is None:
            return
        off = self.box if j == 0 else 0.0
        tau = max(self.tl[i], self.tl[j])
        xi = self.x[i] + self.v[i] * (tau - self.tl[i])
        xj = self.x[j] + off + self.v[j] * (tau - self.tl[j])
        rel = self.v[i] - self.v[j]
        if rel <= _TINY:
            return
        gap = max(xj - xi - self.sigma, 0.0)
        t_ev = tau + gap / rel
        heapq.heappush(self.heap, (t_ev, i, j, self.cnt[i], self.cnt[j]))

    def _push_pair(self, i: int, j: int):
        tau = max(self.tl[i], self.tl[j])
        qi = self.x[i] + self.v[i] * (tau - self.tl[i])
        qj = self.x[j] + self.v[j] * (tau - self.tl[j])
        dq = qi - qj
        dv = self.v[i] - self.v[j]
        candidates = [dq]
        if self.box is not None:
            dq = dq - self.box * np.round(dq / self.box)
            candidates = [dq]
            if self.d == 1 and dq[0] != 0.0:
                candidates.append(dq - np.sign(dq) * self.box)
        best = None
        a = float(dv @ dv)
        if a <= _TINY:
            return
        for dqc in candidates:
            b = 2.0 * float(dqc @ dv)
            if b >= 0.0:
                continue
            c = float(dqc @ dqc) - self.sigma**2
            disc = b * b - 4.0 * a * c
            if disc < 0.0:
                continue
            trel = 0.0 if c < 0.0 else (-b - np.sqrt(disc)) / (2.0 * a)
            if best is None or trel < best:
                best = trel
        if best is not None:
            heapq.heappush(self.heap, (tau + best, i, j,
                                       self.cnt[i], self.cnt[j]))

    # -- event processing -------------------------------------------------

    def _collision_normal(self, i, j):
        """Unit normal from j's center to i's center at contact."""
        if self.engine == "adjacent":
            return np.array([-1.0])  # slot i is always the left neighbour
        dq = self.x[i] - self.x[j]
        if self.box is not None:
            dq = dq - self.box * np.round(dq / self.box)
        return dq / np.linalg.norm(dq)

    def _apply_collision(self, t_ev, i, j):
        # advance the two participants to the event time
        self.x[i] = self.x[i] + self.v[i] * (t_ev - self.tl[i])
        self.x[j] = self.x[j] + self.v[j] * (t_ev - self.tl[j])
        self.tl[i] = self.tl[j] = t_ev

        eta_geom = self._collision_normal(i, j)
        # with eta pointing j -> i an approaching pair has <eta, v_i - v_j> <= 0;
        # negate so the algebra's approach condition holds
        eta = -eta_geom
        vi = np.atleast_1d(self.v[i]).astype(float)
        vj = np.atleast_1d(self.v[j]).astype(float)
        g_n = float(eta @ (vi - vj))
        if g_n <= 0.0:
            return False  # grazing or stale geometry: no collision

        eps = self.eps
        if self.tc_threshold is not None and (
                t_ev - self._last_event[i] < self.tc_threshold
                or t_ev - self._last_event[j] < self.tc_threshold):
            eps = Inelasticity(0.0)
        self._last_event[i] = self._last_event[j] = t_ev
        if self.rule == "forward":
            vi2, vj2 = core.collide(vi, vj, eta, eps, check=False)
        else:
            vi2, vj2 = core.precollide(vi, vj, eta, eps)
        dE = 0.5 * (vi2 @ vi2 + vj2 @ vj2 - vi @ vi - vj @ vj)
        if self.engine == "adjacent":
            self.v[i] = vi2[0]
            self.v[j] = vj2[0]
        else:
            self.v[i] = vi2
            self.v[j] = vj2
        self.cnt[i] += 1
        self.cnt[j] += 1
        self.n_events += 1
        self._storm_check(t_ev, i)
        self._storm_check(t_ev, j)

        if self.log is not None:
            if self.engine == "adjacent":
                li, lj = int(self.order[i]), int(self.order[j])
            else:
                li, lj = i, j
            self.log.events.append(CollisionEvent(
                t=t_ev, i=li, j=lj, eta=eta.copy(), g_n=g_n, dE=float(dE)))
        return True

    def _storm_check(self, t_ev, i):
        if t_ev - self._storm_t0[i] >= 1.0:
            self._storm_t0[i] = t_ev
            self._storm_cnt[i] = 0
        self._storm_cnt[i] += 1
        if self._storm_cnt[i] > self.storm_limit:
            raise EventStormError(
                f"particle {i}: more than {self.storm_limit:g} events within "
                f"unit time at t={t_ev:.6g}; likely inelastic collapse "
                "(consider tc_threshold)"
            )

    def _repredict(self, i, j):
        if self.engine == "adjacent":
            ks = {(i - 1) % self.n, i, j}
            npairs = self.n if self.box is not None else self.n - 1
            for k in ks:
                if k < npairs:
                    self._push_adjacent(k)
        else:
            for a in range(self.n):
                if a != i:
                    self._push_pair(*sorted((a, i)))
                if a != j and a != i:
                    self._push_pair(*sorted((a, j)))

    def run(self, dt: float | None = None, max_events: int | None = None):
        """Process events until time t+dt (and/or an event budget) is reached.

        Returns the number of collisions processed in this call.
        """
        if dt is None and max_events is None:
            raise ValueError("provide dt and/or max_events")
        t_end = np.inf if dt is None else self.t + dt
        if dt is not None and dt < 0:
            raise ValueError("dt must be nonnegative")
        processed = 0
        while self.heap:
            if max_events is not None and processed >= max_events:
                break
            t_ev, i, j, ci, cj = self.heap[0]
            if t_ev > t_end:
                break
            heapq.heappop(self.heap)
            if self.cnt[i] != ci or self.cnt[j] != cj:
                continue  # stale prediction
            if self._apply_collision(t_ev, i, j):
                processed += 1
                self._repredict(i, j)
        if np.isfinite(t_end):
            self.t = t_end
        elif self.heap or processed:
            self.t = max(self.t, float(self.tl.max()))
        return processed

    def state(self) -> SystemState:
        """Synchronized snapshot at the current simulation time."""
        if self.engine == "adjacent":
            x = self.x + self.v * (self.t - self.tl)
            q = np.empty((self.n, 1))
            p = np.empty((self.n, 1))
            q[self.order, 0] = x
            p[self.order, 0] = self.v
        else:
            q = self.x + self.v * (self.t - self.tl)[:, None]
            p = self.v.copy()
        if self.rule == "inverse":
            p = -p
        if self.box is not None:
            q = np.mod(q, self.box)
        out = SystemState(q, p, self.sigma, self.eps, self.box,
                          self.t if self.rule == "forward" else
                          self._template.time - (self.t - self._template.time))
        return out


def advance(state: SystemState, dt: float, log: TrajectoryLog | None = None,
            engine: str = "auto", tc_threshold: float | None = None,
            storm_limit: float = 1e5) -> SystemState:
    """Evolve a state forward by dt along the hard-sphere flow."""
    sim = Simulation(state, log=log, engine=engine,
                     tc_threshold=tc_threshold, storm_limit=storm_limit)
    sim.run(dt=dt)
    return sim.state()


def advance_inverse(state: SystemState, dt: float,
                    log: TrajectoryLog | None = None,
                    engine: str = "auto") -> SystemState:
    """Evolve a state backward by dt: free flight with -p, pre-collision
    momenta at contacts.  Inverse of :func:`advance` for the same dt.

    Each contact applies the inverse collision map (Jacobian 1/(1-2*eps)),
    so the flow amplifies normal relative velocities for eps > 0.
    """
    sim = Simulation(state, log=log, rule="inverse", engine=engine)
    sim.run(dt=dt)
    out = sim.state()
    out.time = state.time - dt
    return out


def evolve_observable(b, state0: SystemState, t: float, **kwargs) -> float:
    """Evaluate an observable at the time-t phase point of the trajectory.

    ``b`` is called as ``b(q, p)`` with the synchronized (N, d) arrays.
    """
    final = advance(state0, t, **kwargs)
    return float(b(final.q, final.p))


def free_flight(q: np.ndarray, p: np.ndarray, t: float,
                box: float | None = None):
    """Free streaming of (possibly batched) phase points by time t."""
    q2 = q + p * t
    if box is not None:
        q2 = np.mod(q2, box)
    return q2, p


def evolve_rods_ensemble(q: np.ndarray, p: np.ndarray, t: float,
                         sigma: float, eps: Inelasticity,
                         max_rounds: int | None = None):
    """Vectorized exact evolution of M independent 1D rod systems (unbounded).

    ``q``/``p`` have shape (M, N) with positions sorted ascending per row and
    pairwise gaps >= sigma.  Rods never exchange order, so only adjacent
    pairs collide; each round resolves at most one collision per row.
    Returns (q_final, p_final, collisions_per_row).
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    m, n = q.shape
    ncol = np.zeros(m, dtype=np.int64)
    remaining = np.full(m, float(t))
    active = np.ones(m, dtype=bool)
    if n < 2 or t == 0.0:
        return q + p * t, p, ncol
    if max_rounds is None:
        max_rounds = 100 * n + 1000
    fac = 1.0 - eps.epsilon
    for _ in range(max_rounds):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return q, p, ncol
        gaps = q[idx, 1:] - q[idx, :-1] - sigma
        rel = p[idx, :-1] - p[idx, 1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            tcol = np.where(rel > _TINY, np.maximum(gaps, 0.0) / rel, np.inf)
        k = np.argmin(tcol, axis=1)
        tmin = tcol[np.arange(idx.size), k]
        collide_rows = tmin <= remaining[idx]
        dt_step = np.where(collide_rows, tmin, remaining[idx])
        q[idx] += p[idx] * dt_step[:, None]
        remaining[idx] -= dt_step
        hit = idx[collide_rows]
        kh = k[collide_rows]
        if hit.size:
            pl = p[hit, kh]
            pr = p[hit, kh + 1]
            kick = fac * (pl - pr)
            p[hit, kh] = pl - kick
            p[hit, kh + 1] = pr + kick
            ncol[hit] += 1
        active[idx[~collide_rows]] = False
    raise EventStormError(
        f"evolve_rods_ensemble exceeded {max_rounds} rounds; "
        "likely inelastic collapse in some row"
    )
