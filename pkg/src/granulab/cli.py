"""Command-line orchestration: seeded runs, JSON configs, CSV/JSON artifacts.

Every subcommand reads a JSON config (defaults are built in, ``--set``
overrides individual keys), resolves it, embeds the resolved config and
its hash in every artifact, and writes machine-readable outputs to the
``--out`` directory.  Exit codes: 0 success, 2 config violation, 3 runtime
guard abort (with a diagnostic JSON).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import bgl, cumulants, kinetic
from .core import (
    Inelasticity,
    SystemState,
    UniformMaxwellian,
    collide,
    collision_jacobian,
    dissipation,
    precollide,
    sample_chaotic_state,
    unit_normal,
)
from .dynamics import Simulation, TrajectoryLog
from .errors import ConfigError, GranulabError

DEFAULTS = {
    "simulate": {
        "n": 2, "d": 1, "sigma": 0.1, "eps": 0.0, "box": None, "t": 1.0,
        "temperature": 1.0, "seed": 0, "tc_threshold": None,
        "storm_limit": 1e5, "snapshot_times": None,
        "positions": [[0.0], [1.0]], "momenta": [[1.0], [0.0]],
    },
    "dsmc": {
        "n_samples": 100_000, "n_cells": 64, "eps": 0.25, "t_end": 1.0,
        "temperature": 1.0, "density": 1.0, "seed": 0,
        "q_bins": 16, "p_bins": 48, "snapshot_times": None,
    },
    "collision-check": {"cases": 10_000, "seed": 0},
    "cumulant-check": {"max_order": 6, "seed": 0},
    "duality": {
        "eps_list": [0.0, 0.1, 0.25], "t_list": [0.5, 1.0, 2.0],
        "n_list": [2, 3], "mc_samples": 100_000, "sigma": 0.02,
        "temperature": 1.0, "seed": 0,
    },
    "enskog-integral": {
        "d": 1, "eps": 0.25, "sigma": 0.05, "temperature": 1.0,
        "p1": [0.5], "mc_budget": 100_000, "seed": 0,
    },
    "bgl-study": {
        "sigma_list": [0.04, 0.02, 0.01], "eps": 0.25, "t": 1.0,
        "replicas": 32, "seed": 0, "n_particles": 10_000,
        "length": 10_000.0, "temperature": 1.0, "dsmc_samples": 100_000,
        "max_pairs": 20_000,
    },
}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(subcommand: str, path: str | None, overrides, seed):
    cfg = dict(DEFAULTS[subcommand])
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        for key in user:
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for "
                                  f"{subcommand!r}")
        cfg.update(user)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r} for {subcommand!r}")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    if seed is not None:
        cfg["seed"] = int(seed)
    if "eps" in cfg:
        Inelasticity(float(cfg["eps"]))  # range check: [0, 0.5)
    for key in ("eps_list",):
        for e in cfg.get(key, []):
            Inelasticity(float(e))
    return cfg


def write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v
                        for v in row])


def _report(cfg, **extra):
    return {"config": cfg, "config_hash": config_hash(cfg),
            "seed": cfg.get("seed"), **extra}


# -- subcommands -----------------------------------------------------------

def run_simulate(cfg, out: Path):
    rng = np.random.default_rng(cfg["seed"])
    eps = Inelasticity(float(cfg["eps"]))
    box = None if cfg["box"] is None else float(cfg["box"])
    if cfg.get("positions") is not None:
        q = np.asarray(cfg["positions"], dtype=float)
        p = np.asarray(cfg["momenta"], dtype=float)
        state = SystemState(q, p, float(cfg["sigma"]), eps, box)
    else:
        sampler = UniformMaxwellian(d=int(cfg["d"]), length=box or 1.0,
                                    temperature=float(cfg["temperature"]))
        state = sample_chaotic_state(int(cfg["n"]), sampler,
                                     float(cfg["sigma"]), eps, box, rng)
    log = TrajectoryLog()
    sim = Simulation(state, log=log, tc_threshold=cfg["tc_threshold"],
                     storm_limit=float(cfg["storm_limit"]))
    times = cfg["snapshot_times"] or [0.0, float(cfg["t"])]
    snaps = []
    for t_target in sorted(set(float(t) for t in times)):
        sim.run(dt=max(t_target - sim.t, 0.0))
        snaps.append(sim.state())

    d = state.d
    qcols = ["qx", "qy", "qz"][:d]
    pcols = ["px", "py", "pz"][:d]
    rows = []
    for s in snaps:
        for i in range(s.n):
            rows.append([s.time, i, *map(float, s.q[i]), *map(float, s.p[i])])
    write_csv(out / "snapshots.csv", ["t", "particle", *qcols, *pcols], rows)
    etacols = [f"eta{c}" for c in "xyz"[:d]]
    write_csv(out / "events.csv", ["t", "i", "j", *etacols, "g_n", "dE"],
              [[ev.t, ev.i, ev.j, *map(float, ev.eta), ev.g_n, ev.dE]
               for ev in log.events])
    final = snaps[-1]
    write_json(out / "run.json", _report(
        cfg, n_events=log.n_events,
        total_dissipation=log.total_dissipation(),
        final_energy=final.kinetic_energy(),
        final_momentum=list(map(float, final.total_momentum()))))
    return 0


def run_dsmc(cfg, out: Path):
    sampler = UniformMaxwellian(length=1.0,
                                temperature=float(cfg["temperature"]))
    sol = kinetic.solve_limit_equation(
        sampler, float(cfg["t_end"]), Inelasticity(float(cfg["eps"])),
        seed=int(cfg["seed"]), n_samples=int(cfg["n_samples"]),
        n_cells=int(cfg["n_cells"]), density=float(cfg["density"]),
        snapshot_times=cfg["snapshot_times"], q_bins=int(cfg["q_bins"]),
        p_bins=int(cfg["p_bins"]))
    rows = []
    for h in sol.histograms:
        for qi in range(h.counts.shape[0]):
            for pi in range(h.counts.shape[1]):
                c = h.counts[qi, pi]
                if c:
                    rows.append([h.time, qi, pi, c / h.sample_weight,
                                 h.sample_weight])
    write_csv(out / "histograms.csv",
              ["t", "q_bin", "p_bin", "count", "weight"], rows)
    write_csv(out / "moments.csv",
              ["t", "mass", "momentum", "energy", "temperature"],
              [list(m) for m in sol.moments])
    write_json(out / "run.json", _report(
        cfg, final_temperature=sol.moments[-1][4],
        n_steps=len(sol.moments) - 1))
    return 0


def run_collision_check(cfg, out: Path):
    rng = np.random.default_rng(cfg["seed"])
    cases = int(cfg["cases"])
    worst = {"momentum": 0.0, "restitution": 0.0, "round_trip": 0.0,
             "dissipation": 0.0}
    for _ in range(cases):
        d = int(rng.choice([1, 3]))
        epsv = float(rng.choice([0.0, 0.1, 0.25, 0.49]))
        eps = Inelasticity(epsv)
        p1, p2 = rng.normal(size=d), rng.normal(size=d)
        eta = rng.normal(size=d)
        eta = unit_normal(eta / np.linalg.norm(eta))
        if eta @ (p1 - p2) < 0:
            eta = -eta
        s1, s2 = collide(p1, p2, eta, eps)
        worst["momentum"] = max(worst["momentum"], float(np.max(np.abs(
            (s1 + s2) - (p1 + p2)))) / max(1.0, float(np.max(np.abs(p1 + p2)))))
        worst["restitution"] = max(worst["restitution"], abs(
            float(eta @ (s1 - s2)) + (1 - 2 * epsv) * float(eta @ (p1 - p2))))
        b1, b2 = precollide(s1, s2, eta, eps)
        worst["round_trip"] = max(worst["round_trip"], float(
            max(np.max(np.abs(b1 - p1)), np.max(np.abs(b2 - p2)))))
        brute = 0.5 * float(s1 @ s1 + s2 @ s2 - p1 @ p1 - p2 @ p2)
        worst["dissipation"] = max(worst["dissipation"], abs(
            dissipation(p1, p2, eta, eps) - brute))
    passed = (worst["momentum"] <= 1e-14 and worst["restitution"] <= 1e-12
              and worst["round_trip"] <= 1e-12
              and worst["dissipation"] <= 1e-12)
    write_json(out / "report.json", _report(
        cfg, n_samples=cases, checks=worst, passed=bool(passed),
        jacobian_example=collision_jacobian(Inelasticity(0.25))))
    return 0 if passed else 1


def run_cumulant_check(cfg, out: Path):
    sums = {}
    for n in range(1, int(cfg["max_order"])):
        sums[str(n + 1)] = sum(
            t.coefficient for t in cumulants.enumerate_cumulant_terms(n))
    eps = Inelasticity(0.25)
    q = np.array([[0.0], [10.0], [20.0]])
    p = np.array([[1.0], [0.0], [-1.0]])
    b = lambda qq, pp: 0.5 * float(np.sum(pp ** 2))
    vanish = {str(n): cumulants.apply_cumulant(n, 1.0, b, q[:n + 1],
                                               p[:n + 1], 0.1, eps)
              for n in (1, 2)}
    identity_ok = True
    for s in (1, 2, 3):
        lhs = cumulants.scattering_term_list(1, cluster_size=s)
        terms = list(cumulants.generating_term_list(1, cluster_size=s))
        for i in range(s):
            inner = [(1, (frozenset((i, s)),)), (-1, ())]
            for c1, ops1 in cumulants.scattering_term_list(0, s):
                for c2, ops2 in inner:
                    terms.append((c1 * c2, ops1 + ops2))
        identity_ok &= cumulants.combine_terms(terms) == lhs
    passed = (all(v == 0 for v in sums.values())
              and all(abs(v) <= 1e-12 for v in vanish.values())
              and identity_ok)
    write_json(out / "report.json", _report(
        cfg, coefficient_sums=sums, vanishing_values=vanish,
        generating_identity=bool(identity_ok), passed=bool(passed)))
    return 0 if passed else 1


def run_duality(cfg, out: Path):
    sampler = UniformMaxwellian(length=1.0,
                                temperature=float(cfg["temperature"]))
    b1 = lambda q, p: 0.5 * p * p
    cells = []
    ss = np.random.SeedSequence(int(cfg["seed"]))
    for e in cfg["eps_list"]:
        for t in cfg["t_list"]:
            for n in cfg["n_list"]:
                sub = np.random.SeedSequence(
                    entropy=ss.entropy,
                    spawn_key=(int(1000 * e), int(1000 * t), n))
                res, err = cumulants.duality_residual(
                    b1, sampler, float(t), int(n), int(cfg["mc_samples"]),
                    float(cfg["sigma"]), Inelasticity(float(e)),
                    seed=sub.generate_state(1)[0])
                cells.append({"eps": float(e), "t": float(t), "n": int(n),
                              "residual": res, "stderr": err,
                              "z": res / err})
    max_z = max(abs(c["z"]) for c in cells)
    write_json(out / "report.json", _report(
        cfg, n_samples=int(cfg["mc_samples"]), cells=cells,
        max_abs_z=max_z, passed=bool(max_z < 3.0)))
    return 0 if max_z < 3.0 else 1


def run_enskog_integral(cfg, out: Path):
    d = int(cfg["d"])
    f2 = kinetic.maxwellian_product_f2(float(cfg["temperature"]), d=d)
    x1 = (np.zeros(d), np.asarray(cfg["p1"], dtype=float))
    value, stderr = kinetic.enskog_collision_integral(
        f2, x1, float(cfg["sigma"]), Inelasticity(float(cfg["eps"])),
        int(cfg["mc_budget"]), d=d,
        rng=np.random.default_rng(int(cfg["seed"])))
    write_json(out / "report.json", _report(
        cfg, estimate=value, stderr=stderr,
        n_samples=int(cfg["mc_budget"])))
    return 0


def run_bgl_study(cfg, out: Path):
    report = bgl.bg_study(cfg)
    write_json(out / "report.json", _report(
        cfg, per_sigma=report.per_sigma, verdicts=report.verdicts))
    write_csv(out / "report.csv",
              ["sigma", "t", "D1", "D1_err", "G2", "G2_floor",
               "energy_particle", "energy_dsmc"],
              [[r[k] for k in ("sigma", "t", "D1", "D1_err", "G2",
                               "G2_floor", "energy_particle",
                               "energy_dsmc")] for r in report.per_sigma])
    return 0 if all(report.verdicts.values()) else 1


RUNNERS = {
    "simulate": run_simulate,
    "dsmc": run_dsmc,
    "collision-check": run_collision_check,
    "cumulant-check": run_cumulant_check,
    "duality": run_duality,
    "enskog-integral": run_enskog_integral,
    "bgl-study": run_bgl_study,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="granulab",
        description="granular-gas kinetics laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", dest="overrides")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker count; never affects results")
        sp.add_argument("--verify", action="store_true",
                        help="recompute and print the config hash only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.subcommand, args.config, args.overrides,
                          args.seed)
        if args.verify:
            print(config_hash(cfg))
            return 0
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[args.subcommand](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GranulabError as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "abort.json",
                   {"error": type(exc).__name__, "message": str(exc)})
        print(f"runtime guard abort: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
