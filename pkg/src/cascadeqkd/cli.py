"""Command-line harness: sweeps, verdict tables, cascade batches, checks.

Subcommands: keyrate, table2, table4, cascade, decoy-bounds, verify.  Config
comes from a JSON file (--config); command-line flags override file fields.
All outputs are CSV files under --out whose content is deterministic given
the config and seeds.  Exit codes: 0 ok, 1 invariant failure, 2 config
error, 3 solver inconclusive.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import cascade as cascade_mod
from . import decoy as decoy_mod
from . import solver, symmetry
from .channels import (
    ChannelScenario,
    simulate_decoy_tables,
    simulate_qubit_table,
    sifted_error_and_pass,
    single_photon_truth,
)
from .linalg import hermitize
from .protocols import (
    ALICE_OUTCOMES,
    BOB_OUTCOMES,
    GRAININGS,
    build_constraints,
    build_decoy_maps,
    build_qubit_maps,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3

TABLE_ROWS = ("coarse", "sifted_fine", "fine")
SYMBOL = {"equal": "=", "strictly_greater": ">", "inconclusive": "?"}


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "protocol": "qubit",
    "theta_deg": 0.0,
    "q": 0.0,
    "eta": 1.0,
    "with_replacement": False,
    "lambda_rep": 0.2,
    "intensities": [0.5, 0.1, 0.001],
    "cutoff": 10,
    "grainings": list(GRAININGS),
    "f_eff": 1.2,
    "sweep": {"variable": "theta_deg", "start": 0.0, "stop": 25.0, "step": 5.0},
    "solver": {"gap_target": 1e-4, "max_iters": 2000, "clip": 1e-12},
    "cascade": {"n": 10_000, "e": [0.01, 0.02, 0.05, 0.1], "seeds": 20},
    "table2": {"thetas_deg": [5.0, 10.0, 15.0], "q": 0.1, "lambda_rep": 0.2},
    "table4": {"sin2_theta": 0.06, "eta": 0.5, "lambda_rep": 0.2},
}


def load_config(path) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    try:
        user = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from err
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for key, value in user.items():
        if key not in cfg:
            raise ConfigError(f"{path}: unknown field {key!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: field {key!r} must be an object")
            for sub, sval in value.items():
                if sub not in cfg[key]:
                    raise ConfigError(f"{path}: unknown field {key}.{sub}")
                cfg[key][sub] = sval
        else:
            cfg[key] = value
    return cfg


def _solver_options(cfg) -> solver.SolverOptions:
    s = cfg["solver"]
    try:
        return solver.SolverOptions(gap_target=float(s["gap_target"]),
                                    max_iters=int(s["max_iters"]),
                                    clip=float(s["clip"]))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"solver options: {err}") from err


def _scenario(cfg, **overrides) -> ChannelScenario:
    fields = {
        "protocol": cfg["protocol"],
        "theta": math.radians(float(cfg["theta_deg"])),
        "q": float(cfg["q"]),
        "lambda_rep": float(cfg["lambda_rep"]) if cfg["with_replacement"] else 0.0,
        "eta": float(cfg["eta"]),
    }
    fields.update(overrides)
    if fields["protocol"] == "decoy":
        fields["intensities"] = tuple(float(m) for m in cfg["intensities"])
    try:
        return ChannelScenario(**fields)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _sweep_values(cfg) -> list:
    sweep = cfg["sweep"]
    var = sweep["variable"]
    if var not in ("theta_deg", "theta", "q", "eta"):
        raise ConfigError(f"unknown sweep variable {var!r}")
    start, stop = float(sweep["start"]), float(sweep["stop"])
    step = float(sweep["step"])
    if step <= 0 or stop < start:
        raise ConfigError(f"empty sweep range [{start}, {stop}] step {step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def _grainings(cfg) -> list:
    out = list(cfg["grainings"])
    bad = [g for g in out if g not in GRAININGS]
    if bad or not out:
        raise ConfigError(f"grainings must be a nonempty subset of {GRAININGS}")
    return out


def solve_cell(task: dict):
    """One scenario x graining solve; returns (id, relation, margin, row)."""
    protocol = task["protocol"]
    opts = solver.SolverOptions(**task["solver"])
    if protocol == "qubit":
        maps_f, maps_fp = build_qubit_maps(False), build_qubit_maps(True)
        constraints = build_constraints(np.asarray(task["cells"]),
                                        task["graining"], "qubit")
    else:
        maps_f, maps_fp = build_decoy_maps(False), build_decoy_maps(True)
        bounds = decoy_mod.solve_yield_bounds(np.asarray(task["observed"]),
                                              task["intensities"],
                                              cutoff=task["cutoff"])
        constraints = decoy_mod.assemble_interval_constraints(
            bounds, task["graining"])
    res_f = solver.minimize(maps_f, constraints, opts)
    res_fp = solver.minimize(maps_fp, constraints, opts)
    verdict = solver.classify(res_f, res_fp, opts.verdict_tol)
    report = solver.assemble_keyrates(res_f, res_fp, task["e"],
                                      task["f_eff"], task["p_pass"])
    return (task["scenario"], verdict.relation, verdict.margin,
            solver.csv_row(task["scenario"], report, verdict))


def _qubit_task(cfg, scenario: ChannelScenario, graining: str, label: str) -> dict:
    table = simulate_qubit_table(scenario)
    e, p_pass = sifted_error_and_pass(table.cells)
    return {"protocol": "qubit", "cells": table.cells, "graining": graining,
            "scenario": label, "e": e, "p_pass": p_pass,
            "f_eff": float(cfg["f_eff"]), "solver": dict(cfg["solver"])}


def _decoy_task(cfg, scenario: ChannelScenario, graining: str, label: str) -> dict:
    table = simulate_decoy_tables(scenario)
    e, p_pass = sifted_error_and_pass(table.cells[0])
    return {"protocol": "decoy", "observed": table.conditional(),
            "intensities": scenario.intensities, "cutoff": int(cfg["cutoff"]),
            "graining": graining, "scenario": label, "e": e, "p_pass": p_pass,
            "f_eff": float(cfg["f_eff"]), "solver": dict(cfg["solver"])}


def _run_tasks(tasks, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(solve_cell, tasks))
    return [solve_cell(t) for t in tasks]


def _write(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header] + list(rows)) + "\n")


def cmd_keyrate(cfg, out: Path, jobs: int) -> int:
    _solver_options(cfg)
    values = _sweep_values(cfg)
    var = cfg["sweep"]["variable"]
    tasks = []
    for value in values:
        over = {}
        if var in ("theta_deg", "theta"):
            over["theta"] = math.radians(value)
        elif var == "q":
            if cfg["protocol"] != "qubit":
                raise ConfigError("q sweeps apply to the qubit protocol")
            over["q"] = value
        else:
            if cfg["protocol"] != "decoy":
                raise ConfigError("eta sweeps apply to the decoy protocol")
            over["eta"] = value
        scenario = _scenario(cfg, **over)
        for graining in _grainings(cfg):
            label = f"{cfg['protocol']}:{graining}:{var}={value:g}"
            task = (_qubit_task if cfg["protocol"] == "qubit" else _decoy_task)(
                cfg, scenario, graining, label)
            tasks.append(task)
    results = _run_tasks(tasks, jobs)
    _write(out / "keyrate.csv", solver.CSV_HEADER, (r[3] for r in results))
    n_bad = sum(1 for r in results if r[1] == "inconclusive")
    print(f"wrote {out / 'keyrate.csv'} ({len(results)} rows, "
          f"{n_bad} inconclusive)")
    return EXIT_INCONCLUSIVE if n_bad else EXIT_OK


def _aggregate(relations) -> str:
    """Column verdict over gridpoints: any separation wins, else unanimity."""
    if any(r == "strictly_greater" for r in relations):
        return ">"
    if all(r == "equal" for r in relations):
        return "="
    return "?"


def _verdict_table(cfg, out: Path, jobs: int, name: str, channels) -> int:
    """Shared table2/table4 driver; `channels` maps labels to scenario lists."""
    tasks = []
    keys = []
    for ch_label, scenarios in channels:
        for graining in TABLE_ROWS:
            for point_label, scenario in scenarios:
                label = f"{cfg['protocol']}:{ch_label}:{graining}:{point_label}"
                task = (_qubit_task if scenario.protocol == "qubit"
                        else _decoy_task)(cfg, scenario, graining, label)
                tasks.append(task)
                keys.append((ch_label, graining))
    results = _run_tasks(tasks, jobs)
    cells = {}
    for key, res in zip(keys, results):
        cells.setdefault(key, []).append(res[1])
    header = "graining," + ",".join(label for label, _ in channels)
    matrix = [g + "," + ",".join(_aggregate(cells[(label, g)])
                                 for label, _ in channels)
              for g in TABLE_ROWS]
    _write(out / f"{name}_cells.csv", solver.CSV_HEADER, (r[3] for r in results))
    _write(out / f"{name}_verdicts.csv", header, matrix)
    print(header)
    for line in matrix:
        print(line)
    print(f"wrote {out / f'{name}_cells.csv'} ({len(results)} rows), "
          f"{out / f'{name}_verdicts.csv'}")
    n_bad = sum(1 for line in matrix if "?" in line.split(",")[1:])
    return EXIT_INCONCLUSIVE if n_bad else EXIT_OK


def cmd_table2(cfg, out: Path, jobs: int) -> int:
    t = cfg["table2"]
    cfg = dict(cfg, protocol="qubit")
    thetas = [float(v) for v in t["thetas_deg"]]
    if not thetas:
        raise ConfigError("table2.thetas_deg must be nonempty")
    q, lam = float(t["q"]), float(t["lambda_rep"])

    def grid(**fields):
        return [(f"theta={v:g}", _scenario(cfg, protocol="qubit",
                                           theta=math.radians(v), **fields))
                for v in thetas]

    channels = [
        ("mis", grid(q=0.0, lambda_rep=0.0)),
        ("depol", [("theta=0", _scenario(cfg, protocol="qubit", theta=0.0,
                                         q=q, lambda_rep=0.0))]),
        ("mis+depol", grid(q=q, lambda_rep=0.0)),
        ("mis+depol+replace", grid(q=q, lambda_rep=lam)),
    ]
    return _verdict_table(cfg, out, jobs, "table2", channels)


def cmd_table4(cfg, out: Path, jobs: int) -> int:
    t = cfg["table4"]
    cfg = dict(cfg, protocol="decoy")
    sin2 = float(t["sin2_theta"])
    if not 0.0 <= sin2 < 1.0:
        raise ConfigError(f"table4.sin2_theta = {sin2} outside [0, 1)")
    theta = math.asin(math.sqrt(sin2))
    eta, lam = float(t["eta"]), float(t["lambda_rep"])

    def one(label, **fields):
        return (label, [(label, _scenario(cfg, protocol="decoy", **fields))])

    channels = [
        one("loss", theta=0.0, eta=eta, lambda_rep=0.0),
        one("mis", theta=theta, eta=1.0, lambda_rep=0.0),
        one("loss+mis", theta=theta, eta=eta, lambda_rep=0.0),
        one("loss+mis+replace", theta=theta, eta=eta, lambda_rep=lam),
    ]
    return _verdict_table(cfg, out, jobs, "table4", channels)


CASCADE_HEADER = "seed,n,e,deltaA,deltaB,f_emp,residual_errors,reconstruction_ok"


def cmd_cascade(cfg, out: Path, seed_base, jobs: int) -> int:
    c = cfg["cascade"]
    n = int(c["n"])
    e_list = [float(e) for e in c["e"]]
    if n < 2 or not e_list or any(not 0.0 < e < 0.5 for e in e_list):
        raise ConfigError(f"cascade config invalid: n={n}, e={e_list}")
    seeds = c["seeds"]
    seeds = list(range(int(seeds))) if isinstance(seeds, int) else \
        [int(s) for s in seeds]
    if seed_base:
        seeds = [s + seed_base for s in seeds]
    rows = []
    ok_all = True
    for e in e_list:
        effs = []
        for seed in seeds:
            ss = np.random.SeedSequence([seed, int(round(e * 1e6))])
            rng = np.random.Generator(np.random.PCG64(ss))
            x = rng.integers(0, 2, size=n).astype(np.uint8)
            y = (x ^ (rng.random(n) < e)).astype(np.uint8)
            t = cascade_mod.run_cascade(
                x, y, cascade_mod.default_params(n, e, seed=seed))
            rebuilt = cascade_mod.reconstruct_bob_messages(
                t.alice_messages(), x ^ y)
            ok = rebuilt == t.bob_messages() and t.bits_a == t.bits_b
            ok_all = ok_all and ok
            rows.append(cascade_mod.summary_csv_row(seed, t, e) + f",{int(ok)}")
            effs.append(cascade_mod.leakage_summary(t, e)[2])
        print(f"e={e:g}: median f_emp = {float(np.median(effs)):.4f} "
              f"over {len(seeds)} runs")
    _write(out / "cascade_summary.csv", CASCADE_HEADER, rows)
    print(f"wrote {out / 'cascade_summary.csv'} ({len(rows)} rows)")
    if not ok_all:
        print("reconstruction or pairing failed on at least one run",
              file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


DECOY_BOUNDS_HEADER = "alice,bob,low,truth,high,width,contains"


def cmd_decoy_bounds(cfg, out: Path) -> int:
    scenario = _scenario(cfg, protocol="decoy")
    table = simulate_decoy_tables(scenario)
    bounds = decoy_mod.solve_yield_bounds(table.conditional(),
                                          scenario.intensities,
                                          cutoff=int(cfg["cutoff"]))
    truth = single_photon_truth(scenario) * 4.0  # joint -> conditional
    rows = []
    ok_all = True
    for x in range(4):
        for y in range(5):
            lo, hi = bounds.low[x, y], bounds.high[x, y]
            ok = lo - 1e-9 <= truth[x, y] <= hi + 1e-9
            ok_all = ok_all and ok
            rows.append(f"{ALICE_OUTCOMES[x]},{BOB_OUTCOMES['decoy'][y]},"
                        f"{lo:.9g},{truth[x, y]:.9g},{hi:.9g},"
                        f"{hi - lo:.9g},{int(ok)}")
    _write(out / "decoy_bounds.csv", DECOY_BOUNDS_HEADER, rows)
    print(f"wrote {out / 'decoy_bounds.csv'} (LP gap {bounds.max_gap:.3e})")
    if not ok_all:
        print("single-photon truth escaped the LP bounds", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _check_kraus_completeness():
    worst = 0.0
    for build in (build_qubit_maps, build_decoy_maps):
        for with_w in (False, True):
            m = build(with_w)
            gram = hermitize(sum(k.conj().T @ k for k in m.kraus))
            worst = max(worst, float(np.linalg.eigvalsh(gram)[-1]) - 1.0)
            pin = sum(m.pinch)
            worst = max(worst, float(np.abs(pin - np.eye(len(pin))).max()))
    return worst <= 1e-10, f"worst completeness defect {worst:.2e}"


def _check_gradient():
    rng = np.random.Generator(np.random.PCG64(7))
    maps = [build_qubit_maps(False), build_qubit_maps(True)]
    worst = 0.0
    for m in maps:
        for _ in range(3):
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = a @ a.conj().T
            rho = 0.5 * rho / np.trace(rho).real + 0.5 * np.eye(4) / 4.0
            h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            h = hermitize(h)
            h -= np.trace(h).real * np.eye(4) / 4.0
            h /= np.linalg.norm(h)
            grad = solver.gradient(rho, m)
            step = 1e-5
            fd = (solver.objective(rho + step * h, m)
                  - solver.objective(rho - step * h, m)) / (2 * step)
            exact = float(np.real(np.trace(grad.conj().T @ h)))
            worst = max(worst, abs(fd - exact) / max(1.0, abs(exact)))
    return worst <= 1e-5, f"worst directional-derivative error {worst:.2e}"


def _check_twirl():
    rng = np.random.Generator(np.random.PCG64(11))
    worst = 0.0
    for _ in range(5):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        t1 = symmetry.twirl(rho)
        worst = max(worst, float(np.abs(symmetry.twirl(t1) - t1).max()))
        gam = hermitize(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        lhs = np.trace(symmetry.twirl_adjoint(gam) @ rho)
        rhs = np.trace(gam @ symmetry.twirl(rho))
        worst = max(worst, abs(complex(lhs - rhs)))
    return worst <= 1e-12, f"worst twirl identity defect {worst:.2e}"


def _check_bell_oracle():
    rng = np.random.Generator(np.random.PCG64(13))
    maps_f, maps_fp = build_qubit_maps(False), build_qubit_maps(True)
    worst = 0.0
    for _ in range(5):
        lam = rng.dirichlet(np.ones(4))
        rho = sum(l * np.outer(b, b) for l, b in
                  zip(lam, symmetry.BELL_STATES))
        want = symmetry.bell_objective(lam)
        worst = max(worst, abs(solver.objective(rho, maps_f) - want),
                    abs(solver.objective(rho, maps_fp) - want))
    return worst <= 1e-9, f"worst closed-form mismatch {worst:.2e}"


def _check_cascade():
    rng = np.random.Generator(np.random.PCG64(17))
    for seed in range(3):
        x = rng.integers(0, 2, size=2000).astype(np.uint8)
        y = (x ^ (rng.random(2000) < 0.05)).astype(np.uint8)
        t = cascade_mod.run_cascade(
            x, y, cascade_mod.default_params(2000, 0.05, seed=seed))
        if cascade_mod.reconstruct_bob_messages(t.alice_messages(), x ^ y) \
                != t.bob_messages():
            return False, f"reconstruction mismatch at seed {seed}"
        if t.bits_a != t.bits_b:
            return False, f"direction counts differ at seed {seed}"
    return True, "reconstruction and pairing exact on 3 seeded runs"


def _check_decoy_sandwich():
    scenario = ChannelScenario(protocol="decoy", theta=0.12, eta=0.6,
                               intensities=(0.5, 0.1, 0.001))
    table = simulate_decoy_tables(scenario)
    bounds = decoy_mod.solve_yield_bounds(table.conditional(),
                                          scenario.intensities)
    truth = single_photon_truth(scenario) * 4.0
    ok = bool(np.all(bounds.low - 1e-9 <= truth)
              and np.all(truth <= bounds.high + 1e-9))
    return ok and bounds.max_gap < 1e-9, \
        f"LP gap {bounds.max_gap:.2e}, sandwich {'holds' if ok else 'fails'}"


def _check_noiseless():
    table = simulate_qubit_table(ChannelScenario(protocol="qubit"))
    constraints = build_constraints(table.cells, "fine", "qubit")
    worst = 0.0
    for maps in (build_qubit_maps(False), build_qubit_maps(True)):
        res = solver.minimize(maps, constraints)
        worst = max(worst, abs(res.lower - 0.5), abs(res.upper - 0.5))
    return worst <= 1e-3, f"noiseless entropy off by {worst:.2e}"


CHECKS = (
    ("kraus_completeness", _check_kraus_completeness),
    ("gradient_finite_difference", _check_gradient),
    ("twirl_identities", _check_twirl),
    ("bell_oracle_agreement", _check_bell_oracle),
    ("cascade_reconstruction", _check_cascade),
    ("decoy_sandwich", _check_decoy_sandwich),
    ("noiseless_keyrate", _check_noiseless),
)


def cmd_verify() -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as err:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_INVARIANT


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cascadeqkd",
        description="Key-rate bounds and Cascade simulation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("keyrate", "sweep one variable, emit bounds and rates per point"),
            ("table2", "qubit verdict grid: 4 channels x 3 grainings"),
            ("table4", "decoy verdict grid: 4 channels x 3 grainings"),
            ("cascade", "batch error-correction runs with leakage summary"),
            ("decoy-bounds", "single-photon yield bounds vs analytic truth"),
            ("verify", "run the cross-module invariant checks")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config; omitted fields use defaults")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=0,
                       help="offset added to cascade seeds")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for independent solves")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "keyrate":
            return cmd_keyrate(cfg, args.out, args.jobs)
        if args.command == "table2":
            return cmd_table2(cfg, args.out, args.jobs)
        if args.command == "table4":
            return cmd_table4(cfg, args.out, args.jobs)
        if args.command == "cascade":
            return cmd_cascade(cfg, args.out, args.seed, args.jobs)
        if args.command == "decoy-bounds":
            return cmd_decoy_bounds(cfg, args.out)
        return cmd_verify()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (solver.InfeasibleModelError,
            decoy_mod.InfeasibleStatisticsError, RuntimeError) as err:
        print(f"invariant failure: {err}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
