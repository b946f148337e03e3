"""Command-line experiment runner.

Every subcommand reads an optional JSON config (validated against
``schema/config.schema.json``), applies flag overrides, runs its sweep and
writes ``<subcommand>.csv`` plus ``<subcommand>.json`` into ``--out``.
Exit codes: 0 ok, 2 configuration error, 3 failed consistency check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from .channels import ChannelSpec, transformed_charge
from .decoders import BENCHMARK_COLUMNS
from .lattice import Chain1D, LiebCylinder2D
from .protocol import asymptote_1d, closed_form_1d, coherent_info_no_env, coherent_info_with_env
from .statmech import SCAN_COLUMNS, BracketingError, threshold_scan
from .strange import SC_COLUMNS, Ring1D, type1_decay_1d, type2_sc
from .virtual import simulate_virtual_1d, virtual_benchmark_point

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3

DEFAULTS: dict[str, dict] = {
    "ic-1d": {"N_grid": [2, 4, 8], "p_grid": [0.05, 0.1, 0.2], "estimator": "closed_form",
              "channel": {"kind": "z_dephase", "mask": "B"}, "n_traj": 2000},
    "ic-2d": {"sizes": [4, 6], "p_grid": [0.05, 0.1, 0.15], "estimator": "decoder_mc",
              "channel": {"kind": "z_dephase", "mask": "B"}, "n_traj": 500},
    "ic-env": {"lattice": {"N": 2}, "channels": [
        {"kind": "z_dephase", "p_a": 0.2, "p_b": 0.3}, {"kind": "y_dephase", "p_a": 0.15, "p_b": 0.25},
        {"kind": "swap"}, {"kind": "sdc", "theta": 0.3, "phi": 0.2, "q": 1.0},
        {"kind": "controlled_hadamard", "p_a": 1.0, "mask": "A"}]},
    "threshold": {"p_grid": [0.07, 0.09, 0.1, 0.11, 0.13], "sizes": [8, 12, 16], "n_samples": 10000,
                  "observable": "mwpm", "lambda_grid": [0.0], "n_boot": 200},
    "strange": {"kind": "I", "p_grid": [0.05, 0.1, 0.2], "max_separation": 8, "lattice": {"N": 6},
                "channel": {"kind": "sdc", "theta": 0.4, "phi": 0.3, "mask": "A"}},
    "phase-diagram": {"model": "cluster1d", "channel": {"kind": "z_dephase"}, "lattice": {"N": 50},
                      "p_grid": [0.0, 0.1, 0.2, 0.3, 0.4], "dense_check": True, "n_traj": 300},
    "virtual": {"dimension": 1, "N_grid": [2, 5, 10], "p_grid": [0.05, 0.1, 0.2], "sizes": [6, 10],
                "n_samples": 20000},
    "selftest": {},
}


class ConfigError(ValueError):
    pass


class ConsistencyFailure(RuntimeError):
    pass


# ------------------------------------------------------------------ plumbing

def _schema() -> dict:
    return json.loads(resources.files("mixspt").joinpath("schema/config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    errors = sorted(jsonschema.Draft202012Validator(_schema()).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: cannot override inside a non-object")
    node[keys[-1]] = value


def build_config(command: str, args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"<file>: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("<root>: config must be a JSON object")
        cfg.update(loaded)
    if getattr(args, "model", None):
        cfg["model"] = args.model
    if getattr(args, "channel", None):
        cfg["channel"] = {"kind": args.channel}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected key=value")
        key, text = item.split("=", 1)
        _set_path(cfg, key, _parse_value(text))
    cfg["experiment"] = command
    cfg["seed"] = args.seed if args.seed is not None else cfg.get("seed", 0)
    validate_config(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def point_seed(seed: int, *index: int) -> int:
    return int(np.random.SeedSequence([seed, *index]).generate_state(1)[0])


def _map(fn: Callable, tasks: list, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))  # map keeps task order, so reductions are deterministic
    return [fn(t) for t in tasks]


def _channel(cfg: dict, key: str = "channel") -> ChannelSpec:
    try:
        return ChannelSpec.from_dict(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def with_strength(ch: ChannelSpec, p: float) -> ChannelSpec:
    """Set the sweep strength: dilution q for sdc, p on every hit sublattice otherwise."""
    if ch.kind == "sdc":
        return replace(ch, q=p)
    return replace(ch, p_a=p if ch.hits("A") else ch.p_a, p_b=p if ch.hits("B") else ch.p_b)


class Result:
    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[list] = []
        self.checks: list[dict] = []
        self.summary: dict = {}

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})


# --------------------------------------------------------------- experiments

def _ic_1d_task(task):
    N, p, ch_dict, estimator, n_traj, seed = task
    ch = with_strength(ChannelSpec.from_dict(ch_dict), p)
    chain = Chain1D(N)
    rep = coherent_info_no_env(chain, ch, estimator, n_traj=n_traj, seed=seed)
    ref = None
    if estimator != "closed_form" and ch.kind in ("z_dephase", "sdc") and not ch.boundary:
        ref = closed_form_1d(chain, ch)
    return N, p, rep.value, rep.stderr, ref


def run_ic_1d(cfg: dict, workers: int) -> Result:
    ch = _channel(cfg)
    Ns = [cfg["lattice"]["N"]] if "N" in cfg.get("lattice", {}) else cfg["N_grid"]
    est = cfg["estimator"]
    tasks = [(N, p, ch.to_dict(), est, cfg["n_traj"], point_seed(cfg["seed"], i, k))
             for i, N in enumerate(Ns) for k, p in enumerate(cfg["p_grid"])]
    res = Result(["N", "p", "channel", "estimator", "value", "stderr", "n_traj", "seed"])
    for (N, p, value, stderr, ref), task in zip(_map(_ic_1d_task, tasks, workers), tasks):
        res.rows.append([N, p, ch.kind, est, value, stderr, cfg["n_traj"] if est == "decoder_mc" else "", task[-1]])
        if ref is not None:
            tol = 1e-9 if est == "exact_dense" else 5 * max(stderr, 1e-3)
            res.check(f"closed_form N={N} p={fmt(p)}", abs(value - ref) <= tol, f"{value:.12g} vs {ref:.12g}")
    return res


def _ic_2d_task(task):
    Lx, Ly, p, ch_dict, estimator, n_traj, seed = task
    ch = with_strength(ChannelSpec.from_dict(ch_dict), p)
    rep = coherent_info_no_env(LiebCylinder2D(Lx, Ly), ch, estimator, n_traj=n_traj, seed=seed)
    return rep.value, rep.stderr


def run_ic_2d(cfg: dict, workers: int) -> Result:
    ch = _channel(cfg)
    lat = cfg.get("lattice", {})
    shapes = [(lat["Lx"], lat["Ly"])] if "Lx" in lat and "Ly" in lat else [(L, L) for L in cfg["sizes"]]
    tasks = [(Lx, Ly, p, ch.to_dict(), cfg["estimator"], cfg["n_traj"], point_seed(cfg["seed"], i, k))
             for i, (Lx, Ly) in enumerate(shapes) for k, p in enumerate(cfg["p_grid"])]
    res = Result(["Lx", "Ly", "p", "channel", "estimator", "value", "stderr", "n_traj", "seed"])
    for (value, stderr), t in zip(_map(_ic_2d_task, tasks, workers), tasks):
        res.rows.append([t[0], t[1], t[2], ch.kind, cfg["estimator"], value, stderr, cfg["n_traj"], t[-1]])
        res.check(f"bounded Lx={t[0]} p={fmt(t[2])}", -2 - 1e-9 <= value <= 1 + 1e-9, f"{value:.12g}")
    return res


def run_ic_env(cfg: dict, workers: int) -> Result:
    chain = Chain1D(cfg.get("lattice", {}).get("N", 2))
    res = Result(["N", "channel", "ic_with_env", "ic_no_env", "decomposable"])
    for k, ch_dict in enumerate(cfg["channels"]):
        ch = _channel({"c": ch_dict}, "c")
        with_env = coherent_info_with_env(chain, ch).value
        no_env = coherent_info_no_env(chain, ch).value
        decomposable = all(transformed_charge(ch, s).decomposable for s in ("A", "B") if ch.hits(s))
        res.rows.append([chain.N, json.dumps(ch.to_dict(), sort_keys=True), with_env, no_env, decomposable])
        res.check(f"data_processing[{k}]", no_env <= with_env + 1e-9, f"{no_env:.12g} <= {with_env:.12g}")
        if decomposable:
            res.check(f"decomposable_env[{k}]", abs(with_env - 1) < 1e-9, f"{with_env:.12g}")
    return res


def run_threshold(cfg: dict, workers: int) -> Result:
    res = Result(SCAN_COLUMNS)
    crossings = []
    for lam in cfg["lambda_grid"]:
        if cfg["observable"] == "mwpm" and lam != 0:
            raise ConfigError("lambda_grid: the mwpm observable supports lambda = 0 only")
        try:
            scan = threshold_scan(cfg["p_grid"], cfg["sizes"], cfg["n_samples"], cfg["seed"], cfg["observable"],
                                  lam, cfg["n_boot"], workers)
        except BracketingError as exc:
            raise ConsistencyFailure(f"bracketing: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res.rows += [r.as_list() for r in scan.rows]
        crossings.append({"lambda": lam, "p_c": scan.p_c, "ci": list(scan.ci), "pair_crossings": scan.pair_crossings})
        res.check(f"ci_contains_estimate lambda={fmt(lam)}", scan.ci[0] <= scan.p_c <= scan.ci[1],
                  f"{scan.p_c:.6g} in [{scan.ci[0]:.6g}, {scan.ci[1]:.6g}]")
    res.summary["crossings"] = crossings
    return res


def run_strange(cfg: dict, workers: int) -> Result:
    res = Result(SC_COLUMNS)
    seed = cfg["seed"]
    if cfg["kind"] == "I":
        for k, p in enumerate(cfg["p_grid"]):
            rep = type1_decay_1d(p, cfg["max_separation"], np.random.default_rng(point_seed(seed, k)))
            for n, v in zip(rep.extras["separations"], rep.values):
                res.rows.append(["I", "z_dephase", p, 0.0, int(n), v, 0.0, rep.xi, point_seed(seed, k)])
            xi_exact = 1 / math.log(1 / (1 - 2 * p)) if 0 < p < 0.5 else float("inf")
            res.check(f"xi p={fmt(p)}", abs(rep.xi - xi_exact) <= 0.05 * xi_exact, f"{rep.xi:.6g} vs {xi_exact:.6g}")
        return res
    ring = Ring1D(cfg.get("lattice", {}).get("N", 6))
    base = _channel(cfg)
    for p in cfg["p_grid"]:
        ch = with_strength(base, p)
        for j in range(2, ring.n_qubits, 2):
            dense = type2_sc(ch, ring, 0, j).value
            res.rows.append(["II", ch.kind, p, 0.0, j // 2, dense, 0.0, "", seed])
            try:
                closed = type2_sc(ch, ring, 0, j, "closed_form").value
            except ValueError:
                continue
            res.check(f"closed_form p={fmt(p)} sep={j // 2}", abs(dense - closed) < 1e-10, f"{dense:.12g} vs {closed:.12g}")
    return res


def _region(value: float) -> int:
    return int(round(value))


def run_phase_diagram(cfg: dict, workers: int) -> Result:
    base = _channel(cfg)
    grid = cfg["p_grid"]
    if cfg["model"] == "cluster1d":
        if base.kind != "z_dephase":
            raise ConfigError("channel: the 1D phase diagram is tabulated for z_dephase")
        N = cfg.get("lattice", {}).get("N", 50)
        res = Result(["p_a", "p_b", "N", "closed_form", "asymptote", "region", "dense_N3"])
        for pa in grid:
            for pb in grid:
                ch = ChannelSpec("z_dephase", p_a=pa, p_b=pb)
                closed = closed_form_1d(Chain1D(N), ch)
                both = pa > 0
                if pb > 0:
                    asym = asymptote_1d(pa, pb, N, both=both)
                else:
                    asym = asymptote_1d(0.0, pa, N, both=False) if pa > 0 else 1.0
                dense = None
                if cfg.get("dense_check"):
                    small = Chain1D(3)
                    dense = coherent_info_no_env(small, ch).value
                    res.check(f"dense_N3 pa={fmt(pa)} pb={fmt(pb)}", abs(dense - closed_form_1d(small, ch)) < 1e-9,
                              f"{dense:.12g}")
                res.rows.append([pa, pb, N, closed, asym, _region(closed), dense])
                if all((1 - 2 * x) ** N < 0.1 for x in (pa, pb) if x > 0):  # asymptotic regime reached
                    expected = 1 - (pa > 0) - (pb > 0)
                    res.check(f"region pa={fmt(pa)} pb={fmt(pb)}", _region(closed) == expected, f"{closed:.6g}")
        return res
    # 2D: vertices carry p_a (= p_v), edges carry p_b (= p_l)
    lat = cfg.get("lattice", {})
    Lx, Ly = lat.get("Lx", 6), lat.get("Ly", 6)
    tasks = [(Lx, Ly, pv, pl, cfg["n_traj"], point_seed(cfg["seed"], i, k))
             for i, pv in enumerate(grid) for k, pl in enumerate(grid)]
    res = Result(["p_v", "p_l", "Lx", "Ly", "value", "stderr", "region", "seed"])
    for (value, stderr), t in zip(_map(_phase_2d_task, tasks, workers), tasks):
        res.rows.append([t[2], t[3], Lx, Ly, value, stderr, _region(value), t[-1]])
    return res


def _phase_2d_task(task):
    Lx, Ly, pv, pl, n_traj, seed = task
    ch = ChannelSpec("z_dephase", p_a=pv, p_b=pl, mask="AB")
    rep = coherent_info_no_env(LiebCylinder2D(Lx, Ly), ch, "decoder_mc", n_traj=n_traj, seed=seed)
    return rep.value, rep.stderr


def run_virtual(cfg: dict, workers: int) -> Result:
    seed = cfg["seed"]
    if cfg["dimension"] == 1:
        res = Result(["model", "N", "p", "value", "stderr", "closed_form", "n_samples", "seed"])
        for i, N in enumerate(cfg["N_grid"]):
            for k, p in enumerate(cfg["p_grid"]):
                s = point_seed(seed, i, k)
                est = simulate_virtual_1d(N, p, cfg["n_samples"], seed=s)
                ref = closed_form_1d(Chain1D(N), ChannelSpec("z_dephase", p_b=p, mask="B"))
                res.rows.append(["virtual", N, p, est.value, est.stderr, ref, cfg["n_samples"], s])
                # 5 sigma keeps a full sweep from tripping on ordinary fluctuations
                res.check(f"closed_form N={N} p={fmt(p)}", abs(est.value - ref) <= 5 * est.stderr + 1e-12,
                          f"{est.value:.6g} +- {est.stderr:.2g} vs {ref:.6g}")
        return res
    res = Result(["model"] + BENCHMARK_COLUMNS)
    tasks = [(L, p, cfg["n_samples"], point_seed(seed, i, k))
             for i, L in enumerate(cfg["sizes"]) for k, p in enumerate(cfg["p_grid"])]
    for row in _map(_virtual_2d_task, tasks, workers):
        res.rows.append(["virtual"] + row.as_list())
    return res


def _virtual_2d_task(task):
    return virtual_benchmark_point(*task)


def run_selftest(cfg: dict, workers: int) -> Result:
    from .checks import run_suites

    res = Result(["suite", "passed", "seconds", "detail"])
    for r in run_suites():
        res.rows.append([r.name, r.passed, r.seconds, r.detail])
        res.check(r.name, r.passed, r.detail)
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.1f}s): {r.detail}")
    return res


RUNNERS: dict[str, Callable[[dict, int], Result]] = {
    "ic-1d": run_ic_1d,
    "ic-2d": run_ic_2d,
    "ic-env": run_ic_env,
    "threshold": run_threshold,
    "strange": run_strange,
    "phase-diagram": run_phase_diagram,
    "virtual": run_virtual,
    "selftest": run_selftest,
}


def write_outputs(command: str, cfg: dict, res: Result, out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    seed_key = "master_seed" if "seed" in res.columns else "seed"  # rows already carry their point seed
    stamp = {"version": __version__, seed_key: cfg["seed"], "config_hash": h}
    csv_path, json_path = out / f"{command}.csv", out / f"{command}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(res.columns + list(stamp))
        for row in res.rows:
            w.writerow([fmt(v) for v in row] + [fmt(v) for v in stamp.values()])
    summary = {"version": __version__, "seed": cfg["seed"], "config_hash": h, "experiment": command, "config": cfg, "n_rows": len(res.rows), "checks": res.checks,
                       "status": "ok" if all(c["passed"] for c in res.checks) else "check_failed"} | res.summary
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return csv_path, json_path


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixspt", description="Decohered cluster-state experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field, dotted keys for nested fields, JSON values")
        if name == "phase-diagram":
            p.add_argument("--model", choices=["cluster1d", "cluster2d"])
        if name in ("phase-diagram", "ic-1d", "ic-2d", "strange"):
            p.add_argument("--channel", choices=["z_dephase", "y_dephase", "swap", "controlled_hadamard", "sdc"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = build_config(args.command, args)
        res = RUNNERS[args.command](cfg, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConsistencyFailure as exc:
        print(f"consistency check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    csv_path, json_path = write_outputs(args.command, cfg, res, Path(args.out))
    failed = [c["name"] for c in res.checks if not c["passed"]]
    print(f"wrote {csv_path} and {json_path}")
    if failed:
        print(f"consistency checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
