"""Command-line front end: simulate, estimate, bench, decompose.

Configs are JSON; command-line flags override file values.  All outputs are
deterministic given the seed (runtimes excluded).  Exit codes: 0 ok,
2 config error, 3 solver unconverged (estimate only, partial output
written).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import gridless, ongrid, retrieval
from .arrays import ArrayGeometry, SteeringDictionary, wrap_frequency
from .errors import ConfigError, SparseDoaError
from .offgrid import TaylorDictionary, offgrid_alternating, offgrid_joint
from .retrieval import LineSpectrum, match_and_score, model_order
from .signals import (
    SnapshotMatrix,
    SourceScenario,
    sample_covariance,
    coarray_average,
    simulate,
    snapshots_from_csv,
    snapshots_from_json,
    snapshots_to_csv,
    toeplitz,
)

LINEAR = ("ula", "sla")
METHOD_GEOMETRIES = {
    "anm": LINEAR,
    "gls": LINEAR,
    "ram": LINEAR,
    "weighted-anm": LINEAR,
    "emac": LINEAR,
    "anm-smv-cov": LINEAR,
    "nnm-music": LINEAR,
    "music": LINEAR,
    "esprit": LINEAR,
    "l21-lasso": LINEAR,
    "l21-bpdn": LINEAR,
    "slim": LINEAR,
    "m-focuss": LINEAR,
    "spice": LINEAR,
    "mle-em": LINEAR,
    "offgrid-alt": LINEAR,
    "offgrid-joint": LINEAR,
}


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _geometry_from_config(obj) -> ArrayGeometry:
    try:
        return ArrayGeometry.from_json(json.dumps(obj))
    except (KeyError, TypeError, SparseDoaError) as exc:
        raise ConfigError(f"bad geometry spec: {exc}") from exc


def _scenario_from_config(obj) -> SourceScenario:
    try:
        corr = obj.get("correlation", "uncorrelated")
        if isinstance(corr, list):
            corr = (corr[0], corr[1])
        return SourceScenario(
            freqs=tuple(obj.get("freqs", ())),
            powers=tuple(obj.get("powers", ())),
            amplitude_model=obj.get("amplitude_model", "complex-gaussian"),
            correlation=corr,
            noise_variance=float(obj.get("noise_variance", 0.0)),
            snapshots=int(obj.get("snapshots", 1)),
            seed=int(obj.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError, SparseDoaError) as exc:
        raise ConfigError(f"bad scenario spec: {exc}") from exc


def _read_snapshots(path, geometry) -> SnapshotMatrix:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        return snapshots_from_json(text, geometry)
    return snapshots_from_csv(text, geometry)


def _covariance_for_subspace(y: SnapshotMatrix):
    """Sample covariance for a ULA; co-array Toeplitz estimate for an SLA."""
    geom = y.geometry
    if geom.kind == "ula" or geom.omega == tuple(range(1, geom.n + 1)):
        return sample_covariance(y)
    return toeplitz(coarray_average(sample_covariance(y), geom))


def _order_from_args(args, y: SnapshotMatrix) -> int:
    if args.order is not None:
        return args.order
    if args.auto_order:
        r = _covariance_for_subspace(y)
        lam = np.sort(np.linalg.eigvalsh(r))[::-1]
        return model_order(np.clip(lam, 0.0, None)).k
    raise ConfigError("this method needs --order K or --auto-order")


def run_estimate(y: SnapshotMatrix, method: str, args) -> tuple[LineSpectrum, dict, bool]:
    """Dispatch one estimator; returns (spectrum, diagnostics, converged)."""
    geom = y.geometry
    if method not in METHOD_GEOMETRIES:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(METHOD_GEOMETRIES)}")
    if geom.kind not in METHOD_GEOMETRIES[method]:
        pairs = ", ".join(f"{m}: {'/'.join(g)}" for m, g in sorted(METHOD_GEOMETRIES.items()))
        raise ConfigError(f"method {method!r} does not support {geom.kind!r} arrays; valid pairs: {pairs}")

    cfg = gridless.GridlessConfig()
    converged = True
    diag: dict = {}

    if method in ("anm", "gls", "ram", "emac"):
        if method == "anm":
            mode = "ball" if args.eta is not None else ("regularized" if args.lam is not None else "exact")
            sol, spec = gridless.anm(y.data, geom, mode=mode, eta=args.eta, lam=args.lam, cfg=cfg)
            converged = sol.converged
            diag = {"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations}
        elif method == "gls":
            sol, spec = gridless.gls(y.data, geom, cfg=cfg)
            converged = sol.converged
            diag = {"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations}
        elif method == "ram":
            if args.eta is None:
                raise ConfigError("ram needs --eta")
            spec, info = gridless.ram(y.data, geom, eta=args.eta, cfg=cfg)
            diag = {"residuals": info["residuals"], "iterations": int(info["iterations"])}
        else:  # emac
            mode = "ball" if args.eta else "exact"
            spec, sol = gridless.emac(y.data, geom, mode=mode, eta=args.eta or 0.0, k=args.order, cfg=cfg)
            converged = sol.converged
            diag = {"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations}
        return spec, diag, converged

    if method == "anm-smv-cov":
        if args.sigma is None:
            raise ConfigError("anm-smv-cov needs --sigma (known noise variance)")
        spec = gridless.anm_smv_cov(y.data, geom, sigma=args.sigma, eta=args.eta, cfg=cfg)
        return spec, dict(spec.extras), True
    if method == "nnm-music":
        k = _order_from_args(args, y)
        spec = gridless.nnm_music(y.data, geom, k=k, eta=args.eta, sigma=args.sigma, cfg=cfg)
        return spec, {}, True
    if method in ("music", "esprit"):
        k = _order_from_args(args, y)
        r = _covariance_for_subspace(y)
        spec = retrieval.music(r, k) if method == "music" else retrieval.esprit(r, k)
        return spec, {}, True

    # on-grid and off-grid dictionary methods
    grid_size = args.grid or 8 * geom.m
    d = SteeringDictionary.uniform(geom, grid_size)
    if method in ("offgrid-alt", "offgrid-joint"):
        td = TaylorDictionary.from_dictionary(d)
        if method == "offgrid-alt":
            if args.eta is None:
                raise ConfigError("offgrid-alt needs --eta")
            sol = offgrid_alternating(y.data, td, eta=args.eta)
        else:
            if args.lam is None:
                raise ConfigError("offgrid-joint needs --lambda")
            sol = offgrid_joint(y.data, td, lam=args.lam)
        rows = sol.peaks if len(sol.peaks) else sol.support
        spec = LineSpectrum(
            sol.refined_freqs[rows], np.maximum(sol.row_powers[rows], 1e-300), method=method
        )
        return spec, {"status": sol.status, "beta": sol.beta[rows].tolist()}, sol.status == "converged"

    sigma = None
    if method == "l21-lasso":
        if args.lam is None:
            raise ConfigError("l21-lasso needs --lambda")
        sol = ongrid.l21_lasso(y.data, d, args.lam)
    elif method == "l21-bpdn":
        if args.eta is None:
            raise ConfigError("l21-bpdn needs --eta")
        sol = ongrid.l21_bpdn(y.data, d, args.eta)
    elif method == "slim":
        sol, sigma = ongrid.slim(y.data, d, q=args.q)
    elif method == "m-focuss":
        sol = ongrid.m_focuss(y.data, d, q=args.q, lam=args.lam or 0.0)
    elif method == "spice":
        p, sigma, _, info = ongrid.spice(y.data, d)
        freqs = d.grid[p > 1e-6 * max(p.max(), 1e-300)]
        powers = p[p > 1e-6 * max(p.max(), 1e-300)]
        spec = LineSpectrum(freqs, np.maximum(powers, 1e-300), sigma=sigma, method="spice")
        return spec, {"branch": info["branch"]}, info["status"] == "converged"
    else:  # mle-em
        p, sigma, info = ongrid.mle_em(y.data, d, iters=args.iters)
        keep = p > 1e-6 * max(p.max(), 1e-300)
        spec = LineSpectrum(d.grid[keep], np.maximum(p[keep], 1e-300), sigma=sigma, method="mle-em")
        return spec, {}, True
    spec = LineSpectrum(
        d.grid[sol.support], np.maximum(sol.row_powers[sol.support], 1e-300), sigma=sigma, method=method
    )
    return spec, {"status": sol.status, "kkt": None if math.isnan(sol.kkt_resid) else sol.kkt_resid}, (
        sol.status == "converged"
    )


def _spectrum_payload(spec: LineSpectrum, method: str, diag: dict) -> dict:
    return {
        "freqs": spec.freqs.tolist(),
        "powers": spec.powers.tolist(),
        "sigma": spec.sigma,
        "method": method,
        "solver": diag,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    geom = _geometry_from_config(cfg.get("geometry", {"kind": "ula", "m": 8}))
    scen_obj = dict(cfg.get("scenario", {}))
    if args.seed is not None:
        scen_obj["seed"] = args.seed
    scenario = _scenario_from_config(scen_obj)
    y, truth = simulate(scenario, geom)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "snapshots.csv").write_text(snapshots_to_csv(y))
    (out / "geometry.json").write_text(geom.to_json())
    truth_doc = {
        "freqs": list(scenario.freqs),
        "powers": list(scenario.powers),
        "noise_variance": scenario.noise_variance,
        "snapshots": scenario.snapshots,
        "seed": scenario.seed,
    }
    (out / "truth.json").write_text(json.dumps(truth_doc, indent=2))
    print(f"wrote {out / 'snapshots.csv'} ({y.m} x {y.l})")
    return 0


def cmd_estimate(args) -> int:
    geom = _geometry_from_config(_load_json(args.geometry))
    y = _read_snapshots(args.snapshots, geom)
    spec, diag, converged = run_estimate(y, args.method, args)
    payload = _spectrum_payload(spec, args.method, diag)
    if not converged:
        payload["status"] = "unconverged"
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "spectrum.json").write_text(text)
    print(text)
    return 0 if converged else 3


def _derived_seed(base: int, point_key: str, trial: int) -> int:
    digest = hashlib.sha256(f"{point_key}|{trial}".encode()).digest()
    return (base ^ int.from_bytes(digest[:8], "big")) & 0x7FFFFFFFFFFFFFFF


def _place_cluster(rng, k: int, separation: float):
    base = rng.uniform(-0.5, 0.5)
    return wrap_frequency(base + separation * np.arange(k))


def _bench_trial(geom, method_cfg, point, trial, base_seed, success_threshold, grid):
    snr_db, l_snapshots, separation, k = point
    seed = _derived_seed(base_seed, f"{snr_db}|{l_snapshots}|{separation}|{k}", trial)
    rng = np.random.default_rng(seed ^ 0x9E3779B97F4A7C15)
    freqs = np.atleast_1d(_place_cluster(rng, k, separation))
    power = 1.0
    sigma = power / (10.0 ** (snr_db / 10.0)) if snr_db is not None else 0.0
    scenario = SourceScenario(
        freqs=tuple(freqs),
        powers=(power,) * k,
        amplitude_model="constant-modulus",
        noise_variance=sigma,
        snapshots=l_snapshots,
        seed=seed,
    )
    y, _ = simulate(scenario, geom)
    ns = argparse.Namespace(
        eta=method_cfg.get("eta"),
        lam=method_cfg.get("lambda"),
        sigma=method_cfg.get("sigma", sigma if sigma > 0 else None),
        order=method_cfg.get("order"),
        auto_order=method_cfg.get("auto_order", False),
        q=method_cfg.get("q", 1.0),
        iters=method_cfg.get("iters", 100),
        grid=method_cfg.get("grid"),
    )
    if ns.eta == "auto":
        ns.eta = gridless.default_eta(geom.m, l_snapshots, sigma) if sigma > 0 else 0.0
    if ns.lam == "auto":
        ns.lam = gridless.default_lambda(geom.m, geom.n, l_snapshots, sigma) if sigma > 0 else None
    start = time.perf_counter()
    try:
        spec, diag, converged = run_estimate(y, method_cfg["name"], ns)
        truth_spec = LineSpectrum(freqs, np.full(k, power))
        report = match_and_score(truth_spec, spec, success_threshold)
        rmse = report.rmse
        success = report.success
        error = ""
    except SparseDoaError as exc:
        rmse, success, converged, error = float("nan"), False, False, str(exc)
        diag = {}
    runtime_ms = 1000.0 * (time.perf_counter() - start)
    residuals = diag.get("residuals", [None, None]) if isinstance(diag, dict) else [None, None]
    return {
        "method": method_cfg["name"],
        "snr_db": snr_db,
        "snapshots": l_snapshots,
        "separation": separation,
        "k": k,
        "trial": trial,
        "rmse": rmse,
        "success": int(success),
        "runtime_ms": runtime_ms,
        "primal_residual": residuals[0] if residuals else None,
        "dual_residual": residuals[1] if len(residuals) > 1 else None,
        "error": error,
    }


def cmd_bench(args) -> int:
    cfg = _load_json(args.config)
    geom = _geometry_from_config(cfg.get("geometry", {"kind": "ula", "m": 8}))
    sweep = cfg.get("sweep", {})
    snrs = sweep.get("snr_db", [None])
    snapshots = sweep.get("snapshots", [1])
    separations = sweep.get("separation", [0.2])
    k = int(sweep.get("k", 1))
    methods = cfg.get("methods")
    if not methods:
        raise ConfigError("bench config needs a nonempty 'methods' list")
    for m in methods:
        if "name" not in m:
            raise ConfigError("each method entry needs a 'name'")
    trials = args.trials if args.trials is not None else int(cfg.get("trials", 10))
    if trials < 1 or not snrs or not snapshots or not separations:
        raise ConfigError("sweep axes must be nonempty and trials >= 1")
    base_seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    threshold = float(cfg.get("success_threshold", 0.01))

    points = [(s, l, sep, k) for s in snrs for l in snapshots for sep in separations]
    jobs = [
        (mc, pt, tr)
        for mc in methods
        for pt in points
        for tr in range(trials)
    ]
    rows = []
    if args.workers and args.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_bench_trial, geom, mc, pt, tr, base_seed, threshold, None)
                for mc, pt, tr in jobs
            ]
            rows = [f.result() for f in futures]
    else:
        rows = [_bench_trial(geom, mc, pt, tr, base_seed, threshold, None) for mc, pt, tr in jobs]
    rows.sort(key=lambda r: (r["method"], str(r["snr_db"]), r["snapshots"], r["separation"], r["trial"]))

    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    fields = [
        "method", "snr_db", "snapshots", "separation", "k", "trial",
        "rmse", "success", "runtime_ms", "primal_residual", "dual_residual", "error",
    ]
    with (out / "results.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            clean = dict(row)
            clean["runtime_ms"] = "" if args.strip_runtime else f"{row['runtime_ms']:.3f}"
            writer.writerow(clean)

    summary = {}
    for row in rows:
        key = f"{row['method']}|snr={row['snr_db']}|L={row['snapshots']}|sep={row['separation']}"
        summary.setdefault(key, []).append(row)
    summary_doc = []
    for key, group in sorted(summary.items()):
        n = len(group)
        rate = sum(r["success"] for r in group) / n
        finite = [r["rmse"] for r in group if r["rmse"] == r["rmse"] and r["rmse"] != float("inf")]
        summary_doc.append(
            {
                "cell": key,
                "trials": n,
                "success_rate": rate,
                "success_stderr": math.sqrt(rate * (1.0 - rate) / n),
                "mean_rmse": (sum(finite) / len(finite)) if finite else None,
            }
        )
    (out / "summary.json").write_text(json.dumps(summary_doc, indent=2))
    print(f"wrote {out / 'results.csv'} ({len(rows)} rows) and summary.json")
    return 0


def cmd_decompose(args) -> int:
    obj = _load_json(args.input)
    if isinstance(obj, dict):
        u = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj.get("im", np.zeros(len(obj["re"]))))
    else:
        u = np.array([complex(v[0], v[1]) if isinstance(v, list) else complex(v) for v in obj])
    t = toeplitz(u)
    spec = retrieval.noise_split_decompose(t) if args.noise_split else retrieval.vandermonde_decompose(t)
    print(json.dumps(_spectrum_payload(spec, "decompose", {}), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsedoa", description="Sparse DOA / line-spectral estimation bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw synthetic snapshots")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", default=".")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="run one estimator on snapshot files")
    p_est.add_argument("--snapshots", required=True)
    p_est.add_argument("--geometry", required=True)
    p_est.add_argument("--method", required=True)
    p_est.add_argument("--eta", type=float)
    p_est.add_argument("--lambda", dest="lam", type=float)
    p_est.add_argument("--sigma", type=float)
    p_est.add_argument("--order", type=int)
    p_est.add_argument("--auto-order", action="store_true")
    p_est.add_argument("--q", type=float, default=1.0)
    p_est.add_argument("--iters", type=int, default=100)
    p_est.add_argument("--grid", type=int)
    p_est.add_argument("--out")
    p_est.set_defaults(func=cmd_estimate)

    p_bench = sub.add_parser("bench", help="Monte-Carlo sweep over methods and axes")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--trials", type=int)
    p_bench.add_argument("--out", default=".")
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--strip-runtime", action="store_true", help="blank runtime column (bit-stable CSV)")
    p_bench.set_defaults(func=cmd_bench)

    p_dec = sub.add_parser("decompose", help="Vandermonde decomposition of a supplied u vector")
    p_dec.add_argument("--input", required=True)
    p_dec.add_argument("--noise-split", action="store_true")
    p_dec.set_defaults(func=cmd_decompose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SparseDoaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
