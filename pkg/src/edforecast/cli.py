"""Command-line front end: simulate, train, evaluate, certify, rates.

Every command reads a JSON config (strictly validated: unknown keys are
rejected with their field path), takes an optional --seed override and an
--out directory, and writes deterministic artifacts.  Output files carry a
provenance header (config hash, seed, tool version) and no timestamps, so
re-runs with the same inputs are byte-identical.

Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approx import ApproxPlan, PlanError, build_approximator, catalog
from .data import fit_scaler, lag_embed, load_series_csv, save_series_csv
from .network import Architecture, Network, load_json as load_net, save_json as save_net
from .rates import (
    DependenceSpec,
    RateComputationError,
    SmoothnessProfile,
    oracle_bound,
    choose_N,
    dep_envelope,
    fdm_exponential,
    fdm_polynomial,
    independent,
    lambda_dep,
    lambda_mix,
    mix_envelope,
    mixing_exponential,
    mixing_polynomial,
    predicted_rate,
)
from .simulate import (
    TimeSeriesModel,
    UnstableModelError,
    generate,
    high_d_model,
    linear_model,
    low_d_model,
    seasonal_model,
    zero_model,
)
from .train import (
    TrainConfig,
    TrainingDiverged,
    WeightFn,
    curve_to_csv,
    empirical_risk,
    init_network,
    naive_predict,
    train_sgd,
)

WEATHER_DATA_NOTE = (
    "Daily mean temperature source (external, not downloaded by this tool):\n"
    "https://opendata.dwd.de/climate_environment/CDC/observations_germany/"
    "climate/daily/kl/historical"
)


class ConfigError(ValueError):
    pass


def _check_keys(cfg: dict, path: str, required, optional):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = set(required) | set(optional)
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    missing = sorted(set(required) - set(cfg))
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")


def _config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _provenance(cfg: dict, seed: int) -> dict:
    return {"tool": f"edforecast-{__version__}", "config_hash": _config_hash(cfg),
            "seed": seed}


def _write_json(path: Path, payload: dict, provenance: dict) -> None:
    doc = dict(payload)
    doc["_provenance"] = provenance
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _model_from_spec(spec, seed: int) -> TimeSeriesModel:
    presets = {"low_d": low_d_model, "high_d": high_d_model,
               "seasonal": seasonal_model}
    if isinstance(spec, str):
        if spec not in presets:
            raise ConfigError(
                f"model: unknown preset {spec!r}; choose from {sorted(presets)}"
            )
        return presets[spec](seed=seed)
    _check_keys(spec, "model", ["kind"],
                ["d", "r", "noise_sd", "v", "a", "period", "decay"])
    kind = spec["kind"]
    if kind == "zero":
        return zero_model(d=int(spec.get("d", 1)), r=int(spec.get("r", 1)),
                          noise_sd=float(spec.get("noise_sd", 1.0)), seed=seed)
    if kind == "linear":
        if "v" not in spec or "a" not in spec:
            raise ConfigError("model: linear kind needs 'v' and 'a' matrices")
        return linear_model(np.asarray(spec["v"], dtype=float),
                            np.asarray(spec["a"], dtype=float),
                            noise_sd=float(spec.get("noise_sd", 1.0)),
                            r=int(spec.get("r", 1)), seed=seed)
    if kind == "seasonal":
        return seasonal_model(d=int(spec.get("d", 8)),
                              period=int(spec.get("period", 24)),
                              decay=float(spec.get("decay", 0.95)),
                              noise_sd=float(spec.get("noise_sd", 0.5)), seed=seed)
    raise ConfigError(f"model.kind: unknown kind {kind!r}")


def _weight_from_spec(spec, dims: int) -> WeightFn:
    if spec is None:
        return WeightFn()
    _check_keys(spec, "weight", ["kind"], ["varsigma"])
    try:
        return WeightFn(kind=spec["kind"],
                        varsigma=float(spec.get("varsigma", 0.1)), dims=dims)
    except ValueError as exc:
        raise ConfigError(f"weight: {exc}")


# -- commands --------------------------------------------------------------


def cmd_simulate(cfg: dict, seed: int | None, out_dir: Path) -> int:
    _check_keys(cfg, "config", ["model", "n"], ["burn_in", "out_csv", "seed"])
    run_seed = seed if seed is not None else int(cfg.get("seed", 0))
    model = _model_from_spec(cfg["model"], run_seed)
    n = int(cfg["n"])
    if n < model.r + 1:
        raise ConfigError(f"n: need n >= r+1 = {model.r + 1}, got {n}")
    burn_in = int(cfg.get("burn_in", 1000))
    series = generate(model, n, burn_in=burn_in, seed=run_seed)
    prov = _provenance(cfg, run_seed)
    out_csv = out_dir / cfg.get("out_csv", "series.csv")
    save_series_csv(out_csv, series, provenance=prov)
    sidecar = {"model": model.describe(), "n": n, "burn_in": burn_in}
    _write_json(out_csv.with_suffix(out_csv.suffix + ".json"), sidecar, prov)
    print(f"wrote {out_csv} ({n} x {model.d})")
    return 0


def _split_series(series, cfg):
    test_csv = cfg.get("test_csv")
    if test_csv is not None:
        return series, load_series_csv(test_csv)
    frac = float(cfg.get("train_fraction", 1.0))
    if not 0.0 < frac <= 1.0:
        raise ConfigError(f"train_fraction: must be in (0,1], got {frac}")
    if frac == 1.0:
        return series, None
    n_train = int(round(series.shape[0] * frac))
    if n_train < 2 or n_train >= series.shape[0]:
        raise ConfigError("train_fraction: split leaves an empty train or test part")
    return series[:n_train], series[n_train:]


def _train_config_from(spec, seed: int | None) -> TrainConfig:
    _check_keys(spec, "train", ["epochs"],
                ["lr_schedule", "l2_lambda", "batch_size", "seed",
                 "project_entries", "prune_to_s"])
    try:
        return TrainConfig(
            epochs=int(spec["epochs"]),
            lr_schedule=tuple(tuple(pair) for pair in spec.get("lr_schedule", [[0, 1e-3]])),
            l2_lambda=float(spec.get("l2_lambda", 0.0)),
            batch_size=int(spec.get("batch_size", 1)),
            seed=seed if seed is not None else int(spec.get("seed", 0)),
            project_entries=bool(spec.get("project_entries", False)),
            prune_to_s=spec.get("prune_to_s"),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}")


def _run_single_training(series_train, series_test, r, arch_p, arch_l1,
                         tc: TrainConfig, weight_spec, normalize):
    data = lag_embed(series_train, r, normalize=normalize)
    test_data = None
    if series_test is not None:
        test_data = lag_embed(series_test, r, scaler=data.scaler)
    d = data.d
    if arch_p[0] != d * r or arch_p[-1] != d:
        raise ConfigError(
            f"arch.p: expects input dim {d * r} and output dim {d}, got {arch_p}"
        )
    w = _weight_from_spec(weight_spec, d * r)
    arch = Architecture(len(arch_p) - 2, tuple(arch_p), L1=arch_l1)
    net0 = init_network(arch, tc.seed)
    net, curve = train_sgd(net0, data, tc, w, test_data=test_data)
    return net, curve, data, test_data, w


def cmd_train(cfg: dict, seed: int | None, out_dir: Path) -> int:
    _check_keys(cfg, "config", ["train_csv"],
                ["test_csv", "train_fraction", "r", "normalize", "arch",
                 "train", "weight", "out_model", "out_curve", "sweep", "seed"])
    series = load_series_csv(cfg["train_csv"])
    series_train, series_test = _split_series(series, cfg)
    base_seed = seed if seed is not None else int(cfg.get("seed", 0))
    prov = _provenance(cfg, base_seed)

    if "sweep" in cfg:
        return _cmd_train_sweep(cfg, series_train, series_test, base_seed, prov, out_dir)

    if "arch" not in cfg or "train" not in cfg:
        raise ConfigError("config: training needs 'arch' and 'train' sections")
    _check_keys(cfg["arch"], "arch", ["p"], ["L1"])
    r = int(cfg.get("r", 1))
    tc = _train_config_from(cfg["train"], seed)
    net, curve, data, test_data, w = _run_single_training(
        series_train, series_test, r, list(cfg["arch"]["p"]),
        cfg["arch"].get("L1"), tc, cfg.get("weight"), bool(cfg.get("normalize", False)),
    )
    out_model = out_dir / cfg.get("out_model", "model.json")
    out_curve = out_dir / cfg.get("out_curve", "curve.csv")
    save_net(net, out_model)
    curve_to_csv(curve, out_curve, provenance=prov)
    meta = {"r": r, "d": data.d, "normalize": bool(cfg.get("normalize", False))}
    if data.scaler is not None:
        meta["scaler"] = {"lo": data.scaler.lo.tolist(), "hi": data.scaler.hi.tolist()}
    meta["final_train_risk"] = curve[-1].train_risk if curve else None
    meta["final_test_risk"] = curve[-1].test_risk if curve else None
    _write_json(out_model.with_suffix(".meta.json"), meta, prov)
    final = curve[-1].train_risk if curve else float("nan")
    print(f"wrote {out_model}; final train risk {final:.6g}"
          + (f", test risk {curve[-1].test_risk:.6g}"
             if curve and curve[-1].test_risk is not None else ""))
    return 0


def _cmd_train_sweep(cfg, series_train, series_test, base_seed, prov, out_dir) -> int:
    sweep = cfg["sweep"]
    _check_keys(sweep, "sweep", [], ["r_values", "m_values", "runs", "out_table"])
    if series_test is None:
        raise ConfigError("sweep: needs test data (test_csv or train_fraction < 1)")
    if "train" not in cfg:
        raise ConfigError("config: sweep needs a 'train' section")
    r_values = [int(v) for v in sweep.get("r_values", [1, 2, 3, 5])]
    m_values = [int(v) for v in sweep.get("m_values", [4, 6, 8, 10])]
    runs = int(sweep.get("runs", 1))
    normalize = bool(cfg.get("normalize", False))
    d = series_train.shape[1]
    rows = []
    best = None
    for r in r_values:
        for m in m_values:
            risks = []
            for run in range(runs):
                tc = _train_config_from(cfg["train"], None)
                tc = TrainConfig(
                    epochs=tc.epochs, lr_schedule=tc.lr_schedule,
                    l2_lambda=tc.l2_lambda, batch_size=tc.batch_size,
                    seed=base_seed + 1000 * run, project_entries=tc.project_entries,
                    prune_to_s=tc.prune_to_s,
                )
                p = (r * d, r * d, 24, m, 24, d, d)
                net, curve, data, test_data, w = _run_single_training(
                    series_train, series_test, r, list(p), 3, tc,
                    cfg.get("weight"), normalize,
                )
                risk = empirical_risk(net, test_data, w)
                risks.append(risk)
                if best is None or risk < best[0]:
                    best = (risk, r, m, run)
            rows.append((r, m, risks))
            print(f"sweep r={r} m={m}: " + " ".join(f"{v:.4g}" for v in risks))
    out_table = out_dir / sweep.get("out_table", "sweep.csv")
    with open(out_table, "w", encoding="utf-8") as fh:
        for key, val in prov.items():
            fh.write(f"# {key}={val}\n")
        fh.write("r,m," + ",".join(f"run{i + 1}" for i in range(runs)) + "\n")
        for r, m, risks in rows:
            fh.write(f"{r},{m}," + ",".join(repr(v) for v in risks) + "\n")
    # naive baseline on the test stretch, on the same scale as the sweep risks
    scaler = fit_scaler(series_train) if normalize else None
    naive = naive_predict(lag_embed(series_test, best[1], scaler=scaler))
    summary = {
        "best": {"risk": best[0], "r": best[1], "m": best[2], "run": best[3]},
        "naive_risk": naive,
        "r_values": r_values,
        "m_values": m_values,
        "runs": runs,
    }
    _write_json(out_table.with_suffix(".summary.json"), summary, prov)
    print(f"wrote {out_table}; best cell r={best[1]} m={best[2]} risk {best[0]:.6g} "
          f"(naive baseline at r={best[1]}: {naive:.6g})")
    return 0


def cmd_evaluate(cfg: dict, seed: int | None, out_dir: Path) -> int:
    _check_keys(cfg, "config", ["model_json", "test_csv"],
                ["k_steps", "weight", "out_json", "seed"])
    net = load_net(cfg["model_json"])
    meta_path = Path(cfg["model_json"]).with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    series = load_series_csv(cfg["test_csv"])
    d = series.shape[1]
    if net.arch.in_dim % d != 0:
        raise ConfigError(
            f"model_json: network input dim {net.arch.in_dim} does not match "
            f"series dimension {d}"
        )
    r = net.arch.in_dim // d
    if meta.get("r") not in (None, r):
        raise ConfigError(f"model_json: metadata lag count {meta['r']} != {r}")
    scaler = None
    if meta.get("scaler"):
        from .data import Scaler
        scaler = Scaler(lo=np.asarray(meta["scaler"]["lo"]),
                        hi=np.asarray(meta["scaler"]["hi"]))
    data = lag_embed(series, r, scaler=scaler)
    w = _weight_from_spec(cfg.get("weight"), d * r)
    run_seed = seed if seed is not None else int(cfg.get("seed", 0))
    metrics = {
        "empirical_risk": empirical_risk(net, data, w),
        "naive_risk": naive_predict(data, w),
        "n_samples": len(data),
    }
    k_steps = [int(k) for k in cfg.get("k_steps", [1])]
    k_errors = {}
    for k in k_steps:
        k_errors[str(k)] = _k_step_errors(net, data, k)
    metrics["k_step_mse"] = k_errors
    prov = _provenance(cfg, run_seed)
    out_json = out_dir / cfg.get("out_json", "metrics.json")
    _write_json(out_json, metrics, prov)
    print(f"wrote {out_json}; risk {metrics['empirical_risk']:.6g}, "
          f"naive {metrics['naive_risk']:.6g}")
    return 0


def _k_step_errors(net: Network, data, k: int):
    """Mean per-coordinate squared error of the j-step-ahead forecast,
    j = 1..k, averaged over all admissible start positions."""
    n = len(data)
    if n <= k - 1:
        raise ConfigError(f"k_steps: horizon {k} exceeds test sample count {n}")
    m = n - (k - 1)
    states = data.X[:m].copy()
    d = data.d
    dr = net.arch.in_dim
    errs = []
    for j in range(k):
        preds = net.eval_batch(states)
        target = data.Y[j : j + m]
        errs.append(float(np.mean(np.sum((preds - target) ** 2, axis=1) / d)))
        states = np.hstack([preds, states[:, : dr - d]])
    return errs


def cmd_certify(cfg: dict, seed: int | None, out_dir: Path) -> int:
    _check_keys(cfg, "config", ["target", "N", "m"],
                ["f_bound", "out_json", "seed"])
    cat = catalog()
    name = cfg["target"]
    if name not in cat:
        raise ConfigError(f"target: unknown catalog entry {name!r}; "
                          f"choose from {sorted(cat)}")
    run_seed = seed if seed is not None else int(cfg.get("seed", 0))
    try:
        plan = ApproxPlan(N=int(cfg["N"]), m=int(cfg["m"]))
        net, cert = build_approximator(
            cat[name], plan,
            f_bound=cfg.get("f_bound"), seed=run_seed,
        )
    except PlanError as exc:
        raise ConfigError(str(exc))
    prov = _provenance(cfg, run_seed)
    out_json = out_dir / cfg.get("out_json", "certificate.json")
    _write_json(out_json, cert, prov)
    ok = (cert["measured_sup"] <= cert["sup_bound"]
          and cert["measured_lip"] <= cert["lip_bound"])
    print(f"wrote {out_json}; measured sup {cert['measured_sup']:.4g} "
          f"<= bound {cert['sup_bound']:.4g}: {ok}")
    return 0 if ok else 3


def _dependence_from_spec(spec) -> DependenceSpec:
    _check_keys(spec, "dependence", ["kind"], ["alpha", "kappa", "rho"])
    kind = spec["kind"]
    try:
        if kind == "independent":
            return independent()
        if kind == "mixing_polynomial":
            return mixing_polynomial(float(spec["alpha"]), float(spec.get("kappa", 1.0)))
        if kind == "mixing_exponential":
            return mixing_exponential(float(spec["rho"]), float(spec.get("kappa", 1.0)))
        if kind == "fdm_polynomial":
            return fdm_polynomial(float(spec["alpha"]), float(spec.get("kappa", 1.0)))
        if kind == "fdm_exponential":
            return fdm_exponential(float(spec["rho"]), float(spec.get("kappa", 1.0)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"dependence: {exc}")
    raise ConfigError(f"dependence.kind: unknown kind {kind!r}")


def _profile_from_spec(spec) -> SmoothnessProfile:
    if "beta" in spec:
        _check_keys(spec, "profile", ["beta", "t"], [])
        return SmoothnessProfile.isotropic(float(spec["beta"]), int(spec["t"]))
    _check_keys(spec, "profile",
                ["beta_dec", "t_dec", "beta_enc0", "t_enc0", "beta_enc1", "t_enc1"], [])
    return SmoothnessProfile(
        float(spec["beta_dec"]), int(spec["t_dec"]),
        float(spec["beta_enc0"]), int(spec["t_enc0"]),
        float(spec["beta_enc1"]), int(spec["t_enc1"]),
    )


def cmd_rates(cfg: dict, seed: int | None, out_dir: Path) -> int:
    _check_keys(cfg, "config", ["dependence", "profile"],
                ["x_grid", "n_values", "out_lambda_csv", "out_rates_csv", "seed"])
    spec = _dependence_from_spec(cfg["dependence"])
    profile = _profile_from_spec(cfg["profile"])
    grid_cfg = cfg.get("x_grid", {})
    _check_keys(grid_cfg, "x_grid", [], ["min", "max", "points"])
    x_lo = float(grid_cfg.get("min", 1e-6))
    x_hi = float(grid_cfg.get("max", 1.0))
    points = int(grid_cfg.get("points", 25))
    if not (0 < x_lo < x_hi) or points < 2:
        raise ConfigError("x_grid: need 0 < min < max and points >= 2")
    xs = np.logspace(math.log10(x_lo), math.log10(x_hi), points)
    run_seed = seed if seed is not None else int(cfg.get("seed", 0))
    prov = _provenance(cfg, run_seed)

    if spec.kind == "independent":
        lam = [float(x) for x in xs]
        env = lam
    elif spec.is_mixing:
        lam = [float(lambda_mix(spec, float(x))) for x in xs]
        env = [float(mix_envelope(spec, float(x))) for x in xs]
    else:
        lam = [float(lambda_dep(spec, float(x))) for x in xs]
        env = [float(dep_envelope(spec, float(x))) for x in xs]

    out_lambda = out_dir / cfg.get("out_lambda_csv", "lambda.csv")
    with open(out_lambda, "w", encoding="utf-8") as fh:
        for key, val in prov.items():
            fh.write(f"# {key}={val}\n")
        fh.write("x,lambda,envelope\n")
        for x, l, e in zip(xs, lam, env):
            fh.write(f"{float(x)!r},{l!r},{e!r}\n")

    n_values = [int(v) for v in cfg.get("n_values", [1000, 10000, 100000])]
    alpha = spec.alpha if spec.alpha is not None else 2.0
    out_rates = out_dir / cfg.get("out_rates_csv", "rates.csv")
    with open(out_rates, "w", encoding="utf-8") as fh:
        for key, val in prov.items():
            fh.write(f"# {key}={val}\n")
        fh.write("n,N,predicted_rate,bound_at_N\n")
        for n in n_values:
            N = choose_N(n, alpha, profile)
            rate = predicted_rate(n, alpha, profile)
            bound = oracle_bound(spec, n, N, profile)
            fh.write(f"{n},{N},{rate!r},{bound!r}\n")
    print(f"wrote {out_lambda} and {out_rates}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "certify": cmd_certify,
    "rates": cmd_rates,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edforecast",
        description="Encoder-decoder network forecasting experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "train"), help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=".", help="output directory")
        if name == "train":
            p.add_argument("--fetch-note", action="store_true",
                           help="print the external weather-data URL and exit")
    args = parser.parse_args(argv)

    if args.command == "train" and args.fetch_note:
        print(WEATHER_DATA_NOTE)
        return 0
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return 2

    try:
        cfg = _load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.seed, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, UnstableModelError, RateComputationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
