"""Command-line pipeline: ingest -> causal -> score / fit-glm -> predict -> report.

Every run writes a manifest JSON (inputs with digests, effective config, seed,
versions, wall time) next to its primary output.  Primary outputs are
deterministic: identical manifest inputs give byte-identical files.  Exit
codes: 0 success, 1 usage error, 2 data error, 3 convergence error.

A JSON config file (``--config``) may supply defaults for any long flag
(dashes as underscores); explicit flags take precedence over the file, which
takes precedence over built-ins.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .causal import (WeightMatrix, derive_elasticity, estimate_all_prices,
                     estimates_to_records, rank_weights, ElasticityProfile)
from .diagnostics import emit_figure_data
from .glm import GlmPosterior, PriorSpec, build_design, fit, predict_elasticity
from .ingestion import (Dataset, LCL_TARIFFS, ParseError, aggregate_hourly,
                        engineer_features, parse_meter_csv, parse_weather_csv)
from .mcmc import SamplerConfig
from .scoring import (ResponseScore, build_per_consumer_model, build_pooled_model,
                      sample_posterior, score_conjugate, score_to_dict)
from .synthetic import flat_spec, generate_population

SCORE_DEFAULTS = {"draws": 5000, "tune": 1000, "chains": 4}
GLM_DEFAULTS = {"draws": 2000, "tune": 1000, "chains": 4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_manifest(path: Path, subcommand: str, args: argparse.Namespace,
                    inputs: list[Path], started: float) -> None:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func",) and not k.startswith("_")}
    manifest = {
        "schema_version": 1,
        "subcommand": subcommand,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "versions": {
            "drbayes": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": time.time() - started,
    }
    import scipy
    manifest["versions"]["scipy"] = scipy.__version__
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(draws=args.draws, tune=args.tune, chains=args.chains,
                         seed=args.seed, target_accept=args.target_accept)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    started = time.time()
    readings = parse_meter_csv(args.meter, schema_mode=args.schema_mode)
    weather = parse_weather_csv(args.weather)
    hourly = aggregate_hourly(readings)
    tariffs = LCL_TARIFFS if args.schema_mode == "lcl" else None
    dataset = engineer_features(hourly, weather, tariffs=tariffs)
    out = Path(args.out)
    dataset.to_json(out)
    print(f"ingested {len(dataset.rows)} hourly rows for "
          f"{len(dataset.consumer_ids)} consumers ({dataset.dropped_rows} dropped)")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "ingest", args,
                    [Path(args.meter), Path(args.weather)], started)
    return 0


def _cmd_causal(args) -> int:
    started = time.time()
    dataset = Dataset.from_json(args.dataset)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    consumers = args.consumer or list(dataset.consumer_ids)
    records = []
    profiles: dict[str, ElasticityProfile] = {}
    for cid in consumers:
        estimates = estimate_all_prices(cid, dataset, mode=args.regression, ci=args.ci)
        profile = derive_elasticity(estimates, args.default_price, consumer_id=cid)
        profiles[cid] = profile
        for rec in estimates_to_records(estimates, profile):
            records.append({"consumer": cid, **rec})
        weights = rank_weights(profile, scale_max=args.scale_max, mode="per_consumer")
        weights.to_csv(out_dir / f"weights_{cid}.csv")
    _write_json(out_dir / "causal.json", {
        "schema_version": 1, "default_price": args.default_price,
        "ci": args.ci, "regression": args.regression, "records": records,
    })
    if args.pooled_price is not None:
        pooled = rank_weights(list(profiles.values()), scale_max=args.scale_max,
                              mode="pooled", price=args.pooled_price)
        pooled.to_csv(out_dir / f"weights_pooled_{args.pooled_price:.4f}.csv")
    print(f"causal estimates for {len(consumers)} consumers "
          f"({len(records)} records) -> {out_dir}")
    _write_manifest(out_dir / "manifest.json", "causal", args, [Path(args.dataset)], started)
    return 0


def _cmd_score(args) -> int:
    started = time.time()
    mode = args.mode.replace("-", "_")
    weights = WeightMatrix.from_csv(args.weights, mode=mode, price=args.price,
                                    name=args.name or Path(args.weights).stem)
    if mode == "per_consumer":
        model = build_per_consumer_model(weights, alpha_init=args.alpha)
    else:
        model = build_pooled_model(weights, alpha_init=args.alpha)
    config = _sampler_config(args)
    if args.method == "nuts":
        score = sample_posterior(model, config)
    else:
        score = score_conjugate(model, n_draws=config.draws * config.chains,
                                seed=config.seed)
    out = Path(args.out)
    doc = score_to_dict(score, config)
    doc["weights"] = str(args.weights)  # lets `report` rebuild the draws
    doc["alpha"] = args.alpha
    _write_json(out, doc)
    print(f"scored {model.k} outcomes x 24 hours via {score.method} -> {out}")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "score", args,
                    [Path(args.weights)], started)
    return 0


def _profile_from_causal(doc: dict, consumer: str) -> ElasticityProfile:
    records = [r for r in doc["records"] if r["consumer"] == consumer]
    if not records:
        raise ValueError(f"causal file has no records for consumer {consumer!r}")
    default_price = doc["default_price"]
    entries = {}
    baseline = {}
    for r in records:
        if r["elasticity"] is not None:
            entries[(r["price"], r["hour"])] = r["elasticity"]
        if r["price"] == default_price:
            baseline[r["hour"]] = r["e_y"]
    return ElasticityProfile(consumer_id=consumer, default_price=default_price,
                             entries=entries, baseline_e_y=baseline)


def _cmd_fit_glm(args) -> int:
    started = time.time()
    dataset = Dataset.from_json(args.dataset)
    if args.causal:
        doc = json.loads(Path(args.causal).read_text())
        profile = _profile_from_causal(doc, args.consumer)
    else:
        estimates = estimate_all_prices(args.consumer, dataset,
                                        mode=args.regression, ci=0.95)
        profile = derive_elasticity(estimates, args.default_price,
                                    consumer_id=args.consumer)
    design = build_design(profile, dataset)
    priors = PriorSpec(nu_bounds=(args.nu_low, args.nu_high),
                       sigma_rate=args.sigma_rate)
    post = fit(design, priors, _sampler_config(args), separate_cubic=args.separate_cubic)
    out = Path(args.out)
    post.save(out)
    worst = float(np.nanmax(post.r_hat))
    print(f"fitted {design.n_rows}-row design for {args.consumer}: "
          f"max r_hat={worst:.3f}, divergences={post.divergences} -> {out}")
    for w in post.warnings:
        print(f"warning: {w}", file=sys.stderr)
    inputs = [Path(args.dataset)] + ([Path(args.causal)] if args.causal else [])
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "fit-glm",
                    args, inputs, started)
    return 0


def _cmd_predict(args) -> int:
    started = time.time()
    post = GlmPosterior.load(args.model)
    covariates = {}
    for fam, flag in (("temp_high", args.temp_high), ("temp_low", args.temp_low),
                      ("temp_avg", args.temp_avg),
                      ("consumption_avg", args.consumption_avg),
                      ("consumption_diff", args.consumption_diff)):
        if flag is not None:
            covariates[fam] = flag
    pred = predict_elasticity(post, args.price, args.hour,
                              covariates=covariates or None, seed=args.seed)
    doc = pred.to_dict()
    if args.out:
        _write_json(Path(args.out), doc)
        _write_manifest(Path(args.out).with_suffix(".manifest.json"), "predict",
                        args, [Path(args.model)], started)
    print(json.dumps(doc))
    return 0


def _cmd_report(args) -> int:
    started = time.time()
    out_dir = Path(args.out_dir)
    inputs = []
    if args.family in ("score_density", "score_by_hour"):
        if not args.score:
            raise ValueError(f"--score is required for family {args.family}")
        score = _rebuild_score(Path(args.score))
        made = emit_figure_data(score, args.family, out_dir)
        inputs = [Path(args.score)]
    elif args.family in ("glm_marginals", "regression_lines", "elasticity_vs_actual"):
        if not args.glm:
            raise ValueError(f"--glm is required for family {args.family}")
        post = GlmPosterior.load(args.glm)
        made = emit_figure_data(post, args.family, out_dir)
        inputs = [Path(args.glm)]
    elif args.family == "predictive_density":
        if not args.glm or args.price is None or args.hour is None:
            raise ValueError("predictive_density needs --glm, --price and --hour")
        post = GlmPosterior.load(args.glm)
        pred = predict_elasticity(post, args.price, args.hour, seed=args.seed)
        made = emit_figure_data([pred], args.family, out_dir)
        inputs = [Path(args.glm)]
    else:
        raise ValueError(f"unknown figure family {args.family!r}")
    print(f"wrote {len(made)} file(s) to {out_dir}")
    _write_manifest(out_dir / "manifest.json", "report", args, inputs, started)
    return 0


def _rebuild_score(path: Path) -> ResponseScore:
    """Score JSONs don't carry draws; re-running the recorded (model, config,
    seed) reproduces them exactly under the determinism contract."""
    doc = json.loads(path.read_text())
    weights_path = doc.get("weights")
    if weights_path is None:
        raise ValueError("score file lacks the weights reference needed to "
                         "rebuild draws; re-run `drbayes score`")
    mode = doc["mode"]
    weights = WeightMatrix.from_csv(weights_path, mode=mode,
                                    price=doc.get("price"), name=doc.get("name", ""))
    alpha = doc.get("alpha", 1.0)
    model = (build_per_consumer_model(weights, alpha) if mode == "per_consumer"
             else build_pooled_model(weights, alpha))
    if doc["method"] == "nuts":
        return sample_posterior(model, SamplerConfig(**doc["config"]))
    n = doc["config"]["draws"] * doc["config"]["chains"] if "config" in doc else 20000
    return score_conjugate(model, n_draws=n, seed=doc["seed"])


# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    started = time.time()
    rng = np.random.Generator(np.random.Philox(args.seed))
    specs = []
    for i in range(args.consumers):
        scale = 1.0 if i == 0 else float(rng.uniform(args.scale_min, args.scale_max))
        specs.append(flat_spec(f"S{i:04d}", baseline_kw=args.baseline,
                               elast_high=args.elast_high, elast_low=args.elast_low,
                               prob=args.prob, noise_sd=args.noise_sd, scale=scale))
    paths = generate_population(specs, days=args.days, schedule=None,
                                seed=args.seed, out_dir=args.out_dir)
    print(f"synthetic population: {args.consumers} consumers x {args.days} days -> "
          f"{paths['meter'].parent}")
    _write_manifest(Path(args.out_dir) / "manifest.json", "synth", args, [], started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drbayes",
                     description="Bayesian demand-response elasticity and "
                                 "response-probability analytics")
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="parse meter/weather CSVs into a dataset JSON")
    p.add_argument("--meter", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--schema-mode", choices=("lcl", "generic"), default="lcl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("causal", help="per-hour causal effects, elasticities, weights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--consumer", action="append",
                   help="restrict to specific consumers (repeatable)")
    p.add_argument("--default-price", type=float, default=0.1176)
    p.add_argument("--ci", type=float, default=0.95)
    p.add_argument("--regression", choices=("kernel", "exact"), default="kernel")
    p.add_argument("--scale-max", type=int, default=100)
    p.add_argument("--pooled-price", type=float,
                   help="also emit a pooled weight matrix at this price")
    p.set_defaults(func=_cmd_causal)

    p = sub.add_parser("score", help="Dirichlet-multinomial response probability score")
    p.add_argument("--weights", required=True)
    p.add_argument("--mode", choices=("per-consumer", "pooled"), required=True)
    p.add_argument("--price", type=float, help="fixed price level (pooled mode)")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="prior pseudo-count (scalar, broadcast)")
    p.add_argument("--method", choices=("nuts", "conjugate"), default="nuts")
    p.add_argument("--name", default="")
    p.add_argument("--draws", type=int, default=SCORE_DEFAULTS["draws"])
    p.add_argument("--tune", type=int, default=SCORE_DEFAULTS["tune"])
    p.add_argument("--chains", type=int, default=SCORE_DEFAULTS["chains"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("fit-glm", help="fit the elasticity behavior model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--consumer", required=True)
    p.add_argument("--causal", help="causal.json from `drbayes causal` (else recomputed)")
    p.add_argument("--default-price", type=float, default=0.1176)
    p.add_argument("--regression", choices=("kernel", "exact"), default="kernel")
    p.add_argument("--separate-cubic", action="store_true")
    p.add_argument("--nu-low", type=float, default=0.0)
    p.add_argument("--nu-high", type=float, default=1.0)
    p.add_argument("--sigma-rate", type=float, default=1.0)
    p.add_argument("--draws", type=int, default=GLM_DEFAULTS["draws"])
    p.add_argument("--tune", type=int, default=GLM_DEFAULTS["tune"])
    p.add_argument("--chains", type=int, default=GLM_DEFAULTS["chains"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit_glm)

    p = sub.add_parser("predict", help="predictive elasticity at any price/hour")
    p.add_argument("--model", required=True)
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--hour", type=int, required=True)
    p.add_argument("--temp-high", type=float)
    p.add_argument("--temp-low", type=float)
    p.add_argument("--temp-avg", type=float)
    p.add_argument("--consumption-avg", type=float)
    p.add_argument("--consumption-diff", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("report", help="emit figure data (CSV) for one family")
    p.add_argument("--family", required=True,
                   choices=("score_density", "score_by_hour", "glm_marginals",
                            "regression_lines", "elasticity_vs_actual",
                            "predictive_density"))
    p.add_argument("--score", help="score JSON (score_* families)")
    p.add_argument("--glm", help="glm posterior JSON (glm/regression families)")
    p.add_argument("--price", type=float)
    p.add_argument("--hour", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic oracle population")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--consumers", type=int, default=10)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", type=float, default=0.5)
    p.add_argument("--elast-high", type=float, default=-0.2)
    p.add_argument("--elast-low", type=float, default=0.15)
    p.add_argument("--prob", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--scale-min", type=float, default=0.3)
    p.add_argument("--scale-max", type=float, default=0.9,
                   help="per-consumer elasticity scale range (consumer 0 is 1.0)")
    p.set_defaults(func=_cmd_synth)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            defaults = json.loads(Path(args.config).read_text())
            for key, value in defaults.items():
                attr = key.replace("-", "_")
                flag = f"--{key.replace('_', '-')}"
                if hasattr(args, attr) and flag not in argv:
                    setattr(args, attr, value)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"drbayes: data error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"drbayes: data error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"drbayes: convergence error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
