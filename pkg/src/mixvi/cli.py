"""Command-line interface: simulate | fit | evaluate | coverage | summarize | predict.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage error.
The MIXVI_SEED environment variable overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import cavi, evaluation, gibbs, io, predictive
from .errors import ConfigurationError, DatasetValidationError, MixviError
from .model import StandardizationTransform, default_priors, standardize
from .simulation import SCENARIOS, ScenarioSpec, holdout_size, sample_dataset, simulate


class UsageError(Exception):
    """Bad arguments or missing inputs; maps to exit code 2."""


def _seed(args) -> int:
    env = os.environ.get("MIXVI_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"MIXVI_SEED must be an integer, got {env!r}") from exc
    return int(args.seed)


def _require(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _manifest(args, command: str, seed, inputs, outputs) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "threads")}
    config["seed"] = seed
    return io.RunManifest(command, config, seed, [str(p) for p in inputs],
                          [str(p) for p in outputs]).to_dict()


def _sidecar(data_path: Path, explicit) -> Path | None:
    if explicit:
        return _require(explicit, "column manifest")
    guess = data_path.with_name("manifest.json")
    return guess if guess.is_file() else None


def _load_data(path, manifest=None):
    p = _require(path, "dataset CSV")
    return io.read_dataset_csv(p, _sidecar(p, manifest))


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    seed = _seed(args)
    spec = ScenarioSpec(args.scenario, args.n, seed, args.k_star)
    truth, data = simulate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path, manifest_path, truth_path = out / "data.csv", out / "manifest.json", out / "truth.json"
    run = _manifest(args, "simulate", seed, [], [data_path, manifest_path, truth_path])
    io.write_dataset_csv(data_path, data)
    doc = io.column_manifest(data)
    doc["run"] = run
    io.dump_json(manifest_path, doc)
    tdoc = {"scenario": spec.scenario, "n": spec.n, "seed": seed}
    tdoc.update(io.truth_to_dict(truth))
    tdoc["run_manifest"] = str(manifest_path)
    io.dump_json(truth_path, tdoc)
    print(f"wrote {data_path}, {manifest_path}, {truth_path}")
    return 0


def _fit_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg = io.load_json(_require(args.config, "fit config"))
    for key, val in (("K", args.k), ("tol", args.tol), ("max_sweeps", args.max_sweeps),
                     ("epsilon", args.epsilon), ("init", args.init)):
        if val is not None:
            cfg[key] = val
    if args.no_standardize:
        cfg["standardize"] = False
    cfg.setdefault("standardize", True)
    if "K" not in cfg:
        raise UsageError("the number of components is required (--k or config K)")
    return cfg


def cmd_fit(args) -> int:
    seed = _seed(args)
    cfg = _fit_config(args)
    data = _load_data(args.data, args.manifest)
    if cfg["standardize"]:
        work, transform = standardize(data)
    else:
        work, transform = data, None
    priors = default_priors(work, int(cfg["K"]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    run = _manifest(args, "fit", seed, [args.data], [out])
    if args.method == "cavi":
        fc = cavi.FitConfig(
            tol=cfg.get("tol", cavi.FitConfig.tol),
            max_sweeps=int(cfg.get("max_sweeps", cavi.FitConfig.max_sweeps)),
            seed=seed, epsilon=cfg.get("epsilon", 1.0), init=cfg.get("init", "kprototypes"),
        )
        res = cavi.fit(work, priors, fc)
        doc = io.model_to_dict(res.vp, res.trace, priors, transform,
                               labels=predictive.hard_assign(res.vp.r),
                               cont_names=data.cont_names, cat_names=data.cat_names)
        doc["run_manifest"] = run
        io.dump_json(out, doc)
        state = "converged" if res.converged else "NOT converged"
        print(f"final ELBO {res.trace.values[-1]:.6f} after {len(res.trace.values)} sweeps ({state})")
        if args.strict and not res.converged:
            print("error: CAVI did not converge within max_sweeps", file=sys.stderr)
            return 1
        return 0
    cc = gibbs.ChainConfig(sweeps=args.sweeps, burn_in=args.burn_in, seed=seed, thin=args.thin)
    chain = gibbs.run_chain(work, priors, cc, keep_samples=args.dump_samples)
    doc = io.chain_to_dict(chain, priors, transform, include_samples=args.dump_samples,
                           cont_names=data.cont_names, cat_names=data.cat_names)
    doc["run_manifest"] = run
    io.dump_json(out, doc)
    print(f"ran {args.sweeps} sweeps, kept {chain.n_samples} after burn-in {args.burn_in}")
    return 0


def _load_model(path):
    doc = io.load_json(_require(path, "model file"))
    transform = io.transform_from_dict(doc.get("transform"))
    return doc, transform


def cmd_evaluate(args) -> int:
    doc, transform = _load_model(args.model)
    tdoc = io.load_json(_require(args.truth, "truth file"))
    truth_raw = io.truth_from_dict(tdoc)
    q = int(doc["q"])
    transform = transform or StandardizationTransform.identity(q)
    truth = transform.apply_truth(truth_raw)
    if int(doc["K"]) != truth.K and not args.allow_overspecified:
        raise UsageError(f"model has K={doc['K']} but truth has K*={truth.K}; "
                         "pass --allow-overspecified to match a subset")
    if args.test:
        test = _load_data(args.test)
    elif "n" in tdoc and "seed" in tdoc:
        test, _ = sample_dataset(truth_raw, holdout_size(int(tdoc["n"])), int(tdoc["seed"]), "test")
    else:
        test = None
    if test is not None:
        test = transform.apply_dataset(test)
    labels = doc.get("labels")
    if doc["method"] == "cavi":
        vp = io.vp_from_dict(doc)
        matched = evaluation.match_components(vp.m_hat, truth.mu)
        rec = evaluation.MetricsRecord(**evaluation.param_errors(
            matched, truth, evaluation.PointEstimates.from_vp(vp)))
        if test is not None:
            rec.error_logppd = evaluation.error_logppd(predictive.log_ppd(test.x, test.c, vp), test, truth)
    else:
        chain = io.chain_from_dict(doc)
        matched = evaluation.match_components(chain.mu, truth.mu)
        rec = evaluation.MetricsRecord(**evaluation.param_errors(
            matched, truth, evaluation.PointEstimates.from_chain(chain)))
        if test is not None and chain.samples:
            rec.error_logppd = evaluation.error_logppd(evaluation.chain_log_ppd(chain, test), test, truth)
    if labels is not None and truth_raw.z is not None and len(labels) == truth_raw.z.shape[0]:
        rec.prop_z = evaluation.prop_z(np.asarray(labels) - 1, truth_raw.z, matched)
    out = {"scenario": tdoc.get("scenario"), "n": tdoc.get("n"), "method": "vi" if doc["method"] == "cavi" else "gibbs",
           "K_spec": int(doc["K"])}
    out.update(rec.to_dict())
    out["run_manifest"] = _manifest(args, "evaluate", None, [args.model, args.truth], [args.out or "-"])
    _emit(out, args.out)
    return 0


def cmd_coverage(args) -> int:
    if args.reps < 10:
        raise UsageError("coverage needs --reps >= 10")
    if args.samples < evaluation.MIN_JOINT_SAMPLES:
        raise UsageError(f"--samples must be at least {evaluation.MIN_JOINT_SAMPLES}")
    seed = _seed(args)
    chain_cfg = None
    if args.method == "gibbs":
        chain_cfg = gibbs.ChainConfig(sweeps=args.sweeps, burn_in=args.burn_in, seed=seed, thin=1)
    rec = evaluation.coverage_study(args.scenario, args.n, args.reps, seed=seed, method=args.method,
                                    mass=args.mass, n_samples=args.samples, chain_config=chain_cfg)
    out = {"scenario": args.scenario, "n": args.n, "method": args.method}
    out.update(rec.to_dict())
    out["run_manifest"] = _manifest(args, "coverage", seed, [], [args.out or "-"])
    _emit(out, args.out)
    return 0


def cmd_summarize(args) -> int:
    doc, transform = _load_model(args.model)
    if doc["method"] != "cavi":
        raise UsageError("summarize needs a CAVI model file")
    vp = io.vp_from_dict(doc)
    summary = predictive.predictive_summary(
        vp, doc.get("cont_names") or None, doc.get("cat_names") or None,
        transform=None if args.standardized else transform,
    )
    summary["run_manifest"] = _manifest(args, "summarize", None, [args.model], [args.out or "-"])
    _emit(summary, args.out)
    return 0


def cmd_predict(args) -> int:
    doc, transform = _load_model(args.model)
    if doc["method"] != "cavi":
        raise UsageError("predict needs a CAVI model file")
    vp = io.vp_from_dict(doc)
    data = _load_data(args.data, args.manifest)
    if transform is not None:
        data = transform.apply_dataset(data)
    dens = predictive.component_log_densities(data.x, data.c, vp)
    lppd = predictive.log_ppd(data.x, data.c, vp)
    labels = np.argmax(dens, axis=1) + 1
    out = {"log_ppd": lppd.tolist(), "labels": labels.tolist(),
           "mean_log_ppd": float(np.mean(lppd))}
    out["run_manifest"] = _manifest(args, "predict", None, [args.model, args.data], [args.out or "-"])
    _emit(out, args.out)
    return 0


def _emit(doc: dict, path) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        io.dump_json(path, doc)
        print(f"wrote {path}")
    else:
        print(json.dumps(doc, indent=1))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixvi", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS/OpenMP worker threads (default: all available)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a ground truth and a dataset")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k-star", type=int, default=None, help="number of true components")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model by CAVI or Gibbs sampling")
    f.add_argument("--data", required=True)
    f.add_argument("--manifest", default=None, help="column manifest JSON (default: sibling manifest.json)")
    f.add_argument("--method", choices=("cavi", "gibbs"), default="cavi")
    f.add_argument("--k", type=int, default=None)
    f.add_argument("--config", default=None, help="fit configuration JSON")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--tol", type=float, default=None)
    f.add_argument("--max-sweeps", type=int, default=None)
    f.add_argument("--epsilon", type=float, default=None)
    f.add_argument("--init", choices=("kprototypes", "random"), default=None)
    f.add_argument("--sweeps", type=int, default=2000)
    f.add_argument("--burn-in", type=int, default=1000)
    f.add_argument("--thin", type=int, default=10)
    f.add_argument("--dump-samples", action="store_true", help="store thinned Gibbs draws")
    f.add_argument("--no-standardize", action="store_true")
    f.add_argument("--strict", action="store_true", help="exit 1 if CAVI does not converge")
    f.add_argument("--out", default="model.json")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="compare a fitted model with the truth")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--test", default=None, help="held-out CSV (default: regenerated from truth)")
    e.add_argument("--allow-overspecified", action="store_true")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("coverage", help="frequentist HDI coverage over replicates")
    c.add_argument("--scenario", required=True, choices=SCENARIOS)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--reps", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--method", choices=("vi", "gibbs"), default="vi")
    c.add_argument("--mass", type=float, default=0.95)
    c.add_argument("--samples", type=int, default=evaluation.DEFAULT_JOINT_SAMPLES)
    c.add_argument("--sweeps", type=int, default=2000)
    c.add_argument("--burn-in", type=int, default=1000)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_coverage)

    m = sub.add_parser("summarize", help="predictive summary per cluster")
    m.add_argument("--model", required=True)
    m.add_argument("--standardized", action="store_true", help="report quantiles in standardized units")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_summarize)

    r = sub.add_parser("predict", help="score new rows")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--manifest", default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_predict)
    return p


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DatasetValidationError as exc:
        print(f"error: invalid dataset: {exc}", file=sys.stderr)
        return 1
    except (MixviError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
