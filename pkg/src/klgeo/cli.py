"""Command-line entry point.

Subcommands: sweep | geometry | check | gradcheck.
Exit codes: 0 ok, 1 config error, 2 I/O error, 3 check failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import checks, experiments, geometry, ngram, optimize
from .dist import BinaryVerifier, FiniteDistribution, condition
from .io import (
    ConfigError,
    RunConfig,
    fmt_float,
    parse_config,
    write_csv,
    write_json,
)
from .rng import SeededRng
from .svg import emit_svg

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_CHECK = 3


def _build_parser():
    parser = argparse.ArgumentParser(prog="klgeo")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sweep", "geometry", "check", "gradcheck"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seeds", default=None, help="e.g. 1,2,3 or 1..8")
        p.add_argument("--lambdas", default=None, help="comma-separated grid")
        p.add_argument("--order", choices=("bigram", "full"), default=None)
        p.add_argument("--plots", action="store_true", default=None)
        p.add_argument("--warm-start", action="store_true", default=None,
                       dest="warm_start")
        p.add_argument("--tolerance", type=float, default=None)
    return parser


def _load_config(args) -> RunConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text)
        if cfg.command != args.command:
            raise ConfigError(f"config is for command {cfg.command!r}", 1)
    else:
        cfg = RunConfig(command=args.command)
    # command-line flags override config values where the key exists
    from .io import SCHEMAS
    schema = SCHEMAS[args.command]
    overrides = {}
    if args.seeds is not None and "seeds" in schema:
        from .io import _parse_int_list
        overrides["seeds"] = _parse_int_list(args.seeds)
    if args.lambdas is not None and "lambdas" in schema:
        overrides["lambdas"] = [float(x) for x in args.lambdas.split(",")]
    if args.order is not None and "order" in schema:
        overrides["order"] = args.order
    if args.plots and "plots" in schema:
        overrides["plots"] = True
    if args.warm_start and "warm_start" in schema:
        overrides["warm_start"] = True
    if args.tolerance is not None and "tolerance" in schema:
        overrides["tolerance"] = args.tolerance
    cfg.values.update(overrides)
    return cfg


def _prepare_out(path: str):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise IOError(f"output directory not writable: {exc}")


def _echo_config(cfg: RunConfig, out: str):
    with open(os.path.join(out, "config.echo"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(cfg.serialize())


def _seq_str(seq) -> str:
    return "".join(str(t) for t in seq)


SWEEP_COLUMNS = ("seed", "lambda", "beta", "validity", "tvd_to_pstar",
                 "fkl_from_pstar", "rkl_to_tilted", "entropy", "j_beta_value",
                 "top_sequences")
REFS_COLUMNS = ("seed", "A1_base", "fkl_ref_validity", "fkl_ref_kl",
                "tvd_ref_tvd", "pstar_entropy")


def cmd_sweep(cfg: RunConfig) -> int:
    out = cfg.values["_out"]
    seeds = cfg["seeds"]
    lambdas = cfg["lambdas"] or list(experiments.DEFAULT_LAMBDA_GRID)
    opt_cfg = optimize.OptimizerConfig(learning_rate=cfg["learning_rate"],
                                       steps=cfg["steps"])
    fkl_cfg = optimize.OptimizerConfig(learning_rate=cfg["fkl_learning_rate"],
                                       steps=cfg["fkl_steps"])
    tvd_cfg = optimize.OptimizerConfig(
        learning_rate=0.1, steps=cfg["tvd_steps"], schedule=("decay", 0.5, 1000),
        restarts=cfg["tvd_restarts"], init=("random", 0, 1.0))
    summaries = [
        experiments.run_sweep(seed, cfg["order"], lambdas, opt_cfg, fkl_cfg,
                              tvd_cfg, cfg["sigma"], warm_start=cfg["warm_start"])
        for seed in seeds
    ]

    rows = []
    for s in summaries:
        for rec in s.records:
            if not isinstance(rec, experiments.SweepRecord):
                continue
            top = ";".join(f"{_seq_str(seq)}={fmt_float(p)}"
                           for seq, p in rec.top_sequences[:cfg["top_k"]])
            rows.append([str(s.seed)] + [fmt_float(v) for v in (
                rec.lam, rec.beta, rec.validity, rec.tvd_to_pstar,
                rec.fkl_from_pstar, rec.rkl_to_tilted, rec.entropy,
                rec.j_beta_value)] + [top])
    write_csv(os.path.join(out, "sweep.csv"), SWEEP_COLUMNS, rows)

    ref_rows = [[str(s.seed)] + [fmt_float(v) for v in (
        s.A1_base, s.fkl_ref_validity, s.fkl_ref_kl, s.tvd_ref_tvd,
        s.pstar_entropy)] for s in summaries]
    write_csv(os.path.join(out, "refs.csv"), REFS_COLUMNS, ref_rows)

    summary = {"seeds": list(seeds), "lambdas": [float(l) for l in lambdas],
               "order": cfg["order"]}
    if len(summaries) >= 2:
        agg = _aggregate(summaries, lambdas)
        summary["per_lambda"] = agg.per_lambda
        summary["references"] = agg.references
    write_json(os.path.join(out, "summary.json"), summary)

    if cfg["plots"]:
        for metric in ("validity", "tvd_to_pstar", "fkl_from_pstar", "entropy"):
            series = []
            for s in summaries:
                recs = [r for r in s.records
                        if isinstance(r, experiments.SweepRecord)]
                series.append((f"seed {s.seed}", [r.lam for r in recs],
                               [getattr(r, metric) for r in recs]))
            emit_svg(series, os.path.join(out, f"{metric}.svg"),
                     title=metric, xlabel="lambda", ylabel=metric, log_x=True)
    return EXIT_OK


def _aggregate(summaries, lambdas):
    class _Shim:
        pass

    from .experiments import REF_METRICS, SWEEP_METRICS
    shim = _Shim()
    shim.per_lambda = {}
    for metric in SWEEP_METRICS:
        means, stds = [], []
        for i in range(len(lambdas)):
            vals = np.array([getattr(s.records[i], metric) for s in summaries])
            means.append(float(vals.mean()))
            stds.append(float(vals.std()))
        shim.per_lambda[metric] = {"mean": means, "std": stds}
    shim.references = {}
    for metric in REF_METRICS:
        vals = np.array([getattr(s, metric) for s in summaries])
        shim.references[metric] = {"mean": float(vals.mean()),
                                   "std": float(vals.std())}
    return shim


def cmd_geometry(cfg: RunConfig) -> int:
    out = cfg.values["_out"]
    lambdas = cfg["lambdas"] or [-10.0, -5.0, -2.0, 0.0, 0.5, 1.0, 2.0, 3.0,
                                 5.0, 10.0, 20.0, 40.0]

    a1 = cfg["profile_a1"]
    base = FiniteDistribution(("v1", "v2", "i1"), (a1 / 2, a1 / 2, 1 - a1))
    fam = geometry.TiltedFamily(base, BinaryVerifier((True, True, False)))
    rows = []
    for lam in lambdas:
        mu = geometry.moment(fam, lam)
        kappa = lam * mu - geometry.log_partition(fam, lam)
        prof = geometry.convergence_profile(fam, [lam])[0]
        rows.append([fmt_float(v) for v in (
            lam, mu, kappa, prof.tvd_to_pstar, prof.fkl_from_pstar)])
    write_csv(os.path.join(out, "geometry.csv"),
              ("lambda", "mu", "kappa", "tvd_pstar", "fkl_pstar"), rows)

    bm_rows = []
    for row in experiments.beta_mu_table(cfg["a1_values"], cfg["mu_targets"]):
        bm_rows.append([fmt_float(row.A1), fmt_float(row.mu_target),
                        fmt_float(row.lambda_required), row.beta_required.token(),
                        fmt_float(row.kappa_cost)])
    write_csv(os.path.join(out, "betamu.csv"),
              ("A1", "mu_target", "lambda", "beta", "kappa"), bm_rows)

    sweep_lams = [l for l in (lambdas if max(lambdas) > 0 else [1.0]) if l > 0]
    ordering = experiments.ordering_illustration(sweep_lams)
    ord_rows = []
    for i, lam in enumerate(ordering.lambdas):
        ord_rows.append([fmt_float(lam)]
                        + [fmt_float(ordering.curves[name][i])
                           for name in ("pi1", "pi2", "pi3", "pi4")]
                        + [fmt_float(ordering.crossing_lambda)])
    write_csv(os.path.join(out, "ordering.csv"),
              ("lambda", "kl_pi1", "kl_pi2", "kl_pi3", "kl_pi4",
               "crossing_lambda"), ord_rows)

    if cfg["plots"]:
        emit_svg([(name, ordering.lambdas, ordering.curves[name])
                  for name in ("pi1", "pi2", "pi3", "pi4")],
                 os.path.join(out, "ordering.svg"),
                 title="KL to tilted target", xlabel="lambda",
                 ylabel="KL", log_x=True)
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    tolerance = cfg["tolerance"] or None
    results = checks.run_all(tolerance)
    width = max(len(name) for name in results)
    failed = []
    for name, (ok, detail) in results.items():
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print("failed checks: " + ", ".join(failed))
        return EXIT_CHECK
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig) -> int:
    space = ngram.SequenceSpace(3, 3)
    base_pol = ngram.random_base_model(space, cfg["seed"])
    orders = (ngram.bigram_orders(space) if cfg["order"] == "bigram"
              else ngram.full_orders(space))
    pol = ngram.NGramPolicy(space, orders,
                            SeededRng(cfg["seed"] + 1000).normal(
                                ngram._Structure.get(space, orders).n_params))
    base = ngram.to_distribution(base_pol)
    verifier = ngram.make_verifier_first_equals_last(space)
    fam = geometry.TiltedFamily(base, verifier)
    pstar = condition(base, verifier.mask)
    failed = False
    for name, obj in (("j_beta", ngram.JBetaObjective(fam, beta=0.2)),
                      ("forward_kl", ngram.ForwardKLObjective(pstar))):
        err = optimize.verify_gradients(pol, obj, h=cfg["h"])
        ok = err <= cfg["tolerance"]
        print(f"{name:<12} max relative error {err:.3e}  "
              f"{'PASS' if ok else 'FAIL'}")
        failed = failed or not ok
    return EXIT_CHECK if failed else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if "KLGEO_SEED" in os.environ and args.seeds is None:
        args.seeds = os.environ["KLGEO_SEED"]
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _prepare_out(args.out)
        cfg.values["_out"] = args.out
    except IOError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    try:
        _echo_config_safe(cfg, args.out)
        handler = {"sweep": cmd_sweep, "geometry": cmd_geometry,
                   "check": cmd_check, "gradcheck": cmd_gradcheck}[args.command]
        return handler(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def _echo_config_safe(cfg: RunConfig, out: str):
    echo = RunConfig(cfg.command, {k: v for k, v in cfg.values.items()
                                   if not k.startswith("_")})
    _echo_config(echo, out)


if __name__ == "__main__":
    sys.exit(main())
