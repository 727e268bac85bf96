"""Command-line entry point: ``rolldyn <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import charvals, ingest, predictor, ratestats, spectra, stepfit, study, synthlab

CONFIG_VERSION = 1
_WELCH_KEYS = {"seg_len", "overlap", "window", "detrend", "eval_lo", "eval_hi"}
_STEPWISE_KEYS = {"min_gain", "target", "max_terms"}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> dict[str, str]:
    """Read a ``key=value`` config file; ``config_version`` must be 1 if given."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}: line {lineno}: expected key=value")
        out[key.strip()] = value.strip()
    version = out.pop("config_version", str(CONFIG_VERSION))
    if version != str(CONFIG_VERSION):
        raise CliError(f"{path}: unsupported config_version {version}")
    unknown = sorted(set(out) - _WELCH_KEYS - _STEPWISE_KEYS)
    if unknown:
        raise CliError(f"{path}: unknown config key(s) {', '.join(unknown)}")
    return out


def _merged(args, keys) -> dict[str, str]:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = str(v)
    return {k: v for k, v in cfg.items() if k in keys}


def welch_config(args) -> spectra.WelchConfig:
    c = _merged(args, _WELCH_KEYS)
    default = spectra.WelchConfig()
    return spectra.WelchConfig(
        segment_length=int(c["seg_len"]) if "seg_len" in c else None,
        overlap_fraction=float(c.get("overlap", default.overlap_fraction)),
        window=c.get("window", default.window),
        detrend=c.get("detrend", default.detrend),
        eval_band=(float(c.get("eval_lo", default.eval_band[0])), float(c.get("eval_hi", default.eval_band[1]))),
    )


def stepwise_config(args) -> stepfit.StepwiseConfig:
    c = _merged(args, _STEPWISE_KEYS)
    default = stepfit.StepwiseConfig()
    return stepfit.StepwiseConfig(
        min_gain=float(c.get("min_gain", default.min_gain)),
        target=float(c.get("target", default.target)),
        max_terms=int(c.get("max_terms", default.max_terms)),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_tf(args) -> None:
    cfg = welch_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = [ingest.load_run(p) for p in args.inputs]
    ids = [r.variant_id for r in runs]
    if len(set(ids)) != len(ids):
        raise CliError("input runs must have distinct variant ids")
    for run in runs:
        target = out / run.variant_id if len(runs) > 1 else out
        target.mkdir(parents=True, exist_ok=True)
        for fr in spectra.roll_responses(run, cfg).values():
            spectra.save_response(fr, target / spectra.response_filename(fr))
        print(f"{run.variant_id}: 9 responses -> {target}")


def _load_response_dir(path: Path) -> dict[str, dict]:
    files = sorted(path.rglob("*__*.csv"))
    if not files:
        raise CliError(f"no response files (<input>__<output>.csv) under {path}")
    grouped: dict[str, dict] = {}
    for f in files:
        fr = spectra.load_response(f)
        if fr.output_order is None:
            continue
        variant = fr.variant_id or f.parent.name
        grouped.setdefault(variant, {})[(fr.input, fr.output_order)] = fr
    return grouped


def cmd_cv(args) -> None:
    cfg = welch_config(args)
    sets = []
    for d in args.inputs:
        for variant, responses in _load_response_dir(Path(d)).items():
            sets.append(charvals.extract_all(responses, cfg, variant_id=variant))
    charvals.save_cvs(sets, args.out)
    for s in sets:
        for flag in s.flags:
            print(f"warning: {s.variant_id}: {flag}", file=sys.stderr)
    print(f"{len(sets)} variant(s), {sum(len(s) for s in sets)} CVs -> {args.out}")


def _models(spec: str) -> list[predictor.PredictionModel]:
    return predictor.builtin_models() if spec == "builtin" else predictor.load_models(spec)


def cmd_predict(args) -> None:
    models = _models(args.models)
    cvsets = charvals.load_cvs(args.cvs)
    reports = predictor.predict_all(models, cvsets)
    if args.out:
        predictor.save_predictions_csv(reports, args.out, clamp=args.clamp)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["variant", "criterion", "value", "in_range"])
        for r in reports:
            w.writerow([r.variant_id, r.criterion, f"{r.clamped() if args.clamp else r.value:.3f}", int(all(r.in_range))])
    if args.json:
        predictor.save_predictions_json(reports, args.json, clamp=args.clamp)
    if args.spider:
        predictor.save_spider_csv(reports, args.spider)
    for r in reports:
        for msg in r.warnings:
            print(f"warning: {r.variant_id}: {msg}", file=sys.stderr)
    if args.backtest:
        bt = predictor.backtest(models, cvsets, ingest.load_ratings(args.backtest))
        if args.backtest_out:
            bt.to_csv(args.backtest_out)
        print("criterion,rmse_sum,rmse_mean")
        for c in bt.ranking("sum"):
            print(f"{c},{bt.rmse_sum[c]:.4f},{bt.rmse_mean[c]:.4f}")
        print(f"worst: {bt.worst('sum')}")


def _ratings_matrix(path, aspect):
    table = ingest.load_ratings(path)
    crits = table.criteria_for(aspect)
    if not crits:
        raise CliError(f"{path}: no {aspect} ratings")
    return table, crits, table.matrix(aspect, criteria=crits)


def cmd_stats(args) -> None:
    if args.stats_cmd == "corr":
        if args.matrix:
            if args.n is None:
                raise CliError("--matrix needs --n (number of observations behind the coefficients)")
            rows, cols, r = study.load_matrix_csv(args.matrix)
            cm = ratestats.CorrelationMatrix.from_coefficients(r, args.n, rows, cols, alpha=args.alpha)
        elif args.ratings:
            _, crits, m = _ratings_matrix(args.ratings, args.aspect)
            if np.isnan(m).any():
                raise CliError("missing ratings in the variant x criterion matrix")
            cm = ratestats.correlate(m, alpha=args.alpha, labels=crits)
        else:
            raise CliError("stats corr needs --ratings or --matrix")
        if args.out:
            cm.to_csv(args.out)
        pairs = cm.significant_pairs()
        print(f"n={cm.n} alpha={cm.alpha} critical |r|={ratestats.critical_r(cm.n, cm.alpha):.4f}")
        print(f"significant: {len(pairs)}")
        for a, b in pairs:
            i, j = cm.row_labels.index(a), cm.col_labels.index(b)
            print(f"  {a}-{b}: r={cm.r[i, j]:.3f} p={cm.p[i, j]:.4f}")
    elif args.stats_cmd == "ttest":
        table = ingest.load_ratings(args.ratings)
        samples = []
        for v in (args.a, args.b):
            vals = [table.get(s, v, args.criterion, args.aspect) for s in table.subjects]
            vals = np.array([x for x in vals if not math.isnan(x)])
            if vals.size == 0:
                raise CliError(f"no {args.aspect} ratings of {args.criterion} for variant {v!r}")
            samples.append(vals)
        res = ratestats.welch_ttest(*samples, alpha=args.alpha)
        if args.out:
            res.to_csv(args.out)
        print(f"{args.criterion} {args.a} vs {args.b}: t={res.t:.4f} df={res.df:.2f} p={res.p:.4g} "
              f"{'significant' if res.significant else 'not significant'}")
    elif args.stats_cmd == "standardize":
        std = ratestats.standardize(ingest.load_ratings(args.ratings), args.aspect)
        ingest.save_ratings(std.table, args.out)
        print(f"standardized {len(std.table)} ratings (mu_tot={std.mu_tot:.4f}, sigma_tot={std.sigma_tot:.4f}) -> {args.out}")
    elif args.stats_cmd == "winsorize":
        table = ingest.load_ratings(args.ratings)
        out = dict(table.values)
        groups: dict[tuple, list] = {}
        for key in table.values:
            groups.setdefault(key[1:], []).append(key)
        changed = 0
        for keys in groups.values():
            keys = [k for k in keys if not math.isnan(table.values[k])]
            if len(keys) < 4:
                continue
            vals = np.array([table.values[k] for k in keys])
            w = ratestats.winsorize(vals, k=args.k)
            changed += int(np.sum(w != vals))
            out.update({k: float(x) for k, x in zip(keys, w)})
        ingest.save_ratings(ingest.RatingTable(out, bounded=False), args.out)
        print(f"winsorized {changed} rating(s) -> {args.out}")


def cmd_fit(args) -> None:
    cvsets = charvals.load_cvs(args.cvs)
    ratings = ingest.load_ratings(args.ratings)
    variants = [v for v in ratings.variants if v in cvsets]
    if len(variants) < 4:
        raise CliError(f"need at least 4 variants with CVs and ratings, got {len(variants)}")
    y = ratings.matrix(args.aspect, variants=variants, criteria=[args.criterion])[:, 0]
    ok = ~np.isnan(y)
    variants = [v for v, o in zip(variants, ok) if o]
    keys = [k for k in charvals.CATALOG if all(k in cvsets[v] for v in variants)]
    if args.sources:
        allowed = set(args.sources.split(","))
        keys = [k for k in keys if all(cvsets[v].sources.get(k, "measured") in allowed for v in variants)]
    X = stepfit.design_matrix(cvsets, variants, keys)
    res = stepfit.stepwise(X, y[ok], stepwise_config(args), keys=keys)
    for s in res.steps:
        print(f"{s['action']:6s} {s['key']}  R2adj={s['r2_adj']:.4f} (gain {s['gain']:+.4f})")
    model = predictor.model_from_fit(args.criterion, res, {v: cvsets[v] for v in variants})
    print(model)
    print(f"R2={res.r2:.4f} R2adj={res.r2_adj:.4f} n={res.n}")
    if args.out:
        predictor.save_models([model], args.out)


def cmd_synth(args) -> None:
    if bool(args.preset) == bool(args.params):
        raise CliError("give exactly one of --preset or --params")
    params = synthlab.load_preset(args.preset) if args.preset else synthlab.load_params(args.params)
    spec = synthlab.ChirpSpec(
        f0=args.f0, f1=args.f1, duration=args.duration, amplitude=args.amplitude, sample_rate=args.sample_rate
    )
    noise = None
    if args.noise:
        noise = {c: args.noise for c in ("delta_h", "m_h", "a_y", "phi")}
    variant = args.variant or args.preset or Path(args.params).stem
    run = synthlab.synth_run(params, spec, noise=noise, seed=args.seed, variant_id=variant)
    ingest.save_run(run, args.out)
    print(f"{variant}: {len(run)} samples at {run.sample_rate:g} Hz -> {args.out}")


def cmd_report(args) -> None:
    from . import report

    written = report.build_report(Path(args.input), Path(args.out), welch_config(args))
    for p in written:
        print(p)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_welch(p) -> None:
    p.add_argument("--seg-len", dest="seg_len", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--window", choices=sorted(spectra.WINDOWS))
    p.add_argument("--config", help="key=value config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rolldyn", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("tf", help="runs -> frequency responses")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="RUN_CSV")
    p.add_argument("--out", required=True)
    _add_welch(p)
    p.set_defaults(func=cmd_tf)

    p = sub.add_parser("cv", help="frequency responses -> CV CSV")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FR_DIR")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="CV CSV -> rating predictions")
    p.add_argument("--models", default="builtin", help="'builtin' or a model file")
    p.add_argument("--cvs", required=True)
    p.add_argument("--backtest", metavar="RATINGS_CSV")
    p.add_argument("--backtest-out")
    p.add_argument("--clamp", action="store_true", help="clamp displayed values to [1, 10]")
    p.add_argument("--out", help="prediction CSV (default: table on stdout)")
    p.add_argument("--json")
    p.add_argument("--spider", help="spider chart data CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", help="rating statistics")
    ssub = p.add_subparsers(dest="stats_cmd", required=True)
    q = ssub.add_parser("corr")
    q.add_argument("--ratings")
    q.add_argument("--matrix", help="labelled coefficient matrix CSV")
    q.add_argument("--n", type=int)
    q.add_argument("--aspect", default="liking", choices=ingest.ASPECTS)
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--out")
    q = ssub.add_parser("ttest")
    q.add_argument("--ratings", required=True)
    q.add_argument("--a", required=True, help="variant id")
    q.add_argument("--b", required=True, help="variant id")
    q.add_argument("--criterion", required=True, choices=ingest.CRITERIA)
    q.add_argument("--aspect", default="liking", choices=ingest.ASPECTS)
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--out")
    q = ssub.add_parser("standardize")
    q.add_argument("--ratings", required=True)
    q.add_argument("--aspect", default="liking", choices=ingest.ASPECTS)
    q.add_argument("--out", required=True)
    q = ssub.add_parser("winsorize")
    q.add_argument("--ratings", required=True)
    q.add_argument("--k", type=float, default=1.5)
    q.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", help="stepwise regression of one criterion on CVs")
    p.add_argument("--cvs", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--criterion", required=True, choices=ingest.CRITERIA)
    p.add_argument("--aspect", default="liking", choices=ingest.ASPECTS)
    p.add_argument("--sources", help="comma-separated CV sources to allow (e.g. published)")
    p.add_argument("--min-gain", dest="min_gain", type=float)
    p.add_argument("--target", type=float)
    p.add_argument("--max-terms", dest="max_terms", type=int)
    p.add_argument("--config")
    p.add_argument("--out", help="model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", help="generate a synthetic CSST run")
    p.add_argument("--preset", choices=synthlab.preset_names())
    p.add_argument("--params")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="noise standard deviation on measured channels")
    p.add_argument("--variant")
    p.add_argument("--f0", type=float, default=0.1)
    p.add_argument("--f1", type=float, default=2.5)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--sample-rate", dest="sample_rate", type=float, default=100.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="plots and tables for a directory of runs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_welch(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"rolldyn {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        where = module if module not in ("builtins", "exceptions") else type(exc).__name__
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"rolldyn {args.cmd}: {where}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
