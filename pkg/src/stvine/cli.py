"""Command-line entry point: ingest | fit | cv | predict | report.

Configuration comes from flags, optionally seeded by a flat ``key=value``
file (flags win).  Every command is deterministic given its inputs and
``--seed``; all output files are written atomically (temp + rename).

Exit codes: 2 schema/parse errors, 3 imputation or filtering failure,
4 fit failure, 5 cross-validation abort, 6 report inputs missing.
"""

import argparse
import csv
import io
import os
import sys
import tempfile

import numpy as np

from . import ingest, kriging, marginals, prediction, vine
from .config import (COVARIATE_CHOICES, MARGINAL_FAMILIES, MODEL_KINDS,
                     RunConfig)
from .errors import (DomainError, FitError, ImputationError,
                     InsufficientDataError, NumericError, RebinError,
                     SchemaError, StvineError, TauRangeError,
                     UnknownStationError)
from .panel import DEPENDENT, VARIABLES

EXIT_SCHEMA = 2
EXIT_IMPUTE = 3
EXIT_FIT = 4
EXIT_CV = 5
EXIT_REPORT = 6

_SCHEMA_ERRORS = (SchemaError, UnknownStationError, FileNotFoundError,
                  DomainError)
_IMPUTE_ERRORS = (ImputationError, InsufficientDataError)
_FIT_ERRORS = (FitError, TauRangeError, RebinError, NumericError)


def atomic_write(path, text):
    """Write via a sibling temp file and rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_config_file(path):
    out = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"{path} line {line_no}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


_CONFIG_FLAGS = {
    "marginal": str, "n_bins": int, "poly_degree": int, "d_spatial": int,
    "dc_spatial": int, "covariates": str, "cv_folds": int, "seed": int,
    "quad_nodes": int, "model_kind": str, "min_pairs": int, "threads": int,
}


def build_config(args):
    """Merge defaults < config file < explicit flags into a RunConfig."""
    values = {}
    if getattr(args, "config", None):
        file_kv = _read_config_file(args.config)
        for key, val in file_kv.items():
            if key not in _CONFIG_FLAGS:
                raise SchemaError(f"unknown config key {key!r}")
            values[key] = _CONFIG_FLAGS[key](val)
    for key in _CONFIG_FLAGS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = RunConfig(**values)
    if cfg.threads > 0:
        try:
            import numba
            numba.set_num_threads(cfg.threads)
        except ImportError:
            pass
    return cfg


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file (flags win)")
    p.add_argument("--marginal", choices=MARGINAL_FAMILIES,
                   help="marginal family (default gumbel)")
    p.add_argument("--n-bins", dest="n_bins", type=int,
                   help="spatial bins (default 10)")
    p.add_argument("--poly-degree", dest="poly_degree", type=int,
                   help="tau polynomial degree (default 3)")
    p.add_argument("--d-spatial", dest="d_spatial", type=int,
                   help="nearest stations for the dependent variable (default 3)")
    p.add_argument("--dc-spatial", dest="dc_spatial", type=int,
                   help="nearest stations per covariate (default 1)")
    p.add_argument("--covariates", choices=COVARIATE_CHOICES,
                   help="covariate subset (default both)")
    p.add_argument("--cv-folds", dest="cv_folds", type=int,
                   help="cross-validation folds (default 10)")
    p.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    p.add_argument("--quad-nodes", dest="quad_nodes", type=int,
                   help="Gauss-Legendre nodes (default 64)")
    p.add_argument("--model-kind", dest="model_kind", choices=MODEL_KINDS,
                   help="model kind (default vine)")
    p.add_argument("--min-pairs", dest="min_pairs", type=int,
                   help="minimum pairs per copula fit (default 30)")
    p.add_argument("--threads", type=int,
                   help="cap numba worker threads (default: library choice)")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="stvine",
        description="Spatio-temporal vine copula modeling of station panels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, filter, impute, aggregate")
    p.add_argument("--stations", required=True, help="stations.csv path")
    p.add_argument("--observations", required=True, help="observations.csv path")
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--missing-report", help="missingness report CSV path")
    p.add_argument("--max-missing-rate", type=float, default=0.2,
                   help="drop stations at or above this missing rate (default 0.2)")
    p.add_argument("--bin-width", type=float, default=50.0,
                   help="imputation variogram bin width in km (default 50)")
    p.add_argument("--order", choices=("impute-first", "aggregate-first"),
                   default="impute-first",
                   help="imputation/aggregation order (default impute-first)")
    p.add_argument("--no-weekly", action="store_true",
                   help="skip weekly aggregation (data already weekly)")
    p.add_argument("--seed", type=int, default=0, help="variogram fit seed")

    p = sub.add_parser("fit", help="fit a model on an ingested dataset")
    p.add_argument("--dataset", required=True, help="ingested dataset file")
    p.add_argument("--out", required=True, help="output model file")
    _add_config_flags(p)

    p = sub.add_parser("cv", help="cross-validate one or more model kinds")
    p.add_argument("--dataset", required=True, help="ingested dataset file")
    p.add_argument("--out-dir", required=True, help="report output directory")
    p.add_argument("--models", default="vine",
                   help="comma list from vine,gaussian-vine,stcv,kriging")
    _add_config_flags(p)

    p = sub.add_parser("predict", help="predict at station-times of a dataset")
    p.add_argument("--dataset", required=True, help="ingested dataset file")
    p.add_argument("--model", required=True, help="fitted model file")
    p.add_argument("--out", required=True, help="per-target prediction CSV")
    p.add_argument("--stations", default="",
                   help="comma list of station ids (default: all)")

    p = sub.add_parser("report", help="plots and tables from fit/cv outputs")
    p.add_argument("--model", help="fitted model file (correlogram plot)")
    p.add_argument("--cv-dir", help="cv output directory (coverage tables)")
    p.add_argument("--out-dir", required=True, help="report output directory")
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args):
    ds = ingest.load_panel(args.stations, args.observations)
    ds = ingest.filter_stations(ds, args.max_missing_rate)
    report = ingest.missingness_report(ds)
    steps = []
    if args.order == "impute-first":
        steps.append(lambda d: ingest.impute_missing(d, args.bin_width,
                                                     args.seed))
        if not args.no_weekly:
            steps.append(ingest.aggregate_to_weekly)
    else:
        if not args.no_weekly:
            steps.append(ingest.aggregate_to_weekly)
        steps.append(lambda d: ingest.impute_missing(d, args.bin_width,
                                                     args.seed))
    for step in steps:
        ds = step(ds)
    atomic_write(args.out, ingest.dataset_text(ds))
    report_path = args.missing_report or args.out + ".missing.csv"
    atomic_write(report_path, report.to_csv())
    print(f"dataset: {ds.n_stations} stations x {ds.n_times} steps -> {args.out}")
    return 0


def _selection_table(model):
    lines = ["group lag bin family rotation"]
    for group in ["dep"] + sorted(model.st_cov):
        st = model.tree1_copula(group)
        for li, lag in enumerate(st.poly.lags):
            for b, ch in enumerate(st.choices[li]):
                rot = f" r{ch.rotation}" if ch.rotation else ""
                lines.append(f"{group:>5} {lag:>3} {b:>3} {ch.family}{rot}")
    return "\n".join(lines)


def cmd_fit(args):
    cfg = build_config(args).resolved()
    ds = ingest.load_dataset(args.dataset)
    if cfg.model_kind == "kriging":
        dists = ds.distances_km()
        edges = prediction.ds_bin_edges(dists, cfg.n_bins)
        specs = []
        for ti in range(ds.n_times):
            vals = ds.values[VARIABLES.index(DEPENDENT), :, ti]
            vg = kriging.fit_variogram_on_bins(
                dists, vals, edges, seed=cfg.seed, min_bins=min(5, cfg.n_bins))
            specs.append((int(ds.times[ti]), vg))
        atomic_write(args.out, kriging.variogram_csv_rows(specs))
        print(f"per-slice variograms -> {args.out}")
        return 0
    table = marginals.fit_marginal_table(ds, cfg.marginal)
    upanel = marginals.pit_transform(ds, table)
    model = vine.fit_vine(upanel, table, cfg)
    atomic_write(args.out, vine.model_text(model))
    print(_selection_table(model))
    print(f"model: d'={model.n_neighbors}, "
          f"{model.n_upper_edges()} upper-tree copulas -> {args.out}")
    return 0


def cmd_cv(args):
    cfg = build_config(args)
    ds = ingest.load_dataset(args.dataset)
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise SchemaError(f"unknown model kind {kind!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    summaries = []
    for kind in kinds:
        report = prediction.cross_validate(ds, cfg, kind)
        if not report.rows:
            raise InsufficientDataError(f"{kind}: every fold aborted")
        atomic_write(os.path.join(args.out_dir, f"cv_{kind}_folds.csv"),
                     report.to_csv())
        atomic_write(os.path.join(args.out_dir, f"cv_{kind}_targets.csv"),
                     report.targets_csv())
        if report.family_rows:
            atomic_write(os.path.join(args.out_dir, f"cv_{kind}_families.csv"),
                         report.families_csv())
        summaries.append(report.summary())
    text = "\n\n".join(summaries) + "\n"
    atomic_write(os.path.join(args.out_dir, "summary.txt"), text)
    print(text, end="")
    return 0


def cmd_predict(args):
    ds = ingest.load_dataset(args.dataset)
    model = vine.load_model(args.model)
    table = model.marginal_table
    upanel = marginals.pit_transform(ds, table)
    wanted = [s.strip() for s in args.stations.split(",") if s.strip()]
    stations = [s for s in ds.stations if not wanted or s.id in wanted]
    if not stations:
        raise SchemaError("no matching stations to predict at")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station", "time", "observed", "mean", "q025", "q975"])
    t_indices = list(range(1, ds.n_times))
    for st in stations:
        si = ds.station_index(st.id)
        preds = prediction.predict_station(model, upanel, st.lon, st.lat,
                                           st.id, t_indices)
        for p, t in zip(preds, t_indices):
            w.writerow([st.id, p.time, repr(float(ds.values[0, si, t])),
                        repr(p.mean), repr(p.interval_95[0]),
                        repr(p.interval_95[1])])
    atomic_write(args.out, buf.getvalue())
    print(f"{len(stations) * len(t_indices)} predictions -> {args.out}")
    return 0


def _correlogram_svg(model, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = ["dep"] + sorted(model.st_cov)
    fig, axes = plt.subplots(1, len(groups), figsize=(5 * len(groups), 4),
                             squeeze=False)
    hs = np.linspace(0.0, model.bins.h_max, 200)
    styles = {0: "-", 1: "--"}
    for ax, group in zip(axes[0], groups):
        st = model.tree1_copula(group)
        for li, lag in enumerate(st.poly.lags):
            curve = [st.poly.tau(h, lag) for h in hs]
            ax.plot(hs, curve, styles.get(lag, ":"), label=f"lag {lag}")
            if st.correlogram is not None:
                ax.scatter(model.bins.mean_distances, st.correlogram.taus[li],
                           marker="o" if lag == 0 else "x", s=18)
        ax.set_xlabel("distance (km)")
        ax.set_ylabel("Kendall's tau")
        ax.set_title(group)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _family_table(model):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "lag", "bin", "family", "rotation"])
    for group in ["dep"] + sorted(model.st_cov):
        st = model.tree1_copula(group)
        for li, lag in enumerate(st.poly.lags):
            for b, ch in enumerate(st.choices[li]):
                w.writerow([group, lag, b, ch.family, ch.rotation])
    return buf.getvalue()


def _aggregate_families(cv_dir):
    """Most frequent family per (group, lag, bin) across folds."""
    from collections import Counter

    rows = []
    for name in sorted(os.listdir(cv_dir)):
        if not (name.startswith("cv_") and name.endswith("_families.csv")):
            continue
        with open(os.path.join(cv_dir, name)) as fh:
            reader = csv.DictReader(fh)
            rows.extend(reader)
    if not rows:
        return None
    counts = {}
    for r in rows:
        key = (r["model"], r["group"], r["lag"], r["bin"])
        counts.setdefault(key, Counter())[(r["family"], r["rotation"])] += 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "group", "lag", "bin", "family", "rotation", "folds"])
    for key in sorted(counts):
        (fam, rot), n = counts[key].most_common(1)[0]
        w.writerow(list(key) + [fam, rot, n])
    return buf.getvalue()


def _coverage_table(cv_dir):
    rows = []
    for name in sorted(os.listdir(cv_dir)):
        if not (name.startswith("cv_") and name.endswith("_folds.csv")):
            continue
        with open(os.path.join(cv_dir, name)) as fh:
            rows.extend(csv.DictReader(fh))
    if not rows:
        return None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "marginal", "cov_n", "cov_pct", "mae", "rmse",
                "mae_ext", "rmse_ext"])
    by_model = {}
    for r in rows:
        by_model.setdefault((r["model"], r["marginal"]), []).append(r)
    for (model, marginal), rs in sorted(by_model.items()):
        cov_n = sum(int(r["cov_n"]) for r in rs)
        w.writerow([model, marginal, cov_n,
                    repr(float(np.mean([float(r["cov_pct"]) for r in rs]))),
                    repr(float(np.mean([float(r["mae"]) for r in rs]))),
                    repr(float(np.mean([float(r["rmse"]) for r in rs]))),
                    repr(float(np.mean([float(r["mae_ext"]) for r in rs]))),
                    repr(float(np.mean([float(r["rmse_ext"]) for r in rs])))])
    return buf.getvalue()


def cmd_report(args):
    wrote_any = False
    os.makedirs(args.out_dir, exist_ok=True)
    if args.model:
        if not os.path.exists(args.model):
            raise FileNotFoundError(f"model file {args.model} not found")
        model = vine.load_model(args.model)
        _correlogram_svg(model, os.path.join(args.out_dir, "correlogram.svg"))
        atomic_write(os.path.join(args.out_dir, "families.csv"),
                     _family_table(model))
        wrote_any = True
    if args.cv_dir:
        if not os.path.isdir(args.cv_dir):
            raise FileNotFoundError(f"cv directory {args.cv_dir} not found")
        fam = _aggregate_families(args.cv_dir)
        if fam:
            atomic_write(os.path.join(args.out_dir, "cv_families.csv"), fam)
            wrote_any = True
        cov = _coverage_table(args.cv_dir)
        if cov:
            atomic_write(os.path.join(args.out_dir, "coverage.csv"), cov)
            wrote_any = True
    if not wrote_any:
        raise FileNotFoundError(
            "report needs --model and/or --cv-dir with existing outputs")
    print(f"report written to {args.out_dir}")
    return 0


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    handlers = {"ingest": cmd_ingest, "fit": cmd_fit, "cv": cmd_cv,
                "predict": cmd_predict, "report": cmd_report}
    handler = handlers[args.command]
    try:
        return handler(args)
    except _SCHEMA_ERRORS as exc:
        if args.command == "report":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_REPORT
        if args.command == "cv" and isinstance(exc, StvineError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CV
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except _IMPUTE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CV if args.command == "cv" else EXIT_IMPUTE
    except _FIT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CV if args.command == "cv" else EXIT_FIT
    except StvineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CV if args.command == "cv" else EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
