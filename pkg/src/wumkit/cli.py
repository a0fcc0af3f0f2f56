"""Command-line pipeline: generate, enrich, train, evaluate, detect-anomalies.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from . import __version__, farmsim, ingest, svg
from .core import ConfigError, DataError, WumError, dataset_fingerprint
from .enrich import TASKS, sessionize
from .evaluation import (
    cv_table_rows,
    evaluate_split,
    format_report,
    format_table,
    report_csv,
)
from .iforest import IForestParams, detect_per_server, write_report_csv
from .learn import (
    GridSearchSpec,
    canonical_kind,
    feature_importance,
    fit,
    grid_search,
    load_model,
    predict,
    save_model,
)
from .learn.model import check_schema
from .learn.params import resolve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("wumkit")


class UsageError(WumError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---- key=value files -----------------------------------------------------

def read_key_values(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; later keys win."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def write_key_values(path, pairs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {value}\n")


def _merge_config(args, parser_dests: set[str]) -> dict[str, str]:
    """Fill unset flags from ``--config``; return the keys no flag claims."""
    if not getattr(args, "config", None):
        return {}
    extra = {}
    for key, value in read_key_values(args.config).items():
        dest = key.replace("-", "_")
        if dest in parser_dests and dest != "config":
            if getattr(args, dest) is None:
                setattr(args, dest, value)
        else:
            extra[key] = value
    return extra


def _typed(value, kind, name):
    if value is None or not isinstance(value, str):
        return value
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None


def _literal(text: str):
    """Interpret a config/grid value: int, float, none, bool or bare string."""
    t = text.strip()
    low = t.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for kind in (int, float):
        try:
            return kind(t)
        except ValueError:
            pass
    return t.strip("'\"")


# ---- commands ------------------------------------------------------------

def cmd_generate(args, extra: dict) -> int:
    sizes = [args.users, args.days, args.servers]
    if args.preset and any(v is not None for v in sizes):
        raise UsageError("--preset cannot be combined with --users/--days/--servers")
    seed = _typed(args.seed, int, "seed") if args.seed is not None else 0
    if args.preset:
        config = farmsim.scale_preset(args.preset, seed=seed)
    else:
        config = farmsim.SimConfig(seed=seed)
    overrides = {}
    for name, value in (("user_count", args.users), ("day_count", args.days),
                        ("server_count", args.servers)):
        if value is not None:
            overrides[name] = str(value)
    overrides.update(extra)
    config = farmsim.SimConfig.from_pairs(overrides, base=config)
    workers = _typed(args.workers, int, "workers") or 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pageviews, sessions, truth = farmsim.generate(config, workers=workers)
    ingest.write_pageviews(pageviews, out / "pageviews.csv")
    ingest.write_sessions(sessions, out / "sessions.csv")
    ingest.write_pairs(sorted(truth.anomaly.items()), out / "ground_truth.csv",
                       ingest.GROUND_TRUTH_HEADER)
    ingest.write_pairs(farmsim.exit_events(sessions), out / "exit_events.csv",
                       ingest.EXIT_EVENTS_HEADER)
    manifest = [("command", "generate"), ("version", __version__),
                ("preset", args.preset or "none"), ("seed", str(seed)),
                ("pageview_count", str(len(pageviews))), ("session_count", str(len(sessions))),
                ("anomaly_count", str(sum(truth.anomaly.values()))),
                ("pageviews_fingerprint", dataset_fingerprint(pageviews)),
                ("sessions_fingerprint", dataset_fingerprint(sessions))]
    manifest += [(f"sim.{k}", v) for k, v in config.to_pairs()]
    write_key_values(out / "manifest.txt", manifest)
    print(f"generated {len(pageviews)} pageviews in {len(sessions)} sessions -> {out}")
    return EXIT_OK


def _report_diagnostics(diagnostics, what: str) -> None:
    for d in diagnostics[:20]:
        print(f"{what} row {d.row}: {d.reason}", file=sys.stderr)
    if len(diagnostics) > 20:
        print(f"... {len(diagnostics) - 20} more {what} diagnostics", file=sys.stderr)


def cmd_enrich(args, extra: dict) -> int:
    if extra:
        raise UsageError(f"unknown config keys for enrich: {sorted(extra)}")
    schema = ingest.pageview_schema(args.timestamp_format or "paper")
    pageviews, diagnostics = ingest.read_pageviews(args.pageviews, schema)
    _report_diagnostics(diagnostics, "pageview")
    events_path = args.exit_events
    if events_path is None:
        sibling = Path(args.pageviews).with_name("exit_events.csv")
        events_path = sibling if sibling.exists() else None
    events = ingest.read_exit_events(events_path) if events_path else {}
    sessions, session_diag = sessionize(pageviews, events)
    _report_diagnostics(session_diag, "session")
    ingest.write_sessions(sessions, args.out, ingest.session_schema(args.timestamp_format or "paper"))
    total = sum(s.page_count for s in sessions)
    skipped_ids = {d.row for d in session_diag}
    skipped = sum(1 for p in pageviews if p.session_id in skipped_ids)
    ok = total + skipped == len(pageviews)
    print(f"pageviews read: {len(pageviews)}; sessions written: {len(sessions)}; "
          f"sum of page_count: {total}; pageviews in skipped sessions: {skipped}; "
          f"mass conserved: {'yes' if ok else 'NO'}")
    print(f"exit methods from: {events_path if events_path else 'none (all direct leave)'}")
    return EXIT_OK if ok else EXIT_DATA


def task_matrix(task: str, sessions, target_service: str = "mail", categories=None,
                class_names=None):
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    if task == "service-access":
        return TASKS[task](sessions, target_service, categories)
    return TASKS[task](sessions, categories, class_names)


def _load_sessions(path):
    sessions, diagnostics = ingest.read_sessions(path)
    _report_diagnostics(diagnostics, "session")
    if not sessions:
        raise DataError(f"no valid sessions in {path}")
    return sessions


def read_grid(path) -> dict[str, list]:
    grid = {}
    for key, value in read_key_values(path).items():
        grid[key] = [_literal(v) for v in value.split(",") if v.strip()]
    return grid


def cmd_train(args, extra: dict) -> int:
    kind = canonical_kind(args.model or "rf")
    seed = _typed(args.seed, int, "seed") or 0
    jobs = _typed(args.jobs, int, "jobs") or 1
    folds = _typed(args.folds, int, "folds") or 5
    target = args.target_service or "mail"
    hp = {k: _literal(v) for k, v in extra.items()}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        hp[key.strip()] = _literal(value)
    resolve(kind, hp)
    sessions = _load_sessions(args.sessions)
    matrix = task_matrix(args.task, sessions, target)
    lines = [f"task: {args.task}", f"model: {kind}", f"seed: {seed}", f"rows: {matrix.n_rows}",
             f"columns: {matrix.n_columns}", f"classes: {', '.join(matrix.class_names)}"]
    out = Path(args.out)
    result = None
    if args.grid:
        spec = GridSearchSpec(read_grid(args.grid), folds=folds, seed=seed)
        result = grid_search(matrix, kind, spec, base=hp, n_jobs=jobs)
        hp = result.best_params
        header, rows = cv_table_rows(result.table)
        lines += ["", f"grid search, {folds}-fold stratified, scoring accuracy",
                  format_table(header, rows), "",
                  f"best: {hp}", f"best Average CV Score: {result.best_score:.4f}"]
        with open(out.with_suffix(".cv.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")
    model = fit(matrix, kind, hp, seed=seed, n_jobs=jobs)
    model.metadata.update(task=args.task, target_service=target)
    if result is not None:
        model.metadata["cv_best_score"] = result.best_score
    save_model(model, out)
    lines += ["", "hyperparameters:"] + [f"  {k} = {v}" for k, v in model.hyperparameters.items()]
    train_acc = float((predict(model, matrix) == matrix.labels).mean())
    lines.append(f"training accuracy: {train_acc:.4f}")
    text = "\n".join(lines) + "\n"
    out.with_suffix(".train.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_evaluate(args, extra: dict) -> int:
    if extra:
        raise UsageError(f"unknown config keys for evaluate: {sorted(extra)}")
    model = load_model(args.model)
    task = model.metadata.get("task")
    if task not in TASKS:
        raise DataError("model file does not record a known task")
    split = _typed(args.split, float, "split") or 0.3
    seed = _typed(args.seed, int, "seed") or 0
    jobs = _typed(args.jobs, int, "jobs") or 1
    sessions = _load_sessions(args.sessions)
    categories = model.schema.get("categories")
    matrix = task_matrix(task, sessions, model.metadata.get("target_service", "mail"),
                         categories, model.class_names)
    check_schema(model, matrix)
    result = evaluate_split(model, matrix, split, seed, n_jobs=jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{task}: {model.model_kind}, train {len(result.train_index)} / "
          f"test {len(result.test_index)} rows")
    print(format_report(result.report))
    (out / "report.csv").write_text(report_csv(result.report), encoding="utf-8")
    if result.model.model_kind in ("cart", "random_forest", "gradient_boosting"):
        items = feature_importance(result.model)
        with open(out / "feature_importance.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("feature,importance\n")
            fh.writelines(f"{name},{value:.6f}\n" for name, value in items)
        svg.write(out / "feature_importance.svg",
                  svg.bar_chart(items, f"Feature importance ({task}, {model.model_kind})"))
    return EXIT_OK


def cmd_detect(args, extra: dict) -> int:
    if extra:
        raise UsageError(f"unknown config keys for detect-anomalies: {sorted(extra)}")
    contamination = _typed(args.contamination, float, "contamination")
    params = IForestParams(n_trees=_typed(args.trees, int, "trees") or 100,
                           subsample=_typed(args.subsample, int, "subsample") or 256,
                           seed=_typed(args.seed, int, "seed") or 0,
                           contamination=contamination if contamination is not None else 0.02)
    schema = ingest.pageview_schema(args.timestamp_format or "paper")
    pageviews, diagnostics = ingest.read_pageviews(args.pageviews, schema)
    _report_diagnostics(diagnostics, "pageview")
    jobs = _typed(args.jobs, int, "jobs") or 1
    report = detect_per_server(pageviews, params, baseline=bool(args.baseline), n_jobs=jobs)
    for d in report.diagnostics:
        print(d.reason, file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "anomalies.csv")
    rows = []
    for sid, summary in sorted(report.servers.items()):
        idx = report.for_server(sid)
        svg.write(out / f"server_{sid}.svg",
                  svg.scatter(report.index[idx], report.page_load_time[idx],
                              report.iforest_flag[idx], f"Server {sid}"))
        row = [str(sid), str(summary.count), f"{summary.mean:.3f}", f"{summary.std:.3f}",
               f"{summary.threshold:.4f}", str(summary.anomaly_count)]
        if args.baseline:
            row.append(str(summary.baseline_count))
        rows.append(row)
    header = ["server", "pageviews", "mean", "std", "score threshold", "iforest anomalies"]
    if args.baseline:
        header.append("baseline anomalies")
    table = format_table(header, rows)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


# ---- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wumkit", description="Web usage mining pipeline on CSV session data.")
    parser.add_argument("--version", action="version", version=f"wumkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesise pageviews, sessions and ground truth")
    g.add_argument("--preset", choices=farmsim.PRESETS)
    g.add_argument("--users", type=int)
    g.add_argument("--days", type=int)
    g.add_argument("--servers", type=int)
    g.add_argument("--seed")
    g.add_argument("--workers")
    g.add_argument("--config", help="key = value file; flags win")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("enrich", help="aggregate pageviews into sessions")
    e.add_argument("--pageviews", required=True)
    e.add_argument("--exit-events", help="Session_ID,Exit_Method table "
                                         "(default: exit_events.csv beside the pageviews)")
    e.add_argument("--timestamp-format", choices=ingest.TIMESTAMP_FORMATS)
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_enrich)

    t = sub.add_parser("train", help="train a model for one prediction task")
    t.add_argument("task", choices=sorted(TASKS))
    t.add_argument("--model", help="rf, gb, lr, svm, cart or the full kind name")
    t.add_argument("--sessions", required=True)
    t.add_argument("--grid", help="key = v1, v2, ... file; enables cross-validated grid search")
    t.add_argument("--folds")
    t.add_argument("--target-service")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    t.add_argument("--seed")
    t.add_argument("--jobs")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("evaluate", help="retrain on a stratified split and report on the rest")
    v.add_argument("--model", required=True)
    v.add_argument("--sessions", required=True)
    v.add_argument("--split", help="test fraction (default 0.3)")
    v.add_argument("--seed")
    v.add_argument("--jobs")
    v.add_argument("--config")
    v.add_argument("--out", default=".")
    v.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("detect-anomalies", help="per-server isolation forest on load times")
    d.add_argument("--pageviews", required=True)
    d.add_argument("--contamination")
    d.add_argument("--baseline", action="store_true", default=None,
                   help="also flag loads beyond one standard deviation")
    d.add_argument("--trees")
    d.add_argument("--subsample")
    d.add_argument("--seed")
    d.add_argument("--jobs")
    d.add_argument("--timestamp-format", choices=ingest.TIMESTAMP_FORMATS)
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        extra = _merge_config(args, dests)
        if isinstance(getattr(args, "baseline", None), str):
            args.baseline = _literal(args.baseline) is True
        return args.func(args, extra)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, WumError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
