"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or argument error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

from . import cost_model
from ._parallel import default_threads
from .cluster_filter import ClusterFilterSpec, filter_cluster
from .data import (
    EmbeddingSet,
    RunReport,
    ScoredSelection,
    file_digest,
    load_embeddings,
    load_labels,
    save_embeddings,
    save_labels,
    with_labels,
    write_selection,
)
from .domain_filter import DomainTrainConfig, build_domain_dataset, score_domain, train_domain_classifier
from .entropy_filter import filter_entropy, train_target_classifier
from .kmeans import ClusterModel, fit_kmeans
from .sequential import MockTrainer, PrototypeTrainer, compare_independent, load_plan, run_sequential
from .synth import MixtureSpec, generate_mixture

log = logging.getLogger("condfilter")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--threads", type=_positive_int, default=default_threads())
    g.add_argument("--report", dest="report_path", help="write a run report to this path")
    g.add_argument("--verbosity", choices=("quiet", "normal", "debug"), default="normal")
    g.add_argument("--format", dest="input_format", choices=("binary", "csv"), default="binary",
                   help="format of embedding inputs")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="condfilter", description="Target-conditioned filtering of pre-training data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kmeans", parents=[common], help="cluster target embeddings")
    p.add_argument("--target", required=True)
    p.add_argument("--k", type=_positive_int, default=200)
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="centers (EMB1)")
    p.set_defaults(func=cmd_kmeans)

    fp = sub.add_parser("filter", help="select a source subset").add_subparsers(
        dest="filter_kind", required=True, parser_class=_Parser)
    io = argparse.ArgumentParser(add_help=False)
    io.add_argument("--source", required=True)
    io.add_argument("--target", required=True)
    io.add_argument("--budget", type=_positive_int, required=True)
    io.add_argument("--out", required=True, help="selection file (one row index per line)")

    p = fp.add_parser("cluster", parents=[common, io])
    p.add_argument("--k", type=_positive_int, default=200)
    p.add_argument("--agg", choices=("min", "avg"), default="min")
    p.add_argument("--p", type=int, choices=(1, 2), default=2)
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--centers", help="reuse precomputed centers (EMB1) instead of fitting")
    p.set_defaults(func=cmd_filter_cluster)

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--epochs", type=_positive_int, default=500)
    train.add_argument("--lr", type=float, default=0.1)
    train.add_argument("--classifier-out")

    p = fp.add_parser("domain", parents=[common, io, train])
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--band", type=float, nargs=2, default=(0.92, 0.95), metavar=("LOWER", "UPPER"))
    p.set_defaults(func=cmd_filter_domain)

    p = fp.add_parser("entropy", parents=[common, io, train])
    p.add_argument("--target-labels", required=True, help="LBL1 labels for the target")
    p.add_argument("--mode", choices=("active", "inverse"), default="active")
    p.set_defaults(func=cmd_filter_entropy)

    sp = sub.add_parser("sequential", help="sequential pre-training over a task plan").add_subparsers(
        dest="seq_kind", required=True, parser_class=_Parser)
    seq = argparse.ArgumentParser(add_help=False)
    seq.add_argument("--plan", required=True)
    seq.add_argument("--source", required=True)
    seq.add_argument("--source-labels")
    seq.add_argument("--trainer", choices=("proxy", "mock"), default="proxy")
    p = sp.add_parser("run", parents=[common, seq])
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sequential_run)
    p = sp.add_parser("compare", parents=[common, seq])
    p.add_argument("--default-epochs", type=_positive_int, default=100)
    p.add_argument("--out", help="write the comparison as JSON here instead of stdout")
    p.set_defaults(func=cmd_sequential_compare)

    cp = sub.add_parser("cost", help="pre-training cost model").add_subparsers(
        dest="cost_kind", required=True, parser_class=_Parser)
    p = cp.add_parser("estimate", parents=[common])
    p.add_argument("--images", type=_positive_int, nargs="+", required=True)
    p.add_argument("--epochs", type=_positive_int, required=True)
    p.add_argument("--resolution", type=_positive_int, nargs="+", default=[224])
    p.add_argument("--profile", help="profile file; defaults to the built-in calibration")
    p.set_defaults(func=cmd_cost_estimate)
    p = cp.add_parser("calibrate", parents=[common])
    p.add_argument("--obs", action="append", default=[], metavar="IMAGES,EPOCHS,RES,HOURS")
    p.add_argument("--observations", help="CSV file of images,epochs,resolution,hours rows")
    p.add_argument("--overhead", choices=cost_model.OVERHEAD_MODES, default="per_image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cost_calibrate)

    p = sub.add_parser("synth", parents=[common], help="generate a Gaussian mixture")
    p.add_argument("--spec", required=True, help="JSON mixture spec")
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.set_defaults(func=cmd_synth)
    return parser


def _load(path, args):
    return load_embeddings(path, args.input_format)


def _digests(*paths):
    return [f"{Path(p).name}:{file_digest(p)}" for p in paths]


def _plain_report(method, **extra):
    return RunReport(method=method, budget=0, selected_count=0, score_min=0.0, score_max=0.0,
                     score_mean=0.0, seed=0, extra=extra)


def _finish_selection(sel, args, started, inputs):
    wall = int((time.perf_counter() - started) * 1000)
    write_selection(sel, args.out, args.report_path, wall, _digests(*inputs))
    if sel.clamped:
        log.warning("budget %d exceeds source size; selected all %d rows", sel.budget, sel.selected.size)
    log.info("selected %d rows -> %s", sel.selected.size, args.out)


def cmd_kmeans(args):
    started = time.perf_counter()
    target = _load(args.target, args)
    model = fit_kmeans(target, args.k, args.seed, args.max_iters, args.rel_tol, threads=args.threads)
    save_embeddings(model.to_embeddings(), args.out)
    log.info("k=%d inertia=%.6g iterations=%d", model.k, model.inertia, model.iterations_run)
    if args.report_path:
        report = _plain_report("kmeans", k=model.k, inertia=model.inertia, iterations=model.iterations_run)
        report.seed = args.seed
        report.wall_ms = int((time.perf_counter() - started) * 1000)
        report.input_digests = _digests(args.target)
        Path(args.report_path).write_text(report.to_text())


def cmd_filter_cluster(args):
    started = time.perf_counter()
    source, target = _load(args.source, args), _load(args.target, args)
    spec = ClusterFilterSpec(args.budget, args.agg, args.p, args.seed)
    model = None
    if args.centers:
        centers = load_embeddings(args.centers)
        model = ClusterModel(centers.data.astype(float), float("nan"), 0)
    sel = filter_cluster(source, target, spec, k=args.k, max_iters=args.max_iters, rel_tol=args.rel_tol,
                         model=model, threads=args.threads)
    _finish_selection(sel, args, started, [args.source, args.target])


def _train_config(args):
    band = tuple(getattr(args, "band", (0.92, 0.95)))
    return DomainTrainConfig(args.epochs, args.lr, getattr(args, "val_fraction", 0.2), band, args.seed)


def cmd_filter_domain(args):
    started = time.perf_counter()
    source, target = _load(args.source, args), _load(args.target, args)
    cfg = _train_config(args)
    data = build_domain_dataset(source, target, cfg.seed)
    clf, result = train_domain_classifier(data, cfg, warn=False)
    notes = [] if result.in_band else ["accuracy_out_of_band"]
    if data.clamped:
        notes.append("domain_sample_clamped")
    if not result.in_band:
        log.warning("validation accuracy %.4f outside band %s", result.val_accuracy, cfg.accuracy_band)
    if args.classifier_out:
        clf.save(args.classifier_out)
    info = {"val_accuracy": result.val_accuracy, "epochs_run": result.epochs_run, "warnings": notes}
    sel = ScoredSelection.from_scores(score_domain(clf, source, args.threads), args.budget, "domain",
                                      args.seed, "descending", info)
    _finish_selection(sel, args, started, [args.source, args.target])


def cmd_filter_entropy(args):
    started = time.perf_counter()
    source = _load(args.source, args)
    target = with_labels(_load(args.target, args), load_labels(args.target_labels))
    cfg = _train_config(args)
    clf = train_target_classifier(target, cfg)
    if args.classifier_out:
        clf.save(args.classifier_out)
    sel = filter_entropy(source, target, cfg, args.budget, args.mode, classifier=clf, threads=args.threads)
    _finish_selection(sel, args, started, [args.source, args.target, args.target_labels])


def _sequential_inputs(args):
    plan = load_plan(args.plan)

    def source():
        s = _load(args.source, args)
        if args.source_labels:
            s = with_labels(s, load_labels(args.source_labels))
        return s

    trainer = PrototypeTrainer() if args.trainer == "proxy" else MockTrainer()
    return plan, source, trainer


def cmd_sequential_run(args):
    started = time.perf_counter()
    plan, source, trainer = _sequential_inputs(args)
    res = run_sequential(plan, source, trainer, seed=args.seed, out_dir=args.out_dir, threads=args.threads)
    for t in res.tasks:
        status = f"error={t.error}" if t.error else f"metric={t.metric:.6g}"
        print(f"{t.task_id}\tepochs={t.epochs}\tselected={t.selected_count}\t{status}")
    print(f"total_epochs\t{res.total_epochs}")
    summary = {
        "total_epochs": res.total_epochs,
        "state_digest": res.state.digest(),
        "tasks": [[t.task_id, t.epochs, t.subset_digest, t.metric, t.error] for t in res.tasks],
    }
    Path(args.out_dir, "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.report_path:
        report = _plain_report("sequential", total_epochs=res.total_epochs, tasks=len(res.tasks))
        report.seed = args.seed
        report.wall_ms = int((time.perf_counter() - started) * 1000)
        Path(args.report_path).write_text(report.to_text())


def cmd_sequential_compare(args):
    plan, source, trainer = _sequential_inputs(args)
    report = compare_independent(plan, source, trainer, seed=args.seed, default_epochs=args.default_epochs,
                                 threads=args.threads)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.report_path:
        Path(args.report_path).write_text(_plain_report(
            "sequential_compare",
            sequential_total_epochs=report.sequential_total_epochs,
            independent_total_epochs=report.independent_total_epochs,
        ).to_text())


def cmd_cost_estimate(args):
    profile = cost_model.CostProfile.load(args.profile) if args.profile else cost_model.default_profile()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", cost_model.ResolutionWarning)
        rows = cost_model.estimate_grid(args.images, args.epochs, args.resolution, profile)
    for w in caught:
        log.warning("%s", w.message)
    if len(rows) == 1:
        images, res, hours = rows[0]
        print(f"images={images} epochs={args.epochs} resolution={res} hours={hours:.2f}")
    else:
        print("images\tresolution\thours")
        for images, res, hours in rows:
            print(f"{images}\t{res}\t{hours:.2f}")
    if args.report_path:
        Path(args.report_path).write_text(_plain_report(
            "cost_estimate", estimates=[list(r) for r in rows], epochs=args.epochs).to_text())


def _parse_observations(args):
    obs = []
    lines = list(args.obs)
    if args.observations:
        lines += [ln for ln in Path(args.observations).read_text().splitlines()
                  if ln.strip() and not ln.lstrip().startswith("#")]
    for ln in lines:
        parts = [float(v) for v in ln.split(",")]
        if len(parts) != 4:
            raise ValueError(f"observation needs 4 values, got {ln!r}")
        obs.append(parts)
    return obs


def cmd_cost_calibrate(args):
    fit = cost_model.calibrate(_parse_observations(args), overhead=args.overhead)
    fit.profile.save(args.out)
    print(f"throughput_coeff={fit.profile.throughput_coeff:.6g} "
          f"fixed_overhead_hours={fit.profile.fixed_overhead_hours:.6g} "
          f"per_image_overhead={fit.profile.per_image_overhead:.6g}")
    print("residuals=" + ",".join(f"{r:.6g}" for r in fit.residuals))
    if args.report_path:
        Path(args.report_path).write_text(_plain_report(
            "cost_calibrate", residuals=fit.residuals.tolist()).to_text())


def cmd_synth(args):
    spec = MixtureSpec.load(args.spec)
    emb, comp = generate_mixture(spec)
    save_embeddings(emb, args.out)
    if args.labels_out:
        save_labels(comp, args.labels_out)
    log.info("wrote %d x %d rows to %s", emb.count, emb.dim, args.out)
    if args.report_path:
        report = _plain_report("synth", count=emb.count, dim=emb.dim, digest=EmbeddingSet(emb.data).digest())
        report.seed = spec.seed
        Path(args.report_path).write_text(report.to_text())


def _normalize(argv):
    argv = list(argv)
    # `cost --images ...` is shorthand for `cost estimate --images ...`
    if argv and argv[0] == "cost" and (len(argv) == 1 or argv[1] not in ("estimate", "calibrate", "-h", "--help")):
        argv.insert(1, "estimate")
    return argv


def _setup_logging(verbosity):
    level = {"quiet": logging.ERROR, "normal": logging.INFO, "debug": logging.DEBUG}[verbosity]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def dispatch(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize(argv))
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    _setup_logging(args.verbosity)
    for key, value in sorted(vars(args).items()):
        if key != "func":
            log.debug("option %s = %r", key, value)
    try:
        args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
