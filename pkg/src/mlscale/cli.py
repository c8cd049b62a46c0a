"""``mlscale`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _fraction(text):
    v = _nonneg_float(text)
    if v >= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return v


def _emit(summary):
    print(json.dumps(summary, sort_keys=True))


# --- subcommands -----------------------------------------------------------

def _ratings_split(args):
    from .sparse import holdout_split, load_movielens
    ratings = load_movielens(args.data)
    if args.test_fraction > 0:
        split = holdout_split(ratings, args.test_fraction, args.seed, keep_coverage=True)
        return split.train, split.test
    return ratings, None


def cmd_complete_als(args):
    from .als import als_fit
    from .sparse import baseline_predictors, rmse
    train, test = _ratings_split(args)
    bounds = None if args.no_clip else (float(train.values.min()), float(train.values.max()))
    res = als_fit(train, args.rank, args.lam, nonneg=args.nonneg, max_iter=args.max_iter,
                  tol=args.tol, seed=args.seed, workers=args.workers, rating_bounds=bounds)
    if not np.all(np.isfinite(res.model.A)) or not np.all(np.isfinite(res.model.B)):
        raise FloatingPointError("non-finite factors")
    summary = {"sweeps": res.n_sweeps, "converged": res.converged,
               "objective": res.trace.column("objective")[-1],
               "train_rmse": rmse(train.values - res.model.predict_entries(train.rows, train.cols))}
    if test is not None:
        base = baseline_predictors(train)
        summary["test_rmse"] = rmse(test.values - res.model.predict_entries(test.rows, test.cols))
        summary["baseline_rmse"] = rmse(test.values - base.global_mean)
    if args.out:
        res.model.save(args.out)
    if args.trace:
        res.trace.to_csv(args.trace)
    _emit(summary)


def cmd_complete_svt(args):
    from .sparse import SparseRatings, rmse
    from .svt import soft_impute
    train, test = _ratings_split(args)
    mu = float(train.values.mean()) if args.center else 0.0
    shifted = SparseRatings(train.n_rows, train.n_cols, train.rows, train.cols, train.values - mu)
    res = soft_impute(shifted, args.lam, args.rank_max, tol=args.tol, max_iter=args.max_iter,
                      seed=args.seed, mode=args.mode)
    t = res.triple
    summary = {"iterations": res.n_iter, "converged": res.converged, "rank": t.rank,
               "rank_ceiling_hit": res.rank_ceiling_hit, "objective": res.objective,
               "train_rmse": rmse(shifted.values - t.predict_entries(train.rows, train.cols))}
    if test is not None:
        summary["test_rmse"] = rmse(test.values - mu - t.predict_entries(test.rows, test.cols))
    if args.out:
        np.savez(args.out, U=t.U, d=t.d, V=t.V, offset=np.array(mu))
    if args.trace:
        res.trace.to_csv(args.trace)
    _emit(summary)


def cmd_nmf(args):
    from .als import save_factors
    from .nmf import NmfConfig, nmf_fit
    X = np.loadtxt(args.data, delimiter=",", ndmin=2)
    cfg = NmfConfig(args.rank, args.algorithm, args.init, args.n_starts, args.max_iter, args.tol,
                    args.seed, args.l2)
    res = nmf_fit(X, cfg, workers=args.workers)
    if args.out:
        # same text dump as ALS factors: A = W, B = H'
        save_factors(args.out, res.W, res.H.T, lam=args.l2, nonneg=True)
    if args.trace:
        res.trace.to_csv(args.trace)
    _emit({"objective": res.objective, "best_start": res.start_id,
           "start_objectives": res.start_objectives, "iterations": res.n_iter,
           "converged": res.converged})


def _pipeline(args):
    from .text import DEFAULT_STOPLIST, TextPipeline, load_stoplist, stem
    stoplist = load_stoplist(args.stoplist) if args.stoplist else DEFAULT_STOPLIST
    return TextPipeline(args.n_hash, args.ngram, not args.unsigned, stoplist,
                        None if args.no_stem else stem)


def cmd_vectorize(args):
    from .text import read_corpus, save_idf, tfidf_fit, tfidf_transform
    _, docs = read_corpus(args.corpus, labeled=args.labeled)
    m = _pipeline(args).transform(docs)
    if args.tfidf:
        idf = tfidf_fit(m)
        m = tfidf_transform(m, idf)
        if args.idf_out:
            save_idf(args.idf_out, idf)
    out = args.out or "features.txt"
    m.save(out)
    _emit({"n_docs": m.n_docs, "n_hash": m.n_hash, "stage": m.stage, "nnz": int(m.matrix.nnz),
           "out": out})


def cmd_train_text(args):
    from .logreg import error_rate, train_ovr
    from .text import HashedMatrix, read_corpus, save_idf, tfidf_fit, tfidf_transform
    labels, docs = read_corpus(args.corpus, labeled=True)
    counts = _pipeline(args).transform(docs)
    y = np.asarray(labels)
    n = len(docs)
    perm = np.random.default_rng(args.seed).permutation(n)
    n_test = int(round(args.test_fraction * n))
    te, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    train_counts = HashedMatrix(counts.matrix[tr], "counts")
    idf = tfidf_fit(train_counts)
    X = tfidf_transform(train_counts, idf)
    res = train_ovr(X, y[tr], args.lam, args.optimizer, args.max_epochs, args.tol, args.seed,
                    workers=args.workers, eta0=args.eta0, batch_size=args.batch_size)
    summary = {"classes": res.model.K, "train_docs": int(tr.size),
               "train_error": error_rate(res.model.predict(X), y[tr]),
               "max_epochs_used": max(res.epochs)}
    if n_test:
        Xte = tfidf_transform(HashedMatrix(counts.matrix[te], "counts"), idf)
        summary["test_error"] = error_rate(res.model.predict(Xte), y[te])
    out = args.out or "model.txt"
    res.model.dump(out)
    save_idf(f"{out}.idf", idf)
    if args.trace:
        res.trace.to_csv(args.trace)
    summary["out"] = out
    _emit(summary)


def cmd_predict_text(args):
    from .logreg import LinearModel
    from .text import HashedMatrix, load_idf, tfidf_transform
    model = LinearModel.load(args.model)
    m = HashedMatrix.load(args.matrix)
    if m.stage == "counts":
        idf_path = args.idf or f"{args.model}.idf"
        m = tfidf_transform(m, load_idf(idf_path))
    pred = model.predict(m)
    out = args.out or "predictions.txt"
    with open(out, "w", encoding="utf-8") as fh:
        fh.writelines(f"{p}\n" for p in pred)
    _emit({"n_docs": len(pred), "out": out})


def cmd_kmeans(args):
    from .kmeans import kmeans_fit, read_points, write_assignments, write_centroids
    data = read_points(args.data)
    res = kmeans_fit(data, args.k, args.partitions, args.seed, args.max_iter, args.tol,
                     workers=args.workers)
    prefix = args.out or "kmeans"
    write_centroids(f"{prefix}.centroids.csv", res.state)
    write_assignments(f"{prefix}.assignments.csv", res.labels)
    if args.trace:
        res.trace.to_csv(args.trace)
    _emit({"iterations": res.state.iteration, "converged": res.converged, "inertia": res.inertia,
           "out": prefix})


def cmd_curve(args):
    from .bench import ExperimentConfig, emit_results, run_learning_curve
    cfg = ExperimentConfig.from_toml(args.config)
    cfg = cfg.override(seed=args.seed, workers=args.workers, out=args.out)
    rows = run_learning_curve(cfg)
    out = cfg.out or "results.csv"
    fmt = args.format or ("json" if out.endswith(".json") else "csv")
    emit_results(rows, out, fmt)
    _emit({"rows": len(rows), "failed": sum(r.metric_value == "failed" for r in rows), "out": out})


# --- parser ----------------------------------------------------------------

def _common(p, seed_default=0):
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out")


def _text_flags(p):
    p.add_argument("--n-hash", type=_positive_int, default=60000)
    p.add_argument("--ngram", type=int, choices=(1, 2), default=1)
    p.add_argument("--unsigned", action="store_true", help="disable the sign hash")
    p.add_argument("--stoplist", help="stop-word file, one word per line")
    p.add_argument("--no-stem", action="store_true")


def build_parser():
    ap = _Parser(prog="mlscale", description="Matrix completion, factorization, text and "
                                             "clustering experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("complete-als", help="ALS completion of a ratings file")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--rank", type=_positive_int, default=8)
    p.add_argument("--lam", type=_nonneg_float, default=0.01)
    p.add_argument("--nonneg", action="store_true")
    p.add_argument("--max-iter", type=_positive_int, default=30)
    p.add_argument("--tol", type=_nonneg_float, default=1e-6)
    p.add_argument("--test-fraction", type=_fraction, default=0.1)
    p.add_argument("--no-clip", action="store_true", help="do not clip predictions to the rating range")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_complete_als)

    p = sub.add_parser("complete-svt", help="soft-impute completion of a ratings file")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--lam", type=_nonneg_float, default=5.0)
    p.add_argument("--rank-max", type=_positive_int, default=20)
    p.add_argument("--mode", choices=("svd", "als"), default="svd")
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--tol", type=_nonneg_float, default=1e-5)
    p.add_argument("--test-fraction", type=_fraction, default=0.1)
    p.add_argument("--no-center", dest="center", action="store_false")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_complete_svt)

    p = sub.add_parser("nmf", help="NMF of a dense nonnegative CSV matrix")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--algorithm", choices=("multiplicative_ls", "als_clamp"),
                   default="multiplicative_ls")
    p.add_argument("--init", choices=("random_multistart", "nndsvd"), default="random_multistart")
    p.add_argument("--n-starts", type=_positive_int, default=1)
    p.add_argument("--max-iter", type=_positive_int, default=200)
    p.add_argument("--tol", type=_nonneg_float, default=1e-6)
    p.add_argument("--l2", type=_nonneg_float, default=0.0)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_nmf)

    p = sub.add_parser("vectorize", help="hash a corpus into a feature matrix")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--labeled", action="store_true", help="lines start with a label and a tab")
    _text_flags(p)
    p.add_argument("--tfidf", action="store_true", help="apply TF-IDF fitted on this corpus")
    p.add_argument("--idf-out")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("train-text", help="train one-vs-rest logistic regression on a labeled corpus")
    _common(p)
    p.add_argument("--corpus", required=True)
    _text_flags(p)
    p.add_argument("--lam", type=_nonneg_float, default=1e-4)
    p.add_argument("--optimizer", choices=("batch_gradient", "sgd"), default="batch_gradient")
    p.add_argument("--max-epochs", type=_positive_int, default=100)
    p.add_argument("--tol", type=_nonneg_float, default=1e-5)
    p.add_argument("--eta0", type=_nonneg_float, default=1.0)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--test-fraction", type=_fraction, default=0.0)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_train_text)

    p = sub.add_parser("predict-text", help="label the rows of a hashed feature matrix")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--idf", help="idf file for counts-stage input (default MODEL.idf)")
    p.set_defaults(func=cmd_predict_text)

    p = sub.add_parser("kmeans", help="map/shuffle/reduce k-means on a CSV of vectors")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--partitions", type=_positive_int, default=1)
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--tol", type=_nonneg_float, default=1e-8)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_kmeans)

    p = sub.add_parser("curve", help="run a learning-curve experiment from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_curve)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"mlscale: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"mlscale: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print(f"mlscale: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
