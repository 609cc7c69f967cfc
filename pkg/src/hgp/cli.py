"""Command-line interface: data synthesis, training, prediction, evaluation,
and benchmarking.

Exit codes: 0 success, 1 configuration error, 2 data error (including hash
and dimension mismatches), 3 numerical failure.  Error messages go to
standard error.  The worker count comes from --workers, else the
HGP_WORKERS environment variable, else the CPU count.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import model as hgp_model
from . import modelio, optimize, synth
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    HgpError,
    NumericalError,
    TaskError,
)
from .executor import Executor, WORKERS_ENV_VAR
from .kernel import Hyperparameters
from .metrics import evaluate_predictions, time_lml_gradient
from .modelio import ModelFile, file_sha256, ingest_csv, load_model, save_model
from .partition import (
    METHOD_KDTREE_STRIPED,
    METHOD_RANDOM,
    assign_random,
    assign_striped,
    build_kdtree_regions,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# c = 1 reference models in bench depth mode are only built up to this size.
REFERENCE_LIMIT = 8192


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _float_or_list(text: str) -> list:
    return [float(part) for part in text.split(",") if part.strip() != ""]


def _int_list(text: str) -> list:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def _fmt(value: float) -> str:
    return repr(float(value))


def build_parser() -> _Parser:
    parser = _Parser(prog="hgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a synthetic regression data set")
    p.add_argument("--n", type=int, required=True, help="number of rows")
    p.add_argument("--dim", type=int, default=1, help="input dimension")
    p.add_argument("--sigma-f", type=float, default=1.0)
    p.add_argument("--lengthscales", type=_float_or_list, default=[0.3],
                   help="one value (tied) or D comma-separated values")
    p.add_argument("--sigma-eps", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["auto", "exact", "rff"], default="auto")
    p.add_argument("--features", type=int, default=2048,
                   help="random Fourier features for large draws")
    p.add_argument("--header", action="store_true", help="write a header row")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--test-n", type=int, default=0,
                   help="also draw this many held-out rows from the same function")
    p.add_argument("--test-out", default=None, help="held-out rows CSV path")

    p = sub.add_parser("train", help="train a model and write a model file")
    _add_data_flags(p)
    p.add_argument("--experts", type=int, default=None, help="number of leaf experts")
    p.add_argument("--branching", type=_int_list, default=None,
                   help="per-level branching factors, e.g. 2,2")
    p.add_argument("--method", choices=["kdtree", "random"], default="kdtree")
    p.add_argument("--sharing", type=int, default=1,
                   help="number of subsets each point joins")
    p.add_argument("--regions", type=int, default=None,
                   help="KD regions (power of 2); default picked from N and experts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--model", required=True, help="output model file (JSON)")
    p.add_argument("--log", default=None,
                   help="iteration log CSV (default: <model>.log.csv)")

    p = sub.add_parser("predict", help="predict at query inputs from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="query inputs CSV")
    p.add_argument("--target-col", type=int, default=None,
                   help="drop this column from the query file first")
    p.add_argument("--header", action="store_true")
    p.add_argument("--target", choices=["latent", "noisy"], default="noisy")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--override-hash", action="store_true",
                   help="skip the training-data hash check")
    p.add_argument("--out", required=True, help="output CSV (mean,variance)")

    p = sub.add_parser("eval", help="evaluate a model on labelled data")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--reference-model", default=None,
                   help="reference model for likelihood ratios")
    p.add_argument("--target", choices=["latent", "noisy"], default="noisy")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--override-hash", action="store_true")
    p.add_argument("--out", default=None, help="metrics CSV (default: stdout)")

    p = sub.add_parser("bench", help="timing and accuracy benchmarks")
    p.add_argument("--mode", choices=["scaling", "depth"], required=True)
    p.add_argument("--sizes", type=_int_list, default=[1024, 2048, 4096, 8192],
                   help="scaling mode: training sizes")
    p.add_argument("--leaf-size", type=int, default=512)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n", type=int, default=2048, help="depth mode: training size")
    p.add_argument("--test-n", type=int, default=256)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--factor", type=int, default=4, help="depth mode: branching factor")
    p.add_argument("--method", choices=["kdtree", "random"], default="kdtree")
    p.add_argument("--max-iters", type=int, default=15)
    p.add_argument("--sigma-f", type=float, default=1.0)
    p.add_argument("--lengthscales", type=_float_or_list, default=[0.3])
    p.add_argument("--sigma-eps", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.add_argument("--plot", default=None,
                   help="scaling mode: write a log-log time-vs-N plot (PNG)")
    return parser


def _add_data_flags(p) -> None:
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--target-col", type=int, default=-1,
                   help="target column index (negative counts from the end)")
    p.add_argument("--header", action="store_true",
                   help="the CSV has a header row to skip")


def _resolve_hp(dim: int, sigma_f: float, lengthscales: list, sigma_eps: float) -> Hyperparameters:
    if len(lengthscales) == 1:
        return Hyperparameters.isotropic(sigma_f, lengthscales[0], dim, sigma_eps)
    if len(lengthscales) != dim:
        raise ConfigError(
            f"got {len(lengthscales)} lengthscales for {dim} input dimensions"
        )
    return Hyperparameters(sigma_f, np.asarray(lengthscales), sigma_eps)


def _resolve_shape(experts, branching):
    """Turn --experts/--branching into a consistent (experts, branching)."""
    if branching is not None:
        prod = math.prod(branching)
        if experts is not None and prod != experts:
            raise ConfigError(f"branching product {prod} != experts {experts}")
        return prod, tuple(branching)
    if experts is None:
        experts = 4
    return experts, (experts,)


def _default_regions(n: int, experts: int) -> int:
    """Largest power of two <= min(experts, N // experts), at least 1."""
    cap = max(1, min(experts, n // max(1, experts)))
    return 1 << (cap.bit_length() - 1)


def _build_plan(data, method, experts, sharing, seed, regions):
    if method == "random":
        return assign_random(data.n, experts, sharing, seed)
    if regions is None:
        regions = _default_regions(data.n, experts)
    kd = build_kdtree_regions(data.X, regions)
    return assign_striped(kd, experts, seed, sharing)


def _rebuild_tree(mf: ModelFile, executor, override_hash: bool, model_path: str):
    """Load the referenced training data, verify its hash, refit the tree."""
    data_path = mf.data_path
    if not os.path.exists(data_path):
        relative = os.path.join(os.path.dirname(os.path.abspath(model_path)), data_path)
        if os.path.exists(relative):
            data_path = relative
        else:
            raise DataError(f"training data file {mf.data_path} not found")
    if not override_hash:
        digest = file_sha256(data_path)
        if digest != mf.data_sha256:
            raise DataError(
                f"training data hash mismatch for {data_path}: "
                f"file {digest}, model {mf.data_sha256} "
                "(pass --override-hash to proceed anyway)"
            )
    data = ingest_csv(data_path, mf.target_column, mf.has_header)
    if data.dim != mf.hp.input_dim:
        raise DataError(
            f"training data dimension {data.dim} does not match model "
            f"dimension {mf.hp.input_dim}"
        )
    tree = hgp_model.build_tree(data, mf.plan, mf.branching, mf.hp, executor)
    return tree, data


def _target_name(flag: str) -> str:
    return hgp_model.TARGET_NOISY if flag == "noisy" else hgp_model.TARGET_LATENT


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write_rows(path, X, y, header: bool) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join([f"x{d + 1}" for d in range(X.shape[1])] + ["y"]) + "\n")
        for i in range(X.shape[0]):
            cells = [_fmt(v) for v in X[i]] + [_fmt(y[i])]
            fh.write(",".join(cells) + "\n")


def cmd_synth(args) -> int:
    hp = _resolve_hp(args.dim, args.sigma_f, args.lengthscales, args.sigma_eps)
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    if args.test_n > 0 and not args.test_out:
        raise ConfigError("--test-n needs --test-out")
    total = args.n + max(0, args.test_n)
    data = synth.sample_dataset(
        total, hp, args.seed, method=args.method, num_features=args.features
    )
    _write_rows(args.out, data.X[: args.n], data.y[: args.n], args.header)
    print(f"wrote {args.n} rows ({data.dim} inputs + target) to {args.out}")
    if args.test_n > 0:
        _write_rows(args.test_out, data.X[args.n :], data.y[args.n :], args.header)
        print(f"wrote {args.test_n} held-out rows to {args.test_out}")
    return EXIT_OK


def cmd_train(args) -> int:
    data = ingest_csv(args.data, args.target_col, args.header)
    experts, branching = _resolve_shape(args.experts, args.branching)
    plan = _build_plan(data, args.method, experts, args.sharing, args.seed, args.regions)
    cfg = optimize.TrainConfig(max_iterations=args.max_iters)
    with Executor(workers=args.workers) as executor:
        tree, report = optimize.train(data, plan, branching, cfg, executor)
    mf = ModelFile(
        hp=tree.hp,
        plan=plan,
        branching=branching,
        data_path=args.data,
        data_sha256=file_sha256(args.data),
        target_column=args.target_col,
        has_header=args.header,
        train_summary=report.summary(),
    )
    save_model(mf, args.model)
    log_path = args.log if args.log is not None else args.model + ".log.csv"
    report.write_log(log_path)
    print(
        f"trained {experts} experts on {data.n} points: "
        f"objective {report.final_objective:.6f} after {report.iterations} "
        f"iterations ({report.termination_reason}); model -> {args.model}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    mf = load_model(args.model)
    with Executor(workers=args.workers) as executor:
        tree, data = _rebuild_tree(mf, executor, args.override_hash, args.model)
        if args.target_col is not None:
            queries = ingest_csv(args.data, args.target_col, args.header).X
        else:
            queries = modelio.read_inputs_csv(args.data, args.header, data.dim)
        if queries.size and queries.shape[1] != data.dim:
            raise DataError(
                f"query dimension {queries.shape[1]} does not match model "
                f"dimension {data.dim}"
            )
        preds = hgp_model.batch_predict(
            tree, data, queries, target=_target_name(args.target), executor=executor
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("mean,variance\n")
        for p in preds:
            fh.write(f"{_fmt(p.mean)},{_fmt(p.variance)}\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    mf = load_model(args.model)
    with Executor(workers=args.workers) as executor:
        tree, data = _rebuild_tree(mf, executor, args.override_hash, args.model)
        test = ingest_csv(args.data, args.target_col, args.header)
        if test.dim != data.dim:
            raise DataError(
                f"test data dimension {test.dim} does not match model dimension {data.dim}"
            )
        target = _target_name(args.target)
        preds = hgp_model.batch_predict(tree, data, test.X, target=target, executor=executor)
        reference = None
        if args.reference_model:
            ref_mf = load_model(args.reference_model)
            ref_tree, ref_data = _rebuild_tree(
                ref_mf, executor, args.override_hash, args.reference_model
            )
            if ref_data.dim != test.dim:
                raise DataError(
                    f"reference model dimension {ref_data.dim} does not match "
                    f"test dimension {test.dim}"
                )
            reference = hgp_model.batch_predict(
                ref_tree, ref_data, test.X, target=target, executor=executor
            )
    report = evaluate_predictions(preds, test.y, reference)
    csv_text = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _bench_scaling(args) -> int:
    rows = time_lml_gradient(
        args.sizes, args.leaf_size, workers=args.workers,
        repetitions=args.reps, dim=args.dim, seed=args.seed,
    )
    lines = ["n,experts,seconds,error"]
    lines += [f"{r.n},{r.experts},{_fmt(r.seconds)},{r.error}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        _plot_scaling(rows, args.plot)
    return EXIT_OK


def _plot_scaling(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in rows if not r.error]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog([r.n for r in ok], [r.seconds for r in ok], "o-")
    ax.set_xlabel("training points")
    ax.set_ylabel("seconds per objective evaluation")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _bench_depth(args) -> int:
    hp = _resolve_hp(args.dim, args.sigma_f, args.lengthscales, args.sigma_eps)
    total = args.n + args.test_n
    sampled = synth.sample_dataset(total, hp, args.seed)
    from .expert import Dataset

    data = Dataset(sampled.X[: args.n], sampled.y[: args.n])
    test_X = sampled.X[args.n :]
    cfg = optimize.TrainConfig(max_iterations=args.max_iters)
    lines = ["level,experts,sec_per_iter,likelihood_ratio"]
    with Executor(workers=args.workers) as executor:
        reference = None
        if args.n <= REFERENCE_LIMIT:
            ref_plan = assign_random(data.n, 1, 1, args.seed)
            ref_tree, _ = optimize.train(data, ref_plan, (1,), cfg, executor)
            reference = hgp_model.batch_predict(
                ref_tree, data, test_X, target=hgp_model.TARGET_NOISY, executor=executor
            )
        for level in range(1, args.levels + 1):
            experts = args.factor**level
            plan = _build_plan(data, args.method, experts, 1, args.seed, None)
            branching = (args.factor,) * level
            tree, report = optimize.train(data, plan, branching, cfg, executor)
            secs = report.seconds_per_iteration[1:] or [0.0]
            lr_text = ""
            if reference is not None:
                preds = hgp_model.batch_predict(
                    tree, data, test_X, target=hgp_model.TARGET_NOISY, executor=executor
                )
                from .metrics import aggregate_lr

                lr_text = _fmt(aggregate_lr(list(zip(reference, preds))))
            lines.append(f"{level},{experts},{_fmt(float(np.mean(secs)))},{lr_text}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.mode == "scaling":
        return _bench_scaling(args)
    return _bench_depth(args)


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TaskError as exc:
        if isinstance(exc.cause, NumericalError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        if isinstance(exc.cause, (DataError, DimensionError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise
    except HgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
