"""Command-line driver: ``s2sl {synth,gradcheck,train,bench}``.

Exit codes: 0 success, 1 gradient check failure, 2 data error,
3 configuration error, 4 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import nnet
from .datasets import DataError, Dataset, gen_gaussian_two_class, load_csv, save_csv, write_csv
from .evalharness import (
    HarnessConfig,
    accuracy,
    confusion,
    f1_minority,
    fit_item,
    inner_split,
    minority_class,
    predict_method,
    run_experiment,
)
from .numkit import RngStream

EXIT_OK, EXIT_GRADCHECK, EXIT_DATA, EXIT_CONFIG, EXIT_TRAINING = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-4


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _hidden(value: str):
    if value == "search":
        return value
    try:
        h = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count or 'search', got {value!r}") from None
    if h < 1:
        raise argparse.ArgumentTypeError("hidden units must be >= 1")
    return h


def _proportions(value: str) -> tuple[int, ...]:
    try:
        nums = tuple(int(tok) for tok in value.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad proportion list {value!r}") from None
    if not nums or any(n not in (1, 2, 3, 4) for n in nums):
        raise argparse.ArgumentTypeError("proportions are numerators over 4, each in 1..4")
    return nums


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, help="feature CSV; synthetic data is generated when omitted")
    p.add_argument("--header", action="store_true", help="skip the first CSV line")
    p.add_argument("--d", type=int, default=13, help="synthetic feature dimension")
    p.add_argument("--n1", type=int, default=60, help="synthetic class-0 count")
    p.add_argument("--n2", type=int, default=60, help="synthetic class-1 count")
    p.add_argument("--sep", type=float, default=1.0, help="synthetic mean separation per axis")


def _add_net_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=_hidden, default="search", help="hidden units, or 'search' (default)")
    p.add_argument("--grid", choices=("geometric", "exhaustive"), default="geometric", help="search candidates")
    p.add_argument("--refs", type=int, default=10, metavar="R", help="reference samples per test row")
    p.add_argument("--ref-policy", choices=("stratified", "all"), default="stratified")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3, help="adam learning rate")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="s2sl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="key = value file; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a two-class Gaussian dataset as CSV")
    p.add_argument("--d", type=int, default=13)
    p.add_argument("--n1", type=int, default=60)
    p.add_argument("--n2", type=int, default=60)
    p.add_argument("--sep", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true", help="write a header line")
    p.add_argument("--out", type=Path, help="output file or directory (default: stdout)")

    p = sub.add_parser("gradcheck", help="finite-difference check of backprop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help="perturb the w2 gradient (self-test)")

    p = sub.add_parser("train", help="train on one stratified split and report holdout metrics")
    _add_data_args(p)
    _add_net_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("s2sl", "mlp", "both"), default="s2sl")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--out", type=Path, help="directory for the model file(s)")

    p = sub.add_parser("bench", help="cross-validated s2sL vs MLP comparison")
    _add_data_args(p)
    _add_net_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--proportions", type=_proportions, default=(1, 2, 3, 4))
    p.add_argument("--method", choices=("s2sl", "mlp", "both"), default="both")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, help="directory for report.csv and report.txt")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return parser.parse_args(argv)
    values = read_config_file(known.config)
    known_keys = {
        a.dest
        for action in parser._subparsers._group_actions
        for sub in action.choices.values()
        for a in sub._actions
    }
    unknown = sorted(set(values) - known_keys)
    if unknown:
        raise ConfigError(f"{known.config}: unknown setting(s) {', '.join(unknown)}")
    for action in parser._subparsers._group_actions:
        for subparser in action.choices.values():
            dests = {a.dest: a for a in subparser._actions}
            overrides = {}
            for key, raw in values.items():
                if key not in dests:
                    continue
                a = dests[key]
                if isinstance(a, argparse._StoreTrueAction):
                    overrides[key] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    overrides[key] = a.type(raw) if a.type else raw
            subparser.set_defaults(**overrides)
    return parser.parse_args(argv)


def _dataset(args) -> Dataset:
    if args.data is not None:
        return load_csv(args.data, header=args.header)
    return gen_gaussian_two_class(args.d, args.n1, args.n2, args.sep, rng=RngStream(args.seed).child(99))


def _harness(args, methods) -> HarnessConfig:
    return HarnessConfig(
        folds=getattr(args, "folds", 5),
        proportions=getattr(args, "proportions", (1, 2, 3, 4)),
        methods=methods,
        hidden=args.hidden,
        grid_mode=args.grid,
        refs=args.refs,
        ref_policy="all_train" if args.ref_policy == "all" else "stratified_random",
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        workers=getattr(args, "workers", 1),
    )


def _methods(choice: str) -> tuple[str, ...]:
    return ("s2sl", "mlp") if choice == "both" else (choice,)


def cmd_synth(args) -> int:
    try:
        ds = gen_gaussian_two_class(args.d, args.n1, args.n2, args.sep, rng=RngStream(args.seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out is None:
        write_csv(ds, sys.stdout, header=args.header)
    else:
        path = args.out / f"{ds.name}.csv" if args.out.is_dir() else args.out
        try:
            save_csv(ds, path, header=args.header)
        except OSError as exc:
            print(f"s2sl synth: cannot write {path}: {exc}", file=sys.stderr)
            return EXIT_DATA
        counts = ds.class_counts()
        print(f"wrote {path}: {len(ds)} rows, d={ds.dim}, per class {dict(zip(ds.class_names, counts))}")
    return EXIT_OK


def gradcheck_fixtures(seed: int):
    """Small random nets and batches for both output/loss modes."""
    rng = RngStream(seed)
    for i, (activation, out_dim) in enumerate((("sigmoid", 4), ("softmax", 2))):
        r = rng.child(i)
        cfg = nnet.NetConfig(input_dim=3, hidden_units=4, output_dim=out_dim, output_activation=activation)
        net = nnet.init_network(cfg, r.child(0))
        net.b1[:] = r.uniform(-0.1, 0.1, net.b1.shape)
        net.b2[:] = r.uniform(-0.1, 0.1, net.b2.shape)
        x = r.gaussian(0.0, 1.0, (5, 3))
        if activation == "sigmoid":
            t = (r.uniform(0, 1, (5, out_dim)) > 0.5).astype(float)
        else:
            t = np.eye(out_dim)[r.generator.integers(0, out_dim, 5)]
        yield f"{activation}+{cfg.loss}", net, (x, t)


def corrupt_w2(net, x, t):
    grads = nnet.gradient(net, x, t)
    grads["w2"] = grads["w2"] * 1.5 + 0.01
    return grads


def cmd_gradcheck(args) -> int:
    status = EXIT_OK
    for label, net, batch in gradcheck_fixtures(args.seed):
        err, (name, idx) = nnet.gradient_check(net, batch, grad_fn=corrupt_w2 if args.corrupt else None)
        print(f"{label}: max relative error {err:.3e}")
        if err >= GRADCHECK_TOL:
            print(f"{label}: FAILED at {name}{list(idx)} (tolerance {GRADCHECK_TOL:g})", file=sys.stderr)
            status = EXIT_GRADCHECK
    return status


def cmd_train(args) -> int:
    if not 0 < args.holdout < 1:
        raise ConfigError(f"--holdout must lie strictly between 0 and 1, got {args.holdout}")
    ds = _dataset(args)
    config = _harness(args, _methods(args.method))
    rng = RngStream(args.seed)
    try:
        fit_idx, test_idx = inner_split(ds.labels, 1.0 - args.holdout, rng.child(0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    train, test = ds.subset(fit_idx), ds.subset(test_idx)
    positive = minority_class(ds.labels, ds.num_classes)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    for i, method in enumerate(config.methods):
        fitted = fit_item(train, method, config, rng.child(1 + i))
        test_n = fitted.normalizer.apply(test)
        pred = predict_method(fitted.network, fitted.references, test_n.features, ds.num_classes)
        cm = confusion(pred, test.labels, positive)
        print(
            f"method={method} hidden={fitted.hidden_units} train={len(train)} holdout={len(test)} "
            f"accuracy={accuracy(pred, test.labels):.2f} "
            f"f1={f1_minority(pred, test.labels, positive):.4f} "
            + " ".join(f"{k}={v}" for k, v in cm.items())
        )
        if args.out is not None:
            nnet.save_network(fitted.network, args.out / f"model-{method}.txt")
            if fitted.references is not None:
                refs = fitted.references
                save_csv(Dataset(refs.features, refs.labels, ds.class_names), args.out / "references.csv")
    return EXIT_OK


def cmd_bench(args) -> int:
    ds = _dataset(args)
    config = _harness(args, _methods(args.method))
    report = run_experiment(ds, config)
    table = report.format_table()
    print(table, end="")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (args.out / "report.txt").write_text(table, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "gradcheck": cmd_gradcheck, "train": cmd_train, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"s2sl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (DataError, FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"s2sl {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except nnet.TrainingError as exc:
        print(f"s2sl {args.command}: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ConfigError, ValueError) as exc:
        print(f"s2sl {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
