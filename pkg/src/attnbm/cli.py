"""``attnbm`` command-line interface.

Every subcommand reads an optional ``key=value`` config file
(``--config``) and lets ``--key value`` flags override it. Results go to
the files named by the config or to standard output; diagnostics and
timings go to standard error.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 failed
verification.
"""

import argparse
import contextlib
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Dataset, apply_zca, export_filter_grid, extract_patches, fit_zca, load_idx, read_pgm
from .efh import GridDomain, LagrangianPair, cd_k, efh_to_bytes, to_efh
from .energy import AttnBMModel, load_model, save_model
from .exceptions import AttnBMError
from .gmm import sample as gmm_sample
from .gmm import to_gmm, write_mixture
from .hopfield import retrieve
from .reconstruction import _reconstruct_pair, corrupt, mse, mse_vs_samplesize_sweep, write_sweep_csv
from .training import TrainConfig, init_memory, load_config, sgd_mle, train_dsm
from .verify import format_table, run_suite
from .vmf import VmfParams, vmf_sample, write_samples_csv

__all__ = ["main", "run", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_VERIFY"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key -> (converter, default, help)
_DATA_KEYS = {
    "data": (str, "", "IDX file, CSV matrix, or directory of binary PGM images"),
    "image_shape": (str, "", "HxW of each sample when the data is a flat matrix"),
    "limit": (int, 0, "use only the first LIMIT images or rows (0 = all)"),
    "patch_size": (int, 0, "crop square patches of this size (0 = whole images)"),
    "stride": (int, 1, "patch position stride"),
    "n_patches": (int, 1000, "number of random patches"),
    "whiten": (_parse_bool, True, "apply ZCA whitening"),
    "zca_epsilon": (float, 1e-5, "ZCA eigenvalue regularizer"),
    "seed": (int, 0, "random seed"),
}
_OPT_KEYS = {
    "learning_rate": (float, 0.01, "SGD step size"),
    "batch_size": (int, 5, "minibatch size"),
    "epochs": (int, 10, "passes over the data"),
    "momentum": (float, 0.0, "heavy-ball momentum"),
    "weight_decay": (float, 0.0, "L2 penalty on the memories"),
    "n_hidden": (int, 100, "number of memories"),
    "init_std": (float, 0.01, "std of the normal initial memories"),
}
_TRAIN_OUT_KEYS = {
    "model": (str, "", "output model file"),
    "report": (str, "", "per-epoch CSV (standard output if empty)"),
    "report_timing": (_parse_bool, False, "add a wall-clock seconds column to the report"),
}
_MODEL_IN = {"model": (str, "", "input ABM1 model file")}

SCHEMAS = {
    "train-mle": {**_DATA_KEYS, **_OPT_KEYS, **_TRAIN_OUT_KEYS,
                  "beta": (int, 1, "positive integer inverse temperature")},
    "train-dsm": {**_DATA_KEYS, **_OPT_KEYS, **_TRAIN_OUT_KEYS,
                  "noise_std": (float, 1.0, "Gaussian corruption std")},
    "train-cd": {**_DATA_KEYS, **_OPT_KEYS, **_TRAIN_OUT_KEYS,
                 "hidden": (str, "square", "hidden Lagrangian preset"),
                 "visible": (str, "square", "visible Lagrangian preset"),
                 "beta": (float, 1.0, "inverse temperature"),
                 "k": (int, 1, "Gibbs sweeps per CD estimate"),
                 "grid_size": (int, 64, "grid points per unit"),
                 "grid_radius": (float, 8.0, "grid half-width")},
    "reconstruct": {**_DATA_KEYS, **_MODEL_IN,
                    "drop_prob": (float, 0.8, "pixel dropout probability"),
                    "n_eval": (int, 50, "number of samples to reconstruct"),
                    "hopfield_iters": (int, 1, "Hopfield updates per reconstruction"),
                    "out": (str, "", "output CSV (standard output if empty)")},
    "retrieve": {**_DATA_KEYS, **_MODEL_IN,
                 "drop_prob": (float, 0.2, "pixel dropout probability"),
                 "n_eval": (int, 50, "number of queries"),
                 "max_iters": (int, 100, "maximum update steps"),
                 "tol": (float, 1e-8, "convergence tolerance on the step norm"),
                 "out": (str, "", "output CSV (standard output if empty)")},
    "filters": {**_MODEL_IN,
                "image_shape": (str, "", "HxW tile shape (square by default)"),
                "out": (str, "", "output PGM file")},
    "sweep-mse": {**_DATA_KEYS, **_OPT_KEYS,
                  "sizes": (str, "10,20,50,100,200", "comma-separated training-set sizes"),
                  "seeds": (str, "0", "comma-separated training seeds"),
                  "drop_prob": (float, 0.8, "pixel dropout probability"),
                  "n_eval": (int, 50, "reconstructed samples per size and seed"),
                  "hopfield_iters": (int, 1, "Hopfield updates per reconstruction"),
                  "out": (str, "", "output CSV (standard output if empty)")},
    "gmm-sample": {**_MODEL_IN,
                   "n": (int, 1000, "number of samples"),
                   "seed": (int, 0, "random seed"),
                   "mixture": (str, "", "also export the mixture as text to this path"),
                   "out": (str, "", "output CSV (standard output if empty)")},
    "vmf-sample": {"model": (str, "", "ABM1 model whose rows sum to eta"),
                   "eta": (str, "", "comma-separated eta (used when no model is given)"),
                   "beta": (float, 1.0, "inverse temperature"),
                   "n": (int, 1000, "number of samples"),
                   "seed": (int, 0, "random seed"),
                   "out": (str, "", "output CSV (standard output if empty)")},
    "verify": {"seed": (int, 0, "random seed of the check instances"),
               "only": (str, "", "comma-separated subset of check names")},
}

_ALL_KEYS = set().union(*SCHEMAS.values())


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser():
    parser = _Parser(
        prog="attnbm", description="Attentional Boltzmann machines: training, sampling and checks.",
        epilog="ATTNBM_THREADS caps the number of BLAS worker threads (0 = auto).")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=f"{name} (see --help)")
        p.add_argument("--config", help="key=value config file; flags override its values")
        for key, (_, default, help_text) in schema.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE",
                           help=f"{help_text} (default: {default!r})")
    return parser


def _resolve(command, args):
    """Defaults, then config file values, then flags; converted by the schema."""
    schema = SCHEMAS[command]
    raw = {}
    if args.config:
        try:
            file_values = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except ValueError as exc:
            raise UsageError(f"{args.config}: {exc}") from None
        unknown = set(file_values) - _ALL_KEYS
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {sorted(unknown)}")
        raw.update({k: v for k, v in file_values.items() if k in schema})
    raw.update({k: getattr(args, k) for k in schema if getattr(args, k) is not None})
    opts = {}
    for key, (conv, default, _) in schema.items():
        if key in raw:
            try:
                opts[key] = conv(raw[key])
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
        else:
            opts[key] = default
    return argparse.Namespace(**opts)


def _thread_limit():
    raw = os.environ.get("ATTNBM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"ATTNBM_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"ATTNBM_THREADS must be a non-negative integer, got {n}")
    return n


def _log(msg):
    print(msg, file=sys.stderr)


@contextlib.contextmanager
def _output(path):
    """Open ``path`` for writing; empty or ``-`` means standard output."""
    if path and path != "-":
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


# -- data --------------------------------------------------------------------

def _parse_shape(text):
    try:
        h, w = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"image_shape must look like HxW, got {text!r}") from None
    return h, w


def _square_shape(n):
    side = math.isqrt(n)
    if side * side != n:
        raise UsageError(f"cannot infer a square image shape for N={n}; set image_shape")
    return side, side


def _read_raw(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.pgm"))
        if not files:
            raise FileNotFoundError(f"no .pgm images in {path}")
        images = [read_pgm(f) for f in files]
        if len({im.shape for im in images}) != 1:
            raise ValueError("all PGM images in the directory must share one shape")
        return np.stack(images).astype(np.float64) / 255.0
    if p.suffix.lower() in (".csv", ".txt"):
        return np.atleast_2d(np.loadtxt(p, delimiter=",", ndmin=2))
    return load_idx(p)


def load_dataset(opts):
    """Build the preprocessed :class:`Dataset` described by the data keys.

    The pipeline (truncation, patch cropping, ZCA) depends only on the
    config and its seed, so train and evaluation commands sharing a config
    see identical samples.
    """
    if not opts.data:
        raise UsageError("no data given (set data=PATH)")
    arr = _read_raw(opts.data)
    if opts.limit:
        arr = arr[:opts.limit]
    if arr.ndim == 3:
        if opts.patch_size and opts.patch_size < max(arr.shape[1:]):
            ds = extract_patches(arr, opts.patch_size, opts.stride,
                                 np.random.default_rng([opts.seed, 2]), opts.n_patches)
        else:
            ds = Dataset(arr.reshape(arr.shape[0], -1), arr.shape[1:])
    elif arr.ndim == 2:
        shape = _parse_shape(opts.image_shape) if opts.image_shape else _square_shape(arr.shape[1])
        ds = Dataset(arr, shape)
    else:
        raise ValueError(f"data must be a matrix or an image stack, got {arr.ndim} dimensions")
    if opts.whiten:
        t = fit_zca(ds.samples, opts.zca_epsilon)
        ds = Dataset(apply_zca(t, ds.samples), ds.image_shape, t)
    return ds


def _train_config(opts, **extra):
    return TrainConfig(learning_rate=opts.learning_rate, batch_size=opts.batch_size,
                       epochs=opts.epochs, momentum=opts.momentum,
                       weight_decay=opts.weight_decay, seed=opts.seed, **extra)


def _load_model(opts):
    if not opts.model:
        raise UsageError("no model given (set model=PATH)")
    return load_model(opts.model)


# -- subcommands -----------------------------------------------------------

def _finish_training(opts, report, write_model):
    if opts.model:
        write_model(report.xi)
    with _output(opts.report) as fh:
        report.to_csv(fh, include_time=opts.report_timing)
    _log(f"trained {len(report.objectives)} epochs in {sum(report.seconds):.3f} s; "
         f"final objective {report.objectives[-1] if report.objectives else float('nan')!r}")


def cmd_train_mle(opts):
    ds = load_dataset(opts)
    init = init_memory(opts.n_hidden, ds.samples.shape[1], np.random.default_rng([opts.seed, 1]), opts.init_std)
    report = sgd_mle(ds.samples, init, _train_config(opts), beta=opts.beta)
    _finish_training(opts, report, lambda xi: save_model(opts.model, AttnBMModel(xi, opts.beta)))
    return EXIT_OK


def cmd_train_dsm(opts):
    ds = load_dataset(opts)
    init = init_memory(opts.n_hidden, ds.samples.shape[1], np.random.default_rng([opts.seed, 1]), opts.init_std)
    report = train_dsm(ds.samples, init, _train_config(opts, objective="dsm", noise_std=opts.noise_std))
    _finish_training(opts, report, lambda xi: save_model(opts.model, AttnBMModel(xi, 1)))
    return EXIT_OK


def cmd_train_cd(opts):
    ds = load_dataset(opts)
    lag = LagrangianPair.from_names(opts.hidden, opts.visible)
    init = init_memory(opts.n_hidden, ds.samples.shape[1], np.random.default_rng([opts.seed, 1]), opts.init_std)
    grid = GridDomain(-opts.grid_radius, opts.grid_radius, opts.grid_size)
    report = cd_k(ds.samples, init, lag, opts.beta, opts.k, _train_config(opts), grids=(grid, grid))

    def write(xi):
        Path(opts.model).write_bytes(efh_to_bytes(to_efh(xi, lag, opts.beta)))

    _finish_training(opts, report, write)
    return EXIT_OK


def cmd_reconstruct(opts):
    model = _load_model(opts)
    ds = load_dataset(opts)
    rng = np.random.default_rng([opts.seed, 3])
    picks = np.sort(rng.choice(len(ds), size=min(opts.n_eval, len(ds)), replace=False))
    totals = np.zeros(3)
    with _output(opts.out) as fh:
        fh.write("index,mse_corrupted,mse_conditional,mse_hopfield\n")
        for i in picks:
            v = ds.samples[i]
            cond, hop, corrupted = _reconstruct_pair(model, v, opts.drop_prob, rng, opts.hopfield_iters)
            errs = (mse(v, corrupted), mse(v, cond), mse(v, hop))
            totals += errs
            fh.write(f"{i}," + ",".join(repr(e) for e in errs) + "\n")
    mean = totals / len(picks)
    _log(f"mean MSE corrupted {mean[0]:.6g}, conditional {mean[1]:.6g}, hopfield {mean[2]:.6g}")
    return EXIT_OK


def cmd_retrieve(opts):
    model = _load_model(opts)
    ds = load_dataset(opts)
    rng = np.random.default_rng([opts.seed, 4])
    picks = np.sort(rng.choice(len(ds), size=min(opts.n_eval, len(ds)), replace=False))
    with _output(opts.out) as fh:
        fh.write("index,iterations,converged,energy_initial,energy_final,mse_corrupted,mse_retrieved\n")
        for i in picks:
            v = ds.samples[i]
            corrupted, _ = corrupt(v, opts.drop_prob, rng)
            res = retrieve(corrupted, model.xi, opts.max_iters, opts.tol)
            fields = (float(res.energy_trace[0]), float(res.energy_trace[-1]),
                      mse(v, corrupted), mse(v, res.final_state))
            fh.write(f"{i},{res.iterations},{int(res.converged)}," + ",".join(map(repr, fields)) + "\n")
    return EXIT_OK


def cmd_filters(opts):
    model = _load_model(opts)
    if not opts.out:
        raise UsageError("filters needs an output path (set out=PATH)")
    shape = _parse_shape(opts.image_shape) if opts.image_shape else _square_shape(model.n_features)
    grid = export_filter_grid(model.xi, shape, opts.out)
    _log(f"wrote {grid.shape[1]}x{grid.shape[0]} filter grid to {opts.out}")
    return EXIT_OK


def _int_list(text, key):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{key} must be a comma-separated list of integers, got {text!r}") from None


def cmd_sweep_mse(opts):
    ds = load_dataset(opts)
    rows = mse_vs_samplesize_sweep(ds.samples, _int_list(opts.sizes, "sizes"), _train_config(opts),
                                   n_hidden=opts.n_hidden, drop_prob=opts.drop_prob,
                                   n_eval=opts.n_eval, init_std=opts.init_std,
                                   seeds=_int_list(opts.seeds, "seeds"),
                                   hopfield_iters=opts.hopfield_iters)
    with _output(opts.out) as fh:
        write_sweep_csv(fh, rows)
    return EXIT_OK


def cmd_gmm_sample(opts):
    g = to_gmm(_load_model(opts))
    samples, labels = gmm_sample(g, np.random.default_rng(opts.seed), opts.n)
    if opts.mixture:
        write_mixture(opts.mixture, g)
    with _output(opts.out) as fh:
        fh.write(",".join([f"x{i}" for i in range(g.n_features)] + ["component"]) + "\n")
        for row, lab in zip(samples, labels):
            fh.write(",".join(repr(float(x)) for x in row) + f",{lab}\n")
    return EXIT_OK


def cmd_vmf_sample(opts):
    if opts.model:
        params = VmfParams.from_memory(load_model(opts.model).xi, opts.beta)
    elif opts.eta:
        try:
            eta = [float(x) for x in opts.eta.split(",")]
        except ValueError:
            raise UsageError(f"eta must be comma-separated numbers, got {opts.eta!r}") from None
        params = VmfParams(eta, opts.beta)
    else:
        raise UsageError("vmf-sample needs model=PATH or eta=...")
    samples = vmf_sample(params, np.random.default_rng(opts.seed), opts.n)
    with _output(opts.out) as fh:
        write_samples_csv(fh, samples)
    _log(f"kappa = {params.kappa:.6g}")
    return EXIT_OK


def cmd_verify(opts):
    names = [s.strip() for s in opts.only.split(",") if s.strip()] or None
    results = run_suite(opts.seed, names)
    if not results:
        raise UsageError(f"no checks match {opts.only!r}")
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {
    "train-mle": cmd_train_mle,
    "train-dsm": cmd_train_dsm,
    "train-cd": cmd_train_cd,
    "reconstruct": cmd_reconstruct,
    "retrieve": cmd_retrieve,
    "filters": cmd_filters,
    "sweep-mse": cmd_sweep_mse,
    "gmm-sample": cmd_gmm_sample,
    "vmf-sample": cmd_vmf_sample,
    "verify": cmd_verify,
}


def run(argv=None):
    """Execute one subcommand and return its exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("attnbm: a subcommand is required")
        opts = _resolve(args.command, args)
        threads = _thread_limit()
    except UsageError as exc:
        _log(str(exc))
        _log(parser.format_usage().rstrip())
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    t0 = time.perf_counter()
    try:
        with limits:
            code = COMMANDS[args.command](opts)
    except UsageError as exc:
        _log(f"attnbm {args.command}: {exc}")
        return EXIT_USAGE
    except (AttnBMError, OSError, ValueError) as exc:
        _log(f"attnbm {args.command}: {type(exc).__name__}: {exc}")
        return EXIT_DATA
    _log(f"{args.command} finished in {time.perf_counter() - t0:.3f} s")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
