"""Command line pipeline: snapshots -> pod -> train-rb -> train-closure -> eval / curves.

Every stage reads its inputs from and writes its outputs to the run's
output directory, so stages can be rerun independently. Failures print a
single line of the form::

    error: stage=<stage> kind=<kind> [file=<path> producer=<stage>] message="..."

and exit with a nonzero status.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .benchmarks import generate_snapshots, get_benchmark
from .fem import P1Space
from .mesh import build_unit_square_mesh
from .minn import load_network, save_network
from .pod import ReducedBasis, compute_pod
from .rom import RomModel, evaluate_errors, train_closure, train_pod_minn
from .training import DataSplit, TrainConfig, make_split

log = logging.getLogger("podminn")

EXIT_FAILURE, EXIT_CONFIG, EXIT_MISSING = 1, 2, 3

# file name -> stage that writes it
PRODUCERS = {
    "S.mrom": "snapshots",
    "micro_inputs.mrom": "snapshots",
    "params.csv": "snapshots",
    "meta.json": "snapshots",
    "basis.mrom": "pod",
    "singular_values.csv": "pod",
    "split.csv": "pod",
}

ERROR_HEADER = ("benchmark", "n_rb", "p", "E_POD", "E_PODMINN", "E_PODMINNplus", "n_test")
CURVE_HEADER = ("n_rb", "p", "sigma", "E_POD", "E_PODMINN", "E_PODMINNplus", "n_test")


class CliError(Exception):
    def __init__(self, kind, message, code=EXIT_FAILURE, **fields):
        super().__init__(message)
        self.kind, self.code, self.fields = kind, code, fields


class MissingInput(CliError):
    def __init__(self, path, producer):
        super().__init__("missing_input", f"run '{producer}' first", EXIT_MISSING,
                         file=str(path), producer=producer)


def _require(path, producer=None):
    path = Path(path)
    if not path.exists():
        raise MissingInput(path, producer or PRODUCERS[path.name])
    return path


def _model_path(cfg, kind, n_rb):
    return cfg.out / "models" / f"{kind}_{n_rb}.minn"


def _train_config(cfg, closure=False):
    epochs, per_epoch = ((cfg.closure_max_epochs, cfg.closure_iterations_per_epoch) if closure
                         else (cfg.max_epochs, cfg.iterations_per_epoch))
    return TrainConfig(optimizer=cfg.optimizer, learning_rate=cfg.learning_rate,
                       max_epochs=epochs, iterations_per_epoch=per_epoch,
                       lbfgs_history=cfg.lbfgs_history, early_stop_window=cfg.early_stop_window,
                       inf_norm_term=cfg.inf_norm_term, rng_seed=cfg.seed)


# --- loading stage outputs -------------------------------------------------

class _Snapshots:
    def __init__(self, benchmark_id, columns, micro_inputs):
        self.benchmark_id, self.columns, self.micro_inputs = benchmark_id, columns, micro_inputs


def load_snapshots(cfg):
    out = cfg.out
    meta = json.loads(_require(out / "meta.json").read_text())
    S = rio.read_matrix(_require(out / "S.mrom"))
    X = rio.read_matrix(_require(out / "micro_inputs.mrom"))
    return _Snapshots(meta["benchmark"], S, X)


def load_basis(cfg):
    V = rio.read_matrix(_require(cfg.out / "basis.mrom"))
    rows = rio.read_csv(_require(cfg.out / "singular_values.csv"))
    sigma = np.array([float(r["sigma"]) for r in rows])
    return ReducedBasis(V, sigma[:V.shape[1]], sigma)


def load_split(cfg):
    rows = rio.read_csv(_require(cfg.out / "split.csv"))
    parts = {"train": [], "valid": [], "test": []}
    for r in rows:
        parts[r["set"]].append(int(r["index"]))
    return DataSplit(*(np.array(parts[k], dtype=np.int64) for k in ("train", "valid", "test")))


def load_model(cfg, n_rb, closure=True):
    basis = load_basis(cfg)
    if n_rb > basis.max_modes:
        raise CliError("bad_config", f"n_rb={n_rb} exceeds the {basis.max_modes} stored modes",
                       EXIT_CONFIG)
    net = load_network(_require(_model_path(cfg, "rb", n_rb), "train-rb"))
    closure_net = None
    if closure:
        closure_net = load_network(_require(_model_path(cfg, "closure", n_rb), "train-closure"))
    truncated = ReducedBasis(basis.truncate(n_rb), basis.singular_values[:n_rb],
                             basis.all_singular_values)
    closure_scale = closure_net.metadata["input_scale"] if closure_net is not None else None
    return RomModel(truncated, net, closure_net, net.metadata["input_scale"], cfg.benchmark,
                    closure_scale=closure_scale)


# --- stages ----------------------------------------------------------------

def cmd_snapshots(cfg):
    """Solve the benchmark for sampled parameters and store the snapshots."""
    bench = get_benchmark(cfg.benchmark)
    space = P1Space.from_mesh(build_unit_square_mesh(cfg.fine_cells))
    snaps = generate_snapshots(bench.id, space, cfg.seed, cfg.n_snapshots)
    out = cfg.out
    rio.write_matrix(out / "S.mrom", snaps.columns)
    rio.write_matrix(out / "micro_inputs.mrom", snaps.micro_inputs)
    rio.write_csv(out / "params.csv", ("index",) + tuple(bench.param_names()),
                  [(i, *map(float, row)) for i, row in enumerate(snaps.param_records)])
    meta = {"benchmark": bench.id, "benchmark_name": bench.name, "seed": cfg.seed,
            "n_snapshots": cfg.n_snapshots, "mesh": space.mesh.describe()}
    rio.atomic_write_bytes(out / "meta.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    return [out / n for n in ("S.mrom", "micro_inputs.mrom", "params.csv", "meta.json")]


def cmd_pod(cfg):
    """Compute the POD basis of the training snapshots and the data split."""
    S = rio.read_matrix(_require(cfg.out / "S.mrom"))
    split = make_split(S.shape[1], cfg.split, cfg.seed)
    train = S[:, split.train_indices]
    wanted = max([cfg.n_rb] + cfg.sweep())
    basis = compute_pod(train, min(wanted, *train.shape))
    out = cfg.out
    rio.write_matrix(out / "basis.mrom", basis.basis_columns)
    s = basis.all_singular_values
    rio.write_csv(out / "singular_values.csv", ("index", "sigma", "sigma_relative"),
                  [(i + 1, float(v), float(v / s[0])) for i, v in enumerate(s)])
    rows = [(int(i), name) for name, idx in zip(("train", "valid", "test"),
                                               (split.train_indices, split.valid_indices,
                                                split.test_indices)) for i in idx]
    rio.write_csv(out / "split.csv", ("index", "set"), rows)
    return [out / "basis.mrom", out / "singular_values.csv", out / "split.csv"]


def _write_history(path, history):
    rio.write_csv(path.with_suffix(".history.csv"), history.HEADER,
                  [tuple(float(v) if isinstance(v, float) else v for v in row)
                   for row in history.rows()])
    summary = {"stop_reason": history.stop_reason, "best_epoch": history.best_epoch,
               "line_search_failures": history.line_search_failures,
               "epochs_run": history.epochs[-1]}
    rio.atomic_write_bytes(path.with_suffix(".summary.json"),
                           (json.dumps(summary, sort_keys=True) + "\n").encode())


def _train_rb(cfg, n_rb, snaps, split, basis):
    model = train_pod_minn(snaps, split, n_rb, _train_config(cfg), basis=basis,
                           coarse_cells=cfg.coarse_cells, support_radius=cfg.support_radius)
    net = model.coeff_net
    net.metadata = {"role": "coefficients", "n_rb": n_rb, "input_scale": model.input_scale,
                    "seed": cfg.seed}
    path = _model_path(cfg, "rb", n_rb)
    save_network(net, path)
    _write_history(path, model.metadata["coeff_history"])
    return path


def _train_closure(cfg, n_rb, snaps, split):
    model = load_model(cfg, n_rb, closure=False)
    model = train_closure(model, snaps, split, _train_config(cfg, closure=True),
                          closure_cells=cfg.closure_cells, support_radius=cfg.support_radius,
                          gain=cfg.closure_gain)
    net = model.closure_net
    net.metadata = {"role": "closure", "n_rb": n_rb, "input_scale": model.closure_scale,
                    "seed": model.metadata["closure_seed"]}
    path = _model_path(cfg, "closure", n_rb)
    save_network(net, path)
    _write_history(path, model.metadata["closure_history"])
    return path


def cmd_train_rb(cfg):
    """Train the coefficient network at n_rb."""
    basis = load_basis(cfg)
    return [_train_rb(cfg, cfg.n_rb, load_snapshots(cfg), load_split(cfg), basis)]


def cmd_train_closure(cfg):
    """Train the closure network on top of the n_rb coefficient network."""
    return [_train_closure(cfg, cfg.n_rb, load_snapshots(cfg), load_split(cfg))]


def _error_rows(model, snaps, indices):
    return [evaluate_errors(model, snaps, indices, p=p) for p in (2, np.inf)]


def cmd_eval(cfg):
    """Write test-set errors at n_rb for p = 2 and p = inf."""
    snaps, split = load_snapshots(cfg), load_split(cfg)
    model = load_model(cfg, cfg.n_rb)
    rows = [(cfg.benchmark, r["n_rb"], r["p"], r["E_POD"], r["E_PODMINN"], r["E_PODMINNplus"],
             r["n_test"]) for r in _error_rows(model, snaps, split.test_indices)]
    path = cfg.out / "errors.csv"
    rio.write_csv(path, ERROR_HEADER, rows)
    return [path]


def cmd_curves(cfg):
    """Sweep n_rb and write error curves; trains only missing models.

    Closures are trained only with ``curves_closure``; closure models that
    already exist are always evaluated.
    """
    snaps, split, basis = load_snapshots(cfg), load_split(cfg), load_basis(cfg)
    rows = []
    for n_rb in cfg.sweep():
        if n_rb > basis.max_modes:
            raise CliError("bad_config", f"sweep value n_rb={n_rb} exceeds the "
                           f"{basis.max_modes} stored modes", EXIT_CONFIG)
        if not _model_path(cfg, "rb", n_rb).exists():
            _train_rb(cfg, n_rb, snaps, split, basis)
        closure_file = _model_path(cfg, "closure", n_rb)
        if cfg.curves_closure and not closure_file.exists():
            _train_closure(cfg, n_rb, snaps, split)
        model = load_model(cfg, n_rb, closure=closure_file.exists())
        sigma = float(basis.all_singular_values[n_rb - 1])
        for r in _error_rows(model, snaps, split.test_indices):
            rows.append((n_rb, r["p"], sigma, r["E_POD"], r["E_PODMINN"], r["E_PODMINNplus"],
                         r["n_test"]))
        log.info("curves: n_rb=%d done", n_rb)
    path = cfg.out / "curves.csv"
    rio.write_csv(path, CURVE_HEADER, rows)
    return [path]


COMMANDS = {
    "snapshots": cmd_snapshots,
    "pod": cmd_pod,
    "train-rb": cmd_train_rb,
    "train-closure": cmd_train_closure,
    "eval": cmd_eval,
    "curves": cmd_curves,
}


# --- entry point -----------------------------------------------------------

def _quote(text):
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ") + '"'


def format_error(stage, err):
    fields = " ".join(f"{k}={v}" for k, v in err.fields.items())
    return f"error: stage={stage} kind={err.kind} {fields + ' ' if fields else ''}message={_quote(err)}"


def build_parser():
    parser = argparse.ArgumentParser(prog="podminn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", required=True, type=Path, help="key = value run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        if not args.config.exists():
            raise CliError("missing_config", "config file not found", EXIT_CONFIG,
                           file=str(args.config))
        try:
            cfg = rio.RunConfig.load(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            cfg.validate()
        except (ValueError, KeyError) as exc:
            raise CliError("bad_config", exc, EXIT_CONFIG, file=str(args.config)) from None
        for path in COMMANDS[stage](cfg):
            print(path)
    except CliError as err:
        print(format_error(stage, err), file=sys.stderr)
        return err.code
    except rio.FormatError as exc:
        print(format_error(stage, CliError("bad_format", exc)), file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(format_error(stage, CliError(type(exc).__name__, exc)), file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
