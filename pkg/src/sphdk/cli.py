"""Command-line interface.

Subcommands: ``simulate``, ``basis``, ``fit``, ``predict``, ``evaluate`` and
``reproduce``. Every configuration key is accepted as a flag
(``learning_rate`` -> ``--learning-rate``) and in a YAML file given with
``--config``; flags win over the file, the file over defaults.

Exit codes: 0 success, 1 usage or argument error, 2 data error,
3 numerical failure. ``SPHDK_NUM_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, fileio, harness
from .basis import BasisFamily, build_wendland_multi, default_wendland_scales, eval_features, fibonacci_mrts
from .config import FIELD_TYPES, KEYS, RunConfig, parse_config
from .errors import DataError, InvalidArgumentError, SphdkError

THREADS_ENV = "SPHDK_NUM_THREADS"
log = logging.getLogger("sphdk")

COMMAND_HELP = {
    "simulate": "draw one replication of a scenario and write lon,lat,y_true,z_obs,is_outlier,split_tag",
    "basis": "evaluate a basis at the points of --input and write the feature matrix",
    "fit": "fit one model (--model) to --input and save a checkpoint to --model-path",
    "predict": "predict at the points of --input, or on a --grid N_LON N_LAT, with a saved model",
    "evaluate": "RMSE and MAE of a saved model against the values in --input",
    "reproduce": "run the replicated simulation study and write the metrics report",
}


class UsageError(InvalidArgumentError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML file of configuration keys")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    for key in KEYS:
        kind = FIELD_TYPES[key]
        is_list = isinstance(kind, tuple) and (kind[0] == "list" or
                                               (kind[0] == "optional" and isinstance(kind[1], tuple)))
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, default=argparse.SUPPRESS,
                            nargs="+" if is_list else None, metavar=key.upper(),
                            help=f"default: {getattr(RunConfig(), key)!r}")
    parser = _Parser(prog="sphdk", description="Spherical DeepKriging")
    parser.add_argument("--version", action="version", version=f"sphdk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in COMMAND_HELP.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _require(cfg: RunConfig, *keys):
    for key in keys:
        if getattr(cfg, key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required for this command")


def _basis_system(cfg: RunConfig):
    if cfg.family == BasisFamily.WENDLAND_MULTI.value:
        return build_wendland_multi(default_wendland_scales(cfg.wendland_grids))
    system = fibonacci_mrts(cfg.family, cfg.m_knots)
    return system.truncate(cfg.k or cfg.m_knots)


def cmd_simulate(cfg: RunConfig) -> dict:
    _require(cfg, "output")
    fld, sp = harness.simulate_replication(cfg.scenario_config(), 0, cfg.seed)
    tag = np.empty(len(fld), dtype=object)
    tag[sp.train], tag[sp.val], tag[sp.test] = "train", "val", "test"
    pts = fld.locations
    fileio.atomic_write_text(cfg.output, fileio.csv_text(
        ["lon", "lat", "y_true", "z_obs", "is_outlier", "split_tag"],
        [fileio.float_col(np.degrees(pts.lon)), fileio.float_col(np.degrees(pts.lat)),
         fileio.float_col(fld.y_true), fileio.float_col(fld.z_obs),
         [str(int(v)) for v in fld.outlier_mask], list(tag)]))
    return {"rows": len(fld), "outliers": int(fld.outlier_mask.sum())}


def cmd_basis(cfg: RunConfig) -> dict:
    _require(cfg, "input", "output")
    data = fileio.read_points_csv(cfg.input, value_column=None)
    system = _basis_system(cfg)
    feats = eval_features(system, data.points)
    fileio.write_matrix_csv(cfg.output, feats, [f"phi{j + 1}" for j in range(feats.shape[1])])
    return {"rows": feats.shape[0], "columns": feats.shape[1]}


def cmd_fit(cfg: RunConfig) -> dict:
    _require(cfg, "input", "model_path")
    data = fileio.read_points_csv(cfg.input, value_column=cfg.value_column)
    exp = cfg.experiment_config()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    sp = harness.split(len(data), exp.proportions, rng)
    bank = harness.FeatureBank(data.points, exp)
    fm = harness.fit_model(cfg.model, bank, data.z, sp, exp, seed=harness._model_seed([cfg.seed], cfg.model))
    out = {"model": cfg.model, "k": fm.k, "n_train": len(sp.train), "rejected_rows": len(data.rejected)}
    for part in ("val", "test"):
        rows = getattr(sp, part)
        pred = harness.predict_rows(fm, bank, rows)
        out[f"{part}_rmse"] = harness.rmse(data.z[rows], pred)
        out[f"{part}_mae"] = harness.mae(data.z[rows], pred)
    fileio.save_model(cfg.model_path, fm, {"seed": cfg.seed})
    print(json.dumps(out))
    return out


def cmd_predict(cfg: RunConfig) -> dict:
    _require(cfg, "model_path", "output")
    fm = fileio.load_model(cfg.model_path)
    if cfg.grid is not None:
        fileio.write_grid_csv(fm, cfg.grid, cfg.output)
        return {"rows": cfg.grid[0] * cfg.grid[1]}
    _require(cfg, "input")
    data = fileio.read_points_csv(cfg.input, value_column=None)
    fileio.write_predictions_csv(cfg.output, data.points, fm.predict(data.points))
    return {"rows": len(data)}


def cmd_evaluate(cfg: RunConfig) -> dict:
    _require(cfg, "model_path", "input")
    fm = fileio.load_model(cfg.model_path)
    data = fileio.read_points_csv(cfg.input, value_column=cfg.value_column)
    pred = fm.predict(data.points)
    out = {"model": fm.name, "n": len(data), "rmse": harness.rmse(data.z, pred), "mae": harness.mae(data.z, pred)}
    print(json.dumps(out))
    if cfg.output:
        fileio.atomic_write_text(cfg.output, json.dumps(out, indent=2) + "\n")
    return out


def cmd_reproduce(cfg: RunConfig) -> dict:
    report = harness.run_experiment(cfg.scenario_config(), cfg.models, cfg.reps, cfg.seed,
                                    cfg.experiment_config())
    title = f"scenario ({cfg.scenario}), noise {cfg.noise}, {cfg.reps} replications, n = {cfg.n}"
    table = report.to_table(title)
    print(table, end="")
    if cfg.output:
        fileio.atomic_write_text(cfg.output, report.to_csv())
        fileio.atomic_write_text(cfg.output + ".txt", table)
    return {"aggregate": report.aggregate()}


COMMANDS = {
    "simulate": cmd_simulate, "basis": cmd_basis, "fit": cmd_fit,
    "predict": cmd_predict, "evaluate": cmd_evaluate, "reproduce": cmd_reproduce,
}
MANIFEST_TARGET = {"fit": "model_path"}


def _thread_cap():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    overrides = {k: " ".join(v) if isinstance(v, list) else v for k, v in args.items()}
    cfg = parse_config(config_path, overrides)
    with threadpool_limits(limits=_thread_cap()):
        result = COMMANDS[command](cfg)
    target = getattr(cfg, MANIFEST_TARGET.get(command, "output"))
    if target:
        fileio.write_manifest(fileio.manifest_path(target), command, cfg.to_dict(), {"result": result})
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SphdkError as exc:
        print(f"sphdk: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sphdk: error: {exc}", file=sys.stderr)
        return DataError.exit_code
