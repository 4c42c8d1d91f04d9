"""File formats: point CSVs, prediction grids, model checkpoints, run manifests.

Longitudes and latitudes are degrees in files and radians in memory.
Floats are written with 17 significant digits so a write/read round trip
reproduces every double exactly. All writes go to a temporary file in the
target directory and are moved into place with :func:`os.replace`.

Checkpoint layout (``.npz``, format version 1): a JSON ``meta`` string
holding the model name, kind, family, K and scalar settings, plus named
arrays for the basis (``basis.*``) and the estimator (``nn.*``, ``ols.*``
or ``uk.*``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .basis import BasisFamily, BasisSystem, build_wendland_multi
from .baselines import CovParams, OlsModel, UkModel
from .errors import DataError, InvalidArgumentError
from .geometry import SpherePoints
from .harness import Dataset, FittedModel
from .linalg import EigenDecomp
from .nn import DenseBlock, Loss, MlpModel, TrainedPredictor

CHECKPOINT_VERSION = 1
MAX_REJECT_FRACTION = 0.01


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(header, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow(row)
    return buf.getvalue()


def float_col(values) -> list[str]:
    return [fmt(v) for v in np.asarray(values, dtype=float)]


def write_points_csv(path, points: SpherePoints, values=None, extra: dict | None = None) -> None:
    """``lon,lat[,value][,extra...]`` with coordinates in degrees."""
    header = ["lon", "lat"]
    cols = [float_col(np.degrees(points.lon)), float_col(np.degrees(points.lat))]
    if values is not None:
        header.append("value")
        cols.append(float_col(values))
    for name, col in (extra or {}).items():
        header.append(name)
        col = np.asarray(col)
        cols.append(float_col(col) if col.dtype.kind == "f" else [str(v) for v in col])
    atomic_write_text(path, csv_text(header, cols))


def read_points_csv(path, value_column: str | None = "value",
                    max_reject_fraction: float = MAX_REJECT_FRACTION) -> Dataset:
    """Read ``lon,lat,value`` (degrees) into a :class:`Dataset`.

    Rows with unparseable or non-finite entries, or ``|lat| > 90``, are
    dropped and listed in ``Dataset.rejected`` as ``(row, reason)`` with
    1-based file line numbers. More than ``max_reject_fraction`` of the
    rows rejected raises :class:`DataError`. ``value_column=None`` reads
    locations only (``z`` is then empty).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    wanted = ["lon", "lat"] + ([value_column] if value_column else [])
    missing = [c for c in wanted if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}; header is {','.join(header)}")
    ignored = [h for h in header if h not in wanted]
    if ignored:
        warnings.warn(f"{path}: ignoring column(s) {', '.join(ignored)}", UserWarning, stacklevel=2)
    idx = [header.index(c) for c in wanted]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")

    good, rejected = [], []
    for line_no, row in enumerate(body, start=2):
        try:
            vals = [float(row[i]) for i in idx]
        except (ValueError, IndexError):
            rejected.append((line_no, "unparseable or missing field"))
            continue
        if not all(math.isfinite(v) for v in vals):
            rejected.append((line_no, "non-finite value"))
        elif abs(vals[1]) > 90.0:
            rejected.append((line_no, f"latitude {vals[1]:g} outside [-90, 90]"))
        else:
            good.append(vals)
    if len(rejected) > max_reject_fraction * len(body):
        listing = "; ".join(f"line {n}: {why}" for n, why in rejected[:20])
        more = "" if len(rejected) <= 20 else f"; ... {len(rejected) - 20} more"
        raise DataError(f"{path}: rejected {len(rejected)} of {len(body)} rows "
                        f"(limit {max_reject_fraction:.0%}): {listing}{more}")
    if rejected:
        warnings.warn(f"{path}: rejected {len(rejected)} row(s): "
                      + "; ".join(f"line {n}: {why}" for n, why in rejected), UserWarning, stacklevel=2)
    arr = np.array(good, dtype=float).reshape(-1, len(wanted))
    pts = SpherePoints.from_degrees(arr[:, 0], arr[:, 1])
    z = arr[:, 2] if value_column else np.empty(0)
    return Dataset(pts, z, None, tuple(rejected))


def grid_points(n_lon: int, n_lat: int) -> SpherePoints:
    """Lat-major regular grid: lon = -180 + 360 i / n_lon, lat from -90 to 90 inclusive."""
    if n_lon < 1 or n_lat < 2:
        raise InvalidArgumentError("grid needs n_lon >= 1 and n_lat >= 2")
    lon = -180.0 + 360.0 * np.arange(n_lon) / n_lon
    lat = np.linspace(-90.0, 90.0, n_lat)
    lon_g, lat_g = np.meshgrid(lon, lat)  # rows follow latitude
    return SpherePoints.from_degrees(lon_g.ravel(), lat_g.ravel())


def write_grid_csv(model, resolution, path) -> None:
    """Predict on a regular grid and write ``lon,lat,pred`` (latitude-major rows)."""
    if model is None or not callable(getattr(model, "predict", None)):
        raise InvalidArgumentError("write_grid_csv needs a fitted model")
    n_lon, n_lat = (int(v) for v in resolution)
    pts = grid_points(n_lon, n_lat)
    pred = np.asarray(model.predict(pts), dtype=float)
    write_predictions_csv(path, pts, pred)


def write_predictions_csv(path, points: SpherePoints, pred) -> None:
    cols = [float_col(np.degrees(points.lon)), float_col(np.degrees(points.lat)), float_col(pred)]
    atomic_write_text(path, csv_text(["lon", "lat", "pred"], cols))


def write_matrix_csv(path, matrix, header) -> None:
    m = np.asarray(matrix, dtype=float)
    atomic_write_text(path, csv_text(header, [float_col(m[:, j]) for j in range(m.shape[1])]))


def versions() -> dict:
    import numba
    import scipy
    from . import __version__
    return {"sphdk": __version__, "python": sys.version.split()[0], "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "platform": platform.platform()}


def write_manifest(path, command: str, config: dict, extra: dict | None = None) -> None:
    doc = {"command": command, "config": config, "versions": versions()}
    if extra:
        doc.update(extra)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def manifest_path(output) -> Path:
    return Path(str(output) + ".manifest.json")


# -- checkpoints -------------------------------------------------------------

def _basis_arrays(system: BasisSystem) -> dict:
    out = {"basis.lon": system.knots.lon, "basis.lat": system.knots.lat}
    if system.eig is not None:
        out["basis.eig_values"] = system.eig.values
        out["basis.eig_vectors"] = system.eig.vectors
        out["basis.row_means"] = system.kernel_row_means
    if system.wendland_scales:
        out["basis.wendland_scales"] = np.array(system.wendland_scales, dtype=float)
    return out


def _basis_from(arrs, meta) -> BasisSystem:
    family = BasisFamily(meta["family"])
    if family is BasisFamily.WENDLAND_MULTI:
        return build_wendland_multi([(int(c), float(r)) for c, r in arrs["basis.wendland_scales"]])
    knots = SpherePoints(arrs["basis.lon"], arrs["basis.lat"])
    eig = EigenDecomp(arrs["basis.eig_values"], arrs["basis.eig_vectors"])
    return BasisSystem(family, knots, len(knots), eig=eig, kernel_row_means=arrs["basis.row_means"])


def _estimator_arrays(fm: FittedModel, meta: dict) -> dict:
    est = fm.estimator
    if fm.kind == "nn":
        model = est.model
        out = {"nn.out_weight": model.out_weight, "nn.out_bias": model.out_bias,
               "nn.x_shift": est.x_shift, "nn.x_scale": est.x_scale,
               "nn.history": np.array(est.history, dtype=float).reshape(-1, 2)}
        for i, b in enumerate(model.blocks):
            for name in ("weight", "bias", "gamma", "beta", "run_mean", "run_var"):
                out[f"nn.block{i}.{name}"] = getattr(b, name)
        meta.update(n_blocks=len(model.blocks), input_dim=model.input_dim, bn_eps=model.bn_eps,
                    loss_kind=est.loss.kind, loss_delta=est.loss.delta,
                    y_shift=est.y_shift, y_scale=est.y_scale,
                    best_val_risk=est.best_val_risk, best_epoch=est.best_epoch)
        return out
    if fm.kind == "ols":
        meta["ridge_used"] = est.ridge_used
        return {"ols.coefficients": est.coefficients}
    cp = est.cov_params
    meta.update(sill=cp.sill, range=cp.range, nugget=cp.nugget, neighbor_cap=est.neighbor_cap,
                fallback_used=est.fallback_used)
    return {"uk.coefficients": est.trend_coefficients, "uk.lon": est.train_locations.lon,
            "uk.lat": est.train_locations.lat, "uk.residuals": est.train_residuals}


def save_model(path, fm: FittedModel, extra_meta: dict | None = None) -> None:
    meta = {"format_version": CHECKPOINT_VERSION, "name": fm.name, "kind": fm.kind,
            "family": fm.system.family.value, "k": fm.k}
    arrays = _basis_arrays(fm.system)
    arrays.update(_estimator_arrays(fm, meta))
    if extra_meta:
        meta["extra"] = extra_meta
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta, default=str)), **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_model(path) -> FittedModel:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrs = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrs:
        raise DataError(f"{path}: not a model checkpoint")
    meta = json.loads(str(arrs["meta"]))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    system = _basis_from(arrs, meta)
    kind = meta["kind"]
    k = meta["k"]
    basis = system if k is None else system.truncate(k)
    if kind == "nn":
        blocks = [DenseBlock(*(arrs[f"nn.block{i}.{n}"] for n in
                               ("weight", "bias", "gamma", "beta", "run_mean", "run_var")))
                  for i in range(meta["n_blocks"])]
        model = MlpModel(blocks, arrs["nn.out_weight"], arrs["nn.out_bias"], meta["input_dim"], meta["bn_eps"])
        est = TrainedPredictor(model, meta["best_val_risk"], meta["best_epoch"],
                               [tuple(r) for r in arrs["nn.history"]],
                               Loss(meta["loss_kind"], meta["loss_delta"]),
                               arrs["nn.x_shift"], arrs["nn.x_scale"], meta["y_shift"], meta["y_scale"])
    elif kind == "ols":
        est = OlsModel(basis, arrs["ols.coefficients"], meta["ridge_used"])
    elif kind == "uk":
        est = UkModel(basis, arrs["uk.coefficients"], CovParams(meta["sill"], meta["range"], meta["nugget"]),
                      SpherePoints(arrs["uk.lon"], arrs["uk.lat"]), arrs["uk.residuals"],
                      meta["neighbor_cap"], meta["fallback_used"])
    else:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    return FittedModel(meta["name"], meta["family"], k, system, kind, est, meta.get("extra", {}))
