"""Experiment protocol: split, fit every model, score on the test set, aggregate.

Models are referred to by the table names ``OLS_W``, ``OLS_S``, ``DK_W``,
``DK_MRTS``, ``DK_S``, ``DK_S_H`` and ``UK``.

Seeding: replication ``r`` of a run with master seed ``s`` uses
``np.random.SeedSequence([s, r])``; inside a replication each model gets
``SeedSequence([s, r, crc32(name)])`` so a model's numbers do not depend on
which other models are in the list.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines, nn
from .basis import (BasisFamily, BasisSystem, build_wendland_multi, default_wendland_scales,
                    eval_features, fibonacci_mrts)
from .errors import InvalidArgumentError, SphdkError
from .geometry import SpherePoints
from .nn import SplitIndices, TrainConfig
from .sim import Noise, ScenarioConfig, contaminate, generate

log = logging.getLogger(__name__)

MODEL_NAMES = ("OLS_W", "OLS_S", "DK_W", "DK_MRTS", "DK_S", "DK_S_H", "UK")
DEFAULT_K_CANDIDATES = (25, 50, 100, 200, 400)


def split(n: int, proportions=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None) -> SplitIndices:
    """Random train/validation/test partition.

    Validation and test sizes are ``floor(p * n)``; the remainder goes to
    training.
    """
    if n < 10:
        raise InvalidArgumentError("need n >= 10 to split")
    p = np.asarray(proportions, dtype=float)
    if p.shape != (3,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise InvalidArgumentError(f"proportions must be three non-negatives summing to 1, got {proportions}")
    rng = rng if rng is not None else np.random.default_rng()
    n_val = int(math.floor(p[1] * n + 1e-9))
    n_test = int(math.floor(p[2] * n + 1e-9))
    perm = rng.permutation(n)
    n_train = n - n_val - n_test
    return SplitIndices(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train:n_train + n_val]),
        test=np.sort(perm[n_train + n_val:]),
    )


def _check_pair(actual, predicted):
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise InvalidArgumentError(f"length mismatch {a.shape} vs {p.shape}")
    if a.size == 0:
        raise InvalidArgumentError("empty input")
    return a, p


def rmse(actual, predicted) -> float:
    a, p = _check_pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mae(actual, predicted) -> float:
    a, p = _check_pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


@dataclass
class Dataset:
    points: SpherePoints
    z: np.ndarray
    covariates: np.ndarray | None = None
    rejected: tuple = ()  # (row number, reason) pairs dropped on ingestion

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ExperimentConfig:
    """Everything a replication needs besides the data."""

    m_knots: int = 400
    k_candidates: tuple[int, ...] = DEFAULT_K_CANDIDATES
    wendland_grids: tuple[int, ...] = (100, 361, 1369)
    train: TrainConfig = field(default_factory=TrainConfig)
    huber_delta: float = nn.HUBER_DELTA
    neighbor_cap: int | None = None
    proportions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.m_knots < 4:
            raise InvalidArgumentError("m_knots must be >= 4")
        if not self.k_candidates:
            raise InvalidArgumentError("k_candidates is empty")
        if max(self.k_candidates) > self.m_knots or min(self.k_candidates) < 1:
            raise InvalidArgumentError("k_candidates must lie in [1, m_knots]")


class FeatureBank:
    """Lazily evaluated feature matrices for one set of locations."""

    def __init__(self, points: SpherePoints, config: ExperimentConfig, covariates=None):
        self.points = points
        self.config = config
        self.covariates = covariates
        self._full: dict[str, np.ndarray] = {}
        self._systems: dict[str, BasisSystem] = {}

    def system(self, family: str) -> BasisSystem:
        if family not in self._systems:
            if family == BasisFamily.WENDLAND_MULTI.value:
                self._systems[family] = build_wendland_multi(
                    default_wendland_scales(self.config.wendland_grids))
            else:
                self._systems[family] = fibonacci_mrts(family, self.config.m_knots)
        return self._systems[family]

    def full(self, family: str) -> np.ndarray:
        if family not in self._full:
            self._full[family] = eval_features(self.system(family), self.points)
        return self._full[family]

    def basis_only(self, family: str, k: int | None = None) -> np.ndarray:
        f = self.full(family)
        return f if k is None else f[:, :k]

    def inputs(self, family: str, k: int | None = None) -> np.ndarray:
        """Network inputs: basis features followed by covariates."""
        f = self.basis_only(family, k)
        if self.covariates is None:
            return f
        return np.hstack([f, np.asarray(self.covariates, dtype=float).reshape(len(f), -1)])


@dataclass
class FittedModel:
    """Uniform prediction interface over every model type."""

    name: str
    family: str
    k: int | None
    system: BasisSystem
    kind: str  # "nn" | "ols" | "uk"
    estimator: object
    extra: dict = field(default_factory=dict)

    def predict(self, points: SpherePoints, covariates=None) -> np.ndarray:
        system = self.system if self.k is None else self.system.truncate(self.k)
        feats = eval_features(system, points)
        if self.kind == "uk":
            return self.estimator.predict(points, feats)
        if self.kind == "ols":
            return self.estimator.predict_features(feats)
        if covariates is not None:
            feats = np.hstack([feats, np.asarray(covariates, dtype=float).reshape(len(feats), -1)])
        return self.estimator.predict(feats)


MODEL_SPECS = {
    "OLS_W": ("ols", BasisFamily.WENDLAND_MULTI.value, None),
    "OLS_S": ("ols", BasisFamily.SPHERICAL_MRTS.value, None),
    "DK_W": ("nn", BasisFamily.WENDLAND_MULTI.value, "mse"),
    "DK_MRTS": ("nn", BasisFamily.EUCLIDEAN_MRTS.value, "mse"),
    "DK_S": ("nn", BasisFamily.SPHERICAL_MRTS.value, "mse"),
    "DK_S_H": ("nn", BasisFamily.SPHERICAL_MRTS.value, "huber"),
    "UK": ("uk", BasisFamily.SPHERICAL_MRTS.value, None),
}


def _model_seed(base: Sequence[int], name: str) -> int:
    ss = np.random.SeedSequence(list(base) + [zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def fit_model(name: str, bank: FeatureBank, z: np.ndarray, sp: SplitIndices,
              config: ExperimentConfig, seed: int = 0, k_hint: int | None = None) -> FittedModel:
    """Fit one named model on the training rows, using validation rows for selection.

    ``k_hint`` fixes the basis size of ``UK`` (the harness passes the size
    selected for ``DK_S``); without it UK picks K by validation MSE of the
    OLS trend.
    """
    if name not in MODEL_SPECS:
        raise InvalidArgumentError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    kind, family, loss_kind = MODEL_SPECS[name]
    system = bank.system(family)
    wendland = family == BasisFamily.WENDLAND_MULTI.value
    tr, va = sp.train, sp.val

    if kind == "nn":
        loss = nn.MSE if loss_kind == "mse" else nn.Loss("huber", config.huber_delta)
        tcfg = replace(config.train, loss=loss, seed=seed)
        if wendland:
            pred = nn.train(bank.inputs(family), z, sp, tcfg)
            return FittedModel(name, family, None, system, kind, pred, {"val_risk": pred.best_val_risk})
        k_hat, pred, risks = nn.select_k(config.k_candidates, lambda k: bank.inputs(family, k), z, sp, tcfg)
        return FittedModel(name, family, k_hat, system, kind, pred, {"val_risks": risks})

    if kind == "ols":
        if wendland:
            ols = baselines.fit_ols(bank.full(family)[tr], z[tr])
            return FittedModel(name, family, None, system, kind, ols)
        k_hat, ols = _select_ols(bank, family, z, sp, config.k_candidates)
        return FittedModel(name, family, k_hat, system, kind, ols)

    # universal kriging
    if k_hint is None:
        k_hint, _ = _select_ols(bank, family, z, sp, config.k_candidates)
    feats = bank.basis_only(family, k_hint)
    uk = baselines.fit_uk(bank.points[tr], z[tr], features=feats[tr], neighbor_cap=config.neighbor_cap,
                          rng=np.random.default_rng(seed))
    return FittedModel(name, family, k_hint, system, kind, uk,
                       {"cov": uk.cov_params, "fallback": uk.fallback_used})


def _select_ols(bank: FeatureBank, family: str, z, sp: SplitIndices, candidates):
    best = None
    for k in sorted(set(candidates)):
        f = bank.basis_only(family, k)
        ols = baselines.fit_ols(f[sp.train], z[sp.train])
        val = float(np.mean((z[sp.val] - ols.predict_features(f[sp.val])) ** 2))
        if best is None or val < best[0]:
            best = (val, k, ols)
    return best[1], best[2]


def predict_rows(fm: FittedModel, bank: FeatureBank, rows: np.ndarray) -> np.ndarray:
    """Predictions at a subset of the bank's locations, reusing cached features."""
    if fm.kind == "uk":
        return fm.estimator.predict(bank.points[rows], bank.basis_only(fm.family, fm.k)[rows])
    if fm.kind == "ols":
        return fm.estimator.predict_features(bank.basis_only(fm.family, fm.k)[rows])
    return fm.estimator.predict(bank.inputs(fm.family, fm.k)[rows])


@dataclass
class MetricsRow:
    model: str
    replication: int
    rmse: float
    mae: float
    k: int | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)
    models: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def values(self, model: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.rows if r.model == model])

    def aggregate(self) -> dict[str, dict[str, float]]:
        """Mean and sample sd (ddof=1; 0 for a single replication) per model."""
        out = {}
        for name in self.models:
            stats = {}
            for metric in ("rmse", "mae"):
                v = self.values(name, metric)
                v = v[np.isfinite(v)]
                stats[f"{metric}_mean"] = float(np.mean(v)) if v.size else math.nan
                stats[f"{metric}_sd"] = float(np.std(v, ddof=1)) if v.size > 1 else (0.0 if v.size else math.nan)
            out[name] = stats
        return out

    def to_csv(self) -> str:
        lines = ["model,replication,rmse,mae,k,error"]
        for r in self.rows:
            err = (r.error or "").replace(",", ";").replace("\n", " ")
            lines.append(f"{r.model},{r.replication},{r.rmse!r},{r.mae!r},{'' if r.k is None else r.k},{err}")
        return "\n".join(lines) + "\n"

    def to_table(self, title: str | None = None) -> str:
        agg = self.aggregate()
        width = max([len("Model")] + [len(m) for m in self.models])
        head = f"{'Model':<{width}}  {'RMSE':>15}  {'MAE':>15}"
        lines = ([title] if title else []) + [head, "-" * len(head)]
        for name in self.models:
            s = agg[name]
            rm = f"{s['rmse_mean']:.2f} ± {s['rmse_sd']:.2f}"
            ma = f"{s['mae_mean']:.2f} ± {s['mae_sd']:.2f}"
            lines.append(f"{name:<{width}}  {rm:>15}  {ma:>15}")
        return "\n".join(lines) + "\n"


def _order_models(models: Sequence[str]) -> list[str]:
    # UK borrows the K selected by DK_S, so DK_S must run first
    models = list(models)
    if "UK" in models and "DK_S" in models:
        models.remove("UK")
        models.insert(models.index("DK_S") + 1, "UK")
    return models


def simulate_replication(scenario: ScenarioConfig, rep: int, master_seed: int,
                         proportions=(0.8, 0.1, 0.1)):
    """Field, split and contamination for one replication, as ``(field, split)``."""
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, rep]))
    fld = generate(scenario, rng)
    sp = split(len(fld), proportions, rng)
    return contaminate(fld, scenario.noise, sp, rng), sp


def run_replication(scenario: ScenarioConfig, models: Sequence[str], rep: int, master_seed: int,
                    config: ExperimentConfig) -> list[MetricsRow]:
    fld, sp = simulate_replication(scenario, rep, master_seed, config.proportions)
    bank = FeatureBank(fld.locations, config)
    z = fld.z_obs
    rows = {}
    k_s = None
    for name in _order_models(models):
        seed = _model_seed([master_seed, rep], name)
        try:
            fm = fit_model(name, bank, z, sp, config, seed=seed, k_hint=k_s if name == "UK" else None)
            if name == "DK_S":
                k_s = fm.k
            pred = predict_rows(fm, bank, sp.test)
            if not np.all(np.isfinite(pred)):
                raise SphdkError("non-finite predictions")
            rows[name] = MetricsRow(name, rep, rmse(z[sp.test], pred), mae(z[sp.test], pred), fm.k)
        except (SphdkError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            log.warning("replication %d, model %s failed: %s", rep, name, exc)
            rows[name] = MetricsRow(name, rep, math.nan, math.nan, None, f"{type(exc).__name__}: {exc}")
        log.info("rep %d %s rmse=%.4f mae=%.4f k=%s", rep, name, rows[name].rmse, rows[name].mae,
                 rows[name].k)
    return [rows[name] for name in models]


def run_experiment(scenario: ScenarioConfig, models: Sequence[str], reps: int = 10,
                   master_seed: int = 0, config: ExperimentConfig | None = None) -> MetricsReport:
    if reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    models = tuple(models)
    for name in models:
        if name not in MODEL_SPECS:
            raise InvalidArgumentError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    config = config or ExperimentConfig()
    report = MetricsReport(models=models, meta={
        "scenario": scenario.scenario.value, "noise": scenario.noise.kind.value,
        "n": scenario.n, "reps": reps, "master_seed": master_seed,
    })
    for rep in range(reps):
        report.rows.extend(run_replication(scenario, models, rep, master_seed, config))
    return report


def make_scenario(scenario: str, noise: str = "clean", n: int = 2500, seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(scenario=scenario, n=n, noise=Noise(noise), seed=seed)
