"""Config-driven experiment pipeline behind the command line interface.

A run goes generate -> preprocess -> fit/train -> rollout -> evaluate and
writes every artifact under one output directory. All randomness derives
from the seeds in the config, so a rerun reproduces the outputs byte for
byte.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from ._version import __version__
from .data import (
    Normalizer,
    Trajectory,
    fit_normalizer,
    normalize_trajectory,
    read_trajectory_csv,
    sample_bursts,
    subsample,
    write_trajectory_csv,
)
from .exceptions import NumericalError
from .generators import (
    LorenzConfig,
    ReactionDiffusionConfig,
    compute_pod,
    gen_lorenz,
    gen_sinusoid,
    project_component,
    solve_reaction_diffusion,
)
from .metrics import MetricsReport, amplitude_ratio, evaluate, extremum_error, rmse
from .tddmd import fit_tddmd, load_tddmd, rollout_tddmd, save_tddmd
from .tdtf import TDTFConfig, TrainConfig, load_tdtf, rollout_tdtf_batch, save_tdtf, train

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "StageError",
    "Dataset",
    "Prepared",
    "Pipeline",
    "bundled_configs",
    "load_config",
    "validate_config",
    "override_seed",
    "generate",
    "ingest_csv",
    "split",
    "preprocess",
    "run",
    "sweep",
    "read_snapshots",
]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("sinusoid", "lorenz", "reaction_diffusion", "external_csv")

_NUM = {"type": "number"}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0}

_TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lr": _POS_NUM,
        "batch_size": _POS_INT,
        "epochs": _POS_INT,
        "weight_decay": {"type": "number", "minimum": 0},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "eps_adam": _POS_NUM,
        "seed": _SEED,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment", "preprocessing", "models"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "generator": {"type": "object"},
        "preprocessing": {
            "type": "object",
            "required": ["n", "J"],
            "additionalProperties": False,
            "properties": {
                "tau": _POS_INT,
                "n": _POS_INT,
                "J": _POS_INT,
                "seed": _SEED,
                "component": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "models": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "minProperties": 1,
                "maxProperties": 1,
                "additionalProperties": False,
                "properties": {
                    "tddmd": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"rel_tol": {"type": "number", "minimum": 0}},
                    },
                    "tdtf": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "h": _POS_INT,
                            "pos_enc": {"type": "boolean"},
                            "activation": {"enum": ["tanh", "relu", "gelu"]},
                            "seed": _SEED,
                            "train": _TRAIN_SCHEMA,
                        },
                    },
                },
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "split": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "rule": {"enum": ["same", "shuffle", "labels"]},
                        "n_test": _POS_INT,
                        "seed": _SEED,
                        "test_labels": {"type": "array", "items": {"type": "string"}},
                    },
                },
                "horizon": {"type": ["integer", "null"], "minimum": 0},
                "metrics": {
                    "type": "array",
                    "items": {"enum": ["rmse", "attractor", "extremum", "amplitude", "field_rmse"]},
                },
                "lobe_threshold": _POS_NUM,
            },
        },
        "output_dir": {"type": "string"},
    },
}

_GENERATOR_SCHEMAS = {
    "sinusoid": {
        "type": "object",
        "additionalProperties": False,
        "properties": {"K": _POS_INT, "dt": _POS_NUM},
    },
    "lorenz": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "sigma": _NUM,
            "rho": _NUM,
            "beta": _NUM,
            "dt": _POS_NUM,
            "t_final": _POS_NUM,
            "discard_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "seed": _SEED,
            "n_traj": _POS_INT,
            "init_box": _POS_NUM,
        },
    },
    "reaction_diffusion": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "D": {"type": "number", "minimum": 0},
            "eps": _POS_NUM,
            "alpha": _NUM,
            "nx": {"type": "integer", "minimum": 3},
            "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "t_final": _POS_NUM,
            "t_discard": {"type": "number", "minimum": 0},
            "bc_u": _NUM,
            "bc_v": _NUM,
            "save_every": _POS_INT,
            "pod_modes": _POS_INT,
            "export_stride": _POS_INT,
        },
    },
    "external_csv": {
        "type": "object",
        "required": ["path"],
        "additionalProperties": False,
        "properties": {"path": {"type": "string"}},
    },
}

DEFAULT_METRICS = ["rmse", "attractor", "extremum", "amplitude", "field_rmse"]

RD_INITIAL_CONDITION = "u = -2 + 4 sin(pi x) cos(2 pi x), v = -4 + 2 sin(pi x)"
RD_SOLVER_NOTE = (
    "reaction-diffusion fields come from second-order central finite differences "
    "with forward Euler in time, substituted for a Chebyshev spectral solver; "
    "fields are comparable only qualitatively"
)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field path."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class StageError(RuntimeError):
    """A pipeline stage failed numerically."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ------------------------------------------------------------------ config


def _configs_dir():
    return resources.files("delayroll") / "configs"


def bundled_configs():
    return sorted(p.name[:-5] for p in _configs_dir().iterdir() if p.name.endswith(".json"))


def load_config(path_or_name) -> dict:
    """Read and validate a JSON config file, or a bundled config by name."""
    path = Path(str(path_or_name))
    if not path.exists() and str(path_or_name) in bundled_configs():
        text = (_configs_dir() / f"{path_or_name}.json").read_text(encoding="utf-8")
    else:
        text = path.read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def _first_error(schema, instance, prefix=()):
    errors = sorted(
        jsonschema.Draft7Validator(schema).iter_errors(instance),
        key=lambda e: [str(p) for p in e.absolute_path],
    )
    if errors:
        err = errors[0]
        raise ConfigError(err.message, ".".join([*prefix, *(str(p) for p in err.absolute_path)]))


def validate_config(cfg: dict):
    """Raise :class:`ConfigError` naming the first offending field."""
    _first_error(CONFIG_SCHEMA, cfg)
    _first_error(_GENERATOR_SCHEMAS[cfg["experiment"]], cfg.get("generator", {}), ("generator",))
    kinds = [next(iter(m)) for m in cfg["models"]]
    if len(set(kinds)) != len(kinds):
        raise ConfigError("each model kind may appear once", "models")


def override_seed(cfg: dict, seed: int) -> dict:
    """Copy of ``cfg`` with every seed replaced by ``seed``."""
    cfg = copy.deepcopy(cfg)
    cfg["preprocessing"]["seed"] = seed
    if cfg["experiment"] == "lorenz":
        cfg.setdefault("generator", {})["seed"] = seed
    split_rule = cfg.get("evaluation", {}).get("split")
    if split_rule is not None and split_rule.get("rule") == "shuffle":
        split_rule["seed"] = seed
    for entry in cfg["models"]:
        if "tdtf" in entry:
            entry["tdtf"]["seed"] = seed
            entry["tdtf"].setdefault("train", {})["seed"] = seed
    return cfg


def _model_entries(cfg):
    for entry in cfg["models"]:
        (kind, opts), = entry.items()
        yield kind, opts


def _model_options(cfg, kind):
    return next((o for k, o in _model_entries(cfg) if k == kind), None)


def tdtf_configs(opts: dict, n: int, d: int):
    """``(TDTFConfig, TrainConfig)`` from a ``tdtf`` model entry."""
    seed = opts.get("seed", 0)
    train_opts = dict(opts.get("train", {}))
    train_opts.setdefault("seed", seed)
    try:
        model_cfg = TDTFConfig(
            n=n,
            d=d,
            h=opts.get("h", 10),
            pos_enc=opts.get("pos_enc", True),
            activation=opts.get("activation", "tanh"),
            seed=seed,
        )
        return model_cfg, TrainConfig(**train_opts)
    except ValueError as exc:
        raise ConfigError(str(exc), "models.tdtf") from exc


# -------------------------------------------------------------------- data


@dataclass
class Dataset:
    """Generated or ingested trajectories plus side products (RD fields)."""

    trajectories: list
    extras: dict = field(default_factory=dict)


def generate(cfg: dict) -> Dataset:
    gen = dict(cfg.get("generator", {}))
    exp = cfg["experiment"]
    try:
        if exp == "sinusoid":
            return Dataset([gen_sinusoid(gen.get("K", 200), gen.get("dt", 4 * np.pi / 100))])
        if exp == "lorenz":
            lorenz_cfg = LorenzConfig(**gen)
        elif exp == "reaction_diffusion":
            r = gen.pop("pod_modes", 3)
            gen.pop("export_stride", None)
            rd_cfg = ReactionDiffusionConfig(**gen)
        else:
            return Dataset(ingest_csv(gen["path"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "generator") from exc
    try:
        if exp == "lorenz":
            return Dataset(gen_lorenz(lorenz_cfg))
        snapshots, times = solve_reaction_diffusion(rd_cfg)
    except NumericalError as exc:
        raise StageError("generate", exc) from exc
    if snapshots.shape[1] < 2:
        raise ConfigError("fewer than two retained snapshots", "generator.t_discard")
    basis, coeffs = compute_pod(snapshots, r, dt=float(times[1] - times[0]), t0=float(times[0]))
    return Dataset(
        [coeffs],
        {"snapshots": snapshots, "times": times, "basis": basis, "rd_config": rd_cfg},
    )


def ingest_csv(directory) -> list:
    """Parse every ``*.csv`` trajectory in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no CSV files in {directory}")
    return [read_trajectory_csv(f) for f in files]


@dataclass
class Prepared:
    """Split, subsampled and normalized data ready for fitting."""

    train: list
    test: list
    test_index: list
    normalizer: Normalizer
    bursts: object
    n: int


def split(cfg: dict, trajs: list):
    """``(train_indices, test_indices)`` following ``evaluation.split``.

    ``same`` evaluates on the training trajectories, ``shuffle`` holds out
    ``n_test`` trajectories chosen by a seeded permutation, ``labels`` holds
    out trajectories by label.
    """
    rule = cfg.get("evaluation", {}).get("split", {})
    kind = rule.get("rule", "same")
    idx = list(range(len(trajs)))
    if kind == "same":
        return idx, idx
    if kind == "shuffle":
        n_test = rule.get("n_test", max(1, len(trajs) // 10))
        if n_test >= len(trajs):
            raise ConfigError(f"n_test={n_test} leaves no training trajectories", "evaluation.split.n_test")
        perm = np.random.default_rng(rule.get("seed", 0)).permutation(len(trajs))
        return sorted(perm[n_test:].tolist()), sorted(perm[:n_test].tolist())
    labels = set(rule.get("test_labels", []))
    test = [i for i, t in enumerate(trajs) if t.label in labels]
    if not test or len(test) == len(trajs):
        raise ConfigError("test_labels must select some but not all trajectories", "evaluation.split.test_labels")
    return [i for i in idx if i not in test], test


def preprocess(cfg: dict, data: Dataset, n: Optional[int] = None) -> Prepared:
    pre = cfg["preprocessing"]
    n = pre["n"] if n is None else n
    trajs = data.trajectories
    comp = pre.get("component")
    if comp is not None:
        if comp >= trajs[0].d:
            raise ConfigError(f"component {comp} out of range for d={trajs[0].d}", "preprocessing.component")
        trajs = [project_component(t, comp) for t in trajs]
    tau = pre.get("tau", 1)
    trajs = [subsample(t, tau) for t in trajs]
    train_idx, test_idx = split(cfg, trajs)
    train_t = [trajs[i] for i in train_idx]
    norm = fit_normalizer(train_t)
    normed = [normalize_trajectory(norm, t) for t in train_t]
    try:
        bursts = sample_bursts(normed, n, pre["J"], np.random.default_rng(pre.get("seed", 0)))
    except ValueError as exc:
        raise ConfigError(str(exc), "preprocessing.n") from exc
    return Prepared(train_t, [trajs[i] for i in test_idx], test_idx, norm, bursts, n)


# ------------------------------------------------------------------ stages


def fit_tddmd_stage(opts, prep: Prepared):
    try:
        return fit_tddmd(prep.bursts, opts.get("rel_tol", 1e-10))
    except NumericalError as exc:
        raise StageError("fit", exc) from exc


def train_tdtf_stage(opts, prep: Prepared):
    model_cfg, train_cfg = tdtf_configs(opts, prep.n, prep.bursts.d)
    try:
        params, history = train(model_cfg, train_cfg, prep.bursts)
    except NumericalError as exc:
        raise StageError("train", exc) from exc
    return model_cfg, train_cfg, params, history


def _steps(traj, n, horizon):
    if len(traj) < n:
        raise ConfigError(f"test trajectory shorter than n={n}", "preprocessing.n")
    avail = len(traj) - n
    return avail if horizon is None else min(horizon, avail)


def rollout_stage(name, model, prep: Prepared, horizon=None) -> list:
    """Roll a model from the first ``n`` states of every test trajectory.

    The rollout covers the rest of each trajectory, or ``horizon`` steps
    when that is shorter.
    """
    n = prep.n
    try:
        if name == "tddmd":
            return [
                rollout_tddmd(model, t.states[:n], _steps(t, n, horizon), prep.normalizer, dt=t.dt, t0=t.t0)
                for t in prep.test
            ]
        model_cfg, params = model
        groups = {}
        for i, t in enumerate(prep.test):
            groups.setdefault(_steps(t, n, horizon), []).append(i)
        out = [None] * len(prep.test)
        for steps, members in groups.items():
            windows = np.stack([prep.test[i].states[:n] for i in members])
            rolled = rollout_tdtf_batch(model_cfg, params, prep.normalizer, windows, steps)
            for i, states in zip(members, rolled):
                t = prep.test[i]
                out[i] = Trajectory(states, dt=t.dt, t0=t.t0, label="tdtf")
        return out
    except NumericalError as exc:
        raise StageError("rollout", exc) from exc


def _truncate(traj: Trajectory, m: int) -> Trajectory:
    return Trajectory(traj.states[:m], dt=traj.dt, t0=traj.t0, label=traj.label)


def evaluate_stage(cfg, prep: Prepared, preds: dict, data: Dataset) -> dict:
    """Metrics of every model plus ground-truth attractor statistics."""
    ev = cfg.get("evaluation", {})
    thr = ev.get("lobe_threshold", 0.1)
    wanted = set(ev.get("metrics", DEFAULT_METRICS))
    first = next(iter(preds.values()))
    truths = [_truncate(t, len(p)) for p, t in zip(first, prep.test)]
    result = {}
    if "attractor" in wanted:
        result["truth"] = evaluate("truth", truths, None, threshold=thr).to_dict()
    for name, out in preds.items():
        report = evaluate(name, out, truths, threshold=thr).to_dict()
        if "extremum" in wanted and out[0].d == 1:
            gaps = [extremum_error(p, t) for p, t in zip(out, truths)]
            report["extremum"] = {
                "value_gap_mean": float(np.mean([g[0] for g in gaps])),
                "time_shift_mean": float(np.mean([g[1] for g in gaps])),
            }
        if "basis" in data.extras:
            basis = data.extras["basis"]
            if "amplitude" in wanted:
                report["amplitude_ratio_final_third"] = amplitude_ratio(out[0], truths[0]).tolist()
            if "field_rmse" in wanted:
                diff = basis.reconstruct(out[0].states) - basis.reconstruct(truths[0].states)
                report["field_rmse"] = float(np.sqrt(np.mean(diff ** 2)))
        result[name] = report
    return result


# ------------------------------------------------------------------ output


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_plot_csv(path, truth: Trajectory, predictions: dict):
    """Wide CSV of ``time``, truth, then each model. Scalar series use bare
    column names, vector series get ``_w{i}`` suffixes."""
    names = list(predictions)

    def cols(prefix):
        return [prefix] if truth.d == 1 else [f"{prefix}_w{i}" for i in range(truth.d)]

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + cols("truth") + [c for name in names for c in cols(name)])
        for k, t in enumerate(truth.times):
            row = [repr(float(t))] + [repr(float(v)) for v in truth.states[k]]
            for name in names:
                row += [repr(float(v)) for v in predictions[name].states[k]]
            writer.writerow(row)


def write_snapshots(out: Path, data: Dataset, stride: int = 1):
    """Snapshot CSV (rows are grid points) plus its JSON manifest."""
    rd_cfg = data.extras["rd_config"]
    snapshots = data.extras["snapshots"][:, ::stride]
    times = data.extras["times"][::stride]
    basis = data.extras["basis"]
    np.savetxt(out / "snapshots.csv", snapshots, delimiter=",", fmt="%.17g")
    np.savetxt(out / "pod_modes.csv", basis.modes, delimiter=",", fmt="%.17g")
    _write_json(out / "snapshots.json", {
        "layout": "rows are grid points, columns are snapshots",
        "field": "u",
        "grid": rd_cfg.grid.tolist(),
        "times": np.asarray(times).tolist(),
        "export_stride": stride,
        "solver": rd_cfg.to_dict(),
        "initial_condition": RD_INITIAL_CONDITION,
        "note": RD_SOLVER_NOTE,
        "pod_singular_values": basis.singular_values.tolist(),
        "pod_energy_fraction": basis.energy_fraction,
    })


def read_snapshots(directory):
    """``(snapshots, grid, times)`` as written by a reaction-diffusion run."""
    directory = Path(directory)
    meta = json.loads((directory / "snapshots.json").read_text(encoding="utf-8"))
    snapshots = np.loadtxt(directory / "snapshots.csv", delimiter=",", ndmin=2)
    return snapshots, np.array(meta["grid"]), np.array(meta["times"])


class Pipeline:
    """The stages of one run, sharing cached intermediate results.

    Each stage writes its own artifacts. When a stage runs on its own it
    recomputes the deterministic inputs it needs and reads models or
    predictions back from ``out_dir``.
    """

    def __init__(self, cfg: dict, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self._data = None
        self._prep = None
        self.models = {}
        self.predictions = {}

    def _dir(self, name=None):
        path = self.out / name if name else self.out
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def data(self) -> Dataset:
        if self._data is None:
            self._data = generate(self.cfg)
        return self._data

    @property
    def prep(self) -> Prepared:
        if self._prep is None:
            self._prep = preprocess(self.cfg, self.data)
        return self._prep

    def generate(self):
        data_dir = self._dir("data")
        for i, traj in enumerate(self.data.trajectories):
            write_trajectory_csv(traj, data_dir / f"traj_{i:04d}.csv")
        if "snapshots" in self.data.extras:
            stride = self.cfg.get("generator", {}).get("export_stride", 1)
            write_snapshots(self._dir(), self.data, stride)
        self.write_manifest()
        return self.data

    def fit(self):
        opts = _model_options(self.cfg, "tddmd")
        if opts is None:
            raise ConfigError("no tddmd entry", "models")
        model = fit_tddmd_stage(opts, self.prep)
        save_tddmd(model, self._dir("models") / "tddmd.json", self.prep.normalizer)
        self.models["tddmd"] = model
        return model

    def train(self):
        opts = _model_options(self.cfg, "tdtf")
        if opts is None:
            raise ConfigError("no tdtf entry", "models")
        model_cfg, train_cfg, params, history = train_tdtf_stage(opts, self.prep)
        models = self._dir("models")
        save_tdtf(models / "tdtf.json", model_cfg, params, self.prep.normalizer, train_cfg, history[-1])
        with (models / "tdtf_loss.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss"])
            for epoch, value in enumerate(history, start=1):
                writer.writerow([epoch, repr(float(value))])
        self.models["tdtf"] = (model_cfg, params)
        return model_cfg, params, history

    def _load_models(self):
        for kind, _ in _model_entries(self.cfg):
            if kind in self.models:
                continue
            path = self.out / "models" / f"{kind}.json"
            if not path.exists():
                raise FileNotFoundError(f"{path} not found; run 'fit' or 'train' first")
            if kind == "tddmd":
                self.models[kind] = load_tddmd(path)[0]
            else:
                model_cfg, params, _, _ = load_tdtf(path)
                self.models[kind] = (model_cfg, params)

    def rollout(self):
        self._load_models()
        horizon = self.cfg.get("evaluation", {}).get("horizon")
        pred_dir = self._dir("predictions")
        for kind, _ in _model_entries(self.cfg):
            preds = rollout_stage(kind, self.models[kind], self.prep, horizon)
            for i, traj in zip(self.prep.test_index, preds):
                write_trajectory_csv(traj, pred_dir / f"{kind}_{i:04d}.csv")
            self.predictions[kind] = preds
        self._write_plots()
        return self.predictions

    def _load_predictions(self):
        for kind, _ in _model_entries(self.cfg):
            if kind not in self.predictions:
                self.predictions[kind] = [
                    read_trajectory_csv(self.out / "predictions" / f"{kind}_{i:04d}.csv")
                    for i in self.prep.test_index
                ]

    def _write_plots(self):
        plot_dir = self._dir("plots")
        for k, i in enumerate(self.prep.test_index):
            preds = {name: out[k] for name, out in self.predictions.items()}
            m = min([len(self.prep.test[k])] + [len(p) for p in preds.values()])
            write_plot_csv(
                plot_dir / f"plot_{i:04d}.csv",
                _truncate(self.prep.test[k], m),
                {name: _truncate(p, m) for name, p in preds.items()},
            )

    def evaluate(self) -> dict:
        self._load_predictions()
        metrics = evaluate_stage(self.cfg, self.prep, self.predictions, self.data)
        _write_json(self._dir() / "metrics.json", metrics)
        for name in self.predictions:
            MetricsReport.from_dict(metrics[name]).write_csv(self.out / f"metrics_{name}.csv")
        return metrics

    def write_manifest(self):
        cfg = self.cfg
        seeds = {"preprocessing": cfg["preprocessing"].get("seed", 0)}
        if cfg["experiment"] == "lorenz":
            seeds["generator"] = cfg.get("generator", {}).get("seed", 0)
        split_rule = cfg.get("evaluation", {}).get("split", {})
        if split_rule.get("rule") == "shuffle":
            seeds["split"] = split_rule.get("seed", 0)
        tdtf = _model_options(cfg, "tdtf")
        notes = []
        if tdtf is not None:
            seeds["tdtf_init"] = tdtf.get("seed", 0)
            seeds["tdtf_train"] = tdtf.get("train", {}).get("seed", tdtf.get("seed", 0))
            notes.append("tdtf init: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per matrix, b = 0")
        if cfg["experiment"] == "reaction_diffusion":
            notes += [RD_SOLVER_NOTE, f"initial condition: {RD_INITIAL_CONDITION}"]
        _write_json(self._dir() / "manifest.json", {
            "library": "delayroll",
            "version": __version__,
            "config": cfg,
            "seeds": seeds,
            "split": {"test_indices": self.prep.test_index},
            "normalizer": self.prep.normalizer.to_dict(),
            "notes": notes,
        })

    def run(self) -> dict:
        self.generate()
        for kind, _ in _model_entries(self.cfg):
            if kind == "tddmd":
                self.fit()
            else:
                self.train()
        self.rollout()
        return self.evaluate()


def run(cfg: dict, out_dir) -> dict:
    """Full pipeline; returns the metrics dictionary."""
    return Pipeline(cfg, out_dir).run()


# ------------------------------------------------------------------- sweep


def worker_count() -> int:
    """Worker cap from ``DELAYROLL_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DELAYROLL_THREADS", "1")))
    except ValueError:
        return 1


def _sweep_cell(args):
    cfg, data, n, h, seed = args
    opts = _model_options(cfg, "tdtf")
    opts = dict(opts, h=h, seed=seed, train=dict(opts.get("train", {}), seed=seed))
    try:
        prep = preprocess(cfg, data, n=n)
        model_cfg, _, params, _ = train_tdtf_stage(opts, prep)
        preds = rollout_stage("tdtf", (model_cfg, params), prep, cfg.get("evaluation", {}).get("horizon"))
    except StageError as exc:
        return {"status": f"failed:{exc.stage}", "rmse": float("nan")}
    except ConfigError as exc:
        return {"status": f"failed:config:{exc.path}", "rmse": float("nan")}
    scores = [rmse(p, _truncate(t, len(p))) for p, t in zip(preds, prep.test)]
    return {"status": "ok", "rmse": float(np.mean(scores))}


def sweep(cfg: dict, n_values, h_values, repeats: int = 5, seed_stride: int = 1, out_path=None) -> list:
    """TD-TF rollout RMSE over an ``(n, h)`` grid, averaged over repeats.

    Repeat ``r`` trains with seed ``base + r * seed_stride``, ``base`` being
    the tdtf seed in the config. Failed repeats are named in the status
    column and left out of the mean; the sweep carries on.
    """
    n_values, h_values = list(n_values), list(h_values)
    if not n_values or not h_values:
        raise ConfigError("sweep grid must be non-empty", "sweep")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}", "sweep.repeats")
    opts = _model_options(cfg, "tdtf")
    if opts is None:
        raise ConfigError("sweep needs a tdtf entry", "models")
    base = opts.get("seed", 0)
    data = generate(cfg)
    cells = [(n, h) for n in n_values for h in h_values]
    jobs = [(cfg, data, n, h, base + r * seed_stride) for n, h in cells for r in range(repeats)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    rows = []
    for c, (n, h) in enumerate(cells):
        cell = results[c * repeats:(c + 1) * repeats]
        ok = [r["rmse"] for r in cell if r["status"] == "ok"]
        failed = sorted({r["status"] for r in cell if r["status"] != "ok"})
        rows.append({
            "n": n,
            "h": h,
            "repeats": repeats,
            "mean_rmse": float(np.mean(ok)) if ok else float("nan"),
            "std_rmse": float(np.std(ok)) if ok else float("nan"),
            "status": "ok" if not failed else ";".join(failed),
        })
        logger.info("sweep n=%d h=%d: %s", n, h, rows[-1]["status"])
    if out_path is not None:
        with Path(out_path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows
