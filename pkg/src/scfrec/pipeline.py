"""End-to-end pipeline steps over a fixed working-directory layout.

Layout::

    workdir/
      splits/    train.tsv validation.tsv test.tsv users.tsv items.tsv
      features/  user.txt item.txt
      clusters/  user.tsv item.tsv sets.tsv
      models/    <model>.ckpt <model>.history.jsonl
      reports/   <model>.<split>.{jsonl,txt,png} ...
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from scfrec.dataset import (
    DatasetSplit,
    k_core_filter,
    load_interactions,
    read_split,
    split_dataset,
    write_split,
)
from scfrec.evaluation import DEFAULT_N_VALUES, EvalReport, evaluate_run, format_table, validation_hook
from scfrec.model import init_multi_params, load_model, recommend_top_n, save_model
from scfrec.plotting import plot_history, plot_metric_curves, plot_spectrum
from scfrec.preference_sets import build_preference_sets, positive_sets
from scfrec.spectral import (
    build_laplacian,
    cluster_vertices,
    default_n_clusters,
    read_clusters,
    read_features,
    spectral_features,
    write_clusters,
    write_features,
)
from scfrec.training import TrainConfig, popularity_model, train, train_pointwise

log = logging.getLogger(__name__)

MODEL_IDS = ("mp", "pointwise", "mf-bpr", "scf-bpr", "mf-splr", "scf-splr", "multi-feature")


class MissingArtifactError(RuntimeError):
    def __init__(self, path, step):
        self.step = step
        super().__init__(f"{path} not found: run {step} first")


@dataclass(frozen=True)
class Workdir:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    def dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def need(self, relpath: str, step: str) -> Path:
        path = self.root / relpath
        if not path.exists():
            raise MissingArtifactError(path, step)
        return path


# -- model fitting --------------------------------------------------------------


def _as_list(clusters):
    return list(clusters) if isinstance(clusters, (list, tuple)) else [clusters]


def fit_model(
    model_id: str,
    split: DatasetSplit,
    cfg: TrainConfig,
    *,
    user_features=None,
    item_features=None,
    user_clusters=None,
    item_clusters=None,
    extra_user_features: Sequence[np.ndarray] = (),
    extra_item_features: Sequence[np.ndarray] = (),
    eval_sample: int | None = None,
):
    """Train one of :data:`MODEL_IDS` on ``split.train``, selecting on validation.

    ``*-bpr`` ids force ``eta1 = eta2 = 0``. SPLR ids need cluster
    assignments whenever an eta is positive; ``scf-*`` and
    ``multi-feature`` need spectral features.

    Returns:
        (model, TrainResult or None for ``mp``)
    """
    if model_id not in MODEL_IDS:
        raise ValueError(f"unknown model {model_id!r}; choose from {MODEL_IDS}")
    train_R = split.train
    if model_id == "mp":
        return popularity_model(train_R), None

    hook = None
    if len(split.validation):
        hook = validation_hook(train_R, split.validation, (5,), sample=eval_sample, seed=cfg.seed)
    if model_id == "pointwise":
        result = train_pointwise(split, cfg, hook)
        return result.params, result

    if model_id.endswith("-bpr"):
        cfg = replace(cfg, eta1=0.0, eta2=0.0)
    needs_sets = cfg.eta1 > 0 or cfg.eta2 > 0
    if needs_sets:
        if user_clusters is None or item_clusters is None:
            raise ValueError(f"{model_id} needs user and item clusters")
        ucl, icl = _as_list(user_clusters), _as_list(item_clusters)
        if model_id == "multi-feature":
            ucl += [cluster_vertices(E, default_n_clusters(len(E)), cfg.seed, "user") for E in extra_user_features]
            icl += [cluster_vertices(F, default_n_clusters(len(F)), cfg.seed, "item") for F in extra_item_features]
        sets = build_preference_sets(train_R, ucl, icl)
    else:
        sets = positive_sets(train_R)

    if model_id.startswith("mf"):
        result = train("mf", split, sets, None, cfg, hook)
    elif model_id.startswith("scf"):
        if user_features is None or item_features is None:
            raise ValueError(f"{model_id} needs spectral features")
        result = train("scf", split, sets, (user_features, item_features), cfg, hook)
    else:
        Es = ([] if user_features is None else [user_features]) + list(extra_user_features)
        Fs = ([] if item_features is None else [item_features]) + list(extra_item_features)
        params = init_multi_params(
            train_R.n_users, train_R.n_items, cfg.n_factors, Es, Fs,
            seed=cfg.seed, scale=cfg.init_scale,
        )
        result = train("multi", split, sets, None, cfg, hook, params=params)
    return result.params, result


# -- steps ------------------------------------------------------------------------


def prepare(input_path, workdir, fmt=None, k_core=5, ratios=(0.8, 0.1, 0.1), seed=0, min_year=None):
    wd = Workdir(workdir)
    if fmt is None:
        fmt = "tsv" if str(input_path).endswith((".tsv", ".tab")) else "csv"
    R = load_interactions(input_path, fmt, min_year=min_year)
    R = k_core_filter(R, k_core)
    if len(R) < 3:
        raise ValueError(f"only {len(R)} records left after {k_core}-core filtering")
    split = split_dataset(R, ratios, seed)
    write_split(split, wd.dir("splits"))
    log.info(
        "prepared %d users, %d items: train %d / validation %d / test %d (%d cold removed)",
        R.n_users, R.n_items, len(split.train), len(split.validation), len(split.test),
        len(split.cold_removed),
    )
    return split


def load_prepared(workdir) -> DatasetSplit:
    wd = Workdir(workdir)
    wd.need("splits/train.tsv", "prepare")
    return read_split(wd.root / "splits")


def compute_spectral(workdir, k_user=100, k_item=100, seed=0, drop_trivial=False):
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    out = {}
    for side, K in (("user", k_user), ("item", k_item)):
        L = build_laplacian(split.train, side)
        K = min(K, L.n_vertices)
        out[side] = spectral_features(L, K, seed, drop_trivial=drop_trivial)
        write_features(wd.dir("features") / f"{side}.txt", out[side])
    plot_spectrum(out, wd.dir("reports") / "spectrum.png")
    return out


def load_features(workdir):
    wd = Workdir(workdir)
    return {
        side: read_features(wd.need(f"features/{side}.txt", "spectral"))
        for side in ("user", "item")
    }


def compute_clusters(workdir, n_clusters_user=None, n_clusters_item=None, seed=0):
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    feats = load_features(workdir)
    out = {}
    for side, k in (("user", n_clusters_user), ("item", n_clusters_item)):
        feat = feats[side]
        k = k or default_n_clusters(feat.n_vertices)
        out[side] = cluster_vertices(feat, min(k, feat.n_vertices), seed)
        write_clusters(wd.dir("clusters") / f"{side}.tsv", out[side])
    sets = build_preference_sets(split.train, out["user"], out["item"])
    with open(wd.dir("clusters") / "sets.tsv", "w", encoding="utf-8", newline="\n") as fh:
        sets.dump(fh)
    return out


def load_clusters(workdir):
    wd = Workdir(workdir)
    return {
        side: read_clusters(wd.need(f"clusters/{side}.tsv", "cluster"), side)
        for side in ("user", "item")
    }


def _read_extra(paths, n_rows, what):
    mats = []
    for p in paths or ():
        feat = read_features(p)
        if feat.n_vertices != n_rows:
            raise ValueError(f"{p}: {feat.n_vertices} rows, expected {n_rows} {what}")
        mats.append(feat.features)
    return mats


def train_step(workdir, model_id, cfg: TrainConfig, eval_sample=1000,
               user_feature_paths=(), item_feature_paths=()):
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    kwargs = {}
    splr = model_id in ("mf-splr", "scf-splr", "multi-feature") and (cfg.eta1 > 0 or cfg.eta2 > 0)
    if model_id.startswith("scf") or model_id == "multi-feature":
        feats = load_features(workdir)
        kwargs.update(user_features=feats["user"].features, item_features=feats["item"].features)
    if splr:
        cl = load_clusters(workdir)
        kwargs.update(user_clusters=cl["user"], item_clusters=cl["item"])
    if model_id == "multi-feature":
        kwargs["extra_user_features"] = _read_extra(user_feature_paths, split.train.n_users, "users")
        kwargs["extra_item_features"] = _read_extra(item_feature_paths, split.train.n_items, "items")
    model, result = fit_model(model_id, split, cfg, eval_sample=eval_sample, **kwargs)
    models = wd.dir("models")
    save_model(models / f"{model_id}.ckpt", model)
    history = result.history if result is not None else []
    with open(models / f"{model_id}.history.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    return model, result


def _heldout(split: DatasetSplit, name: str):
    if name in ("test",):
        return split.test
    if name in ("valid", "validation"):
        return split.validation
    raise ValueError(f"unknown split {name!r}")


def evaluate_step(workdir, model_id, split_name="test", n_values=DEFAULT_N_VALUES,
                  sample=None, seed=0, eta1=0.0, eta2=0.0) -> EvalReport:
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    model = load_model(wd.need(f"models/{model_id}.ckpt", "train"))
    sets = None
    if eta1 > 0 or eta2 > 0:
        cl = load_clusters(workdir)
        sets = build_preference_sets(split.train, cl["user"], cl["item"])
    report = evaluate_run(
        model, split.train, _heldout(split, split_name), n_values,
        sample=sample, seed=seed, sets=sets, eta1=eta1, eta2=eta2,
    )
    reports = wd.dir("reports")
    stem = f"{model_id}.{split_name}"
    (reports / f"{stem}.jsonl").write_text(
        report.to_jsonl(model=model_id, split=split_name), encoding="utf-8"
    )
    table = format_table({model_id: [report]}, n_values)
    (reports / f"{stem}.txt").write_text(
        table + f"users evaluated: {report.users_evaluated}\n", encoding="utf-8"
    )
    plot_metric_curves({model_id: [report]}, n_values, reports / f"{stem}.png", title=stem)
    hist_path = wd.root / "models" / f"{model_id}.history.jsonl"
    if hist_path.exists():
        history = [json.loads(line) for line in hist_path.read_text().splitlines() if line]
        if history:
            plot_history(history, reports / f"{model_id}.history.png", title=model_id)
    return report


def recommend_step(workdir, model_id, user_id: str, n: int) -> list[str]:
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    model = load_model(wd.need(f"models/{model_id}.ckpt", "train"))
    try:
        u = split.train.user_ids.index(user_id)
    except ValueError:
        raise KeyError(f"unknown user {user_id!r}") from None
    items = recommend_top_n(model, u, n, exclude=split.train.items_of(u))
    return [split.train.item_ids[i] for i in items]


def compare_step(workdir, model_ids, seeds, cfg: TrainConfig, split_name="test",
                 n_values=DEFAULT_N_VALUES, eval_sample=1000,
                 user_feature_paths=(), item_feature_paths=()):
    """Train and evaluate several models over several seeds; table + figure."""
    wd = Workdir(workdir)
    split = load_prepared(workdir)
    heldout = _heldout(split, split_name)
    results: dict[str, list[EvalReport]] = {}
    records = []
    for model_id in model_ids:
        for seed in seeds:
            model, _ = _fit_from_workdir(workdir, split, model_id, replace(cfg, seed=seed),
                                         eval_sample, user_feature_paths, item_feature_paths)
            report = evaluate_run(model, split.train, heldout, n_values, seed=seed)
            results.setdefault(model_id, []).append(report)
            records.extend(report.to_records(model=model_id, seed=seed, split=split_name))
    reports = wd.dir("reports")
    with open(reports / "compare.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    (reports / "compare.txt").write_text(format_table(results, n_values), encoding="utf-8")
    plot_metric_curves(results, n_values, reports / "compare.png", title=f"{split_name} set")
    return results


def _fit_from_workdir(workdir, split, model_id, cfg, eval_sample, user_paths, item_paths):
    kwargs = {}
    if model_id.startswith("scf") or model_id == "multi-feature":
        feats = load_features(workdir)
        kwargs.update(user_features=feats["user"].features, item_features=feats["item"].features)
    if model_id in ("mf-splr", "scf-splr", "multi-feature") and (cfg.eta1 > 0 or cfg.eta2 > 0):
        cl = load_clusters(workdir)
        kwargs.update(user_clusters=cl["user"], item_clusters=cl["item"])
    if model_id == "multi-feature":
        kwargs["extra_user_features"] = _read_extra(user_paths, split.train.n_users, "users")
        kwargs["extra_item_features"] = _read_extra(item_paths, split.train.n_items, "items")
    return fit_model(model_id, split, cfg, eval_sample=eval_sample, **kwargs)
