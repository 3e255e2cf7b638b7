"""Command-line front end: ``scfrec <subcommand> --workdir DIR [options]``.

Option values are resolved as command-line flag, then ``key = value`` line
in the ``--config`` file (keys are flag names with ``_`` or ``-``), then the
built-in default.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from scfrec import pipeline
from scfrec.dataset import ParseError
from scfrec.evaluation import format_table
from scfrec.synthetic import planted_interactions, write_interactions_csv
from scfrec.training import TrainConfig

log = logging.getLogger("scfrec")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _paths(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    for name in names:
        if name not in pipeline.MODEL_IDS:
            raise argparse.ArgumentTypeError(f"unknown model {name!r}")
    return names


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _optional_int(text: str):
    return None if text.lower() in ("", "none", "all") else _positive_int(text)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# (key, type, default, help)
_TRAIN = [
    ("model", str, "scf-splr", "model id: " + ", ".join(pipeline.MODEL_IDS)),
    ("learning_rate", float, 0.05, "gradient-ascent step size"),
    ("batch_size", _positive_int, 5000, "train records per mini-batch"),
    ("sampling_rate", _positive_int, 5, "sampled potential/negative items per record (m)"),
    ("k0", _positive_int, 200, "free latent dimensions K0"),
    ("reg_lambda", float, 0.3, "L2 regularization strength"),
    ("eta1", float, 0.01, "confidence weight of positive-over-potential pairs"),
    ("eta2", float, 0.01, "confidence weight of potential-over-negative pairs"),
    ("epochs", _positive_int, 200, "training epochs"),
    ("eval_every", _positive_int, 1, "validate every this many epochs"),
    ("eval_sample", _optional_int, 1000, "validation users sampled per evaluation ('all' for every user)"),
    ("init_scale", float, 0.01, "half-width of the uniform parameter init"),
    ("seed", int, 0, "random seed"),
    ("user_features", _paths, (), "extra user feature files for multi-feature (comma-separated)"),
    ("item_features", _paths, (), "extra item feature files for multi-feature (comma-separated)"),
]

OPTIONS: dict[str, list[tuple]] = {
    "synth": [
        ("output", str, None, "CSV file to write"),
        ("n_users", _positive_int, 400, "number of users"),
        ("n_items", _positive_int, 200, "number of items"),
        ("n_communities", _positive_int, 4, "user community blocks"),
        ("n_categories", _positive_int, 4, "item category blocks"),
        ("p_in", float, 0.3, "purchase probability inside matched blocks"),
        ("p_out", float, 0.01, "purchase probability elsewhere"),
        ("seed", int, 0, "random seed"),
    ],
    "prepare": [
        ("input", str, None, "interaction file (user,item[,rating,timestamp])"),
        ("format", str, None, "csv or tsv (default: from the file extension)"),
        ("k_core", int, 5, "minimum interactions per user and item"),
        ("ratios", _floats, (0.8, 0.1, 0.1), "train,validation,test fractions"),
        ("min_year", int, None, "drop records before this year"),
        ("seed", int, 0, "random seed"),
    ],
    "spectral": [
        ("k_user", _positive_int, 100, "user-side eigenvectors K1"),
        ("k_item", _positive_int, 100, "item-side eigenvectors K2"),
        ("drop_trivial", _bool, False, "drop eigenvectors with eigenvalue ~0"),
        ("seed", int, 0, "random seed"),
    ],
    "cluster": [
        ("n_clusters_user", _positive_int, None, "user clusters (default ceil(sqrt(n_users)))"),
        ("n_clusters_item", _positive_int, None, "item clusters (default ceil(sqrt(n_items)))"),
        ("seed", int, 0, "random seed"),
    ],
    "train": _TRAIN,
    "evaluate": [
        ("model", str, "scf-splr", "model id"),
        ("split", str, "test", "held-out split: test or validation"),
        ("n_values", _ints, (2, 5, 10, 20), "cut-offs n (comma-separated)"),
        ("sample", _optional_int, None, "evaluate a seeded random subset of users"),
        ("gauc_eta1", float, 0.0, "GAUC weight of the positive-over-potential term"),
        ("gauc_eta2", float, 0.0, "GAUC weight of the potential-over-negative term"),
        ("seed", int, 0, "random seed"),
    ],
    "recommend": [
        ("model", str, "scf-splr", "model id"),
        ("user", str, None, "external user id"),
        ("n", _positive_int, 10, "number of items"),
    ],
    "compare": [
        ("models", _names, ("mf-bpr", "mf-splr", "scf-splr"), "model ids (comma-separated)"),
        ("seeds", _ints, (0, 1, 2, 3, 4), "training seeds (comma-separated)"),
        ("split", str, "test", "held-out split: test or validation"),
        ("n_values", _ints, (2, 5, 10, 20), "cut-offs n (comma-separated)"),
    ] + [opt for opt in _TRAIN if opt[0] not in ("model", "seed")],
}

_REQUIRED = {"synth": ("output",), "prepare": ("input",), "recommend": ("user",)}

_HELP = {
    "synth": "write a planted block-structure interaction CSV",
    "prepare": "load, k-core filter and split interactions into splits/",
    "spectral": "eigensolve both hypergraph Laplacians into features/",
    "cluster": "k-means the spectral features into clusters/",
    "train": "train a model into models/",
    "evaluate": "write a metric report into reports/",
    "recommend": "print a user's top-n external item ids",
    "compare": "train and evaluate models over several seeds",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scfrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, options in OPTIONS.items():
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        if name != "synth":
            p.add_argument("--workdir", default=argparse.SUPPRESS, help="pipeline working directory (default: .)")
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key, typ, default, text in options:
            flag = "--" + key.replace("_", "-")
            shown = "" if default in (None, ()) else f" (default: {_format_default(default)})"
            extra = {"choices": pipeline.MODEL_IDS} if key == "model" else {}
            if name == "recommend" and key == "n":
                p.add_argument("-n", flag, type=typ, default=argparse.SUPPRESS, help=text + shown, **extra)
            else:
                p.add_argument(flag, type=typ, default=argparse.SUPPRESS, help=text + shown, **extra)
    return parser


def _format_default(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return value


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve(command: str, ns: argparse.Namespace, parser) -> dict:
    """Merge flags, config file and defaults for one subcommand."""
    known = {key for opts in OPTIONS.values() for key, *_ in opts} | {"workdir"}
    config = read_config(ns.config) if ns.config else {}
    for key in config:
        if key not in known:
            parser.error(f"unknown config key {key!r}")
    values = {}
    options = OPTIONS[command] + ([("workdir", str, ".", "")] if command != "synth" else [])
    for key, typ, default, _ in options:
        if hasattr(ns, key):
            values[key] = getattr(ns, key)
        elif key in config:
            try:
                values[key] = typ(config[key])
            except (ValueError, argparse.ArgumentTypeError) as exc:
                parser.error(f"config key {key}: {exc}")
        else:
            values[key] = default
        if values[key] is None and key in _REQUIRED.get(command, ()):
            parser.error(f"--{key.replace('_', '-')} is required")
    if "model" in values and values["model"] not in pipeline.MODEL_IDS:
        parser.error(f"invalid model {values['model']!r}")
    return values


def _train_config(v: dict, seed=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=v["learning_rate"],
        batch_size=v["batch_size"],
        reg_lambda=v["reg_lambda"],
        eta1=v["eta1"],
        eta2=v["eta2"],
        sampling_rate=v["sampling_rate"],
        max_iters=v["epochs"],
        seed=v["seed"] if seed is None else seed,
        eval_every=v["eval_every"],
        n_factors=v["k0"],
        init_scale=v["init_scale"],
    )


def run(command: str, v: dict) -> int:
    if command == "synth":
        data = planted_interactions(
            v["n_users"], v["n_items"], v["n_communities"], v["n_categories"],
            v["p_in"], v["p_out"], v["seed"],
        )
        Path(v["output"]).parent.mkdir(parents=True, exist_ok=True)
        write_interactions_csv(v["output"], data.interactions)
        log.info("wrote %d interactions to %s", len(data.interactions), v["output"])
    elif command == "prepare":
        pipeline.prepare(
            v["input"], v["workdir"], v["format"], v["k_core"], v["ratios"], v["seed"], v["min_year"]
        )
    elif command == "spectral":
        pipeline.compute_spectral(v["workdir"], v["k_user"], v["k_item"], v["seed"], v["drop_trivial"])
    elif command == "cluster":
        pipeline.compute_clusters(v["workdir"], v["n_clusters_user"], v["n_clusters_item"], v["seed"])
    elif command == "train":
        pipeline.train_step(
            v["workdir"], v["model"], _train_config(v), v["eval_sample"],
            v["user_features"], v["item_features"],
        )
    elif command == "evaluate":
        report = pipeline.evaluate_step(
            v["workdir"], v["model"], v["split"], v["n_values"], v["sample"], v["seed"],
            v["gauc_eta1"], v["gauc_eta2"],
        )
        sys.stdout.write(format_table({v["model"]: [report]}, v["n_values"]))
    elif command == "recommend":
        for item in pipeline.recommend_step(v["workdir"], v["model"], v["user"], v["n"]):
            print(item)
    elif command == "compare":
        v = {**v, "seed": 0}
        results = pipeline.compare_step(
            v["workdir"], v["models"], v["seeds"], _train_config(v), v["split"], v["n_values"],
            v["eval_sample"], v["user_features"], v["item_features"],
        )
        sys.stdout.write(format_table(results, v["n_values"]))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if ns.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        values = resolve(ns.command, ns, parser)
        return run(ns.command, values)
    except pipeline.MissingArtifactError as exc:
        print(f"scfrec {ns.command}: error: {exc}", file=sys.stderr)
        return 3
    except (ParseError, ValueError, KeyError, OSError) as exc:
        print(f"scfrec {ns.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
