"""Command-line front end: ``treeflow-bench <command> --data ... --seed ... --out ...``.

Every run writes deterministic artifacts, a ``manifest.json`` holding the
resolved configuration and artifact SHA-256 sums, and a separate
``runtime.json`` with wall-clock timings (kept out of the manifest so replays
compare byte for byte).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .data import (
    BUILTIN_BLOBS,
    DataError,
    Dataset,
    builtin_blobs,
    load_csv,
    load_regression_csv,
    make_blobs,
    standardize,
    train_test_split,
    write_csv,
)
from .metrics import correlation_error, timed, tstr, wasserstein_1d_mean

log = logging.getLogger("treeflow_bench")


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text) -> list[float]:
    if isinstance(text, list):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


COMMON = {
    "data": (str, None, "CSV path or builtin blob name (" + ", ".join(BUILTIN_BLOBS) + ")"),
    "seed": (int, 0, "base seed"),
    "label_column": (str, "label", "label column of a classification CSV"),
}

PARAMS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "discover": {
        "samples": (int, 3200, "points drawn for builtin blob datasets"),
        "epochs": (int, 400, "score-net epochs"),
        "batch": (int, 128, "score-net batch size"),
        "lr": (float, 1e-3, "initial learning rate (cosine-annealed to 0)"),
        "n_steps": (int, 100, "diffusion steps N"),
        "beta_start": (float, 1e-4, "first beta"),
        "beta_end": (float, 0.02, "last beta"),
        "time_scale": (str, "continuous", "continuous (rate N*beta_i) or per-step (raw beta_i)"),
        "criterion": (str, "spread", "merge criterion: spread or moment"),
        "eps": (float, 0.1, "threshold for the moment criterion"),
        "dump_at": (_floats, [0.5], "PF-ODE snapshot times"),
        "allow_highdim": (_bool, False, "accept data with more than two features"),
    },
    "entropy": {
        "tree_depth": (int, 15, "depth of the entropy tree"),
        "n_steps": (int, 100, "diffusion steps N for the SNR proxy"),
        "beta_start": (float, 1e-4, "first beta"),
        "beta_end": (float, 0.02, "last beta"),
        "literal_snr": (_bool, False, "use per-step alpha instead of cumulative alpha-bar"),
    },
    "treeflow": {
        "repeat": (int, 5, "number of seeds (seed, seed+1, ...)"),
        "test_fraction": (float, 0.25, "stratified test share"),
        "tree_depth": (int, 10, "conditioning tree depth"),
        "steps": (int, 1000, "training steps"),
        "batch": (int, 256, "batch size"),
        "lr": (float, 1e-3, "AdamW learning rate"),
        "weight_decay": (float, 0.01, "AdamW decoupled weight decay"),
        "euler_steps": (int, 50, "generation Euler steps"),
        "per_example_t": (_bool, False, "draw t per row instead of per batch"),
        "emit_leaf": (_bool, False, "add a __leaf column to synthetic CSVs"),
    },
    "distill": {
        "test_fraction": (float, 0.25, "stratified test share"),
        "oracle_trees": (int, 100, "forest size for pseudo-labels"),
        "oracle_depth": (int, 15, "forest tree depth"),
        "teacher_depth": (int, 15, "teacher tree depth"),
        "steps": (int, 30000, "split-model training steps"),
        "batch": (int, 256, "batch size"),
        "lr": (float, 1e-3, "Adam learning rate"),
    },
    "boost": {
        "stages": (int, 20, "boosting stages M"),
        "eta": (float, 1.0, "learning rate"),
        "weak_depth": (int, 2, "weak learner depth"),
        "target_column": (str, "y", "numeric target column"),
    },
}


def _spec(command: str) -> dict:
    return {**COMMON, **PARAMS[command]}


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    spec = _spec(command)
    unknown = sorted(set(file_values) - set(spec))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default, _) in spec.items():
        raw = flag_values.get(key)
        if raw is None:
            raw = file_values.get(key, default)
        try:
            cfg[key] = conv(raw) if raw is not None else None
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    if not cfg["data"]:
        raise UsageError("--data is required")
    return cfg


# -- helpers ----------------------------------------------------------------

def _is_builtin(data: str) -> bool:
    return data.lower().replace("-", "_") in BUILTIN_BLOBS


def _load_classification(cfg: dict) -> Dataset:
    if _is_builtin(cfg["data"]):
        return make_blobs(builtin_blobs(cfg["data"], cfg["seed"], cfg.get("samples", 3200)))
    return load_csv(cfg["data"], cfg["label_column"])


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _mean_std(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std())}


# -- commands -----------------------------------------------------------------

def cmd_discover(cfg: dict, out: Path) -> dict:
    from .diffusion import ScoreTrainConfig, linear_beta_schedule, reverse_pf_ode, \
        simulate_learned_forward, train_score_net
    from .hierarchy import build_dendrogram, check_ultrametric

    raw = _load_classification(cfg)
    if raw.n_features > 2 and not cfg["allow_highdim"]:
        raise UsageError(f"discover expects 2-D data, got {raw.n_features} features (pass --allow-highdim)")
    ds, scaler = standardize(raw)
    sched = linear_beta_schedule(cfg["n_steps"], cfg["beta_start"], cfg["beta_end"])
    model = train_score_net(ds, sched, ScoreTrainConfig(cfg["epochs"], cfg["batch"], cfg["lr"], cfg["seed"]))
    model.save(out / "score_net.bin")
    traj = simulate_learned_forward(model, ds.features, cfg["seed"], cfg["time_scale"])
    clusters = [np.flatnonzero(ds.labels == c) for c in range(ds.class_count)]
    labels = list(raw.label_names) or list(range(ds.class_count))
    link = build_dendrogram(traj, clusters, labels, cfg["criterion"], cfg["eps"])
    (out / "linkage.json").write_text(link.to_json() + "\n", encoding="utf-8")
    ok, violation = check_ultrametric(link)

    from .rng import stream

    noise = stream(cfg["seed"], "pf_ode_noise").standard_normal(ds.features.shape)
    flow = reverse_pf_ode(model, noise, time_scale=cfg["time_scale"])
    snaps = []
    for t in cfg["dump_at"]:
        name = f"pf_ode_t{t:.2f}.csv"
        write_csv(out / name, flow.at(t), ds.feature_names)
        snaps.append(name)
    summary = {
        "events": [e.time for e in link.events],
        "event_count": len(link.events),
        "ultrametric_holds": ok,
        "ultrametric_violation": violation,
        "dt": 1.0 / sched.N,
        "final_loss": model.loss_history[-1],
        "snapshots": snaps,
    }
    if _is_builtin(cfg["data"]):
        spec = builtin_blobs(cfg["data"], cfg["seed"], cfg["samples"])
        centers = np.asarray(spec.centers, dtype=np.float64)
        samples = scaler.inverse(flow.positions[-1])
        dist = np.linalg.norm(samples[:, None, :] - centers[None], axis=2).min(axis=1)
        summary["pf_ode_within_3std"] = float(np.mean(dist <= 3 * spec.std_dev))
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_entropy(cfg: dict, out: Path) -> dict:
    from .diffusion import linear_beta_schedule, snr_entropy_proxy
    from .tree import fit_tree, level_entropy, node_prototype

    ds = _load_classification(cfg)
    if len(np.unique(ds.labels)) < 2:
        raise UsageError("entropy needs at least two classes in the data")
    D = cfg["tree_depth"]
    tree = fit_tree(ds, D)
    ent = level_entropy(tree, ds)
    sched = linear_beta_schedule(cfg["n_steps"], cfg["beta_start"], cfg["beta_end"])
    proxy = snr_entropy_proxy(sched, cumulative=not cfg["literal_snr"])
    rows = [("tree", (D - d) / D, float(ent[d])) for d in range(D, -1, -1)]
    rows += [("diffusion", i / sched.N, float(proxy[i - 1])) for i in range(1, sched.N + 1)]
    write_csv(out / "entropy_curves.csv", np.array([[a, e] for _, a, e in rows]),
              ["axis", "normalized_entropy"], {"curve": [c for c, _, _ in rows]})
    proto, depth, node = [], [], []
    for nid in range(tree.node_count):
        proto.append(node_prototype(tree, ds, nid))
        depth.append(int(tree.depth[nid]))
        node.append(nid)
    write_csv(out / "prototypes.csv", np.array(proto), ds.feature_names, {"depth": depth, "node": node})
    summary = {
        "tree_levels": [float(v) for v in ent[::-1]],
        "tree_monotone": bool(np.all(np.diff(ent[::-1]) >= 0)),
        "proxy_monotone": bool(np.all(np.diff(proxy) >= 0)),
        "proxy_identity_max_error": float(np.max(np.abs(proxy - (1.0 - sched.alpha_bars)))),
        "root_entropy": float(ent[0]),
        "tree_node_count": tree.node_count,
    }
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_treeflow(cfg: dict, out: Path) -> dict:
    from .treeflow import TreeFlowConfig, export_csv, synthesize, train_treeflow

    ds = _load_classification(cfg)
    per_seed, runtimes = [], {}
    for r in range(cfg["repeat"]):
        seed = cfg["seed"] + r
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)

        def run():
            tr, te = train_test_split(ds, cfg["test_fraction"], seed, stratified=True)
            trs, scaler = standardize(tr)
            tes, _ = standardize(te, scaler)
            tf_cfg = TreeFlowConfig(cfg["tree_depth"], cfg["steps"], cfg["batch"], cfg["lr"],
                                    cfg["weight_decay"], cfg["euler_steps"], seed, cfg["per_example_t"])
            model = train_treeflow(trs, tf_cfg)
            syn, leaves = synthesize(model, trs, seed=seed)
            return trs, tes, scaler, model, syn, leaves

        (trs, tes, scaler, model, syn, leaves), seconds = timed(run)
        export_csv(run_dir / "synthetic.csv", syn, scaler, leaves if cfg["emit_leaf"] else None,
                   cfg["label_column"])
        report = {
            "seed": seed,
            "tstr_accuracy": tstr(syn, tes),
            "wasserstein": wasserstein_1d_mean(syn, trs),
            "correlation_error": correlation_error(syn, trs),
            "final_loss": model.loss_history[-1],
            "tree_node_count": model.tree.node_count,
        }
        _dump_json(run_dir / "report.json", report)
        per_seed.append(report)
        runtimes[f"seed_{seed}"] = seconds
    agg = {
        "per_seed": per_seed,
        **{k: _mean_std([r[k] for r in per_seed]) for k in ("tstr_accuracy", "wasserstein", "correlation_error")},
        "standardized_features": True,
        "test_fraction": cfg["test_fraction"],
    }
    _dump_json(out / "report.json", agg)
    agg["runtime_seconds"] = runtimes
    return agg


def cmd_distill(cfg: dict, out: Path) -> dict:
    from .dsmtree import DsmConfig, distill_report, make_teacher, train_split_model

    ds = _load_classification(cfg)
    tr, te = train_test_split(ds, cfg["test_fraction"], cfg["seed"], stratified=True)
    trs, scaler = standardize(tr)
    tes, _ = standardize(te, scaler)
    dcfg = DsmConfig(cfg["oracle_trees"], cfg["oracle_depth"], cfg["teacher_depth"], cfg["steps"],
                     cfg["batch"], cfg["lr"], cfg["seed"])
    _, teacher = make_teacher(trs, dcfg)
    model = train_split_model(trs, teacher, dcfg)
    (out / "teacher.json").write_text(teacher.to_json() + "\n", encoding="utf-8")
    model.net.save(out / "split_model.bin")
    report = distill_report(model, teacher, tes, dcfg.steps, dcfg.seed)
    _dump_json(out / "distill_report.json", report)
    return report


def cmd_boost(cfg: dict, out: Path) -> dict:
    from .tree import fit_boosted

    if cfg["stages"] < 1:
        raise UsageError("--stages must be at least 1")
    X, y, _ = load_regression_csv(cfg["data"], cfg["target_column"])
    model = fit_boosted(X, y, cfg["stages"], cfg["eta"], cfg["weak_depth"])
    rows = model.trace_rows()
    with (out / "boost_trace.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "dgtsm", "partition_cells"])
        w.writerows([s, repr(float(d)), p] for s, d, p in rows)
    return {"stages_fitted": len(rows)}


COMMANDS = {"discover": cmd_discover, "entropy": cmd_entropy, "treeflow": cmd_treeflow,
            "distill": cmd_distill, "boost": cmd_boost}


def _artifacts(out: Path) -> dict[str, str]:
    skip = {"manifest.json", "runtime.json"}
    return {p.relative_to(out).as_posix(): _sha256(p)
            for p in sorted(out.rglob("*")) if p.is_file() and p.name not in skip}


def execute(command: str, cfg: dict, out: Path) -> dict:
    """Run one subcommand, then write manifest.json and runtime.json."""
    out.mkdir(parents=True, exist_ok=True)
    result, seconds = timed(lambda: COMMANDS[command](cfg, out))
    stored = dict(cfg)
    if not _is_builtin(cfg["data"]):
        data_path = Path(cfg["data"]).resolve()
        stored["data"] = str(data_path)
        data_sha = _sha256(data_path)
    else:
        data_sha = None
    manifest = {
        "command": command,
        "config": stored,
        "seed": cfg["seed"],
        "data_sha256": data_sha,
        "version": __version__,
        "artifacts": _artifacts(out),
    }
    _dump_json(out / "manifest.json", manifest)
    runtime = {"total_seconds": seconds}
    if isinstance(result, dict) and "runtime_seconds" in result:
        runtime["runs"] = result["runtime_seconds"]
    _dump_json(out / "runtime.json", runtime)
    return manifest


def replay(manifest_path, out: Path, command: str | None = None) -> tuple[dict, list[str]]:
    """Rerun a manifest into ``out``; returns the new manifest and mismatching artifacts."""
    old = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    if command is not None and command != old["command"]:
        raise UsageError(f"manifest was written by '{old['command']}', not '{command}'")
    if old.get("data_sha256") and _sha256(Path(old["config"]["data"])) != old["data_sha256"]:
        raise UsageError(f"input data {old['config']['data']} changed since the manifest was written")
    new = execute(old["command"], old["config"], out)
    a, b = old["artifacts"], new["artifacts"]
    bad = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    return new, bad


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeflow-bench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="flat key = value file; flags take precedence")
        p.add_argument("--from-manifest", help="replay a manifest.json and verify artifact checksums")
        for key, (_, default, help_text) in _spec(name).items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           nargs="+" if key == "dump_at" else None,
                           help=f"{help_text} (default: {default})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.from_manifest:
            _, bad = replay(args.from_manifest, out, args.command)
            if bad:
                print("artifacts differ from manifest: " + ", ".join(bad), file=sys.stderr)
                return 3
            print(f"replayed {args.from_manifest}: all artifacts identical")
            return 0
        flags = {k: v for k, v in vars(args).items() if k in _spec(args.command) and v is not None}
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_values, flags)
        manifest = execute(args.command, cfg, out)
    except (UsageError, DataError) as exc:
        print(f"treeflow-bench {args.command}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(manifest['artifacts'])} artifacts to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
