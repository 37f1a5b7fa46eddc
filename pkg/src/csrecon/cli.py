"""Command-line entry point.

Every subcommand reads its parameters either from flags or from a
previously emitted config file (--config), runs the corresponding
pipeline, and writes its outputs plus a canonical config.json into --out.
Outputs carry no timestamps or machine state, so re-running a subcommand
from its emitted config reproduces every file byte for byte.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import dumps_canonical, load_dataset, save_dataset
from .complement import approximate_complement
from .models import ModelBundle, Standardizer, TrainConfig
from .nn import ParamSet
from .scene import generate_dataset
from .topology import GsConfig, geometry_score, gs_complement_augmented
from . import planner as pl
from . import training as tr
from . import viz

PATH_FORMAT = "csrecon-path-v1"


class CliError(ValueError):
    """Bad arguments detected past argparse."""


def _write_config(out: Path, command: str, params: dict) -> None:
    doc = {"command": command, "params": params, "version": __version__}
    (out / "config.json").write_text(dumps_canonical(doc) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps_canonical(obj) + "\n")


def _out_dir(params: dict) -> Path:
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _profile_config(params: dict, **overrides) -> TrainConfig:
    maker = TrainConfig.desk if params.get("profile", "desk") == "desk" else TrainConfig.paper
    chosen = {k: v for k, v in overrides.items() if v is not None}
    return maker(**chosen)


# --------------------------------------------------------------- commands


def cmd_gen_dataset(params: dict) -> int:
    out = _out_dir(params)
    ds = generate_dataset(
        num_scenarios=params["scenarios"],
        samples_per_scenario=params["samples"],
        num_obstacles=params["obstacles"],
        obstacle_radius=params["radius"],
        resolution=params["resolution"],
        seed=params["seed"],
    )
    save_dataset(ds, out)
    _write_config(out, "gen-dataset", params)
    return 0


def cmd_train_vae(params: dict) -> int:
    out = _out_dir(params)
    ds = load_dataset(params["dataset"])
    cfg = _profile_config(
        params,
        seed=params["seed"],
        vae_epochs=params["epochs"],
        batch=params["batch"],
        clusters=params["clusters"],
    )
    enc, dec, curve = tr.train_vae(ds, cfg)
    feature_dim = tr.dataset_features(ds).shape[1]
    bundle = ModelBundle.build(cfg, feature_dim, Standardizer((0.0, 0.0), (1.0, 1.0)))
    bundle.encoder, bundle.decoder = enc, dec
    bundle.save(out / "model")
    _write_json(out / "curve.json", {"vae": curve})
    _write_config(out, "train-vae", params)
    return 0


def cmd_train_wgan(params: dict) -> int:
    out = _out_dir(params)
    ds = load_dataset(params["dataset"])
    base = ModelBundle.load(Path(params["vae"]) / "model")
    cfg = base.config
    for name in ("seed", "epochs", "batch", "clusters"):
        if params[name] is not None:
            cfg = __import__("dataclasses").replace(cfg, **{name: params[name]})
    clusters, std, _, curves = tr.train_multiwgan(ds, base.encoder, cfg)
    g_gen, g_critic, g_std, g_curves = tr.train_global(
        ds, base.encoder, clusters, cfg, include_local=params["local_term"]
    )
    bundle = ModelBundle(
        base.encoder, base.decoder, clusters, g_gen, g_critic, std, cfg,
        base.feature_dim,
    )
    bundle.save(out / "model")
    _write_json(
        out / "curves.json",
        {
            "clusters": [
                {"critic": c.critic, "generator": c.generator} for c in curves
            ],
            "global": {"critic": g_curves.critic, "generator": g_curves.generator},
        },
    )
    _write_config(out, "train-wgan", params)
    return 0


def _interpolate(path: np.ndarray, step: float) -> np.ndarray:
    dense = [path[:1]]
    for a, b in zip(path, path[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        t = np.linspace(0.0, 1.0, n + 1)[1:].reshape(-1, 1)
        dense.append(a + t * (b - a))
    return np.concatenate(dense)


def cmd_train_path(params: dict) -> int:
    out = _out_dir(params)
    ds = load_dataset(params["dataset"])
    base = ModelBundle.load(Path(params["vae"]) / "model")
    query = pl.PlanQuery(
        x_init=tuple(params["start"]),
        x_goal=tuple(params["goal"]),
        goal_radius=params["goal_radius"],
        step_size=params["step"],
        time_budget=params["budget"],
        max_iterations=params["iterations"],
    )
    paths, scen_idx = [], []
    for i, e in enumerate(ds.entries):
        res = pl.rrt_star(
            query, ds.arm, e.scenario, pl.uniform_sampler(params["seed"] + 101 * i)
        )
        if res.success:
            paths.append(_interpolate(res.path, params["interp"]))
            scen_idx.append(i)
    if not paths:
        raise CliError("no scenario yielded a reference path; widen the budget")
    cfg = base.config
    for name in ("seed", "epochs", "batch"):
        if params[name] is not None:
            cfg = __import__("dataclasses").replace(cfg, **{name: params[name]})
    has_clusters = len(base.clusters) > 0 and params["use_cs_critics"]
    model = tr.train_path_generator(
        paths,
        scen_idx,
        ds,
        base.encoder,
        cfg,
        cs_clusters=base.clusters if has_clusters else None,
        cs_standardizer=base.standardizer if has_clusters else None,
    )
    ps = ParamSet()
    ps.register_many("path.gen", model.generator.params)
    ps.register_many("path.critic", model.critic.params)
    ps.save(
        out / "path_model",
        hyper={"bundle_format": PATH_FORMAT, "config": cfg.to_dict()},
        seed=cfg.seed,
    )
    _write_json(out / "paths.json", {"trained_on": len(paths), "scenarios": scen_idx})
    _write_config(out, "train-path", params)
    return 0


def _subsample(rng, pts: np.ndarray, n: int) -> np.ndarray:
    if len(pts) <= n:
        return pts
    return pts[rng.choice(len(pts), size=n, replace=False)]


def cmd_eval_gsc(params: dict) -> int:
    out = _out_dir(params)
    ds_a = load_dataset(params["a"])
    ds_b = load_dataset(params["b"])
    if len(ds_a.entries) != len(ds_b.entries):
        raise CliError("datasets hold different scenario counts")
    bundle = None
    if params["bundle"]:
        bundle = ModelBundle.load(Path(params["bundle"]) / "model")
    cfg_raw = GsConfig(
        n_landmarks=params["landmarks"],
        n_repeats=params["repeats"],
        gamma=params["gamma_raw"],
        t_max=params["t_max"],
        seed=params["seed"],
    )
    cfg_c = GsConfig(
        n_landmarks=params["landmarks"],
        n_repeats=params["repeats"],
        gamma=params["gamma"],
        t_max=params["t_max"],
        seed=params["seed"],
    )
    per = []
    for i, (ea, eb) in enumerate(zip(ds_a.entries, ds_b.entries)):
        rng = np.random.default_rng(np.random.SeedSequence([params["seed"], i]))
        if bundle is None:
            x1 = _subsample(rng, ea.free, params["points"])
        else:
            x1 = tr.sample_cs_states(
                bundle, ea.image, params["points"], seed=params["seed"] + 500 + i,
                source=params["source"],
            )
            x1 = np.clip(x1, -np.pi, np.pi)
        x2 = _subsample(rng, eb.free, params["points"])
        x1c = approximate_complement(x1, params["complement"], seed=11)
        x2c = approximate_complement(x2, params["complement"], seed=12)
        g = geometry_score(x1, x2, cfg_raw)
        gc = gs_complement_augmented(x1, x2, x1c, x2c, cfg_c)
        per.append(
            {
                "id": ea.scenario.id,
                "gs": g,
                "gs_c": gc.value,
                "per_rotation_clouds": gc.per_rotation_clouds,
                "per_rotation_complements": gc.per_rotation_complements,
            }
        )
    report = {
        "gs": float(np.mean([p["gs"] for p in per])),
        "gs_c": float(np.mean([p["gs_c"] for p in per])),
        "per_scenario": per,
        "config": params,
        "seeds": {"gs": params["seed"], "complement": [11, 12]},
    }
    _write_json(out / "gsc.json", report)
    _write_config(out, "eval-gsc", params)
    return 0


def _load_scenario(params: dict):
    ds = load_dataset(params["dataset"])
    sid = params["id"]
    for e in ds.entries:
        if e.scenario.id == sid:
            return ds, e
    raise CliError(f"scenario id {sid} not in dataset")


def _build_query(params: dict) -> pl.PlanQuery:
    return pl.PlanQuery(
        x_init=tuple(params["start"]),
        x_goal=tuple(params["goal"]),
        goal_radius=params["goal_radius"],
        step_size=params["step"],
        time_budget=params["budget"],
        max_iterations=params["iterations"],
    )


def cmd_plan(params: dict) -> int:
    out = _out_dir(params)
    ds, entry = _load_scenario(params)
    query = _build_query(params)
    algo = params["algorithm"]
    if algo == "rrt":
        res = pl.rrt(query, ds.arm, entry.scenario, pl.uniform_sampler(params["seed"]))
    elif algo == "rrt-star":
        res = pl.rrt_star(
            query, ds.arm, entry.scenario, pl.uniform_sampler(params["seed"])
        )
    elif algo == "biased":
        if not params["bundle"]:
            raise CliError("biased planning needs --bundle")
        bundle = ModelBundle.load(Path(params["bundle"]) / "model")
        res = pl.biased_rrt(
            query, ds.arm, entry.scenario, bundle,
            schedule=params["schedule"], t_samples=params["t_samples"],
            seed=params["seed"], resolution=ds.resolution,
        )
    else:
        raise CliError(f"unknown algorithm {algo!r}")
    _write_json(
        out / "plan.json",
        {
            "algorithm": algo,
            "success": res.success,
            "length": res.length if res.success else None,
            "iterations": res.iterations,
            "waypoints": res.path.tolist() if res.success else None,
        },
    )
    if params["svg"]:
        (out / "tree.svg").write_text(viz.render_tree(res.tree, res.path))
        (out / "workspace.svg").write_text(
            viz.render_workspace(
                ds.arm, entry.scenario,
                res.path if res.success else np.array(params["start"]).reshape(1, 2),
            )
        )
    _write_config(out, "plan", params)
    return 0


def cmd_bench(params: dict) -> int:
    out = _out_dir(params)
    ds = load_dataset(params["dataset"])
    bundle = None
    if params["bundle"]:
        bundle = ModelBundle.load(Path(params["bundle"]) / "model")
    query = _build_query(params)
    base_seed = params["seed"]

    def run_rrt(q, arm, scenario, rep):
        return pl.rrt(
            q, arm, scenario, pl.uniform_sampler(base_seed + 1000 * scenario.id + rep)
        )

    def run_star(q, arm, scenario, rep):
        return pl.rrt_star(
            q, arm, scenario, pl.uniform_sampler(base_seed + 1000 * scenario.id + rep)
        )

    def run_biased(q, arm, scenario, rep):
        return pl.biased_rrt(
            q, arm, scenario, bundle, schedule=params["schedule"],
            t_samples=params["t_samples"],
            seed=base_seed + 1000 * scenario.id + rep, resolution=ds.resolution,
        )

    available = {"rrt": run_rrt, "rrt-star": run_star, "biased": run_biased}
    algorithms = {}
    for name in params["algorithms"]:
        if name not in available:
            raise CliError(f"unknown algorithm {name!r}")
        if name == "biased" and bundle is None:
            raise CliError("biased benchmarking needs --bundle")
        algorithms[name] = available[name]
    scenarios = [e.scenario for e in ds.entries]
    rows = pl.benchmark(
        ds.arm, scenarios, [query] * len(scenarios), algorithms,
        repetitions=params["reps"], measure_time=params["measure_time"],
    )
    lines = ["experiment,algorithm,length_mean,time_mean,success_rate"]
    for r in rows:
        lines.append(
            f"{r.experiment},{r.algorithm},{r.length_mean:.6f},"
            f"{r.time_mean:.6f},{r.success_rate:.6f}"
        )
    (out / "bench.csv").write_text("\n".join(lines) + "\n")
    if params["svg"]:
        for e in ds.entries:
            for name, algo in algorithms.items():
                res = algo(query, ds.arm, e.scenario, 0)
                (out / f"tree_{e.scenario.id}_{name}.svg").write_text(
                    viz.render_tree(res.tree, res.path)
                )
    _write_config(out, "bench", params)
    return 0


def cmd_render(params: dict) -> int:
    out = _out_dir(params)
    ds, entry = _load_scenario(params)
    sid = entry.scenario.id
    (out / f"cs_{sid}.svg").write_text(
        viz.render_cs_scatter(entry.free, entry.collision)
    )
    (out / f"ws_{sid}.svg").write_text(
        viz.render_workspace(ds.arm, entry.scenario, np.zeros((1, 2)))
    )
    _write_config(out, "render", params)
    return 0


# ------------------------------------------------------------- arg wiring


def _add_common(p, out_required=True):
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--config", default=None,
        help="re-run from an emitted config.json; stored parameters replace flags",
    )
    p.add_argument(
        "--threads", type=int, default=1,
        help="worker-thread cap (current pipelines run single-threaded)",
    )


def _add_plan_args(p):
    p.add_argument("--start", type=float, nargs=2, default=[0.0, 0.0])
    p.add_argument("--goal", type=float, nargs=2, default=[2.0, 2.0])
    p.add_argument("--goal-radius", dest="goal_radius", type=float, default=0.1)
    p.add_argument("--step", type=float, default=0.15)
    p.add_argument("--budget", type=float, default=1.0, help="seconds")
    p.add_argument("--iterations", type=int, default=20000)


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="csrecon",
        description="configuration-space reconstruction and biased planning",
    )
    root.add_argument("--version", action="version", version=__version__)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="sample scenarios and their CS clouds")
    p.add_argument("--scenarios", type=int, default=100)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--obstacles", type=int, default=3)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=48)
    _add_common(p)

    p = sub.add_parser("train-vae", help="train the scenario encoder/decoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--clusters", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("train-wgan", help="train cluster and global generators")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vae", required=True, help="train-vae output directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument(
        "--no-local-term", dest="local_term", action="store_false",
        help="drop the frozen local critics from the global generator loss",
    )
    _add_common(p)

    p = sub.add_parser("train-path", help="train the path-waypoint generator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vae", required=True, help="train-vae or train-wgan output dir")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--interp", type=float, default=0.05)
    p.add_argument(
        "--no-cs-critics", dest="use_cs_critics", action="store_false",
        help="train without the frozen CS critics' scores",
    )
    _add_plan_args(p)
    _add_common(p)

    p = sub.add_parser("eval-gsc", help="geometry scores between two datasets")
    p.add_argument("a", help="first dataset directory (or the one to reconstruct)")
    p.add_argument("b", help="second dataset directory (ground truth)")
    p.add_argument("--bundle", default=None, help="sample clouds from this model")
    p.add_argument("--source", choices=("clusters", "global"), default="clusters")
    p.add_argument("--points", type=int, default=1500)
    p.add_argument("--complement", type=int, default=1500)
    p.add_argument("--landmarks", type=int, default=32)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--gamma-raw", dest="gamma_raw", type=float, default=0.42)
    p.add_argument("--t-max", dest="t_max", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("plan", help="plan one query on one scenario")
    p.add_argument("--dataset", required=True)
    p.add_argument("--id", type=int, default=0)
    p.add_argument(
        "--algorithm", choices=("rrt", "rrt-star", "biased"), default="rrt"
    )
    p.add_argument("--bundle", default=None)
    p.add_argument("--schedule", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--t-samples", dest="t_samples", type=int, default=1000)
    p.add_argument("--svg", action="store_true")
    _add_plan_args(p)
    _add_common(p)

    p = sub.add_parser("bench", help="success/length table over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bundle", default=None)
    p.add_argument(
        "--algorithms", nargs="+", default=["rrt", "biased"],
        help="subset of: rrt rrt-star biased",
    )
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--schedule", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--t-samples", dest="t_samples", type=int, default=1000)
    p.add_argument(
        "--measure-time", dest="measure_time", action="store_true",
        help="record wall-clock means (off by default so reports are reproducible)",
    )
    p.add_argument("--svg", action="store_true")
    _add_plan_args(p)
    _add_common(p)

    p = sub.add_parser("render", help="SVG figures for one scenario")
    p.add_argument("--dataset", required=True)
    p.add_argument("--id", type=int, default=0)
    _add_common(p)

    return root


_HANDLERS = {
    "gen-dataset": cmd_gen_dataset,
    "train-vae": cmd_train_vae,
    "train-wgan": cmd_train_wgan,
    "train-path": cmd_train_path,
    "eval-gsc": cmd_eval_gsc,
    "plan": cmd_plan,
    "bench": cmd_bench,
    "render": cmd_render,
}


def _params_from_args(args: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text())
        if doc.get("command") != args.command:
            raise CliError(
                f"config is for {doc.get('command')!r}, not {args.command!r}"
            )
        stored = doc["params"]
        stored["out"] = params["out"]
        params = stored
    return params


def dispatch(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        params = _params_from_args(args)
        return _HANDLERS[args.command](params)
    except Exception as e:  # module errors -> structured message, exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
