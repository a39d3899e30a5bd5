"""Command-line entry point.

Every subcommand resolves its settings as built-in defaults, then the optional
JSON ``--config`` file, then explicit flags, and writes the result to
``resolved_config.json`` in its output directory. Feeding that file back through
``--config`` reproduces the run. Failures print a JSON error object on stderr
and exit with status 1.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import BaselineFitConfig, fit_mle, init_baseline, sample
from .checkpoint import load_checkpoint, save_checkpoint
from .covid import (
    FEATURE_NAMES,
    CovidContext,
    GroupSpec,
    ScenarioSpec,
    fit_context,
    read_county_csv,
    run_scenario,
    write_group_datasets,
)
from .evaluation import evaluate
from .events import (
    EventSequence,
    SpaceRegion,
    fit_scaling,
    read_sequence_csv,
    read_sequence_dir,
    write_sequence_csv,
    write_sequence_dir,
)
from .generator import GeneratorParams, condition_and_predict, init_params, match_event_rate, rollout_batch
from .hawkes import TriggeringModel, simulate_many
from .kernels import KernelConfig, reward_grid
from .trainer import TrainConfig, train

logger = logging.getLogger("stpp_imitation")

DEFAULTS: dict[str, dict] = {
    "simulate": {"n": 64, "background": 1.0, "a0": 0.0, "omega": 1.0, "sigma": 0.1, "horizon": 2.0,
                 "region": [-2.0, 2.0, -2.0, 2.0], "seed": 0},
    "train": {"data": None, "mode": "lstm", "hidden": 64, "mlp_hidden": 32, "noise_dim": 10, "lr": 1e-3,
              "optimizer": "adam", "batch_expert": 32, "batch_learner": 32, "iterations": 1000,
              "bandwidth": 1.0, "clip_norm": 5.0, "scale": False, "init": None, "match_rate": False,
              "seed": 0},
    "fit-baseline": {"data": None, "mode": "lstm", "hidden": 64, "lr": 1e-3, "iterations": 1000,
                     "batch_size": 32, "clip_norm": 5.0, "scale": False, "seed": 0},
    "sample-baseline": {"checkpoint": None, "n": 32, "horizon": 2.0, "features": None, "seed": 0},
    "generate": {"checkpoint": None, "n": 32, "horizon": 2.0, "features": None, "seed": 0},
    "predict": {"checkpoint": None, "history": None, "n_events": 10, "features": None, "seed": 0},
    "reward-field": {"expert": None, "learner": None, "checkpoint": None, "n_learner": 32, "bandwidth": 1.0,
                     "t_slice": 1.0, "x_slice": 0.0, "y_slice": 0.0, "n_space": 41, "n_time": 41, "seed": 0},
    "covid-ingest": {"counts": None, "bounds": [100, 1000, 5000, 10000, 20000], "seed": 0},
    "covid-scenario": {"checkpoint": None, "counts": None, "context": None, "county": None, "shift_days": 0,
                       "rollouts": 10, "end_date": None, "history_until": None, "aggregation": "per_case",
                       "seed": 0},
    "eval": {"expert": None, "checkpoint": None, "generated": None, "n_generated": 64, "batch": 32,
             "resamples": 20, "bandwidth": 1.0, "bins": 10, "seed": 0},
}


class CLIError(Exception):
    pass


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise CLIError(f"missing required setting(s): {', '.join(missing)}")


def _out(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _features(cfg: dict):
    f = cfg.get("features")
    if f is None:
        return None
    if isinstance(f, str):
        f = json.loads(f)
    return np.asarray(f, dtype=float)


def _load_data(path: str) -> tuple[list[EventSequence], tuple[str, ...]]:
    seqs = read_sequence_dir(path)
    schema = Path(path) / "schema.json"
    names = tuple(json.loads(schema.read_text()).get("feature_names", ())) if schema.exists() else ()
    return seqs, names


def _maybe_scale(cfg: dict, seqs):
    if not cfg.get("scale"):
        return seqs, None
    tr = fit_scaling(seqs)
    return [tr.scale(s) for s in seqs], tr


def _write_events(seqs, out: Path, scaling, prefix="seq") -> None:
    if scaling is not None:
        seqs = [scaling.unscale(s) for s in seqs]
    write_sequence_dir(seqs, out, prefix=prefix)


def cmd_simulate(cfg: dict) -> None:
    bg = cfg["background"]
    model = TriggeringModel(np.asarray(bg, dtype=float) if isinstance(bg, list) else float(bg), float(cfg["a0"]),
                            float(cfg["omega"]), float(cfg["sigma"]), float(cfg["horizon"]), SpaceRegion(*cfg["region"]))
    out = _out(cfg)
    seqs = simulate_many(model, int(cfg["n"]), seed=int(cfg["seed"]))
    write_sequence_dir(seqs, out)
    (out / "model.json").write_text(json.dumps({"version": __version__, **model.to_dict()}, indent=1))


def cmd_train(cfg: dict) -> None:
    _require(cfg, "data")
    seqs, names = _load_data(cfg["data"])
    seqs, scaling = _maybe_scale(cfg, seqs)
    feat_dim = len(seqs[0].features) if seqs[0].features is not None else 0
    if cfg.get("init"):
        params, _, _ = load_checkpoint(cfg["init"])
    else:
        params = init_params(int(cfg["hidden"]), int(cfg["mlp_hidden"]), int(cfg["noise_dim"]), feat_dim,
                             cfg["mode"], seed=int(cfg["seed"]), feature_names=names)
    if cfg.get("match_rate"):
        params = match_event_rate(params, seqs)
    tc = TrainConfig(lr=float(cfg["lr"]), optimizer=cfg["optimizer"], batch_expert=int(cfg["batch_expert"]),
                     batch_learner=int(cfg["batch_learner"]), iterations=int(cfg["iterations"]),
                     kernel=KernelConfig(float(cfg["bandwidth"])), seed=int(cfg["seed"]),
                     clip_norm=cfg["clip_norm"])
    report = train(seqs, tc, params)
    out = _out(cfg)
    save_checkpoint(cfg.get("checkpoint_out") or out / "checkpoint.json", report.params, scaling,
                    {"horizon": seqs[0].horizon, "iterations": tc.iterations, "seed": tc.seed})
    with (out / "loss.csv").open("w") as fh:
        fh.write("iter,d2\n")
        fh.writelines(f"{i},{float(v)!r}\n" for i, v in enumerate(report.d2))
    logger.info("trained %d iterations in %.1fs", tc.iterations, report.wall_clock)


def cmd_fit_baseline(cfg: dict) -> None:
    _require(cfg, "data")
    seqs, names = _load_data(cfg["data"])
    seqs, scaling = _maybe_scale(cfg, seqs)
    feat_dim = len(seqs[0].features) if seqs[0].features is not None else 0
    params = init_baseline(int(cfg["hidden"]), feat_dim, cfg["mode"], seed=int(cfg["seed"]), feature_names=names)
    trace: list[float] = []
    fc = BaselineFitConfig(lr=float(cfg["lr"]), iterations=int(cfg["iterations"]), batch_size=cfg["batch_size"],
                           seed=int(cfg["seed"]), clip_norm=cfg["clip_norm"])
    fitted = fit_mle(seqs, fc, params, trace)
    out = _out(cfg)
    save_checkpoint(cfg.get("checkpoint_out") or out / "checkpoint.json", fitted, scaling,
                    {"horizon": seqs[0].horizon})
    with (out / "loglik.csv").open("w") as fh:
        fh.write("iter,loglik\n")
        fh.writelines(f"{i},{float(v)!r}\n" for i, v in enumerate(trace))


def _horizon(cfg: dict, scaling) -> float:
    h = float(cfg["horizon"])
    return float(scaling.scale_time(h)) if scaling is not None else h


def cmd_sample_baseline(cfg: dict) -> None:
    _require(cfg, "checkpoint")
    params, scaling, _ = load_checkpoint(cfg["checkpoint"])
    if isinstance(params, GeneratorParams):
        raise CLIError("checkpoint holds a generator; use 'generate'")
    f, seed = _features(cfg), int(cfg["seed"])
    seqs = [sample(params, f, _horizon(cfg, scaling), seed=(seed, i)) for i in range(int(cfg["n"]))]
    _write_events(seqs, _out(cfg), scaling)


def cmd_generate(cfg: dict) -> None:
    _require(cfg, "checkpoint")
    params, scaling, _ = load_checkpoint(cfg["checkpoint"])
    if not isinstance(params, GeneratorParams):
        raise CLIError("checkpoint holds a baseline model; use 'sample-baseline'")
    n, seed = int(cfg["n"]), int(cfg["seed"])
    f = _features(cfg)
    traces = rollout_batch(params, _horizon(cfg, scaling), [(seed, i) for i in range(n)],
                           None if f is None else np.broadcast_to(f, (n, f.size)))
    _write_events([t.sequence for t in traces], _out(cfg), scaling)


def cmd_predict(cfg: dict) -> None:
    _require(cfg, "checkpoint", "history")
    params, scaling, _ = load_checkpoint(cfg["checkpoint"])
    if not isinstance(params, GeneratorParams):
        raise CLIError("predict needs a generator checkpoint")
    hist = read_sequence_csv(cfg["history"])
    if scaling is not None:
        hist = scaling.scale(hist)
    f = _features(cfg)
    if f is None and hist.features is not None:
        f = hist.features
    pred = condition_and_predict(params, hist, f, int(cfg["n_events"]), seed=int(cfg["seed"]))
    if scaling is not None:
        pred = scaling.unscale(pred)
    write_sequence_csv(pred, _out(cfg) / "prediction.csv")


def cmd_reward_field(cfg: dict) -> None:
    _require(cfg, "expert")
    expert = read_sequence_dir(cfg["expert"])
    if cfg.get("learner"):
        learner = read_sequence_dir(cfg["learner"])
    elif cfg.get("checkpoint"):
        params, _, _ = load_checkpoint(cfg["checkpoint"])
        seed = int(cfg["seed"])
        learner = [t.sequence for t in rollout_batch(params, expert[0].horizon,
                                                     [(seed, i) for i in range(int(cfg["n_learner"]))])]
    else:
        raise CLIError("reward-field needs either 'learner' or 'checkpoint'")
    grid = reward_grid(expert, learner, KernelConfig(float(cfg["bandwidth"])), float(cfg["t_slice"]),
                       (float(cfg["x_slice"]), float(cfg["y_slice"])), int(cfg["n_space"]), int(cfg["n_time"]),
                       time=(0.0, expert[0].horizon))
    with (_out(cfg) / "reward_field.csv").open("w") as fh:
        fh.write("t,x,y,r\n")
        fh.writelines(",".join(repr(float(v)) for v in row) + "\n" for row in grid)


def cmd_covid_ingest(cfg: dict) -> None:
    _require(cfg, "counts")
    records = read_county_csv(cfg["counts"])
    context = fit_context(records)
    out = _out(cfg)
    manifest = write_group_datasets(records, out, context, GroupSpec(tuple(cfg["bounds"])), seed=int(cfg["seed"]))
    (out / "context.json").write_text(json.dumps(context.to_dict(), indent=1))
    schema = json.dumps({"feature_names": list(FEATURE_NAMES)})
    for entry in manifest["groups"].values():
        for d in [entry.get("dir"), *entry.get("dirs", {}).values()]:
            if d and Path(d).exists():
                (Path(d) / "schema.json").write_text(schema)


def cmd_covid_scenario(cfg: dict) -> None:
    _require(cfg, "checkpoint", "counts", "context", "county")
    params, _, _ = load_checkpoint(cfg["checkpoint"])
    context = CovidContext.from_dict(json.loads(Path(cfg["context"]).read_text()))
    records = {r.fips: r for r in read_county_csv(cfg["counts"])}
    county = str(cfg["county"])
    if county not in records:
        matches = [r for r in records.values() if r.name == county]
        if not matches:
            raise CLIError(f"county {county!r} not found")
        rec = matches[0]
    else:
        rec = records[county]
    date = lambda s: dt.date.fromisoformat(s) if s else None  # noqa: E731
    spec = ScenarioSpec(int(cfg["shift_days"]), int(cfg["rollouts"]), date(cfg["end_date"]),
                        date(cfg["history_until"]), cfg["aggregation"])
    report = run_scenario(params, rec, spec, context, seed=int(cfg["seed"]))
    (_out(cfg) / "scenario.json").write_text(json.dumps(report.to_dict(), indent=1))


def cmd_eval(cfg: dict) -> None:
    _require(cfg, "expert")
    expert = read_sequence_dir(cfg["expert"])
    seed = int(cfg["seed"])
    if cfg.get("generated"):
        gen_dir = Path(cfg["generated"])
        if not gen_dir.is_dir() or not any(gen_dir.glob("*.csv")):
            raise CLIError(f"generated set is empty: no event CSV files in {gen_dir}")
        generated = read_sequence_dir(gen_dir)
    elif cfg.get("checkpoint"):
        params, scaling, _ = load_checkpoint(cfg["checkpoint"])
        if scaling is not None:
            expert = [scaling.scale(s) for s in expert]
        n = int(cfg["n_generated"])
        if n < 1:
            raise CLIError("generated set is empty: n_generated must be at least 1")
        if isinstance(params, GeneratorParams):
            generated = [t.sequence for t in rollout_batch(params, expert[0].horizon, [(seed, i) for i in range(n)])]
        else:
            generated = [sample(params, None, expert[0].horizon, seed=(seed, i)) for i in range(n)]
    else:
        raise CLIError("eval needs either 'generated' or 'checkpoint'")
    metrics = evaluate(expert, generated, KernelConfig(float(cfg["bandwidth"])), int(cfg["batch"]),
                       int(cfg["resamples"]), int(cfg["bins"]), seed)
    metrics.write(_out(cfg) / "metrics.json")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "fit-baseline": cmd_fit_baseline,
    "sample-baseline": cmd_sample_baseline,
    "generate": cmd_generate,
    "predict": cmd_predict,
    "reward-field": cmd_reward_field,
    "covid-ingest": cmd_covid_ingest,
    "covid-scenario": cmd_covid_scenario,
    "eval": cmd_eval,
}

HELP = {
    "simulate": "simulate sequences from a self-exciting model",
    "train": "train the generator on expert event sequences",
    "fit-baseline": "fit the likelihood baseline",
    "sample-baseline": "sample sequences from a fitted baseline",
    "generate": "roll out sequences from a trained generator",
    "predict": "continue an observed history with predicted events",
    "reward-field": "dump the estimated reward on time/space slices",
    "covid-ingest": "turn county case counts into grouped event datasets",
    "covid-scenario": "lockdown-shift what-if for one county",
    "eval": "compare generated and held-out expert sequences",
}

FLAG_HELP = {
    "data": "directory of expert event CSVs", "mode": "recurrent cell: lstm or rnn",
    "checkpoint": "model checkpoint JSON", "features": "static feature vector as a JSON list",
    "match_rate": "start the inter-arrival bias at the data's mean gap",
    "scale": "fit and apply the [0,2]x[-2,2]^2 scaling to the data", "init": "checkpoint to start from",
    "background": "constant exogenous rate (or nested list grid in the config file)",
    "region": "x_min x_max y_min y_max", "bounds": "upper-inclusive group bucket bounds",
    "counts": "wide county CSV", "context": "context.json written by covid-ingest",
    "county": "county fips or name", "history": "event CSV with the observed history",
    "expert": "directory of expert event CSVs", "learner": "directory of learner event CSVs",
    "generated": "directory of generated event CSVs (alternative to --checkpoint)",
}


def _type_for(value):
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return int
    if isinstance(value, float):
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stpp-imitation", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="JSON file with settings (flags override it)")
        p.add_argument("--out-dir", dest="out_dir", default=None, help="output directory (default: ./out-<command>)")
        p.add_argument("--serial", action="store_true", help="single-threaded, bitwise reproducible execution")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name in ("train", "fit-baseline"):
            p.add_argument("--checkpoint-out", dest="checkpoint_out", default=None, help="checkpoint path")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            help_text = FLAG_HELP.get(key, "") + (f" (default: {default})" if default is not None else "")
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_text)
            elif isinstance(default, list):
                p.add_argument(flag, dest=key, nargs="+", type=float if name != "covid-ingest" else int,
                               default=None, help=help_text)
            else:
                p.add_argument(flag, dest=key, type=_type_for(default) or str, default=None, help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        file_cfg.pop("version", None)
        file_cfg.pop("command", None)
        cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        if key == "serial" and not value:
            continue
        cfg[key] = value
    if cfg.get("out_dir") is None:
        cfg["out_dir"] = f"out-{args.command}"
    return cfg


@contextlib.contextmanager
def _thread_limit(serial: bool):
    if not serial:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        with _thread_limit(bool(cfg.get("serial"))):
            COMMANDS[args.command](cfg)
        snapshot = {"version": __version__, "command": args.command, **cfg}
        (Path(cfg["out_dir"]) / "resolved_config.json").write_text(json.dumps(snapshot, indent=1, default=str))
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        err = {"version": __version__, "command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
