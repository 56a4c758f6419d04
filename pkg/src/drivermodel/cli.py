"""Command-line pipeline: route, advisories, synthetic drivers, calibration, training, comparison."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .edm import EdmParams, ReferenceProfile, SimulationTimeout, generate_reference
from .evalcmp import (ERROR_HIST, VELOCITY_HIST, ComparisonRow, comparison_table, dist_summary, evaluate_edm,
                      evaluate_lstmed)
from .gacal import CalibrationResult, GaConfig, calibrate, population_summary, summary_csv
from .scenario import RouteMap, default_route
from .seqnet import InsufficientHistory, LstmEdConfig, LstmEdModel, TrainConfig, TrainingDiverged, predict, train
from .synthdrive import (DEFAULT_BOUNDS, ConfigError, EmptyDatasetError, NoiseConfig, WindowConfig,
                         read_manifest, sample_driver_params, simulate_human, window_dataset, write_manifest)
from .trace import DriveTrace

log = logging.getLogger("drivermodel")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID = 4
EXIT_SIMULATION = 5
EXIT_TRAINING = 6

EXIT_HELP = """exit codes:
  0  success
  1  unexpected internal error
  2  usage error (unknown flag or subcommand, bad flag value)
  3  a required input file is missing
  4  invalid configuration or input data
  5  simulation failed (route not completed in time)
  6  training diverged
"""


class MissingFile(Exception):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = path


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingFile(p)
    return p


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    """Everything one pipeline run needs.  Loaded from JSON; absent keys keep their defaults.

    The GA and training budgets are sized so that ``repro`` finishes in
    well under half an hour on one CPU core.
    """

    route: str | None = None
    n_refs: int = 10
    n_drivers: int = 71
    n_test: int = 5
    seed: int = 0
    split_seed: int = 0
    dt: float = 0.1
    window: dict = field(default_factory=lambda: {"t_h": 30.0, "t_p": 5.0})
    noise: dict = field(default_factory=lambda: {"sigma_a": 0.5, "tau_noise": 8.0, "perception_delay": 0.8})
    bounds: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_BOUNDS.items()})
    ga: dict = field(default_factory=lambda: {"population": 30, "generations": 30})
    model: dict = field(default_factory=lambda: {"n_e": 32, "n_d": 32, "dropout_p": 0.2})
    training: dict = field(default_factory=lambda: {"epochs": 3, "batch_size": 64, "learning_rate": 2e-3,
                                                    "windows_per_epoch": 100000})

    @classmethod
    def load(cls, path) -> PipelineConfig:
        data = json.loads(_need(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls()
        for key, value in data.items():
            default = getattr(cfg, key)
            if isinstance(default, dict):
                merged = dict(default)
                merged.update(value)
                value = merged
            setattr(cfg, key, value)
        return cfg

    def window_config(self) -> WindowConfig:
        return WindowConfig(dt=self.dt, **self.window)

    def bound_dict(self) -> dict:
        return {k: tuple(v) for k, v in self.bounds.items()}

    def ga_config(self, seed: int) -> GaConfig:
        return GaConfig(seed=seed, bounds=self.bound_dict(), **self.ga)

    def model_config(self) -> LstmEdConfig:
        w = self.window_config()
        return LstmEdConfig(n_h=w.n_h, n_p=w.n_p, **self.model)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.training)


# ---------------------------------------------------------------------------
# file helpers


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path: Path, doc) -> None:
    _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_route(path) -> RouteMap:
    return default_route() if path is None else RouteMap.load(_need(path))


def _save_profile(path: Path, prof: ReferenceProfile) -> None:
    cols = [prof.t, prof.positions, prof.v_ref]
    body = np.column_stack(cols)
    lines = ["t,s,v_ref"] + [",".join(format(x, ".17g") for x in row) for row in body]
    _write(path, "\n".join(lines) + "\n")


def _load_profile(path) -> ReferenceProfile:
    data = np.loadtxt(_need(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2 or data.shape[1] != 3:
        raise ConfigError(f"{path}: expected columns t,s,v_ref and at least two rows")
    dt = float(np.round(data[1, 0] - data[0, 0], 12))
    return ReferenceProfile(data[:, 2], dt, data[:, 1])


def _driver_files(data_dir: Path) -> dict[str, Path]:
    index = json.loads(_need(data_dir / "drivers.json").read_text())
    return {d["driver_id"]: data_dir / d["file"] for d in index["drivers"]}


def _load_traces(data_dir: Path, ids=None) -> list[DriveTrace]:
    files = _driver_files(data_dir)
    ids = sorted(files) if ids is None else ids
    missing = [i for i in ids if i not in files]
    if missing:
        raise ConfigError(f"unknown driver ids: {', '.join(missing)}")
    return [DriveTrace.from_csv(_need(files[i]), i) for i in ids]


def _load_calibrations(calib_dir: Path, ids) -> dict[str, EdmParams]:
    return {i: CalibrationResult.load(_need(calib_dir / f"{i}.json")).best for i in ids}


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_route(args, cfg: PipelineConfig) -> None:
    route = _load_route(cfg.route)
    out = Path(args.out or "route.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    route.save(out)
    log.info("route written to %s", out)


def cmd_gen_refs(args, cfg: PipelineConfig) -> None:
    route = _load_route(args.route or cfg.route)
    n = args.n_refs if args.n_refs is not None else cfg.n_refs
    seed = cfg.seed
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence([seed, 1]).spawn(n)]
    params = [sample_driver_params(s, cfg.bound_dict()) for s in seeds]
    profiles = generate_reference(params, route, cfg.dt)
    out = Path(args.out or "refs")
    entries = []
    for k, (p, prof) in enumerate(zip(params, profiles)):
        name = f"ref{k:02d}.csv"
        _save_profile(out / name, prof)
        entries.append({"file": name, "params": asdict(p), "param_seed": seeds[k]})
    _write_json(out / "refs.json", {"seed": seed, "dt": cfg.dt, "references": entries})
    log.info("%d advisory profiles written to %s", n, out)


def cmd_gen_data(args, cfg: PipelineConfig) -> None:
    route = _load_route(args.route or cfg.route)
    refs_dir = Path(args.refs or "refs")
    ref_index = json.loads(_need(refs_dir / "refs.json").read_text())
    profiles = [_load_profile(refs_dir / e["file"]) for e in ref_index["references"]]
    n = args.drivers if args.drivers is not None else cfg.n_drivers
    noise = cfg.noise
    out = Path(args.out or "data")
    children = np.random.SeedSequence([cfg.seed, 2]).spawn(n)
    entries = []
    for i, child in enumerate(children):
        p_seed, n_seed = (int(x) for x in child.generate_state(2))
        driver_id = f"driver{i:02d}"
        params = sample_driver_params(p_seed, cfg.bound_dict())
        ref = i % len(profiles)
        trace = simulate_human(params, NoiseConfig(seed=n_seed, **noise), profiles[ref], route, cfg.dt, driver_id)
        name = f"{driver_id}.csv"
        _write(out / name, trace.to_csv())
        entries.append({"driver_id": driver_id, "file": name, "reference": ref_index["references"][ref]["file"],
                        "params": asdict(params), "param_seed": p_seed, "noise_seed": n_seed})
    _write_json(out / "drivers.json", {"seed": cfg.seed, "dt": cfg.dt, "noise": noise, "drivers": entries})
    log.info("%d synthetic drivers written to %s", n, out)


def cmd_calibrate(args, cfg: PipelineConfig) -> None:
    route = _load_route(args.route or cfg.route)
    data_dir = Path(args.data or "data")
    ids = args.drivers.split(",") if args.drivers else None
    traces = _load_traces(data_dir, ids)
    out = Path(args.out or "calib")
    ga_seed = cfg.seed
    results = []
    for tr in traces:
        t0 = time.perf_counter()
        res = calibrate(tr, route, cfg.ga_config(ga_seed))
        results.append(res)
        _write_json(out / f"{tr.driver_id}.json", res.to_dict())
        log.info("%s calibrated: fitness %.4f (%.1f s)", tr.driver_id, res.best_fitness, time.perf_counter() - t0)
    summary = population_summary(results, cfg.bound_dict())
    _write(out / "summary.csv", summary_csv(summary))
    _write_json(out / "calib.json", {"seed": ga_seed, "ga": cfg.ga, "drivers": [t.driver_id for t in traces]})


def cmd_train(args, cfg: PipelineConfig) -> None:
    data_dir = Path(args.data or "data")
    traces = _load_traces(data_dir)
    wcfg = cfg.window_config()
    train_ds, test_ds = window_dataset(traces, wcfg, cfg.split_seed, cfg.n_test)
    out = Path(args.out or "model")
    out.mkdir(parents=True, exist_ok=True)
    files = {i: str((data_dir / f).resolve()) for i, f in
             ((d["driver_id"], d["file"]) for d in json.loads((data_dir / "drivers.json").read_text())["drivers"])}
    write_manifest(out / "manifest.json", files, train_ds.driver_ids, test_ds.driver_ids, train_ds.norm,
                   {"split_seed": cfg.split_seed, "window": asdict(wcfg)})
    log.info("training on %d windows from %d drivers", len(train_ds), len(train_ds.driver_ids))
    model, history = train(train_ds, cfg.model_config(), cfg.train_config())
    model.save(out / "model.json", train_ds.norm,
               {"seed": cfg.seed, "training": cfg.training, "model": cfg.model, "loss_history": history})
    _write(out / "loss.csv", "epoch,loss\n" + "".join(f"{k},{v:.17g}\n" for k, v in enumerate(history)))


def cmd_predict(args, cfg: PipelineConfig) -> None:
    hist_path = _need(args.history)
    model_path = _need(args.model or "model/model.json")
    model, norm = LstmEdModel.load(model_path)
    if norm is None:
        raise ConfigError(f"{model_path} carries no normalization statistics")
    trace = DriveTrace.from_csv(hist_path)
    v_hat, err_hat = predict(model, norm, trace.features.T)
    t_last = float(trace.t[-1])
    steps = np.arange(1, len(v_hat) + 1)
    lines = ["step,t,v_hat,err_hat"] + [f"{k},{t_last + k * trace.dt:.6f},{v:.17g},{e:.17g}"
                                        for k, v, e in zip(steps, v_hat, err_hat)]
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)


def _test_split(model_dir: Path) -> tuple[dict, list[DriveTrace]]:
    manifest = read_manifest(_need(model_dir / "manifest.json"))
    test_ids = manifest["split"]["test"]
    traces = [DriveTrace.from_csv(_need(manifest["traces"][i]), i) for i in test_ids]
    return manifest, traces


def _lstm_scores(model_dir: Path, traces, cfg: PipelineConfig):
    model, norm = LstmEdModel.load(_need(model_dir / "model.json"))
    return evaluate_lstmed(model, norm, traces, cfg.window_config())


def _dist_csv(v, err, source: str) -> str:
    """Velocity and tracking-error summaries, pooled over drivers, as one CSV."""
    vel = dist_summary(np.concatenate(v), *VELOCITY_HIST, "velocity", source).to_csv()
    trk = dist_summary(np.concatenate(err), *ERROR_HIST, "tracking_error", source).to_csv()
    return vel + trk.split("\n", 1)[1]


def _pred_dist(scores, source: str) -> str:
    return _dist_csv([s.v_pred for s in scores], [s.err_pred for s in scores], source)


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    model_dir = Path(args.model_dir or "model")
    _, traces = _test_split(model_dir)
    scores = _lstm_scores(model_dir, traces, cfg)
    out = Path(args.out or "eval")
    _write(out / "lstmed_scores.csv", "driver_id,rmse_v,rmse_err\n" +
           "".join(f"{s.driver_id},{s.rmse_v:.17g},{s.rmse_err:.17g}\n" for s in scores))
    _write(out / "lstmed_dist.csv", _pred_dist(scores, "lstmed"))
    _write(out / "actual_dist.csv", _dist_csv([t.v for t in traces], [t.err for t in traces], "actual"))
    for s in scores:
        log.info("%s: rmse_v %.3f rmse_err %.3f", s.driver_id, s.rmse_v, s.rmse_err)


def cmd_compare(args, cfg: PipelineConfig) -> str:
    route = _load_route(args.route or cfg.route)
    model_dir = Path(args.model_dir or "model")
    _, traces = _test_split(model_dir)
    lstm = _lstm_scores(model_dir, traces, cfg)
    calib = _load_calibrations(Path(args.calib or "calib"), [t.driver_id for t in traces])
    edm = evaluate_edm(calib, traces, route)
    rows = [ComparisonRow(a.driver_id, a.rmse_v, b.rmse_v, a.rmse_err, b.rmse_err) for a, b in zip(lstm, edm)]
    text, csv = comparison_table(rows)
    out = Path(args.out or "compare")
    _write(out / "comparison.txt", text)
    _write(out / "comparison.csv", csv)
    _write(out / "lstmed_dist.csv", _pred_dist(lstm, "lstmed"))
    _write(out / "edm_dist.csv", _pred_dist(edm, "edm"))
    sys.stdout.write(text)
    return text


def cmd_repro(args, cfg: PipelineConfig) -> None:
    root = Path(args.out or "repro")
    route_path = root / "route.json"
    ns = argparse.Namespace
    t0 = time.perf_counter()
    cmd_gen_route(ns(out=route_path), cfg)
    cmd_gen_refs(ns(route=route_path, n_refs=None, out=root / "refs"), cfg)
    cmd_gen_data(ns(route=route_path, refs=root / "refs", drivers=None, out=root / "data"), cfg)
    log.info("data ready after %.0f s", time.perf_counter() - t0)
    cmd_calibrate(ns(route=route_path, data=root / "data", drivers=None, out=root / "calib"), cfg)
    log.info("calibration done after %.0f s", time.perf_counter() - t0)
    cmd_train(ns(data=root / "data", out=root / "model"), cfg)
    log.info("training done after %.0f s", time.perf_counter() - t0)
    cmd_compare(ns(route=route_path, model_dir=root / "model", calib=root / "calib", out=root / "compare"), cfg)
    log.info("repro finished in %.0f s", time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON; absent keys keep their defaults")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="drivermodel", description=__doc__, epilog=EXIT_HELP,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=EXIT_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("gen-route", cmd_gen_route, "write the route map (the config's route file, else the built-in one)")
    p = add("gen-refs", cmd_gen_refs, "simulate advisory speed profiles over the route")
    p.add_argument("--route")
    p.add_argument("--n-refs", type=int)
    p = add("gen-data", cmd_gen_data, "simulate synthetic drivers following the advisories")
    p.add_argument("--route")
    p.add_argument("--refs", help="directory written by gen-refs")
    p.add_argument("--drivers", type=int, help="number of drivers")
    p = add("calibrate", cmd_calibrate, "fit EDM parameters to each driver trace with the GA")
    p.add_argument("--route")
    p.add_argument("--data", help="directory written by gen-data")
    p.add_argument("--drivers", help="comma-separated driver ids (default: all)")
    p = add("train", cmd_train, "split drivers, window the traces and train the LSTMED")
    p.add_argument("--data", help="directory written by gen-data")
    p = add("predict", cmd_predict, "forecast the next t_p seconds from a trace CSV history")
    p.add_argument("--model", help="model checkpoint (default model/model.json)")
    p.add_argument("--history", required=True, help="trace CSV; its last t_h seconds are used")
    p = add("evaluate", cmd_evaluate, "score the LSTMED on the held-out drivers")
    p.add_argument("--model-dir", help="directory written by train")
    p = add("compare", cmd_compare, "LSTMED vs calibrated EDM table on the held-out drivers")
    p.add_argument("--route")
    p.add_argument("--model-dir", help="directory written by train")
    p.add_argument("--calib", help="directory written by calibrate")
    add("repro", cmd_repro, "run the whole pipeline into --out (default ./repro)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            args.func(args, cfg)
    except MissingFile as exc:
        print(f"drivermodel {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except FileNotFoundError as exc:
        print(f"drivermodel {args.command}: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except SimulationTimeout as exc:
        print(f"drivermodel {args.command}: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except TrainingDiverged as exc:
        print(f"drivermodel {args.command}: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ConfigError, EmptyDatasetError, InsufficientHistory, ValueError, KeyError, TypeError,
            json.JSONDecodeError) as exc:
        print(f"drivermodel {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"drivermodel {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
