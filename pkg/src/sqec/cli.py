"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration, 3 I/O failure, 4 training
divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__, bench, plotting
from .config import ConfigError, RunConfig, load
from .container import DatasetContainer
from .lattice import build_layout
from .neural.model import save_checkpoint
from .neural.training import TrainConfig, TrainingDiverged, generate_dataset, train
from .noise import NoiseConfig
from .pipeline import Decoder, DecoderSpec
from .propagation import logical_flip, simulate

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4
COMMANDS = ("simulate", "train", "decode", "bench-ler", "bench-time", "intersect", "export")

log = logging.getLogger("sqec")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="64-bit seed (required by randomised commands)")
    common.add_argument("--threads", type=int, help="torch intra-op threads")
    common.add_argument("--distance", type=int)
    common.add_argument("--distances", help="comma separated distances (bench-ler)")
    common.add_argument("--p-prime", type=float, dest="p_prime")
    common.add_argument("--p-values", dest="p_values", help="comma separated p' grid (bench-ler)")
    common.add_argument("--cycles", type=int, help="syndrome cycles (default: distance)")
    common.add_argument("--shots", type=int)
    common.add_argument("--basis", type=str.lower, choices=("x", "z"))
    common.add_argument("--variant")
    common.add_argument("--graph-mode", dest="graph_mode", choices=("uniform", "weighted"))
    common.add_argument("--passes", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--model", help="model checkpoint")
    common.add_argument("--input", help="input file")
    common.add_argument("--epochs", type=int)
    common.add_argument("--batches", help="comma separated batch sizes (bench-time)")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sqec", description="Surface-code simulation and decoding workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "sample shots into a dataset container",
        "train": "train a neural local decoder",
        "decode": "decode a dataset container and print per-shot flips",
        "bench-ler": "logical error rate sweep (CSV, JSON, PNG)",
        "bench-time": "batch-size latency fit (CSV, JSON, PNG)",
        "intersect": "pairwise curve crossings from a bench-ler CSV",
        "export": "convert a dataset container to CSV",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


_FLAG_KEYS = (
    "seed", "threads", "distance", "distances", "p_prime", "p_values", "cycles", "shots", "basis",
    "variant", "graph_mode", "passes", "threshold", "model", "input", "epochs", "batches", "out",
)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load(args.command, args.config, {k: getattr(args, k) for k in _FLAG_KEYS})
        if cfg.get("threads"):
            import torch

            torch.set_num_threads(cfg.get("threads"))
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"sqec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"sqec: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"sqec: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"sqec: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


# ----------------------------------------------------------------------------
# Helpers


def _sidecar(path, cfg: RunConfig, extra: Optional[Dict] = None) -> None:
    payload = {"config": cfg.echo()}
    if extra:
        payload.update(extra)
    bench.write_json(str(path) + ".json", payload)


def _spec(cfg: RunConfig) -> DecoderSpec:
    return DecoderSpec(
        variant=cfg.get("variant", "matching"),
        graph_mode=cfg.get("graph_mode", "uniform"),
        model_path=cfg.get("model"),
        threshold=cfg.get("threshold", 0.5),
        passes=cfg.get("passes", 11),
        seed=cfg.get("seed", 0),
    )


def _figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


# ----------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: RunConfig) -> int:
    seed = cfg.require("seed")
    d = cfg.require("distance")
    layout = build_layout(d)
    noise = NoiseConfig(cfg.require("p_prime"), cfg.get("cycles", d), cfg.get("basis", "Z"), seed)
    shots = cfg.require("shots")
    vol, syn = simulate(layout, noise, shots)
    out = cfg.require("out")
    DatasetContainer(d, noise.cycles, noise.basis, noise.depol_param, vol, syn).write(out)
    _sidecar(out, cfg)
    log.info("wrote %d shots to %s", shots, out)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    variant = cfg.get("variant", "classifier")
    if variant not in ("classifier", "simplified", "diffusion"):
        raise ConfigError(f"train needs a neural variant, got {variant!r}")
    tc = TrainConfig(
        learning_rate=cfg.get("learning_rate", 1e-3),
        batch_size=cfg.get("batch_size", 32),
        epochs=cfg.get("epochs", 1),
        seed=cfg.require("seed"),
        p_values=cfg.get("p_values", TrainConfig.p_values),
        distance=cfg.get("distance", 7),
        cycles=cfg.get("cycles"),
        instances=cfg.get("shots", 50_000),
        simplify=variant == "simplified",
        diffusion=variant == "diffusion",
        p_mix=cfg.get("p_mix"),
    )
    out = cfg.require("out")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    params = train(generate_dataset(tc), tc, progress=True)
    save_checkpoint(params, out)
    _sidecar(out, cfg, {"history": params.meta["history"]})
    return EXIT_OK


def cmd_decode(cfg: RunConfig) -> int:
    data = DatasetContainer.read(cfg.require("input"))
    spec = _spec(cfg)
    layout = build_layout(data.distance)
    p = data.p_prime if data.p_prime > 0 else cfg.get("p_prime", 1e-3)
    decoder = Decoder(spec, layout, data.cycles, data.basis, p)
    flips, stats = decoder.decode_batch(data.syndromes)
    truth = logical_flip(data.errors, data.basis)
    out = cfg.get("out")
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        for line in bench.config_lines(cfg.echo()):
            fh.write(line)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["shot", "predicted_flip", "actual_flip", "failure"])
        for i, (f, t) in enumerate(zip(flips, truth)):
            writer.writerow([i, int(f), int(t), int(f != t)])
    finally:
        if out:
            fh.close()
    if out:
        _sidecar(out, cfg, {"stats": stats.as_dict(), "failures": int(np.count_nonzero(flips != truth))})
    return EXIT_OK


def cmd_bench_ler(cfg: RunConfig) -> int:
    seed = cfg.require("seed")
    spec = _spec(cfg)
    ds = cfg.get("distances") or (cfg.require("distance"),)
    ps = cfg.get("p_values") or (cfg.require("p_prime"),)
    basis = cfg.get("basis", "Z")
    shots = cfg.require("shots")
    curves = bench.sweep(
        [spec], ds, sorted(ps), shots, basis, seed,
        progress=lambda d, p, f: log.info("d=%d p'=%g failures=%s", d, p, f),
    )
    out = Path(cfg.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    bench.write_ler_csv(out, curves.values(), cfg.echo())
    bench.write_json(out.with_suffix(".json"), {
        "config": cfg.echo(),
        "curves": [{"d": c.distance, "basis": c.basis, "label": k[0], "points": c.rows()} for k, c in curves.items()],
    })
    plotting.plot_ler_curves(curves.values(), _figure_path(out), spec.label())
    return EXIT_OK


def cmd_bench_time(cfg: RunConfig) -> int:
    seed = cfg.require("seed")
    spec = _spec(cfg)
    batches = cfg.get("batches", bench.LATENCY_BATCHES)
    rec = bench.time_decoder(
        spec, cfg.require("distance"), cfg.require("p_prime"), batches, cfg.get("basis", "Z"), seed,
        repeats=cfg.get("repeats", 3),
    )
    out = Path(cfg.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        for line in bench.config_lines(cfg.echo()):
            fh.write(line)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "d", "p_prime", "batch", "seconds"])
        for b, s in rec.samples:
            writer.writerow([rec.label, rec.distance, repr(rec.p_prime), b, repr(s)])
    bench.write_json(out.with_suffix(".json"), {"config": cfg.echo(), "timing": rec.as_dict()})
    plotting.plot_latency([rec], _figure_path(out))
    return EXIT_OK


def read_ler_csv(path) -> Dict[tuple, bench.LerCurve]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: no LER rows")
    curves: Dict[tuple, bench.LerCurve] = {}
    for row in sorted(rows, key=lambda r: float(r["p_prime"])):
        key = (row["variant"], row["graph_mode"], row["basis"], int(row["d"]))
        curve = curves.setdefault(key, bench.LerCurve(key[3], key[2], [], key[0], key[1]))
        curve.points.append(bench.LerPoint(float(row["p_prime"]), int(row["shots"]), int(row["failures"]), int(row["seed"])))
    return curves


def cmd_intersect(cfg: RunConfig) -> int:
    curves = read_ler_csv(cfg.require("input"))
    out = Path(cfg.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    groups: Dict[tuple, Dict[int, bench.LerCurve]] = {}
    for (variant, mode, basis, d), curve in curves.items():
        groups.setdefault((variant, mode, basis), {})[d] = curve
    summary = []
    for i, (key, by_d) in enumerate(sorted(groups.items())):
        ds, mat = bench.intersection_matrix(by_d)
        target = out if len(groups) == 1 else out.with_name(f"{out.stem}-{'-'.join(key)}{out.suffix}")
        bench.write_matrix_csv(target, ds, mat, {**cfg.echo(), "curves": "/".join(key)})
        plotting.plot_intersection_matrix(ds, mat, _figure_path(target), " ".join(key))
        summary.append({"curves": list(key), "distances": ds, "matrix": mat, "trend": bench.crossing_trend(ds, mat)})
    bench.write_json(out.with_suffix(".json"), {"config": cfg.echo(), "matrices": summary})
    return EXIT_OK


def cmd_export(cfg: RunConfig) -> int:
    data = DatasetContainer.read(cfg.require("input"))
    out = Path(cfg.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    counts = data.syndromes.count()
    errs = data.errors.count()
    flips = np.atleast_1d(logical_flip(data.errors, data.basis))
    with open(out, "w", newline="") as fh:
        for line in bench.config_lines({**cfg.echo(), "distance": data.distance, "cycles": data.cycles,
                                         "basis": data.basis, "container_p_prime": data.p_prime}):
            fh.write(line)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["shot", "layer", "row", "col", "slot"])
        for shot, layer, r, c, k in np.argwhere(data.syndromes.events):
            writer.writerow([shot, layer, r, c, k])
    summary = out.with_name(out.stem + "-shots.csv")
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["shot", "error_bits", "events", "logical_flip"])
        for i in range(data.shots):
            writer.writerow([i, int(errs[i]), int(counts[i]), int(flips[i])])
    plotting.plot_event_histogram(counts, _figure_path(out), f"d={data.distance} p'={data.p_prime:g} {data.basis}")
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "decode": cmd_decode,
    "bench-ler": cmd_bench_ler,
    "bench-time": cmd_bench_time,
    "intersect": cmd_intersect,
    "export": cmd_export,
}


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
