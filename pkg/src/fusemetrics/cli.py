"""Command-line front end.

Subcommands: synth, eval-classical, eval-surrogate, train-probe,
train-surrogate, mc, bench.  A key=value config file can seed any
option; explicit flags win, and FUSEMETRICS_SEED is the last-resort
seed source.  Hard errors leave a machine-parsable JSON object on
stderr and a nonzero exit code.
"""

import argparse
import csv
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import DegenerateInputWarning, FusemetricsError
from .metrics import ALL_METRICS, FULL_REFERENCE_METRICS, VanillaWeights

ENV_SEED_VAR = "FUSEMETRICS_SEED"


# ---------------------------------------------------------------------------
# configuration plumbing

def _parse_config_file(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FusemetricsError(
                    f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _resolve(args, key, cast, default=None):
    """Flag value, else config value, else environment/default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        return cast(cfg[key])
    if key == "seed" and os.environ.get(ENV_SEED_VAR):
        return int(os.environ[ENV_SEED_VAR])
    return default


def _parse_metrics(spec_str):
    names = [m.strip().upper() for m in spec_str.split(",") if m.strip()]
    bad = [m for m in names if m not in ALL_METRICS]
    if bad:
        raise FusemetricsError(
            f"unknown metrics {bad}; choose from {', '.join(ALL_METRICS)}")
    if not names:
        raise FusemetricsError("metric list must not be empty")
    return tuple(names)


def _parse_weights(spec_str):
    parts = spec_str.split(",")
    if len(parts) != 2:
        raise FusemetricsError("--weights expects 'w_ir,w_vis'")
    return VanillaWeights(float(parts[0]), float(parts[1]))


def _parse_size(spec_str):
    w, _, h = spec_str.partition("x")
    return int(w), int(h)


def _resolve_workers(args):
    workers = int(_resolve(args, "workers", int, 1))
    if workers < 1:
        raise FusemetricsError("workers must be >= 1")
    return workers


def _fmt6(x):
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# classical evaluation

def _eval_cell(job):
    root, scene, method, w_ir, w_vis, metric_names = job
    from .dataset import load_triple
    from .metrics import eval_all
    triple = load_triple(root, scene, method)
    times = {}
    scores = {}
    weights = VanillaWeights(w_ir, w_vis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateInputWarning)
        for metric in metric_names:
            t0 = time.perf_counter()
            part = eval_all(triple, weights, metrics=(metric,))
            times[metric] = time.perf_counter() - t0
            if metric in part:
                scores[metric] = part[metric]
    return scene, method, scores, times


def cmd_eval_classical(args):
    from .dataset import scan_dataset

    root = Path(_resolve(args, "dataset", str))
    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_names = _parse_metrics(_resolve(args, "metrics", str,
                                           ",".join(ALL_METRICS)))
    weights = _parse_weights(_resolve(args, "weights", str, "1,1"))
    workers = _resolve_workers(args)

    scenes, methods = scan_dataset(root)
    jobs = [(str(root), s, m, weights.w_ir, weights.w_vis, metric_names)
            for s in scenes for m in methods]
    t_start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_cell, jobs, chunksize=8))
    else:
        results = [_eval_cell(j) for j in jobs]
    wall = time.perf_counter() - t_start

    results.sort(key=lambda r: (r[0], r[1]))
    csv_path = out_dir / "classical_scores.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "method_id", *metric_names])
        for scene, method, scores, _times in results:
            w.writerow([scene, method] + [
                _fmt6(scores[m]) if m in scores else "" for m in metric_names])

    metric_totals = {m: 0.0 for m in metric_names}
    failures = 0
    for _s, _m, scores, times in results:
        failures += len(metric_names) - len(scores)
        for m, dt in times.items():
            metric_totals[m] += dt
    timing = {
        "rows": len(results),
        "failed_cells": failures,
        "wall_seconds": wall,
        "per_metric_seconds": metric_totals,
        "total_metric_seconds": sum(metric_totals.values()),
    }
    with open(out_dir / "classical_timing.json", "w") as fh:
        json.dump(timing, fh, indent=1)
    print(f"wrote {csv_path} ({len(results)} rows, "
          f"{failures} failed cells, {wall:.2f}s)")
    for m in metric_names:
        print(f"  {m:8s} {metric_totals[m]:9.3f}s")
    return 0


# ---------------------------------------------------------------------------
# surrogate evaluation

_WORKER_STATE = {}


def _surrogate_worker_init(probe_path, params_path, dump_dir=None):
    from .decompose import FusionDecomposer
    from .surrogate import SurrogateEvaluator
    _WORKER_STATE["decomposer"] = FusionDecomposer.load(probe_path)
    _WORKER_STATE["evaluator"] = SurrogateEvaluator.load(params_path)
    _WORKER_STATE["dump_dir"] = dump_dir


def _surrogate_cell(job):
    root, scene, method, env_value = job
    from .dataset import load_triple
    triple = load_triple(root, scene, method)
    t0 = time.perf_counter()
    adjusted = _WORKER_STATE["evaluator"].predict_adjusted(
        triple, _WORKER_STATE["decomposer"], env_override=env_value)
    dt = time.perf_counter() - t0
    if _WORKER_STATE.get("dump_dir"):
        # debug dump of the decomposed pair at the pipeline's working
        # resolution, PGM only
        from .decompose import save_components
        from .surrogate import _resize
        ev = _WORKER_STATE["evaluator"]
        fused_w = _resize(triple.fused, ev.train_size_)
        pair = _WORKER_STATE["decomposer"].transform(fused_w)
        save_components(_WORKER_STATE["dump_dir"], scene, method, pair)
    rows = [(scene, method, m, a.q_ir, a.q_vis, a.delta, a.env, a.q_star)
            for m, a in adjusted.items()]
    return scene, method, rows, dt


def _run_env_table(args, root, scenes):
    """Optional per-scene env override from file or heuristic."""
    source = _resolve(args, "env", str, None)
    if source is None:
        return {s: None for s in scenes}
    from .dataset import label_path
    from .environment import env_heuristic, normalize_labels, read_label_file
    from .image import load_gray
    if source == "file":
        raw = read_label_file(label_path(root))
    elif source == "heuristic":
        raw = [(s,) + env_heuristic(load_gray(Path(root) / "vis" / f"{s}.pgm"))
               for s in scenes]
    else:
        raise FusemetricsError(f"--env must be 'file' or 'heuristic', "
                               f"got {source!r}")
    labels = {l.scene_id: l.env for l in normalize_labels(raw)}
    missing = [s for s in scenes if s not in labels]
    if missing:
        raise FusemetricsError(f"env labels missing scene {missing[0]}")
    return {s: labels[s] for s in scenes}


def cmd_eval_surrogate(args):
    from .dataset import scan_dataset
    from .serialize import read_header

    root = Path(_resolve(args, "dataset", str))
    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    probe_path = _resolve(args, "probe", str)
    params_path = _resolve(args, "surrogate", str)
    for p in (probe_path, params_path):
        read_header(p)  # raises MissingArtifactError early
    workers = _resolve_workers(args)

    dump_dir = None
    if getattr(args, "dump_components", False):
        dump_dir = str(out_dir / "components")
    scenes, methods = scan_dataset(root)
    env_table = _run_env_table(args, root, scenes)
    jobs = [(str(root), s, m, env_table[s]) for s in scenes for m in methods]

    t_start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_surrogate_worker_init,
                initargs=(probe_path, params_path, dump_dir)) as pool:
            results = list(pool.map(_surrogate_cell, jobs, chunksize=8))
    else:
        _surrogate_worker_init(probe_path, params_path, dump_dir)
        results = [_surrogate_cell(j) for j in jobs]
    wall = time.perf_counter() - t_start

    results.sort(key=lambda r: (r[0], r[1]))
    csv_path = out_dir / "surrogate_scores.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "method_id", "metric",
                    "q_ir", "q_vis", "delta", "env", "q_star"])
        for _s, _m, rows, _dt in results:
            for row in rows:
                w.writerow(list(row[:3]) + [repr(v) for v in row[3:]])
    per_img = [dt for _s, _m, _rows, dt in results]
    timing = {
        "images": len(per_img),
        "wall_seconds": wall,
        "per_image_mean_seconds": float(np.mean(per_img)),
        "per_image_std_seconds": float(np.std(per_img)),
    }
    with open(out_dir / "surrogate_timing.json", "w") as fh:
        json.dump(timing, fh, indent=1)
    print(f"wrote {csv_path} ({len(results)} triples, "
          f"{timing['per_image_mean_seconds'] * 1e3:.1f} ms/img)")
    return 0


# ---------------------------------------------------------------------------
# training commands

def cmd_train_probe(args):
    from .dataset import iter_triples, scan_dataset
    from .decompose import FusionDecomposer, PROBE_FUSION_OPS, \
        augment_for_zero_suppression

    root = Path(_resolve(args, "dataset", str))
    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(_resolve(args, "seed", int, 0))
    epochs = int(_resolve(args, "epochs", int, 35))
    batch_size = int(_resolve(args, "batch_size", int, 8))
    lr = float(_resolve(args, "learning_rate", float, 1e-3))

    _scenes, methods = scan_dataset(root)
    ops = [m for m in PROBE_FUSION_OPS if m in methods] or methods[:1]
    triples = [(t.ir, t.vis, t.fused)
               for t in iter_triples(root, methods=ops)]
    dec = FusionDecomposer(learning_rate=lr, batch_size=batch_size,
                           epochs=epochs, seed=seed)
    dec.fit(augment_for_zero_suppression(triples))

    artifact = out_dir / "probe.iprb"
    dec.save(artifact)
    with open(out_dir / "probe_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(dec.loss_curve_):
            w.writerow([i, repr(loss)])
    print(f"wrote {artifact} ({artifact.stat().st_size} bytes, "
          f"final loss {dec.final_loss_:.6f})")
    return 0


def cmd_train_surrogate(args):
    from .decompose import FusionDecomposer
    from .surrogate import SurrogateEvaluator, prepare_training_data

    root = Path(_resolve(args, "dataset", str))
    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    probe_path = _resolve(args, "probe", str)
    seed = int(_resolve(args, "seed", int, 0))
    epochs = int(_resolve(args, "epochs", int, 45))
    batch_size = int(_resolve(args, "batch_size", int, 8))
    lr = float(_resolve(args, "learning_rate", float, 1e-3))
    env_source = _resolve(args, "env", str, "file")

    dec = FusionDecomposer.load(probe_path)
    samples = prepare_training_data(root, dec, seed=seed,
                                    env_source=env_source)
    ev = SurrogateEvaluator(learning_rate=lr, batch_size=batch_size,
                            epochs=epochs, seed=seed)
    ev.fit(samples)

    artifact = out_dir / "surrogate.evnt"
    ev.save(artifact)
    with open(out_dir / "surrogate_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "L_total", "L_ir", "L_vis", "L_env"])
        for i, parts in enumerate(ev.loss_curve_):
            w.writerow([i] + [repr(v) for v in parts])
    print(f"wrote {artifact} "
          f"(final L_total {ev.loss_curve_[-1][0]:.6f})")
    return 0


# ---------------------------------------------------------------------------
# consistency reporting

def cmd_mc(args):
    from .consistency import ConsistencyParams, mc_report, read_score_table

    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    params = ConsistencyParams(
        alpha=float(_resolve(args, "alpha", float, 0.9)),
        beta=float(_resolve(args, "beta", float, 0.9)),
        s=float(_resolve(args, "s", float, 0.0125)))
    table = read_score_table(args.score_csv, args.sidecar)
    report = mc_report(table, params=params)
    report.write(out_dir)
    print(report.pretty())
    print(f"wrote {out_dir}/mc_matrix.csv, mc_breakdown.csv, mc_meta.json")
    return 0


# ---------------------------------------------------------------------------
# benchmarking

def cmd_bench(args):
    from .dataset import load_triple, scan_dataset
    from .metrics import vanilla_fusion_score

    root = Path(_resolve(args, "dataset", str))
    out_dir = Path(_resolve(args, "out", str, "fusemetrics-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    n_images = int(_resolve(args, "images", int, 5))
    probe_path = _resolve(args, "probe", str)
    params_path = _resolve(args, "surrogate", str)

    scenes, methods = scan_dataset(root)
    triples = [load_triple(root, s, methods[0]) for s in scenes[:n_images]]
    if not triples:
        raise FusemetricsError("bench needs at least one triple")

    weights = VanillaWeights(1.0, 1.0)
    report = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateInputWarning)
        for metric in FULL_REFERENCE_METRICS:
            vanilla_fusion_score(triples[0], metric, weights)  # warmup
            times = []
            for t in triples:
                t0 = time.perf_counter()
                vanilla_fusion_score(t, metric, weights)
                times.append(time.perf_counter() - t0)
            report[metric] = {"mean_s": float(np.mean(times)),
                              "std_s": float(np.std(times))}
    classical_sum = sum(v["mean_s"] for v in report.values())

    surrogate_mean = None
    if probe_path and params_path:
        _surrogate_worker_init(probe_path, params_path)
        dec = _WORKER_STATE["decomposer"]
        ev = _WORKER_STATE["evaluator"]
        ev.predict_adjusted(triples[0], dec)  # warmup
        times = []
        for t in triples:
            t0 = time.perf_counter()
            ev.predict_adjusted(t, dec)
            times.append(time.perf_counter() - t0)
        surrogate_mean = float(np.mean(times))
        report["surrogate_one_pass"] = {"mean_s": surrogate_mean,
                                        "std_s": float(np.std(times))}

    summary = {
        "images": len(triples),
        "per_metric": report,
        "classical_sum_s": classical_sum,
    }
    if surrogate_mean:
        summary["speedup_classical_over_surrogate"] = \
            classical_sum / surrogate_mean
    with open(out_dir / "bench.json", "w") as fh:
        json.dump(summary, fh, indent=1)

    width = max(len(k) for k in report)
    print(f"{'kernel':<{width}s}  {'mean':>10s}  {'std':>10s}")
    for name, row in report.items():
        print(f"{name:<{width}s}  {row['mean_s'] * 1e3:9.2f}ms "
              f"{row['std_s'] * 1e3:9.2f}ms")
    print(f"classical 8-metric sum: {classical_sum * 1e3:.1f} ms/img")
    if surrogate_mean:
        print(f"surrogate one-pass:     {surrogate_mean * 1e3:.1f} ms/img "
              f"({summary['speedup_classical_over_surrogate']:.1f}x)")
    return 0


# ---------------------------------------------------------------------------
# synthetic data

def cmd_synth(args):
    from .synth import write_dataset

    out_dir = Path(_resolve(args, "out", str, "fusemetrics-dataset"))
    n_scenes = int(_resolve(args, "scenes", int, 50))
    seed = int(_resolve(args, "seed", int, 0))
    size = _parse_size(_resolve(args, "size", str, "64x64"))
    night = float(_resolve(args, "night_fraction", float, 0.4))
    scenes = write_dataset(out_dir, n_scenes, size=size, base_seed=seed,
                           night_fraction=night)
    print(f"wrote {len(scenes)} scenes x 16 methods under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_common(sp):
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--dataset", help="dataset root directory")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)


def build_parser():
    p = argparse.ArgumentParser(
        prog="fusemetrics",
        description="Batch evaluation tooling for infrared/visible fusion")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(sp)
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--size", help="WIDTHxHEIGHT, default 64x64")
    sp.add_argument("--night-fraction", dest="night_fraction", type=float)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("eval-classical",
                        help="classical metrics over a dataset")
    _add_common(sp)
    sp.add_argument("--metrics", help="comma-separated metric subset")
    sp.add_argument("--weights", help="w_ir,w_vis (default 1,1)")
    sp.set_defaults(func=cmd_eval_classical)

    sp = sub.add_parser("eval-surrogate",
                        help="one-pass surrogate evaluation")
    _add_common(sp)
    sp.add_argument("--probe", help="trained probe artifact (.iprb)")
    sp.add_argument("--surrogate", help="trained surrogate artifact (.evnt)")
    sp.add_argument("--env", choices=("file", "heuristic"),
                    help="override the learned env weight from labels")
    sp.add_argument("--dump-components", dest="dump_components",
                    action="store_true",
                    help="debug-dump decomposed pairs as PGM under --out")
    sp.set_defaults(func=cmd_eval_surrogate)

    sp = sub.add_parser("train-probe", help="train the decomposition probe")
    _add_common(sp)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float)
    sp.set_defaults(func=cmd_train_probe)

    sp = sub.add_parser("train-surrogate", help="train the surrogate")
    _add_common(sp)
    sp.add_argument("--probe", help="trained probe artifact (.iprb)")
    sp.add_argument("--env", choices=("file", "heuristic"))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float)
    sp.set_defaults(func=cmd_train_surrogate)

    sp = sub.add_parser("mc", help="metric consistency report")
    sp.add_argument("score_csv")
    sp.add_argument("sidecar")
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--s", type=float)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("bench", help="per-metric timing table")
    _add_common(sp)
    sp.add_argument("--images", type=int, help="triples to time (default 5)")
    sp.add_argument("--probe")
    sp.add_argument("--surrogate")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config_values = {}
    if getattr(args, "config", None):
        try:
            args._config_values = _parse_config_file(args.config)
        except OSError as exc:
            print(json.dumps({"error": type(exc).__name__,
                              "message": str(exc)}), file=sys.stderr)
            return 1
    try:
        required_dataset = args.func in (
            cmd_eval_classical, cmd_eval_surrogate, cmd_train_probe,
            cmd_train_surrogate, cmd_bench)
        if required_dataset and _resolve(args, "dataset", str) is None:
            raise FusemetricsError("--dataset is required")
        if args.func in (cmd_eval_surrogate, cmd_train_surrogate):
            if _resolve(args, "probe", str) is None:
                raise FusemetricsError("--probe is required")
        if args.func is cmd_eval_surrogate \
                and _resolve(args, "surrogate", str) is None:
            raise FusemetricsError("--surrogate is required")
        return args.func(args)
    except (FusemetricsError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
