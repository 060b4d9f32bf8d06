"""Command-line pipeline orchestration.

Subcommands cover the full workflow: population generation, simulation,
sparse sensing, training, decomposition, identification, classical
baselines, ablation sweeps, reporting, and dataset inspection. A single
global seed fans out to per-stage seeds through a documented splitting
rule so stages re-run independently yet reproducibly.

Exit codes: 0 success, 1 stage failure, 2 configuration error,
3 acceptance/threshold failure (ablate ordering check).
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3

# Seed fan-out: stage seed = SeedSequence([global_seed, STAGE_IDS[stage]]).
STAGE_IDS = {
    "gen-population": 0,
    "simulate": 1,
    "sense": 2,
    "train": 3,
    "decompose": 4,
    "identify": 5,
    "baseline": 6,
    "ablate": 7,
    "report": 8,
}


class ConfigError(ValueError):
    pass


def stage_seed(global_seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([int(global_seed), STAGE_IDS[stage]])
    return int(ss.generate_state(1)[0])


def parse_config_file(path) -> dict:
    """Key/value text config: one `key = value` per line, `#` comments.

    Values are parsed as int, float, bool, or comma-separated float tuple,
    falling back to string.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = _parse_value(value)
    return out


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if "," in text:
        try:
            return tuple(float(v) for v in text.split(","))
        except ValueError:
            pass
    return text


def _apply_config(obj, values: dict, prefix: str) -> None:
    """Set `prefix.key` entries from a config dict onto a dataclass."""
    names = {f.name for f in fields(obj)}
    for key, value in values.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1 :]
        if name not in names:
            raise ConfigError(f"unknown {prefix} option: {name}")
        setattr(obj, name, value)


@dataclass
class RunConfig:
    """Stage selection plus every stage's parameters for run_pipeline."""

    stages: list = field(default_factory=list)
    out_dir: str = "artifacts"
    seed: int = 0
    count: int = 10
    n_steps: int = 2000
    n_modes: int = 6
    keep_fraction: float = 0.18
    cutoff_hz: float = 20.0
    split_fractions: tuple = (0.80, 0.05, 0.15)
    variant: str = "full"
    independence: bool = True
    config_values: dict = field(default_factory=dict)


# ---------------------------------------------------------------- stages


def _dataset_path(out_dir):
    return os.path.join(out_dir, "dataset.mpd")


def cmd_gen_population(args) -> int:
    from . import graphdata, population

    boundary = population.TrapezoidSpec(
        span_m=args.span, top_span_m=args.top_span, height_m=args.height
    )
    seed = stage_seed(args.seed, "gen-population")
    trusses = population.generate_population(args.count, boundary, seed=seed)
    graphs = [graphdata.AttributedGraph(truss=t) for t in trusses]
    graphdata.save(graphs, args.out, seed=args.seed, boundary=boundary)
    print(f"wrote {len(graphs)} trusses to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from . import fem, graphdata

    graphs = graphdata.load(args.population)
    seed = stage_seed(args.seed, "simulate")
    for i, g in enumerate(graphs):
        history, reference = fem.simulate(
            g.truss, seed=seed + i, n_steps=args.n_steps
        )
        g.raw_accelerations = history.accelerations
        g._reference = reference
        g.fs_Hz = history.fs_Hz
    graphdata.save(graphs, args.out, seed=args.seed)
    print(f"simulated {len(graphs)} structures -> {args.out}")
    return EXIT_OK


def cmd_sense(args) -> int:
    from . import graphdata, sensing

    graphs = graphdata.load(args.dataset)
    for g in graphs:
        if g.raw_accelerations is None:
            raise RuntimeError(
                f"graph {g.graph_id} has no simulated response; run simulate first"
            )
        g.signals = sensing.sense(
            g.truss,
            g.raw_accelerations,
            g.fs_Hz,
            keep_fraction=args.keep_fraction,
            fc_Hz=args.cutoff_hz,
        )
    fractions = tuple(args.split)
    graphdata.split(graphs, fractions, seed=stage_seed(args.seed, "sense"))
    graphdata.save(graphs, args.out, seed=args.seed)
    counts = {s: sum(g.split_tag == s for g in graphs) for s in graphdata.SPLITS}
    print(f"sensed {len(graphs)} structures -> {args.out}; splits {counts}")
    return EXIT_OK


def _model_and_train_configs(args, signal_length):
    from .network import ModelConfig
    from .training import LossWeights, TrainConfig

    values = parse_config_file(args.config) if args.config else {}
    mc = ModelConfig(signal_length=signal_length)
    tc = TrainConfig(seed=stage_seed(args.seed, "train"))
    _apply_config(mc, values, "model")
    _apply_config(tc, values, "train")
    _apply_config(tc.loss_weights, values, "loss")
    if getattr(args, "epochs", None) is not None:
        tc.epochs = args.epochs
    if getattr(args, "variant", None):
        mc.variant = "full" if args.variant == "no_independence" else args.variant
        tc.independence_enabled = args.variant != "no_independence"
    return mc, tc


def cmd_train(args) -> int:
    from . import graphdata
    from .network import save_checkpoint
    from .training import train

    graphs = graphdata.load(args.dataset)
    lengths = {g.signals.signals.shape[1] for g in graphs if g.signals is not None}
    if len(lengths) != 1:
        raise RuntimeError("dataset graphs must share one signal length; run sense first")
    mc, tc = _model_and_train_configs(args, lengths.pop())
    model, log, best_state = train(graphs, mc, tc)
    if best_state is not None:
        model.load_state_dict(best_state)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_checkpoint(args.out, model, seed=tc.seed)
    log.to_csv(os.path.splitext(args.out)[0] + "_log.csv")
    print(
        f"trained {mc.variant} variant for {tc.epochs} epochs; "
        f"final val loss {log.val_loss[-1]:.6g} -> {args.out}"
    )
    return EXIT_OK


def cmd_decompose(args) -> int:
    import torch

    from . import graphdata
    from .network import adjacency_mask, load_checkpoint, normalize_decomposition

    model, payload = load_checkpoint(args.checkpoint)
    model.eval()
    graphs = graphdata.load(args.dataset)
    arrays = {}
    for g in graphs:
        x = torch.as_tensor(g.signals.signals, dtype=torch.float32)
        adj = adjacency_mask(g.truss)
        with torch.no_grad():
            q, phi = model(x, adj)
        res = normalize_decomposition(q.numpy(), phi.numpy())
        arrays[f"q/{g.graph_id}"] = res.modal_responses
        arrays[f"phi/{g.graph_id}"] = res.mode_shapes
    np.savez(args.out, **arrays)
    print(f"decomposed {len(graphs)} structures -> {args.out}")
    return EXIT_OK


def _load_decomposition(path) -> dict:
    data = np.load(path)
    out = {}
    for key in data.files:
        kind, graph_id = key.split("/", 1)
        out.setdefault(graph_id, {})[kind] = data[key]
    return out


def _report_to_json(report) -> dict:
    structures = []
    for s in report.structures:
        matches = []
        for m in s.matches:
            matches.append(
                {
                    "mode_number": m.mode_number,
                    "mac": m.mac,
                    "frequency_error_pct": m.frequency_error_pct,
                    "damping_error_pct": m.damping_error_pct,
                    "frequency_Hz": m.identified.frequency_Hz,
                    "damping_ratio": m.identified.damping_ratio,
                }
            )
        structures.append(
            {
                "graph_id": s.graph_id,
                "split": s.split_tag,
                "failed": s.failed,
                "unmatched_reference_modes": s.unmatched_reference_modes,
                "matches": matches,
            }
        )
    return {"structures": structures}


def _write_report(report, out_dir, name):
    from .report import write_statistics_csv

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
        json.dump(_report_to_json(report), fh, indent=1)
    write_statistics_csv(report, os.path.join(out_dir, f"{name}_statistics.csv"))


def cmd_identify(args) -> int:
    from . import graphdata, identify
    from .network import DecompositionResult

    graphs = graphdata.load(args.dataset)
    decomposition = _load_decomposition(args.decomposition)
    rows = []
    for g in graphs:
        if g.graph_id not in decomposition:
            raise RuntimeError(f"no decomposition for graph {g.graph_id}")
        d = decomposition[g.graph_id]
        res = DecompositionResult(modal_responses=d["q"], mode_shapes=d["phi"])
        decay_start = args.decay_start
        if decay_start is None:
            decay_start = d["q"].shape[1] // 2
        modes = identify.identify_modes(res, g.fs_Hz, decay_start=decay_start)
        selected = identify.spurious_filter(modes, args.n_modes)
        rows.append((g.graph_id, g.split_tag, selected, g.reference))
    report = identify.match_and_report(rows, n_modes=args.n_modes)
    _write_report(report, args.out, "identification")
    _print_summary(report, args.n_modes)
    return EXIT_OK


def cmd_baseline(args) -> int:
    from . import baselines, graphdata, identify

    graphs = graphdata.load(args.dataset)
    rows = []
    for g in graphs:
        mask = g.signals.mask
        measured = g.signals.signals[mask]
        if args.method == "efdd":
            stack = baselines.cross_psd(measured, g.fs_Hz)
            modes = baselines.efdd_identify(stack, args.n_modes)
        else:
            modes = baselines.ssi_identify(
                measured, g.fs_Hz, order=args.order, n_target=args.n_modes
            )
        x_all = g.truss.node_coords[:, 0]
        for m in modes:
            m.mode_shape = baselines.interpolate_shapes(
                m.mode_shape[:, None], x_all[mask], x_all
            )[:, 0]
        rows.append((g.graph_id, g.split_tag, modes, g.reference))
    report = identify.match_and_report(rows, n_modes=args.n_modes)
    _write_report(report, args.out, args.method)
    _print_summary(report, args.n_modes)
    return EXIT_OK


def _print_summary(report, n_modes, splits=("train", "validation", "test")):
    stats = report.statistics(splits=splits, n_modes=n_modes)
    for mode in range(1, n_modes + 1):
        s = stats[mode]
        print(
            f"mode {mode}: MAC mean {s['mac']['mean']:.3f} "
            f"(n={s['mac']['count']}), "
            f"freq err mean {s['freq_err_pct']['mean']:.2f}%"
        )


ABLATION_VARIANTS = ("full", "no_gnn", "set_lstm", "no_independence")


def cmd_ablate(args) -> int:
    config = RunConfig(
        stages=["train", "decompose", "identify"],
        out_dir=args.out,
        seed=args.seed,
        n_modes=args.n_modes,
    )
    config.config_values["dataset"] = args.dataset
    config.config_values["config"] = args.config
    config.config_values["epochs"] = args.epochs

    mean_mac1 = {}
    for variant in ABLATION_VARIANTS:
        variant_dir = os.path.join(args.out, variant)
        report = _run_variant(config, variant, variant_dir, args)
        stats = report.statistics(splits=("train",), n_modes=args.n_modes)
        mean_mac1[variant] = stats[1]["mac"]["mean"]
        print(f"variant {variant}: mode-1 mean MAC {mean_mac1[variant]:.3f}")

    with open(os.path.join(args.out, "ablation_summary.json"), "w") as fh:
        json.dump(mean_mac1, fh, indent=1)
    full = mean_mac1["full"]
    others = [v for k, v in mean_mac1.items() if k != "full" and np.isfinite(v)]
    if not np.isfinite(full) or any(full < v for v in others):
        print("ablation ordering check FAILED: full variant is not best")
        return EXIT_ACCEPTANCE
    print("ablation ordering check passed: full variant is best")
    return EXIT_OK


def _run_variant(config, variant, variant_dir, args):
    from argparse import Namespace

    os.makedirs(variant_dir, exist_ok=True)
    checkpoint = os.path.join(variant_dir, "model.ckpt")
    decomposition = os.path.join(variant_dir, "decomposition.npz")
    train_args = Namespace(
        dataset=args.dataset, out=checkpoint, config=args.config,
        seed=args.seed, epochs=args.epochs, variant=variant,
    )
    cmd_train(train_args)
    cmd_decompose(Namespace(checkpoint=checkpoint, dataset=args.dataset, out=decomposition))
    from . import graphdata, identify
    from .network import DecompositionResult

    graphs = graphdata.load(args.dataset)
    decomp = _load_decomposition(decomposition)
    rows = []
    for g in graphs:
        d = decomp[g.graph_id]
        res = DecompositionResult(modal_responses=d["q"], mode_shapes=d["phi"])
        modes = identify.identify_modes(res, g.fs_Hz, decay_start=d["q"].shape[1] // 2)
        rows.append((g.graph_id, g.split_tag, identify.spurious_filter(modes, args.n_modes), g.reference))
    report = identify.match_and_report(rows, n_modes=args.n_modes)
    _write_report(report, variant_dir, "identification")
    return report


def run_pipeline(config: RunConfig) -> str:
    """Execute the requested stages in dependency order; returns out_dir.

    Stage artifacts live under ``config.out_dir`` with fixed names so a
    later invocation can resume from any completed stage.
    """
    from argparse import Namespace

    order = ["gen-population", "simulate", "sense", "train", "decompose", "identify"]
    unknown = set(config.stages) - set(order)
    if unknown:
        raise ConfigError(f"unknown stages: {sorted(unknown)}")
    os.makedirs(config.out_dir, exist_ok=True)
    ds = _dataset_path(config.out_dir)
    checkpoint = os.path.join(config.out_dir, "model.ckpt")
    decomposition = os.path.join(config.out_dir, "decomposition.npz")
    stage_args = {
        "gen-population": Namespace(
            count=config.count, seed=config.seed, out=ds,
            span=100.0, top_span=60.0, height=15.0,
        ),
        "simulate": Namespace(
            population=ds, seed=config.seed, out=ds, n_steps=config.n_steps
        ),
        "sense": Namespace(
            dataset=ds, out=ds, seed=config.seed,
            keep_fraction=config.keep_fraction, cutoff_hz=config.cutoff_hz,
            split=config.split_fractions,
        ),
        "train": Namespace(
            dataset=ds, out=checkpoint, seed=config.seed,
            config=config.config_values.get("config"),
            epochs=config.config_values.get("epochs"),
            variant=config.variant if config.independence else "no_independence",
        ),
        "decompose": Namespace(checkpoint=checkpoint, dataset=ds, out=decomposition),
        "identify": Namespace(
            dataset=ds, decomposition=decomposition,
            out=config.out_dir, n_modes=config.n_modes, decay_start=None,
        ),
    }
    handlers = {
        "gen-population": cmd_gen_population,
        "simulate": cmd_simulate,
        "sense": cmd_sense,
        "train": cmd_train,
        "decompose": cmd_decompose,
        "identify": cmd_identify,
    }
    for stage in order:
        if stage not in config.stages:
            continue
        inputs = {
            "simulate": [ds], "sense": [ds], "train": [ds],
            "decompose": [checkpoint, ds], "identify": [decomposition, ds],
        }.get(stage, [])
        for path in inputs:
            if not os.path.exists(path):
                prior = order[order.index(stage) - 1]
                raise RuntimeError(
                    f"stage '{stage}' needs missing artifact {path}; "
                    f"run '{prior}' first"
                )
        handlers[stage](stage_args[stage])
    return config.out_dir


def cmd_report(args) -> int:
    from . import graphdata
    from .report import render_report
    from .training import TrainLog

    report = _report_from_json(args.report)
    log = None
    if args.train_log:
        log = _train_log_from_csv(args.train_log)
    references = None
    if args.dataset:
        graphs = graphdata.load(args.dataset)
        references = [g.reference for g in graphs if g.reference is not None]
    comparisons = {}
    for item in args.baseline or []:
        if "=" not in item:
            raise ConfigError("--baseline expects name=report.json")
        name, path = item.split("=", 1)
        comparisons[name] = _report_from_json(path)
    render_report(
        report, args.out, log=log, references=references,
        comparisons=comparisons or None, n_modes=args.n_modes,
    )
    print(f"report artifacts written to {args.out}")
    return EXIT_OK


def _report_from_json(path):
    from .identify import (
        IdentificationReport, IdentifiedMode, ModeMatch, StructureResult,
    )

    with open(path) as fh:
        payload = json.load(fh)
    report = IdentificationReport()
    for s in payload["structures"]:
        result = StructureResult(
            graph_id=s["graph_id"], split_tag=s["split"], failed=s["failed"],
            unmatched_reference_modes=s["unmatched_reference_modes"],
        )
        for m in s["matches"]:
            identified = IdentifiedMode(
                frequency_Hz=m["frequency_Hz"],
                damping_ratio=m["damping_ratio"],
                mode_shape=np.zeros(1),
                psd_peak_magnitude=0.0,
                single_peak_dominance=1.0,
                source_index=0,
            )
            result.matches.append(
                ModeMatch(
                    mode_number=m["mode_number"], identified=identified,
                    mac=m["mac"],
                    frequency_error_pct=m["frequency_error_pct"],
                    damping_error_pct=m["damping_error_pct"],
                )
            )
        report.structures.append(result)
    return report


def _train_log_from_csv(path):
    import csv

    from .training import TrainLog

    log = TrainLog()
    with open(path) as fh:
        for row in csv.DictReader(fh):
            log.epochs.append(int(row["epoch"]))
            log.train_loss.append(float(row["train_loss"]))
            log.val_loss.append(float(row["val_loss"]))
    return log


def cmd_inspect(args) -> int:
    from . import graphdata

    header = graphdata.read_manifest(args.file)
    print(f"schema version: {header['schema_version']}")
    print(f"population seed: {header['seed']}")
    if header.get("boundary"):
        print(f"boundary: {header['boundary']}")
    print(f"split counts: {header['split_counts']}")
    print(f"graphs: {len(header['graphs'])}")
    for entry in header["graphs"]:
        arrays = ", ".join(sorted(entry["arrays"]))
        print(
            f"  {entry['id']}: split={entry['split']} nodes={entry['n_nodes']} "
            f"E={entry['youngs_modulus_Pa']:.4g} Pa arrays=[{arrays}]"
        )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalpop",
        description="Population-level modal decomposition toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-population", help="generate random trusses")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--span", type=float, default=100.0)
    p.add_argument("--top-span", type=float, default=60.0)
    p.add_argument("--height", type=float, default=15.0)
    p.set_defaults(func=cmd_gen_population)

    p = sub.add_parser("simulate", help="simulate dynamic responses")
    p.add_argument("--population", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-steps", type=int, default=2000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sense", help="filter, mask, and reconstruct signals")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-fraction", type=float, default=0.18)
    p.add_argument("--cutoff-hz", type=float, default=20.0)
    p.add_argument(
        "--split", type=float, nargs=3, default=(0.80, 0.05, 0.15),
        metavar=("TRAIN", "VAL", "TEST"),
    )
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("train", help="train the decomposition model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument(
        "--variant", choices=ABLATION_VARIANTS, default="full",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decompose", help="run a checkpoint over a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("identify", help="extract modal parameters")
    p.add_argument("--decomposition", required=True)
    p.add_argument("--dataset", required=True, help="dataset with references")
    p.add_argument("--out", required=True)
    p.add_argument("--n-modes", type=int, default=4)
    p.add_argument("--decay-start", type=int)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("baseline", help="classical OMA baselines")
    p.add_argument("--method", choices=("efdd", "ssi"), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-modes", type=int, default=4)
    p.add_argument("--order", type=int, default=20, help="SSI model order")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate", help="train and score all model variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-modes", type=int, default=4)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render tables and figures")
    p.add_argument("--report", required=True, help="identification.json")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset")
    p.add_argument("--train-log")
    p.add_argument(
        "--baseline", action="append", metavar="NAME=REPORT_JSON",
    )
    p.add_argument("--n-modes", type=int, default=4)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("inspect", help="print a dataset manifest")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # stage failure
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
