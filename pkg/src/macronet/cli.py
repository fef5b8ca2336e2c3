"""Command-line entry point.

Verbs: simulate | train | design | eval | inspect. Every command is
deterministic given its full flag set including --seed. Exit codes:
0 success, 2 usage or validation failure, 3 numeric failure (divergence,
integration blow-up, or failing evaluation metrics).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio, metrics, simulators
from .config import RunConfig
from .errors import ContractError, DataFormatError, DimensionError, MacroNetError, NumericError
from .model import MacroModel, TrainConfig, train

log = logging.getLogger("macronet")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="run seed (mandatory)")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macronet",
        description="Discover shared macrostates from paired observations and "
        "design microstates that realize a target macrostate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a paired dataset")
    _common_flags(p_sim)
    p_sim.add_argument("--testbed", choices=simulators.TESTBEDS, default=None)
    p_sim.add_argument("--n", type=int, default=None, help="record count")
    p_sim.add_argument("--grid", type=int, default=None, help="turing grid resolution")
    p_sim.add_argument("--steps", type=int, default=None, help="turing integration steps")

    p_train = sub.add_parser("train", help="train a model on a dataset file")
    _common_flags(p_train)
    p_train.add_argument("--dataset", required=True, help="dataset file from simulate")
    p_train.add_argument("--macro-dim", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--learning-rate", type=float, default=None)
    p_train.add_argument("--lr-decay", type=float, default=None)
    p_train.add_argument("--flow-depth", type=int, default=None)
    p_train.add_argument("--flow-width", type=int, default=None)
    p_train.add_argument("--dist-weight", type=float, default=None)
    p_train.add_argument("--input-noise-std", type=float, default=None)
    p_train.add_argument(
        "--shared-weights", choices=("on", "off"), default=None,
        help="force weight sharing (default: on for sho, off otherwise)",
    )

    p_design = sub.add_parser("design", help="sample microstates at a target macrostate")
    _common_flags(p_design)
    p_design.add_argument("--checkpoint", required=True)
    p_design.add_argument("--example-file", required=True, help="dataset file holding examples")
    p_design.add_argument("--example-index", type=int, default=0)
    p_design.add_argument("--side", choices=("u", "v"), default="u", help="side to sample")
    p_design.add_argument("--n", type=int, default=100, help="samples to draw")
    p_design.add_argument(
        "--resimulate", action="store_true",
        help="run the simulator on sampled parameters and save the regenerated records",
    )
    p_design.add_argument(
        "--export-fields", action="store_true",
        help="with --resimulate on turing, dump each regenerated field as .f64 + .hdr",
    )

    p_eval = sub.add_parser("eval", help="run the testbed metrics against a checkpoint")
    _common_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True, help="held-out dataset file")
    p_eval.add_argument("--examples", type=int, default=4, help="design examples to test")
    p_eval.add_argument("--samples", type=int, default=8, help="designs per example")

    p_inspect = sub.add_parser("inspect", help="describe a container file")
    p_inspect.add_argument("path")

    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for key in (
        "testbed", "n", "seed", "grid", "macro_dim", "epochs", "batch_size",
        "learning_rate", "lr_decay", "flow_depth", "flow_width", "dist_weight",
        "input_noise_std",
    ):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "steps", None) is not None:
        overrides["sim_steps"] = args.steps
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "shared_weights", None) is not None:
        overrides["shared_weights"] = args.shared_weights == "on"
    if getattr(args, "verbose", False):
        overrides["verbose"] = True
    return config.override(**overrides).validate()


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_from_config(config: RunConfig, dim_u: int, dim_v: int) -> MacroModel:
    return MacroModel(
        dim_u=dim_u,
        dim_v=dim_v,
        macro_dim=config.resolved_macro_dim,
        flow_depth=config.flow_depth,
        flow_width=config.flow_width,
        scale_clamp=config.scale_clamp,
        shared_weights=config.resolved_shared_weights,
        dist_weight=config.dist_weight,
        input_noise_std=config.input_noise_std,
        init_seed=config.seed,
    )


def cmd_simulate(args) -> int:
    config = _load_config(args)
    dataset = simulators.build_pair_dataset(
        config.testbed,
        config.n,
        config.seed,
        grid=config.grid,
        sim_steps=config.sim_steps,
        traj_steps=config.traj_steps,
    )
    out = _out_dir(config) / f"dataset_{config.testbed}_n{config.n}_s{config.seed}.mnds"
    digest = dataio.save_dataset(out, dataset)
    print(f"wrote {out}")
    print(f"records: {len(dataset)} (dim_u={dataset.dim_u}, dim_v={dataset.dim_v})")
    print(f"sha256: {digest}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    dataset = dataio.load_dataset(args.dataset)
    testbed = dataset.metadata.get("generator", config.testbed)
    # simulator settings travel with the dataset into the checkpoint so that
    # design/eval re-simulate at the resolution the model was trained on
    config = config.override(
        testbed=testbed,
        n=len(dataset),
        grid=dataset.metadata.get("grid"),
        sim_steps=dataset.metadata.get("sim_steps"),
        traj_steps=dataset.metadata.get("traj_steps"),
    ).validate()
    expected = simulators.testbed_dims(
        testbed, grid=config.grid, traj_steps=config.traj_steps
    )
    if (dataset.dim_u, dataset.dim_v) != expected:
        raise ContractError(
            f"dataset dims ({dataset.dim_u}, {dataset.dim_v}) do not match "
            f"testbed '{testbed}' dims {expected}"
        )
    model = _model_from_config(config, dataset.dim_u, dataset.dim_v)
    log.info("training %s: %d records, %d epochs", testbed, len(dataset), config.epochs)
    report = train(
        model,
        dataset,
        TrainConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            lr_decay=config.lr_decay,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            seed=config.seed,
        ),
    )
    out = _out_dir(config)
    stem = f"{testbed}_s{config.seed}"
    ckpt = out / f"model_{stem}.mnck"
    digest = dataio.save_checkpoint(ckpt, model, config.to_dict())
    dataio.save_loss_table(out / f"losses_{stem}.tsv", report)
    print(f"wrote {ckpt}")
    print(f"sha256: {digest}")
    print(f"final losses: prediction={report.prediction[-1]:.6g} "
          f"dist_u={report.dist_u[-1]:.6g} dist_v={report.dist_v[-1]:.6g} "
          f"total={report.total[-1]:.6g}")
    print(f"macro rmse: {report.macro_rmse:.6g}")
    return EXIT_OK


def cmd_design(args) -> int:
    if args.seed is None and args.config is None:
        raise ContractError("seed is mandatory; pass --seed or a config file")
    model, snapshot = dataio.load_checkpoint(args.checkpoint)
    config = RunConfig.from_dict(snapshot) if snapshot else RunConfig()
    config = config.override(
        seed=args.seed, out_dir=args.out, verbose=args.verbose or None
    ).validate()
    examples = dataio.load_dataset(args.example_file)
    if args.example_index < 0 or args.example_index >= len(examples):
        raise ContractError(
            f"example index {args.example_index} out of range for {len(examples)} records"
        )
    if examples.dim_v != model.dim_v:
        raise DimensionError(
            f"example dim {examples.dim_v} does not match the model's v side {model.dim_v}"
        )
    example = examples.v_records[args.example_index]
    target = model.encode("v", example)
    result = model.conditional_sample(args.side, target, args.n, seed=[config.seed, 1])
    if "warning" in result.metadata:
        print(f"warning: {result.metadata['warning']}", file=sys.stderr)
    out = _out_dir(config)
    testbed = config.testbed
    stem = f"{testbed}_{args.side}_s{config.seed}"
    samples_path = out / f"designed_{stem}.mnds"
    digest = dataio.save_samples(samples_path, result.samples, result.metadata)
    print(f"wrote {samples_path}")
    print(f"sha256: {digest}")
    print(f"macro error p95: {result.metadata['macro_error_p95']:.6g}")

    if args.resimulate:
        if args.side != "u":
            raise ContractError("--resimulate needs parameter samples (--side u)")
        clipped = simulators.clip_to_ranges(testbed, result.samples)
        regenerated = simulators.resimulate(
            testbed,
            clipped,
            [config.seed, 2],
            grid=config.grid,
            sim_steps=config.sim_steps,
            traj_steps=config.traj_steps,
        )
        regen_path = out / f"resimulated_{stem}.mnds"
        dataio.save_samples(
            regen_path,
            regenerated,
            {"testbed": testbed, "seed": config.seed, "target": target.tolist()},
        )
        print(f"wrote {regen_path}")
        if args.export_fields and testbed == "turing":
            for j, row in enumerate(regenerated):
                half = row.size // 2
                field = simulators.GrayScottField(
                    a=row[:half].reshape(config.grid, config.grid),
                    b=row[half:].reshape(config.grid, config.grid),
                    params=simulators.GrayScottParams.from_vector(clipped[j]),
                    steps_run=config.sim_steps,
                )
                simulators.save_field_snapshot(field, out / f"field_{stem}_{j:03d}")
            print(f"exported {len(regenerated)} field snapshots")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.seed is None and args.config is None:
        raise ContractError("seed is mandatory; pass --seed or a config file")
    model, snapshot = dataio.load_checkpoint(args.checkpoint)
    config = RunConfig.from_dict(snapshot) if snapshot else RunConfig()
    config = config.override(
        seed=args.seed, out_dir=args.out, verbose=args.verbose or None
    ).validate()
    dataset = dataio.load_dataset(args.dataset)
    testbed = dataset.metadata.get("generator")
    if testbed != config.testbed:
        raise ContractError(
            f"dataset testbed '{testbed}' does not match checkpoint '{config.testbed}'"
        )

    reports: list[metrics.EvalReport] = []
    reports.append(metrics.macro_informativeness(model, dataset, seed=config.seed))
    if testbed == "sho":
        reports.append(metrics.sho_energy_monotonicity(model, dataset, seed=config.seed))
    elif testbed == "linear":
        anti = simulators.linear_rollout(
            simulators.LinearSystemSpec(
                np.array([[0.0, -1.0], [1.0, 0.0]]),
                np.array([1.0, 0.0]),
                steps=config.traj_steps,
            )
        )
        for direct in (False, True):
            reports.append(
                metrics.rotation_design_agreement(
                    model, anti.flat(), args.samples * args.examples,
                    config.seed, direct=direct, traj_steps=config.traj_steps,
                )
            )
    elif testbed == "turing":
        pool = min(24, len(dataset))
        examples = metrics.representative_pattern_examples(
            model, dataset, min(args.examples, pool), pool=pool
        )
        design_reports, _ = metrics.design_consistency(
            model,
            testbed,
            examples,
            dataset,
            args.samples,
            config.seed,
            grid=config.grid,
            sim_steps=config.sim_steps,
            traj_steps=config.traj_steps,
        )
        reports.extend(design_reports)
        targets = model.encode(
            "v", metrics.spread_pattern_examples(model, dataset, 3, pool=pool)
        )
        ranked = metrics.parameter_sensitivity(
            model, targets, max(args.samples * args.examples, 64), config.seed
        )
        reports.append(
            metrics.sensitivity_report(
                ranked, max(args.samples * args.examples, 64), config.seed
            )
        )

    out = _out_dir(config) / f"eval_{config.testbed}_s{config.seed}.jsonl"
    dataio.save_reports(out, reports)
    for report in reports:
        print(report.to_line())
    print(f"wrote {out}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_NUMERIC


def cmd_inspect(args) -> int:
    path = Path(args.path)
    raw = path.read_bytes()[:4]
    if raw == dataio.DATASET_MAGIC:
        metadata, blocks, digest = dataio.read_container(path, dataio.DATASET_MAGIC)
    elif raw == dataio.CHECKPOINT_MAGIC:
        metadata, blocks, digest = dataio.read_container(path, dataio.CHECKPOINT_MAGIC)
    else:
        raise DataFormatError(f"{path}: unrecognized magic {raw!r}")
    print(f"file: {path}")
    print(f"kind: {metadata.get('kind', 'unknown')}")
    print(f"sha256: {digest}")
    for key, value in sorted(metadata.items()):
        if key != "kind":
            print(f"meta {key}: {value}")
    for name, array in blocks:
        print(f"block {name}: shape {tuple(array.shape)}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "design": cmd_design,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except (ContractError, DimensionError, DataFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except MacroNetError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
