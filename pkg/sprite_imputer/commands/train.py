import argparse
import logging
from pathlib import Path

from sprite_imputer.commands.common import execute, fail
from sprite_imputer.config import dump_run_config, load_run_config
from sprite_imputer.exceptions import ConfigError, SpriteImputerError
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.dataset_service import load_splits
from sprite_imputer.services.training_service import TrainingService, latest_checkpoint

logger = logging.getLogger(__name__)

# CLI flag -> dotted config key
OVERRIDES = {
    "run_name": "run_name",
    "run_dir": "run_dir",
    "data_root": "data.root",
    "test_root": "data.test_root",
    "steps": "train.total_steps",
    "batch_size": "train.batch_size",
    "width": "train.width_multiplier",
    "dropout": "train.dropout_strategy.kind",
    "replacement": "train.replacement_strategy.kind",
    "preset": "train.preset",
    "seed": "train.seed",
    "eval_every": "train.eval_every",
    "device": "train.device",
    "extractor": "train.extractor",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train a generator/discriminator pair")
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--run-name")
    parser.add_argument("--run-dir", type=Path)
    parser.add_argument("--data-root", type=Path)
    parser.add_argument("--test-root", type=Path)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--width", type=float, help="Generator width multiplier")
    parser.add_argument("--dropout", choices=["none", "original", "curriculum", "conservative"])
    parser.add_argument("--replacement", choices=["original", "forward_only"])
    parser.add_argument("--preset", help="Ablation preset: baseline, capacity, forward_only, conservative")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eval-every", type=int)
    parser.add_argument("--device", help="Torch device, e.g. cpu or cuda:0")
    parser.add_argument("--extractor", help="FID feature extractor")
    parser.add_argument("--resume", help="Checkpoint path, or 'latest' for the run's newest checkpoint")
    parser.add_argument("--progress", action="store_true", help="Show a progress bar")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    overrides = {key: getattr(args, flag) for flag, key in OVERRIDES.items()}
    overrides = {key: str(value) if isinstance(value, Path) else value for key, value in overrides.items()}
    try:
        run_config = load_run_config(args.config, overrides)
    except ConfigError as e:
        return fail(str(e))

    def work(manifest: RunManifest) -> None:
        run_dir = Path(run_config.run_dir)
        manifest.resolved_config = run_config.model_dump(mode="json")
        manifest.inputs = {"data": str(run_config.data.root)}
        manifest.write(run_dir / "run_manifest.json")
        dump_run_config(run_config, run_dir / "config.yaml")

        train_set, test_set = load_splits(run_config.data)
        if args.resume:
            checkpoint = latest_checkpoint(run_dir) if args.resume == "latest" else Path(args.resume)
            if checkpoint is None:
                raise SpriteImputerError(f"No checkpoint to resume from in {run_dir}")
            service = TrainingService.resume(checkpoint, run_config.train)
        else:
            service = TrainingService(run_config.train)

        result = service.train(train_set, test_set, run_dir, progress=args.progress)
        manifest.outputs = {"run_dir": str(run_dir), "best_checkpoint": str(result.best_checkpoint)}
        print(f"Best checkpoint: {result.best_checkpoint} (step {result.best_step}, eval L1 {result.best_l1:.5f})")

    return execute("train", args, run_config.run_dir, work, seed=run_config.train.seed)
