"""
Adversarial training loop: one discriminator update then one generator update per step.

A run directory holds:
    config.yaml          resolved run configuration
    metrics.jsonl        one EvalRecord per evaluation
    losses.jsonl         one StepLoss every ``log_every`` steps
    checkpoints/         periodic checkpoints, newest ``keep_checkpoints`` kept
    best.pt              checkpoint with the lowest evaluation L1
    best_generator.spw   generator weights of best.pt
    final_metrics.json   3/2/1-source reports of the best generator
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from torch.optim import Adam
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from sprite_imputer.exceptions import ContractViolationError, DatasetError, NonFiniteLossError
from sprite_imputer.models.discriminator import Discriminator
from sprite_imputer.models.generator import Generator
from sprite_imputer.schemas.domain import NUM_DOMAINS, other_domains
from sprite_imputer.schemas.metrics import LossBreakdown, MetricsReport, StepLoss
from sprite_imputer.schemas.networks import DiscriminatorConfig, GeneratorConfig
from sprite_imputer.schemas.sprite import CharacterSheet, SpriteDataset
from sprite_imputer.schemas.training import EvalRecord, TrainConfig, TrainingRun
from sprite_imputer.services.batch_service import (
    build_backward_inputs,
    build_forward_input,
    collate,
    sample_training_examples,
)
from sprite_imputer.services.checkpoint_service import Checkpoint, load_checkpoint, save_checkpoint
from sprite_imputer.services.evaluation_service import (
    FeatureExtractor,
    evaluate_all_scenarios,
    evaluate_scenarios,
    get_extractor,
)
from sprite_imputer.services.loss_service import (
    DiscriminatorTerms,
    GeneratorTerms,
    adv_d,
    adv_g,
    dmn_loss,
    first_non_finite,
    l_mcyc,
    l_reg,
    l_ssim,
    make_breakdown,
    total_d,
    total_g,
)
from sprite_imputer.services.system_service import system_service
from sprite_imputer.services.weights_service import save_weights

logger = logging.getLogger(__name__)

METRICS_LOG = "metrics.jsonl"
LOSS_LOG = "losses.jsonl"
CHECKPOINT_DIR = "checkpoints"
BEST_CHECKPOINT = "best.pt"
BEST_GENERATOR = "best_generator.spw"
FINAL_METRICS = "final_metrics.json"


def lr_at(step: int, total_steps: int, lr_initial: float) -> float:
    """Constant for the first half of training, then linear decay reaching 0 at ``total_steps``."""
    if total_steps <= 0 or not 0 <= step <= total_steps:
        message = f"lr_at: step {step} outside [0, {total_steps}]"
        logger.error(message)
        raise ContractViolationError(message)
    half = total_steps / 2
    if step < half:
        return lr_initial
    return lr_initial * (1.0 - (step - half) / half)


def select_best(records: Sequence[EvalRecord]) -> EvalRecord:
    """Lowest L1; the earliest record wins ties."""
    if not records:
        raise ContractViolationError("select_best: no evaluation records")
    best = records[0]
    for record in records[1:]:
        if record.l1 < best.l1:
            best = record
    return best


def checkpoint_name(step: int) -> str:
    return f"step_{step:07d}.pt"


def latest_checkpoint(run_dir: Union[str, Path]) -> Optional[Path]:
    candidates = sorted((Path(run_dir) / CHECKPOINT_DIR).glob("step_*.pt"))
    return candidates[-1] if candidates else None


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for parameter in module.parameters():
        parameter.requires_grad_(flag)


def _append_jsonl(path: Path, line: str) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(line + "\n")


def _truncate_jsonl(path: Path, last_step: int) -> None:
    """Drop records written after ``last_step`` (a resumed run re-produces them)."""
    if not path.exists():
        return
    kept = [line for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip() and json.loads(line)["step"] <= last_step]
    path.write_text("".join(line + "\n" for line in kept), encoding="utf-8")


class TrainingService:
    """Owns both networks, their Adam optimizers and LR schedules, and the batch RNG."""

    def __init__(self, config: TrainConfig, generator: Optional[Generator] = None,
                 discriminator: Optional[Discriminator] = None,
                 extractor: Optional[FeatureExtractor] = None):
        self.config = config
        self.device = torch.device(config.device)
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.manual_seed(config.seed)

        self.generator = generator or Generator(GeneratorConfig(width_multiplier=config.width_multiplier))
        self.discriminator = discriminator or Discriminator(
            DiscriminatorConfig(width_multiplier=config.discriminator_width))
        self.generator.to(self.device)
        self.discriminator.to(self.device)

        betas = (config.adam_beta1, config.adam_beta2)
        self.g_optimizer = Adam(self.generator.parameters(), lr=config.lr_initial, betas=betas, weight_decay=0.0)
        self.d_optimizer = Adam(self.discriminator.parameters(), lr=config.lr_initial, betas=betas, weight_decay=0.0)
        total = config.total_steps
        self.g_scheduler = LambdaLR(self.g_optimizer, lambda step: lr_at(step, total, 1.0))
        self.d_scheduler = LambdaLR(self.d_optimizer, lambda step: lr_at(step, total, 1.0))

        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.best_l1: Optional[float] = None
        self.best_step: Optional[int] = None
        self.evaluations: List[EvalRecord] = []
        self.loss_history: List[StepLoss] = []
        self._extractor = extractor

    @classmethod
    def resume(cls, checkpoint_path: Union[str, Path], config: TrainConfig,
               extractor: Optional[FeatureExtractor] = None) -> "TrainingService":
        """Continue from a checkpoint; the run proceeds as if never interrupted."""
        checkpoint = load_checkpoint(checkpoint_path)
        service = cls(config, generator=checkpoint.generator, discriminator=checkpoint.discriminator,
                      extractor=extractor)
        service.g_optimizer.load_state_dict(checkpoint.g_optimizer)
        service.d_optimizer.load_state_dict(checkpoint.d_optimizer)
        service.g_scheduler.load_state_dict(checkpoint.g_scheduler)
        service.d_scheduler.load_state_dict(checkpoint.d_scheduler)
        service.rng.bit_generator.state = checkpoint.numpy_rng
        torch.set_rng_state(checkpoint.torch_rng)
        service.step = checkpoint.step
        service.best_l1 = checkpoint.best_l1
        service.best_step = checkpoint.best_step
        service.evaluations = [EvalRecord.model_validate(record) for record in checkpoint.evaluations]
        logger.info(f"Resumed training at step {service.step} from {checkpoint_path}")
        return service

    @property
    def extractor(self) -> FeatureExtractor:
        if self._extractor is None:
            self._extractor = get_extractor(self.config.extractor)
        return self._extractor

    def current_lr(self) -> float:
        return float(self.g_optimizer.param_groups[0]["lr"])

    def _check_finite(self, terms: Dict[str, object]) -> None:
        name = first_non_finite(terms)
        if name is not None:
            values = {key: float(value.detach().item()) if isinstance(value, torch.Tensor) else float(value)
                      for key, value in terms.items()}
            logger.error(f"Non-finite loss at step {self.step}: {values}")
            raise NonFiniteLossError(name, self.step, values)

    def train_step(self, batch: Sequence[CharacterSheet]) -> LossBreakdown:
        """
        One full update on a batch of character sheets.

        Forward imputation of a random target, cyclic re-imputation of each source
        from the generated target, a discriminator update on real targets versus the
        cyclic outputs, then a generator update against the updated discriminator.
        """
        if not batch:
            raise ContractViolationError("train_step needs a non-empty batch")
        cfg = self.config
        weights = cfg.loss_weights
        self.generator.train()
        self.discriminator.train()

        examples = sample_training_examples(batch, cfg.dropout_strategy, self.step, cfg.total_steps,
                                            self.rng, cfg.hue_augmentation)
        batch_size = len(examples)
        targets = torch.tensor([int(ex.target) for ex in examples], device=self.device)
        real_t = torch.stack([ex.sheet[int(ex.target)] for ex in examples]).to(self.device)

        sources, labels = collate([build_forward_input(ex.sheet, ex.target, ex.dropped) for ex in examples])
        x_hat = self.generator(sources.to(self.device), labels.to(self.device))

        backward_pairs, real_sources = [], []
        for i, ex in enumerate(examples):
            sheet = ex.sheet.to(self.device)
            backward_pairs.extend(build_backward_inputs(sheet, ex.target, x_hat[i], ex.dropped,
                                                        cfg.replacement_strategy))
            real_sources.append(torch.stack([sheet[int(s)] for s in other_domains(ex.target)]))
        cyc_sources, cyc_labels = collate(backward_pairs)
        x_tilde = self.generator(cyc_sources, cyc_labels.to(self.device))

        # grouped by position j in each element's canonical source order
        n_sources = NUM_DOMAINS - 1
        x_tilde_by_position = x_tilde.view(batch_size, n_sources, *x_tilde.shape[1:])
        real_by_position = torch.stack(real_sources)
        cyc_real = [real_by_position[:, j] for j in range(n_sources)]
        cyc_fake = [x_tilde_by_position[:, j] for j in range(n_sources)]

        fakes = torch.cat([x_tilde, x_hat]) if cfg.adversarial_on_forward_output else x_tilde

        _set_requires_grad(self.discriminator, True)
        d_real = self.discriminator(real_t)
        d_fake = self.discriminator(fakes.detach())
        d_terms = DiscriminatorTerms(adv_d=adv_d(d_real.adv, d_fake.adv),
                                     dmn_real=dmn_loss(d_real.domain_probs, targets))
        d_total = total_d(d_terms, weights)
        self._check_finite({**vars(d_terms), "total_d": d_total})
        if not cfg.freeze_discriminator:
            self.d_optimizer.zero_grad(set_to_none=True)
            d_total.backward()
            self.d_optimizer.step()

        _set_requires_grad(self.discriminator, False)
        if cfg.adversarial_on_forward_output:
            scores = self.discriminator(fakes)
            fake_adv, hat_probs = scores.adv, scores.domain_probs[-batch_size:]
        else:
            fake_adv = self.discriminator(x_tilde).adv
            hat_probs = self.discriminator(x_hat).domain_probs
        g_terms = GeneratorTerms(
            adv_g=adv_g(fake_adv),
            reg=l_reg(real_t, x_hat),
            mcyc=l_mcyc(cyc_real, cyc_fake),
            ssim=l_ssim(cyc_real, cyc_fake),
            dmn_fake=dmn_loss(hat_probs, targets),
        )
        g_total = total_g(g_terms, weights)
        self._check_finite({**vars(g_terms), "total_g": g_total})
        self.g_optimizer.zero_grad(set_to_none=True)
        g_total.backward()
        self.g_optimizer.step()
        _set_requires_grad(self.discriminator, True)

        self.g_scheduler.step()
        if not cfg.freeze_discriminator:
            self.d_scheduler.step()
        self.step += 1
        return make_breakdown(g_terms, d_terms, weights)

    def _sample_batch(self, train_set: SpriteDataset) -> List[CharacterSheet]:
        size = self.config.batch_size
        indices = self.rng.choice(len(train_set), size=size, replace=len(train_set) < size)
        return [train_set.sheets[int(i)] for i in indices]

    def eval_subset(self, test_set: SpriteDataset) -> SpriteDataset:
        """Fixed, seeded subsample of the test set used for every periodic evaluation."""
        count = min(self.config.eval_subsample, len(test_set))
        indices = np.random.default_rng(self.config.seed).permutation(len(test_set))[:count]
        return test_set.subset(sorted(int(i) for i in indices), split_tag="test")

    def evaluate(self, eval_set: SpriteDataset, losses: Optional[LossBreakdown] = None) -> EvalRecord:
        cfg = self.config
        report = evaluate_scenarios(self.generator, eval_set, cfg.eval_sources,
                                    extractor=self.extractor if cfg.eval_fid else None,
                                    compute_fid=cfg.eval_fid)
        return EvalRecord(
            step=self.step,
            l1=report.average_l1,
            fid=report.average_fid,
            per_target_l1={summary.target.pose_name: summary.l1 for summary in report.per_target},
            losses=losses,
        )

    def make_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            step=self.step,
            generator=self.generator,
            discriminator=self.discriminator,
            g_optimizer=self.g_optimizer.state_dict(),
            d_optimizer=self.d_optimizer.state_dict(),
            g_scheduler=self.g_scheduler.state_dict(),
            d_scheduler=self.d_scheduler.state_dict(),
            numpy_rng=self.rng.bit_generator.state,
            torch_rng=torch.get_rng_state(),
            best_l1=self.best_l1,
            best_step=self.best_step,
            evaluations=[record.model_dump(mode="json") for record in self.evaluations],
        )

    def _save_periodic(self, run_dir: Path) -> None:
        directory = run_dir / CHECKPOINT_DIR
        save_checkpoint(self.make_checkpoint(), directory / checkpoint_name(self.step))
        stale = sorted(directory.glob("step_*.pt"))[:-self.config.keep_checkpoints]
        for path in stale:
            path.unlink(missing_ok=True)
            logger.debug(f"Removed old checkpoint {path}")

    def _record_evaluation(self, record: EvalRecord, run_dir: Path) -> None:
        self.evaluations.append(record)
        entry = record.model_dump(mode="json")
        entry["lr"] = self.current_lr()
        entry.update(system_service.get_process_memory())
        _append_jsonl(run_dir / METRICS_LOG, json.dumps(entry))

        if self.best_l1 is None or record.l1 < self.best_l1:
            self.best_l1, self.best_step = record.l1, record.step
            save_checkpoint(self.make_checkpoint(), run_dir / BEST_CHECKPOINT)
            save_weights(self.generator, run_dir / BEST_GENERATOR)
            logger.info(f"New best L1 {record.l1:.5f} at step {record.step}")

    def train(self, train_set: SpriteDataset, test_set: SpriteDataset, run_dir: Union[str, Path],
              progress: bool = False) -> TrainingRun:
        """
        Train to ``total_steps``, evaluating every ``eval_every`` steps and at the last step.

        The caller is responsible for locking ``run_dir``.
        """
        cfg = self.config
        if len(train_set) == 0:
            raise DatasetError("Training set is empty")
        if len(test_set) == 0:
            raise DatasetError("Test set is empty")
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        _truncate_jsonl(run_dir / METRICS_LOG, self.step)
        _truncate_jsonl(run_dir / LOSS_LOG, self.step)

        eval_set = self.eval_subset(test_set)
        logger.info(f"Training {cfg.total_steps - self.step} steps on {len(train_set)} characters, "
                    f"evaluating on {len(eval_set)} of {len(test_set)} test characters")

        steps = tqdm(range(self.step, cfg.total_steps), initial=self.step, total=cfg.total_steps,
                     disable=not progress, desc="train")
        for _ in steps:
            losses = self.train_step(self._sample_batch(train_set))
            last = self.step == cfg.total_steps

            if self.step % cfg.log_every == 0 or last:
                entry = StepLoss(step=self.step, losses=losses)
                self.loss_history.append(entry)
                _append_jsonl(run_dir / LOSS_LOG, entry.model_dump_json())
                logger.debug(f"step {self.step}: total_g {losses.total_g:.4f} total_d {losses.total_d:.4f}")

            if self.step % cfg.eval_every == 0 or last:
                self._record_evaluation(self.evaluate(eval_set, losses), run_dir)
                steps.set_postfix(l1=f"{self.evaluations[-1].l1:.4f}", best=f"{self.best_l1:.4f}")

            if self.step % cfg.checkpoint_interval == 0 or last:
                self._save_periodic(run_dir)

        final_reports: List[MetricsReport] = []
        best_path = run_dir / BEST_CHECKPOINT
        if cfg.final_evaluation and best_path.exists():
            final_reports = self.final_evaluation(best_path, test_set, run_dir)

        best = select_best(self.evaluations)
        return TrainingRun(
            run_dir=run_dir,
            best_step=best.step,
            best_l1=best.l1,
            best_checkpoint=best_path if best_path.exists() else None,
            evaluations=self.evaluations,
            loss_history=self.loss_history,
            final_reports=final_reports,
        )

    def final_evaluation(self, best_path: Path, test_set: SpriteDataset, run_dir: Path) -> List[MetricsReport]:
        """Best generator on the full test set for 3, 2 and 1 available sources."""
        best_generator = load_checkpoint(best_path).generator.to(self.device)
        reports = evaluate_all_scenarios(best_generator, test_set, extractor=self.extractor,
                                         compute_fid=True, checkpoint=str(best_path))
        payload = [report.model_dump(mode="json") for report in reports]
        (run_dir / FINAL_METRICS).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        for report in reports:
            logger.info(f"Final {report.sources_available}-source: L1 {report.average_l1:.5f}, "
                        f"FID {report.average_fid:.4f}")
        return reports


def read_metrics_log(run_dir: Union[str, Path]) -> List[EvalRecord]:
    path = Path(run_dir) / METRICS_LOG
    if not path.exists():
        return []
    return [EvalRecord.model_validate_json(line)
            for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def read_final_reports(run_dir: Union[str, Path]) -> List[MetricsReport]:
    path = Path(run_dir) / FINAL_METRICS
    if not path.exists():
        return []
    return [MetricsReport.model_validate(item) for item in json.loads(path.read_text(encoding="utf-8"))]
