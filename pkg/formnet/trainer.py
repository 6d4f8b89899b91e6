"""Pre-training and fine-tuning loops."""

import json
import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np
from .checkpoint import Checkpoint, build_model, save_checkpoint, snapshot
from .config import TrainConfig
from .core.optim import Adam
from .data.documents import Document, load_dataset
from .data.mlm import sample_mlm
from .data.vocab import Vocabulary, build_vocab
from .errors import CheckpointError, DatasetError
from .evaluation import MetricsReport, Mode, encode_bioes, evaluate
from .metrics import TrainingMetrics
from .model import DocumentInput, FormNetModel, ModelConfig, prepare_document
from .objectives import pretrain_loss, tag_loss

logger = logging.getLogger(__name__)

LogRecord = Dict[str, float]


def warmup_lr(
    step: int, total_steps: int, peak: float, warmup_proportion: float
) -> float:
    """Linear warm-up from 0 at step 0 to ``peak`` at ``ceil(p * total)``,
    constant afterwards."""
    warm = math.ceil(warmup_proportion * total_steps)
    if warm <= 0 or step >= warm:
        return peak
    return peak * step / warm


def step_seed(base: int, step: int) -> int:
    """Independent per-step seed derived from a base seed."""
    return int(np.random.SeedSequence([base, step]).generate_state(1)[0])


class BatchSampler:
    """Endless stream of document indices, reshuffled every pass."""

    def __init__(self, size: int, seed: int) -> None:
        if size <= 0:
            raise DatasetError("dataset is empty")
        self.size = size
        self.rng = np.random.default_rng(seed)
        self.order: List[int] = []

    def take(self, count: int) -> List[int]:
        batch: List[int] = []
        while len(batch) < count:
            if not self.order:
                self.order = [int(i) for i in self.rng.permutation(self.size)]
            batch.append(self.order.pop(0))
        return batch


@contextmanager
def loss_log(path: Optional[str]) -> Iterator[Callable[[LogRecord], None]]:
    """Yield a writer that appends one JSON object per line to ``path``."""
    if path is None:
        yield lambda record: None
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as handle:

        def write(record: LogRecord) -> None:
            handle.write(json.dumps(record) + "\n")
            handle.flush()

        yield write


class Trainer:
    def __init__(self, config: TrainConfig, metrics: Optional[TrainingMetrics] = None):
        self.config = config
        self.metrics = metrics or TrainingMetrics()
        logger.info(
            f"Initialized Trainer seed={config.seed} hidden={config.model.hidden} "
            f"use_image={config.model.use_image}"
        )

    def load_split(self, path: Optional[str]) -> List[Document]:
        if path is None:
            raise DatasetError("no dataset path configured")
        documents = load_dataset(path)
        if not documents:
            raise DatasetError(f"dataset {path} is empty")
        return documents

    def build_vocabulary(self, documents: Sequence[Document]) -> Vocabulary:
        corpus = (text for doc in documents for text in doc.texts)
        return build_vocab(
            corpus, self.config.model.vocab_size, lowercase=self.config.data.lowercase
        )

    def prepare(
        self,
        documents: Sequence[Document],
        vocab: Vocabulary,
        model_config: ModelConfig,
    ) -> List[DocumentInput]:
        if not documents:
            raise DatasetError("dataset is empty")
        inputs = [prepare_document(doc, vocab, model_config) for doc in documents]
        self.metrics.documents.set(len(inputs))
        return inputs

    def pretrain(
        self,
        documents: Optional[Sequence[Document]] = None,
        out_dir: Optional[Union[str, Path]] = None,
    ) -> Tuple[Checkpoint, List[LogRecord]]:
        """MLM + graph-contrastive pre-training from a fresh initialisation."""
        cfg = self.config.pretrain
        if documents is None:
            documents = self.load_split(self.config.data.train)
        vocab = self.build_vocabulary(documents)
        inputs = self.prepare(documents, vocab, self.config.model)
        model = FormNetModel(self.config.model)
        optimizer = Adam(cfg.learning_rate)
        sampler = BatchSampler(len(inputs), self.config.seed)
        params = model.parameters()
        history: List[LogRecord] = []
        logger.info(
            f"Pre-training steps={cfg.steps} batch={cfg.batch_size} "
            f"docs={len(inputs)} "
            f"params={model.num_parameters()}"
        )

        with loss_log(cfg.log_path) as write:
            for step in range(cfg.steps):
                model.zero_grad()
                totals = {"mlm_loss": 0.0, "gcl_loss": 0.0, "total": 0.0}
                batch = sampler.take(cfg.batch_size)
                view_seed = step_seed(cfg.corruption.seed + self.config.seed, step)
                corruption = cfg.corruption.model_copy(update={"seed": view_seed})
                for index in batch:
                    inp = inputs[index]
                    plan = sample_mlm(
                        inp.token_ids,
                        cfg.mlm_rate,
                        step_seed(self.config.seed, step),
                        self.config.model.vocab_size,
                        key=inp.doc_id,
                    )
                    loss, report = pretrain_loss(
                        model, inp, plan, corruption, cfg.loss_weights
                    )
                    (loss * (1.0 / len(batch))).backward()
                    for name in totals:
                        totals[name] += report[name] / len(batch)

                lr = warmup_lr(
                    step, cfg.steps, cfg.learning_rate, cfg.warmup_proportion
                )
                optimizer.step(params, lr)
                record: LogRecord = {"step": step + 1, **totals}
                history.append(record)
                write(record)
                self.metrics.record_step("pretrain", step + 1, lr, totals)
                logger.debug(
                    f"step={step + 1} lr={lr:.3g} mlm={totals['mlm_loss']:.4f} "
                    f"gcl={totals['gcl_loss']:.4f} total={totals['total']:.4f}"
                )
                interval = cfg.checkpoint_interval
                if out_dir is not None and interval and (step + 1) % interval == 0:
                    save_checkpoint(
                        snapshot(model, vocab, step + 1),
                        Path(out_dir) / f"step-{step + 1:06d}",
                    )

        checkpoint = snapshot(model, vocab, cfg.steps)
        if out_dir is not None:
            save_checkpoint(checkpoint, out_dir)
        logger.info(f"Pre-training finished steps={cfg.steps}")
        return checkpoint, history

    def _init_finetune(
        self, documents: Sequence[Document], init: Optional[Checkpoint]
    ) -> Tuple[FormNetModel, Vocabulary]:
        if init is None:
            return FormNetModel(self.config.model), self.build_vocabulary(documents)
        if init.labels != list(self.config.model.labels):
            raise CheckpointError(
                f"checkpoint labels {init.labels} differ from configured "
                f"labels {self.config.model.labels}"
            )
        if init.config != self.config.model:
            logger.warning(
                "Model section of the config differs from the checkpoint; "
                "using the checkpoint"
            )
        return build_model(init), init.vocab

    def finetune(
        self,
        init: Optional[Checkpoint] = None,
        documents: Optional[Sequence[Document]] = None,
        out_dir: Optional[Union[str, Path]] = None,
    ) -> Tuple[Checkpoint, List[LogRecord]]:
        """BIOES tagging on the uncorrupted graph, optionally from ``init``."""
        cfg = self.config.finetune
        if cfg.corruption is not None:
            logger.warning(
                "Fine-tuning ignores the corruption config; "
                "the original graph is used"
            )
        if documents is None:
            documents = self.load_split(self.config.data.train)
        if not documents:
            raise DatasetError("dataset is empty")
        model, vocab = self._init_finetune(documents, init)
        inputs = self.prepare(documents, vocab, model.config)
        labels = model.config.labels
        gold = [encode_bioes(inp.entities, inp.num_tokens, labels) for inp in inputs]
        steps_per_epoch = math.ceil(len(inputs) / cfg.batch_size)
        total_steps = cfg.epochs * steps_per_epoch
        optimizer = Adam(cfg.learning_rate)
        rng = np.random.default_rng([self.config.seed, 1])
        params = model.parameters()
        history: List[LogRecord] = []
        logger.info(
            f"Fine-tuning epochs={cfg.epochs} batch={cfg.batch_size} "
            f"docs={len(inputs)} "
            f"from_checkpoint={init is not None}"
        )

        step = 0
        with loss_log(cfg.log_path) as write:
            for epoch in range(cfg.epochs):
                order = rng.permutation(len(inputs))
                for start in range(0, len(order), cfg.batch_size):
                    batch = order[start : start + cfg.batch_size]
                    model.zero_grad()
                    batch_loss = 0.0
                    for index in batch:
                        loss = tag_loss(model.forward_tags(inputs[index]), gold[index])
                        (loss * (1.0 / len(batch))).backward()
                        batch_loss += loss.item() / len(batch)
                    lr = warmup_lr(
                        step, total_steps, cfg.learning_rate, cfg.warmup_proportion
                    )
                    optimizer.step(params, lr)
                    step += 1
                    record: LogRecord = {
                        "step": step,
                        "tag_loss": batch_loss,
                        "total": batch_loss,
                    }
                    history.append(record)
                    write(record)
                    self.metrics.record_step("finetune", step, lr, record)
                logger.debug(
                    f"epoch={epoch + 1} step={step} "
                    f"tag_loss={history[-1]['tag_loss']:.4f}"
                )

        base_step = init.step if init is not None else 0
        checkpoint = snapshot(model, vocab, base_step + step)
        if out_dir is not None:
            save_checkpoint(checkpoint, out_dir)
        logger.info(f"Fine-tuning finished steps={step}")
        return checkpoint, history

    def evaluate_checkpoint(
        self,
        checkpoint: Checkpoint,
        documents: Optional[Sequence[Document]] = None,
        mode: Mode = "micro",
    ) -> MetricsReport:
        if documents is None:
            documents = self.load_split(self.config.data.eval)
        return evaluate_checkpoint(checkpoint, documents, mode, self.metrics)


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    documents: Sequence[Document],
    mode: Mode = "micro",
    metrics: Optional[TrainingMetrics] = None,
) -> MetricsReport:
    """Score ``checkpoint`` on ``documents`` without a training config."""
    if not documents:
        raise DatasetError("dataset is empty")
    model = build_model(checkpoint)
    inputs = [
        prepare_document(doc, checkpoint.vocab, checkpoint.config) for doc in documents
    ]
    report = evaluate(model, inputs, mode)
    if metrics is not None:
        metrics.documents.set(len(inputs))
        metrics.record_report(report)
    return report
