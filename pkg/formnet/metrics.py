import logging
from typing import Mapping, Optional
from prometheus_client import CollectorRegistry, Gauge
from .evaluation import MetricsReport

logger = logging.getLogger(__name__)


class TrainingMetrics:
    def __init__(self, registry: Optional[CollectorRegistry] = None):
        """Initialize TrainingMetrics with an optional registry."""
        if registry is None:
            registry = CollectorRegistry()
        self.registry = registry

        # Progress
        self.step = Gauge(
            "formnet_step",
            "Optimizer steps taken in the current phase",
            registry=registry,
        )
        self.learning_rate = Gauge(
            "formnet_learning_rate",
            "Learning rate of the last optimizer step",
            registry=registry,
        )
        self.documents = Gauge(
            "formnet_documents",
            "Documents in the dataset being trained or evaluated",
            registry=registry,
        )

        # Losses
        self.loss = Gauge(
            "formnet_loss",
            "Batch-mean loss of the last optimizer step",
            ["phase", "component"],
            registry=registry,
        )

        # Evaluation
        self.eval_f1 = Gauge(
            "formnet_eval_f1",
            "Entity-level F1 of the last evaluation",
            ["label"],
            registry=registry,
        )
        self.eval_precision = Gauge(
            "formnet_eval_precision",
            "Entity-level precision of the last evaluation",
            ["label"],
            registry=registry,
        )
        self.eval_recall = Gauge(
            "formnet_eval_recall",
            "Entity-level recall of the last evaluation",
            ["label"],
            registry=registry,
        )

    def record_step(
        self, phase: str, step: int, lr: float, losses: Mapping[str, float]
    ) -> None:
        """Publish one optimizer step."""
        self.step.set(step)
        self.learning_rate.set(lr)
        for component, value in losses.items():
            if component == "step":
                continue
            self.loss.labels(phase, component).set(value)

    def record_report(self, report: MetricsReport) -> None:
        """Publish an evaluation; the aggregate is exported as label ``all``."""
        self.eval_f1.labels("all").set(report.f1)
        self.eval_precision.labels("all").set(report.precision)
        self.eval_recall.labels("all").set(report.recall)
        for label, score in report.per_label.items():
            self.eval_f1.labels(label).set(score.f1)
            self.eval_precision.labels(label).set(score.precision)
            self.eval_recall.labels(label).set(score.recall)
        logger.debug(
            f"Published {report.mode} report for {len(report.per_label)} labels"
        )
