"""Tests for the metrics module."""

from prometheus_client import CollectorRegistry
from formnet.evaluation import LabelScore, MetricsReport
from formnet.metrics import TrainingMetrics


def test_metrics_initialization(metrics):
    """Test metrics initialization."""
    assert metrics.step is not None
    assert metrics.learning_rate is not None
    assert metrics.documents is not None
    assert metrics.loss is not None
    assert metrics.eval_f1 is not None
    assert metrics.eval_precision is not None
    assert metrics.eval_recall is not None


def test_default_registry_is_private():
    """Test that two instances without a registry do not collide."""
    first, second = TrainingMetrics(), TrainingMetrics()
    assert first.registry is not second.registry
    assert isinstance(first.registry, CollectorRegistry)


def test_record_step(metrics, registry):
    """Test publishing one optimizer step."""
    losses = {"step": 4, "mlm_loss": 2.5, "gcl_loss": 0.75, "total": 2.875}
    metrics.record_step("pretrain", 4, 0.01, losses)

    assert registry.get_sample_value("formnet_step") == 4
    assert registry.get_sample_value("formnet_learning_rate") == 0.01
    for component in ("mlm_loss", "gcl_loss", "total"):
        value = registry.get_sample_value(
            "formnet_loss", {"phase": "pretrain", "component": component}
        )
        assert value == losses[component]
    skipped = registry.get_sample_value(
        "formnet_loss", {"phase": "pretrain", "component": "step"}
    )
    assert skipped is None


def test_record_step_keeps_phases_apart(metrics, registry):
    """Test that the two phases export separate loss series."""
    metrics.record_step("pretrain", 1, 0.1, {"total": 3.0})
    metrics.record_step("finetune", 1, 0.1, {"total": 1.0})
    labels = {"phase": "pretrain", "component": "total"}
    assert registry.get_sample_value("formnet_loss", labels) == 3.0
    labels["phase"] = "finetune"
    assert registry.get_sample_value("formnet_loss", labels) == 1.0


def test_record_report(metrics, registry):
    """Test publishing an evaluation report."""
    report = MetricsReport(
        mode="micro",
        precision=0.5,
        recall=0.25,
        f1=1 / 3,
        per_label={
            "question": LabelScore(1.0, 0.5, 2 / 3, 1, 2, 1),
            "answer": LabelScore(0.0, 0.0, 0.0, 1, 2, 0),
        },
    )
    metrics.record_report(report)

    assert registry.get_sample_value("formnet_eval_f1", {"label": "all"}) == 1 / 3
    assert registry.get_sample_value("formnet_eval_recall", {"label": "all"}) == 0.25
    question = {"label": "question"}
    assert registry.get_sample_value("formnet_eval_precision", question) == 1.0
    assert registry.get_sample_value("formnet_eval_f1", {"label": "answer"}) == 0.0
