"""Test configuration file."""

import numpy as np
import pytest
from prometheus_client import CollectorRegistry
from formnet.config import DataConfig, FinetuneConfig, PretrainConfig, TrainConfig
from formnet.core.tensor import float64_mode
from formnet.data.documents import Document, Entity, Token, save_dataset
from formnet.data.synthetic import SyntheticFormSpec, generate_synthetic_corpus
from formnet.data.vocab import build_vocab
from formnet.metrics import TrainingMetrics
from formnet.model import ModelConfig, prepare_document
from formnet.vision import ImageEmbedderConfig


@pytest.fixture
def registry():
    """Create a new registry for each test."""
    return CollectorRegistry()


@pytest.fixture
def metrics(registry):
    """Create a TrainingMetrics instance for testing."""
    return TrainingMetrics(registry=registry)


@pytest.fixture
def float64():
    """Run the test with 64-bit tensors."""
    with float64_mode():
        yield


@pytest.fixture
def tiny_image_config():
    """A small image embedder: 32 px input, 4-channel maps, 24-wide features."""
    return ImageEmbedderConfig(
        input_size=32,
        backbone_filters=(4, 4, 4),
        backbone_strides=(1, 2, 1),
        refiner_filters=(4, 4, 2),
    )


@pytest.fixture
def tiny_model_config(tiny_image_config):
    """A model small enough for gradient checks."""
    return ModelConfig(
        hidden=8,
        gcn_layers=1,
        etc_layers=1,
        etc_heads=2,
        local_radius=2,
        max_seq_len=48,
        vocab_size=64,
        neighbours=3,
        projection_dim=4,
        image=tiny_image_config,
    )


@pytest.fixture
def tiny_spec():
    """Synthetic corpus settings that fit a 256x256 page."""
    return SyntheticFormSpec(
        seed=0,
        num_documents=6,
        page_width=256,
        page_height=256,
        vocab_size=50,
        min_rows=2,
        max_rows=4,
        noise_tokens=2,
    )


@pytest.fixture
def tiny_docs(tiny_spec):
    """Six generated documents with rasters in memory."""
    return generate_synthetic_corpus(tiny_spec)


@pytest.fixture
def tiny_vocab(tiny_docs, tiny_model_config):
    """Vocabulary over the tiny corpus."""
    corpus = [text for doc in tiny_docs for text in doc.texts]
    return build_vocab(corpus, tiny_model_config.vocab_size)


@pytest.fixture
def tiny_inputs(tiny_docs, tiny_vocab, tiny_model_config):
    """Model inputs of the tiny corpus."""
    return [prepare_document(doc, tiny_vocab, tiny_model_config) for doc in tiny_docs]


@pytest.fixture
def hand_document():
    """A four-token document with one question and one answer."""
    raster = np.ones((60, 100), dtype=np.float32)
    raster[10:20, 10:30] = 0.2
    tokens = [
        Token("Name", (10, 10, 30, 20), 0),
        Token(":", (32, 10, 36, 20), 1),
        Token("Ada", (50, 10, 70, 20), 2),
        Token("Lovelace", (72, 10, 95, 20), 3),
    ]
    return Document(
        id="hand-0",
        page_width=100,
        page_height=60,
        tokens=tokens,
        entities=[Entity("question", 0, 1), Entity("answer", 2, 3)],
        image=raster,
        image_ref="images/hand-0.pgm",
    )


@pytest.fixture
def dataset_file(tmp_path, tiny_docs):
    """The tiny corpus written to disk; returns the dataset path."""
    path = tmp_path / "data" / "train.json"
    save_dataset(tiny_docs, path)
    return path


@pytest.fixture
def tiny_train_config(tiny_model_config, dataset_file, tmp_path):
    """A training config over the tiny corpus with short phases."""
    return TrainConfig(
        seed=0,
        model=tiny_model_config,
        data=DataConfig(train=str(dataset_file), eval=str(dataset_file)),
        pretrain=PretrainConfig(
            steps=3,
            batch_size=2,
            learning_rate=1e-2,
            warmup_proportion=0.34,
            log_path=str(tmp_path / "logs" / "pretrain.jsonl"),
        ),
        finetune=FinetuneConfig(
            epochs=1,
            batch_size=2,
            learning_rate=1e-2,
            log_path=str(tmp_path / "logs" / "finetune.jsonl"),
        ),
    )
