"""Command-line entry point for formnet."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional
from dotenv import load_dotenv
from prometheus_client import start_http_server
from .checkpoint import load_checkpoint
from .config import load_config, load_json, validate
from .data.documents import Document, load_dataset
from .data.synthetic import (
    SyntheticFormSpec,
    generate_synthetic_corpus,
    split_corpus,
    write_corpus,
)
from .data.vocab import build_vocab
from .errors import FormNetError
from .experiments import ABLATIONS, AblationConfig, run_ablation
from .inspect import inspect_attention, inspect_edge_image, inspect_graph
from .metrics import TrainingMetrics
from .model import ModelConfig, count_parameters
from .trainer import Trainer, evaluate_checkpoint

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s | %(name)s | %(levelname)-8s | %(message)s"
METRICS_PORT_ENV = "FORMNET_METRICS_PORT"


def configure_logging() -> None:
    log_level = os.getenv("LOG_LEVEL", "INFO").upper()
    numeric_level = getattr(logging, log_level, logging.INFO)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO
    logging.basicConfig(
        level=numeric_level, format=LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"
    )


def start_metrics_server(metrics: TrainingMetrics) -> None:
    """Serve the training gauges when ``FORMNET_METRICS_PORT`` is set."""
    port_str = os.getenv(METRICS_PORT_ENV)
    if not port_str:
        return
    try:
        port = int(port_str)
    except ValueError:
        logger.error(f"Invalid {METRICS_PORT_ENV} value: {port_str}")
        return
    start_http_server(port, registry=metrics.registry)
    logger.info(f"Started Prometheus metrics server on port {port}")


def emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2))


def parse_splits(text: str) -> dict:
    """``train=0.8,test=0.2`` to a mapping of split name to fraction."""
    splits = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if not name or not value:
            raise argparse.ArgumentTypeError(
                f"bad split {part!r}; expected name=fraction"
            )
        splits[name.strip()] = float(value)
    return splits


def cmd_generate_data(args: argparse.Namespace) -> int:
    spec = SyntheticFormSpec()
    if args.spec:
        loaded = validate(SyntheticFormSpec, load_json(args.spec), args.spec)
        assert isinstance(loaded, SyntheticFormSpec)
        spec = loaded
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    if args.num_documents is not None:
        spec = spec.model_copy(update={"num_documents": args.num_documents})
    documents = generate_synthetic_corpus(spec)
    written = {
        name: str(write_corpus(docs, args.out, name))
        for name, docs in split_corpus(documents, args.splits).items()
    }
    emit({"documents": len(documents), "splits": written})
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    metrics = TrainingMetrics()
    start_metrics_server(metrics)
    _, history = Trainer(config, metrics).pretrain(out_dir=args.out)
    last = history[-1] if history else None
    emit({"checkpoint": args.out, "steps": len(history), "last": last})
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    metrics = TrainingMetrics()
    start_metrics_server(metrics)
    init = load_checkpoint(args.init) if args.init else None
    trainer = Trainer(config, metrics)
    checkpoint, history = trainer.finetune(init, out_dir=args.out)
    result: Dict[str, Any] = {"checkpoint": args.out, "steps": len(history)}
    if config.data.eval:
        result["eval"] = trainer.evaluate_checkpoint(checkpoint).to_dict()
    emit(result)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    report = evaluate_checkpoint(checkpoint, load_dataset(args.data), args.mode)
    emit(report.to_dict())
    return 0


def _pick_document(documents: List[Document], doc_id: str) -> Document:
    for doc in documents:
        if doc.id == doc_id:
            return doc
    raise FormNetError(f"document {doc_id} not found")


def _token_index(value: str) -> int:
    try:
        index = int(value)
    except ValueError:
        raise FormNetError(f"token index must be an integer, got {value!r}") from None
    if index < 0:
        raise FormNetError(f"token index must be non-negative, got {index}")
    return index


def cmd_inspect(args: argparse.Namespace) -> int:
    documents = load_dataset(args.data)
    if not documents:
        raise FormNetError(f"dataset {args.data} is empty")
    checkpoint = load_checkpoint(args.ckpt) if args.ckpt else None
    if args.graph is not None:
        doc = _pick_document(documents, args.graph)
        if checkpoint is not None:
            emit(inspect_graph(doc, checkpoint.vocab, checkpoint.config, checkpoint))
        else:
            config = ModelConfig()
            vocab = build_vocab(
                (text for d in documents for text in d.texts), config.vocab_size
            )
            emit(inspect_graph(doc, vocab, config))
        return 0
    what = "attention" if args.attention is not None else "edge-image"
    if checkpoint is None:
        raise FormNetError(f"--{what} needs --ckpt")
    if args.attention is not None:
        doc = _pick_document(documents, args.attention)
        emit(inspect_attention(checkpoint, doc, args.layer))
        return 0
    doc_id, i, j = args.edge_image
    doc = _pick_document(documents, doc_id)
    emit(inspect_edge_image(checkpoint, doc, _token_index(i), _token_index(j)))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = AblationConfig()
    if args.config:
        loaded = validate(AblationConfig, load_json(args.config), args.config)
        assert isinstance(loaded, AblationConfig)
        cfg = loaded
    result = run_ablation(args.name, cfg, args.seeds)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    emit(result)
    return 0


def cmd_param_count(args: argparse.Namespace) -> int:
    payload = load_json(args.config)
    section = payload.get("model", payload)
    config = validate(ModelConfig, section, args.config)
    assert isinstance(config, ModelConfig)
    emit({"config": args.config, "parameters": count_parameters(config)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formnet", description="Form entity extraction with formnet."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="write a synthetic form corpus")
    gen.add_argument("--spec", help="SyntheticFormSpec JSON file")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--num-documents", type=int)
    gen.add_argument(
        "--splits",
        type=parse_splits,
        default={"train": 0.8, "test": 0.2},
        help="name=fraction list, e.g. train=0.8,test=0.2",
    )
    gen.set_defaults(handler=cmd_generate_data)

    pre = sub.add_parser("pretrain", help="MLM + graph-contrastive pre-training")
    pre.add_argument("--config", required=True)
    pre.add_argument("--out", required=True, help="checkpoint directory")
    pre.set_defaults(handler=cmd_pretrain)

    fine = sub.add_parser("finetune", help="BIOES entity tagging")
    fine.add_argument("--config", required=True)
    fine.add_argument("--init", help="checkpoint to start from")
    fine.add_argument("--out", required=True, help="checkpoint directory")
    fine.set_defaults(handler=cmd_finetune)

    ev = sub.add_parser("evaluate", help="entity-level precision / recall / F1")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--mode", choices=("micro", "macro"), default="micro")
    ev.set_defaults(handler=cmd_evaluate)

    ins = sub.add_parser("inspect", help="dump graph, attention or edge image features")
    what = ins.add_mutually_exclusive_group(required=True)
    what.add_argument("--graph", metavar="DOC_ID", help="token graph of a document")
    what.add_argument(
        "--attention", metavar="DOC_ID", help="attention weights (needs --ckpt)"
    )
    what.add_argument(
        "--edge-image",
        nargs=3,
        metavar=("DOC_ID", "I", "J"),
        help="image feature vector of the edge between tokens I and J",
    )
    ins.add_argument("--data", required=True)
    ins.add_argument("--ckpt", help="checkpoint; adds edge image features to --graph")
    ins.add_argument("--layer", type=int)
    ins.set_defaults(handler=cmd_inspect)

    abl = sub.add_parser("ablate", help="reduced-scale ablations")
    abl.add_argument("name", choices=ABLATIONS)
    abl.add_argument("--config", help="AblationConfig JSON file")
    abl.add_argument("--seeds", type=int, nargs="+")
    abl.add_argument("--out", help="also write the result JSON here")
    abl.set_defaults(handler=cmd_ablate)

    count = sub.add_parser("param-count", help="parameter count of a model config")
    count.add_argument("--config", required=True)
    count.set_defaults(handler=cmd_param_count)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for formnet."""
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return int(args.handler(args))
    except (FormNetError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except KeyboardInterrupt:
        logger.info("Interrupted. Exiting...")
        return 1


if __name__ == "__main__":
    sys.exit(main())
