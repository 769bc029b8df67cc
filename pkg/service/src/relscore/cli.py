"""Command line: train a classifier checkpoint, serve it over HTTP."""

from __future__ import annotations

import json
import logging
import sys

import click

from .data import DataError, load_samples
from .model import ModelConfig, save_checkpoint
from .train import TrainSettings, train_classifier


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool) -> None:
    """Relation scoring service."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command("train")
@click.option("--samples", "samples_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=3e-4, show_default=True)
@click.option("--layers", default=12, show_default=True)
@click.option("--hidden", default=768, show_default=True)
@click.option("--heads", default=12, show_default=True)
@click.option("--max-len", default=128, show_default=True)
@click.option("--val-fraction", default=0.1, show_default=True)
@click.option("--seed", default=13, show_default=True)
@click.option("--allow-degenerate", is_flag=True, help="Train even with missing classes.")
def train_cmd(
    samples_path: str,
    checkpoint_path: str,
    epochs: int,
    batch_size: int,
    lr: float,
    layers: int,
    hidden: int,
    heads: int,
    max_len: int,
    val_fraction: float,
    seed: int,
    allow_degenerate: bool,
) -> None:
    """Train the relation classifier on a JSONL statement file."""
    try:
        samples = load_samples(samples_path)
        config = ModelConfig(
            vocab_size=1, hidden=hidden, layers=layers, heads=heads, max_len=max_len
        )
        settings = TrainSettings(
            epochs=epochs,
            batch_size=batch_size,
            lr=lr,
            val_fraction=val_fraction,
            seed=seed,
            allow_degenerate=allow_degenerate,
        )
        result = train_classifier(samples, config, settings)
    except DataError as exc:
        click.echo(f"training failed: {exc}", err=True)
        sys.exit(1)
    save_checkpoint(checkpoint_path, result.model, result.tokenizer.id_to_token, result.log)
    for entry in result.log["epochs"]:
        click.echo(
            f"epoch {entry['epoch']}: loss {entry['train_loss']:.4f} "
            f"train acc {entry['train_accuracy']:.3f} val acc {entry['val_accuracy']:.3f}"
        )
    click.echo(
        f"best val accuracy {result.best_val_accuracy:.3f} -> {checkpoint_path}"
    )


@main.command("serve")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=False)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8731, show_default=True)
def serve_cmd(checkpoint_path: str | None, host: str, port: int) -> None:
    """Serve /score, /embed and /health over HTTP."""
    import uvicorn

    from .serve import ModelRuntime, create_app

    runtime = ModelRuntime.from_checkpoint(checkpoint_path) if checkpoint_path else None
    if runtime is None:
        click.echo("serving without a model; endpoints answer 409", err=True)
    app = create_app(runtime)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("inspect")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
def inspect_cmd(checkpoint_path: str) -> None:
    """Print a checkpoint's config and training log."""
    from .model import load_checkpoint

    model, vocab, log = load_checkpoint(checkpoint_path)
    click.echo(json.dumps({"config": vars(model.config), "vocab_size": len(vocab), "log": log}, indent=2))


if __name__ == "__main__":
    main()
