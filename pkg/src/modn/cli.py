"""Command-line interface: train/evaluate models, run the porting experiment,
generate synthetic datasets, dump consultation trajectories, and serve the
live consultation API."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .data import SyntheticSpec, generate_synthetic, generate_xor, load_dataset, write_dataset_csv
from .demo import make_demo_table
from .experiments import (
    ExperimentConfig,
    evaluate,
    overall_macro_f1,
    run_iio_experiment,
)
from .metrics import macro_f1
from .model import init_model, load_model, run_consultation, save_model
from .training import TrainConfig, train as train_model


def _default_split(table, seed: int, ratios=(0.7, 0.1, 0.2)):
    n = len(table.records)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    pick = lambda idx: table.subset([table.records[i] for i in idx])
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))


def _load_train_config(config_path: str | None, seed: int | None) -> TrainConfig:
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            config = TrainConfig.from_dict(json.load(fh))
    else:
        config = TrainConfig()
    if seed is not None:
        config.shuffle_seed = seed
    return config


def _f1_table(predictions) -> dict:
    table = {t: macro_f1(predictions, t) for t in predictions.targets}
    table["overall"] = overall_macro_f1(predictions)
    return table


@click.group()
def main():
    """Modular decision-support network tools."""


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TrainConfig JSON; defaults are used when omitted.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Where the trained model file is written.")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Optional JSON training report (losses, F1 per epoch, test table).")
def train_cmd(data_path, schema_path, config_path, seed, out_path, report_path):
    """Train on a dataset (70/10/20 train/val/test split by default)."""
    table = load_dataset(data_path, schema_path)
    config = _load_train_config(config_path, seed)
    train_tab, val_tab, test_tab = _default_split(table, seed)
    model = init_model(table.schema, table.targets, config.state_dim, seed)
    model, report = train_model(model, train_tab, val_tab, config)
    save_model(model, out_path)
    test_scores = _f1_table(evaluate(model, test_tab)) if test_tab.records else {}
    click.echo(f"trained {report.epochs_run} epochs (best {report.best_epoch}); model -> {out_path}")
    for target, score in test_scores.items():
        click.echo(f"  test macro F1 {target}: {score:.4f}")
    if report_path:
        doc = {
            "train_loss": report.train_loss,
            "val_loss": report.val_loss,
            "val_macro_f1": report.val_macro_f1,
            "best_epoch": report.best_epoch,
            "test_macro_f1": test_scores,
        }
        Path(report_path).write_text(json.dumps(doc, indent=2) + "\n")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(model_path, data_path, schema_path, out_path):
    """Per-target macro F1 of a trained model on a dataset."""
    model = load_model(model_path)
    table = load_dataset(data_path, schema_path)
    scores = _f1_table(evaluate(model, table))
    for target, score in scores.items():
        click.echo(f"macro F1 {target}: {score:.4f}")
    if out_path:
        Path(out_path).write_text(json.dumps(scores, indent=2) + "\n")


@main.command("iio")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="ExperimentConfig JSON.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Overrides the config's output_dir.")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="Dataset CSV; overrides the config's dataset source.")
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None,
              help="Schema descriptor for --data.")
def iio_cmd(config_path, out_dir, data_path, schema_path):
    """Run the feature-overlap porting experiment and write the results table."""
    config = ExperimentConfig.from_json_file(config_path)
    if out_dir:
        config.output_dir = out_dir
    if data_path or schema_path:
        if not (data_path and schema_path):
            raise click.ClickException("--data and --schema must be given together")
        config.dataset_csv, config.dataset_schema = data_path, schema_path
        config.synthetic = None
    table = run_iio_experiment(config)
    for overlap in table.overlaps:
        parts = []
        for scenario in table.scenarios:
            cell = table.cell(scenario, overlap)
            parts.append(f"{scenario}={cell.mean:.4f}" if cell.mean is not None
                         else f"{scenario}=FAILED")
        click.echo(f"overlap {overlap}: " + "  ".join(parts))
    if config.output_dir:
        click.echo(f"results written to {config.output_dir}")


@main.command("synth")
@click.option("--kind", type=click.Choice(["logistic", "xor", "demo"]), default="logistic",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="SyntheticSpec JSON (logistic kind only).")
@click.option("--records", type=int, default=None, help="Override record count.")
@click.option("--seed", type=int, default=None, help="Override generator seed.")
@click.option("--out-data", required=True, type=click.Path())
@click.option("--out-schema", required=True, type=click.Path())
def synth_cmd(kind, config_path, records, seed, out_data, out_schema):
    """Generate a synthetic dataset as CSV + schema descriptor."""
    if kind == "logistic":
        doc = {}
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        if records is not None:
            doc["n_records"] = records
        if seed is not None:
            doc["seed"] = seed
        table = generate_synthetic(SyntheticSpec.from_dict(doc))
    elif kind == "xor":
        table = generate_xor(n_records=records or 600, seed=seed or 0)
    else:
        kwargs = {}
        if records is not None:
            kwargs["n_records"] = records
        if seed is not None:
            kwargs["seed"] = seed
        table = make_demo_table(**kwargs)
    write_dataset_csv(table, out_data, out_schema)
    click.echo(f"{len(table.records)} records -> {out_data} (schema {out_schema})")


@main.command("trajectory")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--record-id", "record_ids", multiple=True, required=True)
@click.option("--out-dir", "out_dir", required=True, type=click.Path(),
              help="One trajectory JSON per requested record is written here.")
def trajectory_cmd(model_path, data_path, schema_path, record_ids, out_dir):
    """Dump per-step probability trajectories for the requested records."""
    model = load_model(model_path)
    table = load_dataset(data_path, schema_path)
    by_id = {r.record_id: r for r in table.records}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rid in record_ids:
        if rid not in by_id:
            raise click.ClickException(f"record {rid!r} not found in {data_path}")
        trajectory = run_consultation(model, by_id[rid])
        path = out / f"{rid}.json"
        path.write_text(json.dumps(trajectory.to_json_dict(), indent=2) + "\n")
        click.echo(f"{rid}: {len(trajectory.steps)} steps -> {path}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@click.option("--state-dir", required=True, type=click.Path(),
              help="Directory for the model registry and session logs.")
@click.option("--model", "model_paths", multiple=True, type=click.Path(exists=True),
              help="Model file(s) to register at startup.")
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="Optional static directory served at / (the browser UI build).")
def serve_cmd(host, port, state_dir, model_paths, ui_dir):
    """Run the consultation HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(state_dir, ui_dir)
    for path in model_paths:
        model_id = app.state.service.register_model(str(Path(path).resolve()))
        click.echo(json.dumps({"registered": model_id, "path": str(path)}))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
