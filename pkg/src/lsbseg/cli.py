"""Command-line entry point wiring all modules together."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import torch

from lsbseg.annotations.halos import separate_overlapping_halos
from lsbseg.annotations.labels import InstanceLabel, Sample, render_ellipse_mask
from lsbseg.annotations.stats import compute_box_statistics, select_anchor_config
from lsbseg.annotations.store import load_dataset, save_dataset
from lsbseg.config import RunConfig, select_split
from lsbseg.errors import ConfigError, DataError, LsbsegError
from lsbseg.hitl.loop import run_oracle_loop
from lsbseg.hitl.review import HitlStore, acceptance_stats, withhold_labels
from lsbseg.hitl.schedule import build_schedule
from lsbseg.hitl.service import run_service
from lsbseg.imaging.synth import synthesize_sample
from lsbseg.masks import mask_bbox
from lsbseg.metrics import EvalReport, evaluate
from lsbseg.network.checkpoint import restore_model, save_checkpoint
from lsbseg.network.model import PanopticNet
from lsbseg.network.train import train as train_model
from lsbseg.panoptic import fuse, load_predictions, save_predictions
from lsbseg.report import render_report


def _out_dir(out: str | None, command: str) -> Path:
    if out is not None:
        return Path(out)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{command}-{stamp}"


@click.group()
def cli() -> None:
    """Panoptic segmentation of LSB images with HITL label augmentation."""


@cli.command()
@click.option("--n", "n_samples", type=int, default=None, help="Number of samples.")
@click.option("--seed", type=int, default=None)
@click.option("--size", type=int, default=None, help="Image side in pixels.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def synth(n_samples, seed, size, config_path, out) -> None:
    """Generate a synthetic dataset with exhaustive ground truth."""
    cfg = RunConfig.load(config_path)
    if n_samples is not None:
        cfg = cfg.model_copy(update={"synth": cfg.synth.model_copy(update={"n_samples": n_samples})})
    if seed is not None:
        cfg = cfg.model_copy(update={"synth": cfg.synth.model_copy(update={"seed": seed})})
    if size is not None:
        cfg = cfg.model_copy(update={"synth": cfg.synth.model_copy(update={"image_size": size})})
    out_dir = _out_dir(out, "synth")
    synth_cfg = cfg.synth.to_synth_config()
    rng = np.random.default_rng(cfg.synth.seed)
    dataset = [
        synthesize_sample(synth_cfg, rng, sample_id=f"synth-{i:04d}")
        for i in range(cfg.synth.n_samples)
    ]
    save_dataset(dataset, out_dir)
    cfg.echo_to(out_dir)
    click.echo(f"wrote {len(dataset)} samples to {out_dir}")


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def prepare(dataset_path, out, config_path) -> None:
    """Split merged halo annotations and select the anchor configuration."""
    cfg = RunConfig.load(config_path)
    out_dir = _out_dir(out, "prepare")
    dataset = load_dataset(dataset_path)
    n_split = 0
    prepared: list[Sample] = []
    for sample in dataset:
        galaxy_centroids = [
            np.argwhere(l.mask).mean(axis=0) for l in sample.instances if l.cls == "galaxy"
        ]
        new_instances: list[InstanceLabel] = []
        for label in sample.instances:
            contained = (
                [c for c in galaxy_centroids if label.mask[int(c[0]), int(c[1])]]
                if label.cls == "diffuse_halo"
                else []
            )
            if label.cls == "diffuse_halo" and len(contained) >= 2:
                separation = separate_overlapping_halos(label.mask, len(contained))
                for part in separation.parts:
                    ellipse_mask = render_ellipse_mask(label.mask.shape, part.ellipse)
                    if not ellipse_mask.any():
                        ellipse_mask = part.mask
                    new_instances.append(
                        InstanceLabel(
                            cls="diffuse_halo",
                            mask=ellipse_mask,
                            bbox=mask_bbox(ellipse_mask),
                            provenance=label.provenance,
                        )
                    )
                n_split += 1
            else:
                new_instances.append(label)
        prepared.append(
            Sample(
                image=sample.image,
                instances=new_instances,
                cirrus_mask=sample.cirrus_mask,
                galaxy_count=sample.galaxy_count,
                dataset_version=sample.dataset_version,
            )
        )
    save_dataset(prepared, out_dir)
    stats = compute_box_statistics(prepared)
    anchors = select_anchor_config(stats)
    (out_dir / "anchors.json").write_text(
        json.dumps(
            {
                "widths": list(anchors.widths),
                "aspect_ratios": list(anchors.aspect_ratios),
                "total": anchors.total,
                "side_p5": stats.side_p5,
                "side_p95": stats.side_p95,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    cfg.echo_to(out_dir)
    click.echo(
        f"prepared {len(prepared)} samples ({n_split} merged halos split); "
        f"anchors: {anchors.widths} x {anchors.aspect_ratios}"
    )


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--checkpoint-out", type=click.Path(), default=None)
@click.option("--resume", type=click.Path(), default=None)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="train")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def train(dataset_path, epochs, seed, checkpoint_out, resume, split, config_path, out) -> None:
    """Train the panoptic model."""
    cfg = RunConfig.load(config_path)
    out_dir = _out_dir(out, "train")
    dataset = select_split(load_dataset(dataset_path), split)
    if not dataset:
        raise DataError(f"no samples in split {split!r} of {dataset_path}")
    schedule = cfg.train.to_schedule(epochs=epochs, seed=seed)
    if resume is not None:
        model, _ = restore_model(resume)
    else:
        torch.manual_seed(schedule.seed)  # model init is part of the seeded run
        model = PanopticNet(anchor_config=cfg.model.to_anchor_config())
    result = train_model(dataset, schedule, model=model, out_dir=out_dir / "checkpoints")
    cfg.echo_to(out_dir)
    (out_dir / "history.json").write_text(
        json.dumps(result.history, indent=2) + "\n", encoding="utf-8"
    )
    final = Path(checkpoint_out) if checkpoint_out else out_dir / "model.lckp"
    save_checkpoint(result.model, final, epoch=schedule.total_epochs)
    click.echo(f"trained {schedule.total_epochs} epochs; final checkpoint {final}")


@cli.command()
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def predict(checkpoint, dataset_path, split, config_path, out) -> None:
    """Run inference and write a prediction dump."""
    cfg = RunConfig.load(config_path)
    out_dir = _out_dir(out, "predict")
    dataset = select_split(load_dataset(dataset_path), split)
    if not dataset:
        raise DataError(f"no samples in split {split!r} of {dataset_path}")
    model, _ = restore_model(checkpoint)
    outputs = {}
    for sample in dataset:
        detections, cirrus = model.predict(sample.image.pixels)
        outputs[sample.id] = fuse(
            detections,
            cirrus,
            score_threshold=cfg.eval.score_threshold,
            nms_iou=cfg.eval.nms_iou,
        )
    save_predictions(outputs, out_dir)
    cfg.echo_to(out_dir)
    click.echo(f"wrote predictions for {len(outputs)} samples to {out_dir}")


@cli.command(name="eval")
@click.option("--predictions", "predictions_path", type=click.Path(), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test")
@click.option("--json", "json_out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def eval_cmd(predictions_path, dataset_path, split, json_out, config_path, out) -> None:
    """Evaluate a prediction dump against ground truth."""
    cfg = RunConfig.load(config_path)
    out_dir = _out_dir(out, "eval")
    dataset = select_split(load_dataset(dataset_path), split)
    predictions = load_predictions(predictions_path)
    report = evaluate(predictions, dataset, thresholds=cfg.eval.thresholds)
    out_dir.mkdir(parents=True, exist_ok=True)
    for line in report.summary_lines():
        click.echo(line)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    (out_dir / "eval.json").write_text(payload, encoding="utf-8")
    if json_out:
        Path(json_out).write_text(payload, encoding="utf-8")
    cfg.echo_to(out_dir)


@cli.group()
def hitl() -> None:
    """Human-in-the-loop review commands."""


@hitl.command()
@click.option("--state", "state_dir", type=click.Path(), required=True)
@click.option("--port", type=int, default=8765)
def serve(state_dir, port) -> None:
    """Serve the review API (and UI, if built) for a state directory."""
    if not Path(state_dir).exists():
        raise DataError(f"state directory not found: {state_dir}")
    run_service(state_dir, port)


@hitl.command()
@click.option("--dataset", "dataset_path", type=click.Path(), default=None)
@click.option("--n", "n_samples", type=int, default=20)
@click.option("--size", type=int, default=128)
@click.option("--withhold", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def auto(dataset_path, n_samples, size, withhold, seed, epochs, config_path, out) -> None:
    """Closed-loop protocol with the scripted oracle reviewer over HTTP."""
    cfg = RunConfig.load(config_path)
    out_dir = _out_dir(out, "hitl-auto")
    seed = cfg.synth.seed if seed is None else seed
    withhold = cfg.hitl.withhold if withhold is None else withhold
    total_epochs = cfg.hitl.total_epochs if epochs is None else epochs
    if dataset_path is not None:
        full = load_dataset(dataset_path)
    else:
        synth_cfg = cfg.synth.to_synth_config().scaled(size)
        rng = np.random.default_rng(seed)
        full = [
            synthesize_sample(synth_cfg, rng, sample_id=f"synth-{i:04d}")
            for i in range(n_samples)
        ]
    rng = np.random.default_rng(seed + 1)
    visible, hidden = withhold_labels(full, withhold, rng)
    hitl_schedule = build_schedule(total_epochs)
    schedule = cfg.train.to_schedule(epochs=total_epochs, seed=seed)
    torch.manual_seed(schedule.seed)
    result = run_oracle_loop(
        visible,
        hidden,
        hitl_schedule,
        schedule,
        state_dir=out_dir,
        model=PanopticNet(anchor_config=cfg.model.to_anchor_config()),
        score_min=cfg.hitl.score_min,
        iou_accept=cfg.hitl.iou_accept,
    )
    stats = result.stats
    final_labels = sum(len(s.instances) for s in result.dataset)
    summary = {
        "initial_labels": stats.initial_labels,
        "final_labels": final_labels,
        "accepted": stats.accepted,
        "reviewed": stats.reviewed,
        "hidden_total": stats.hidden_total,
        "hidden_enqueued": stats.hidden_enqueued,
        "enqueue_coverage": stats.enqueue_coverage,
    }
    (out_dir / "loop_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    render_report(out_dir / "report", acceptance=stats.per_round_rates)
    cfg.echo_to(out_dir)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@cli.command()
@click.option("--eval-json", "eval_json", type=click.Path(), default=None)
@click.option("--state", "state_dir", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def report(eval_json, state_dir, out) -> None:
    """Render an evaluation/acceptance report with figures and CSV tables."""
    if eval_json is None and state_dir is None:
        raise ConfigError("report needs --eval-json and/or --state")
    out_dir = _out_dir(out, "report")
    eval_report = None
    if eval_json is not None:
        path = Path(eval_json)
        if not path.exists():
            raise DataError(f"eval JSON not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        thresholds = tuple(float(t) for t in data["thresholds"])
        eval_report = EvalReport(
            thresholds=thresholds,
            per_class_ap={float(t): v for t, v in data["per_class_ap"].items()},
            mean_ap={float(t): v for t, v in data["mean_ap"].items()},
            cirrus_iou=data["cirrus_iou"],
            counts={float(t): v for t, v in data["counts"].items()},
        )
    acceptance = None
    if state_dir is not None:
        store = HitlStore(state_dir)
        acceptance = acceptance_stats(list(store.items.values()))
    written = render_report(out_dir, report=eval_report, acceptance=acceptance)
    for path in written:
        click.echo(str(path))


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(1)
    except LsbsegError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
