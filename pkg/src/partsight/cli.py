"""Command-line entry point wiring every module into reproducible commands.

Every command runs offline on files, prints a short summary, and emits run
metadata (config snapshot, seed, input/output digests) next to its outputs:
``run_metadata.json`` inside an output directory, ``<out>.meta.json`` beside
an output file. Exit codes: 0 success, 1 usage, 2 input error, 3 internal.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .errors import ConfigurationError, InputError, PartsightError

METADATA_NAME = "run_metadata.json"


def _write_metadata(out: Path, command: str, config: dict, seed: int | None,
                    input_digests: dict, is_dir: bool) -> dict:
    from .formats import tree_digest, write_canonical_json

    if is_dir:
        output_digest = tree_digest(out, exclude=(METADATA_NAME,))
        target = out / METADATA_NAME
    else:
        from .formats import file_digest

        output_digest = file_digest(out)
        target = out.with_name(out.name + ".meta.json")
    meta = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "input_digests": input_digests,
        "output_digest": output_digest,
    }
    write_canonical_json(target, meta)
    return meta


@click.group()
@click.version_option(__version__, prog_name="partsight")
def cli():
    """Synthetic data tooling and the parts-assistant runtime."""


# ---------------------------------------------------------------- synth


@cli.group()
def synth():
    """Synthetic dataset generation."""


@synth.command("generate")
@click.option("--backgrounds", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--masks", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--count", required=True, type=int)
@click.option("--split", default="train", show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth_generate(backgrounds, masks, config_file, count, split, seed, out):
    """Compose COUNT annotated images from backgrounds and mask cutouts."""
    from .formats import tree_digest
    from .synthgen import CompositionConfig, generate_dataset

    overrides = {}
    if config_file:
        overrides = json.loads(Path(config_file).read_text())
        for key in ("scale_range", "rotation_range", "output_size"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
    config = CompositionConfig(**overrides)
    out_path = Path(out)
    manifest = generate_dataset(backgrounds, masks, config, count, split, seed, out_path)
    meta = _write_metadata(
        out_path,
        "synth generate",
        config.to_dict(),
        seed,
        {"backgrounds": tree_digest(backgrounds), "masks": tree_digest(masks)},
        is_dir=True,
    )
    click.echo(
        f"wrote {manifest.image_count} images ({split}) to {out} "
        f"[digest {meta['output_digest'][:12]}]"
    )


# ---------------------------------------------------------------- corrupt


@cli.group()
def corrupt():
    """Corruption robustness sets."""


@corrupt.command("apply")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--profile", "profile_file", type=click.Path(exists=True, dir_okay=False),
              help="JSON list of corruption specs; omit for the default profile.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def corrupt_apply(in_dir, profile_file, seed, out):
    """Copy clean images and emit one corrupted variant per (image, spec)."""
    from .corruptions import build_corrupted_set, default_profile, load_profile
    from .formats import tree_digest

    specs = load_profile(profile_file) if profile_file else default_profile()
    out_path = Path(out)
    summary = build_corrupted_set(in_dir, specs, seed, out_path)
    meta = _write_metadata(
        out_path,
        "corrupt apply",
        {"specs": [{"name": s.name, "kind": s.kind, "severity": s.severity, "params": s.params}
                   for s in specs]},
        seed,
        {"clean": tree_digest(in_dir)},
        is_dir=True,
    )
    click.echo(
        f"{summary['clean_images']} clean x (1+{len(specs)}) -> {summary['outputs']} images "
        f"in {out} [digest {meta['output_digest'][:12]}]"
    )


# ---------------------------------------------------------------- bar


@cli.group()
def bar():
    """White-canvas refinement of high-confidence detections."""


@bar.command("refine")
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--detections", "detections_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", default=0.5, type=float, show_default=True)
@click.option("--canvas-color", default="255,255,255", show_default=True,
              help="R,G,B fill for the canvas.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def bar_refine(images, detections_file, threshold, canvas_color, out):
    """Place qualifying detection crops onto clean canvases with pseudo-labels."""
    from .formats import file_digest, read_detections_jsonl, tree_digest
    from .refine import RefinementConfig, refine_dataset

    try:
        color = tuple(int(v) for v in canvas_color.split(","))
        if len(color) != 3:
            raise ValueError
    except ValueError:
        raise ConfigurationError(f"bad canvas color {canvas_color!r}; expected R,G,B") from None
    config = RefinementConfig(confidence_threshold=threshold, canvas_color=color)
    records = read_detections_jsonl(detections_file)
    out_path = Path(out)
    manifest = refine_dataset(images, records, config, out_path)
    meta = _write_metadata(
        out_path,
        "bar refine",
        {"confidence_threshold": threshold, "canvas_color": list(color)},
        None,
        {"images": tree_digest(images), "detections": file_digest(detections_file)},
        is_dir=True,
    )
    click.echo(
        f"refined {manifest['refined_images']}/{manifest['source_images']} images, "
        f"{manifest['pseudo_labels']} pseudo-labels, skipped {manifest['skipped_images']} "
        f"[digest {meta['output_digest'][:12]}]"
    )


# ---------------------------------------------------------------- detect


@cli.group()
def detect():
    """Detector runs through the provider boundary."""


@detect.command("run")
@click.option("--provider", type=click.Choice(["mock", "external"]), default="mock",
              show_default=True)
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", type=click.Path(exists=True, file_okay=False),
              help="Mock provider: ground-truth label files.")
@click.option("--classes", "classes_file", type=click.Path(exists=True, dir_okay=False),
              help="Class list, one name per line.")
@click.option("--cmd", help="External provider command; the image path is appended.")
@click.option("--tta", is_flag=True, help="Wrap with test-time augmentation.")
@click.option("--slice", "slice_", is_flag=True, help="Wrap with overlapping-tile slicing.")
@click.option("--iou", default=0.5, type=float, show_default=True,
              help="Merge threshold used by the wrappers.")
@click.option("--jitter", default=0.0, type=float, show_default=True)
@click.option("--dropout", default=0.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def detect_run(provider, images, labels, classes_file, cmd, tta, slice_, iou,
               jitter, dropout, seed, out):
    """Detect over an image directory; write detection JSON-lines."""
    import shlex

    from .detectors import (
        ExternalProcessDetector,
        MockDetector,
        SliceConfig,
        TTAConfig,
        annotations_from_labels,
        detect_sliced,
        detect_tta,
    )
    from .formats import detection_record, tree_digest, write_detections_jsonl
    from .geometry import load_image
    from .synthgen import IMAGE_SUFFIXES

    if provider == "mock":
        if not labels or not classes_file:
            raise ConfigurationError("mock provider needs --labels and --classes")
        class_list = [l for l in Path(classes_file).read_text().splitlines() if l.strip()]
        annotations = annotations_from_labels(labels, images, class_list)
        detector = MockDetector(annotations, jitter_std=jitter, dropout=dropout, seed=seed)
    else:
        if not cmd:
            raise ConfigurationError("external provider needs --cmd")
        detector = ExternalProcessDetector(shlex.split(cmd))

    records = []
    image_paths = sorted(p for p in Path(images).iterdir()
                         if p.suffix.lower() in IMAGE_SUFFIXES)
    for path in image_paths:
        pixels = load_image(path)
        if pixels.shape[2] == 4:
            pixels = pixels[:, :, :3].copy()
        if tta:
            found = detect_tta(detector, pixels, TTAConfig(), iou, image_id=path.stem,
                               slice_config=SliceConfig() if slice_ else None)
        elif slice_:
            found = detect_sliced(detector, pixels, SliceConfig(), iou, image_id=path.stem)
        else:
            found = detector.detect(pixels, image_id=path.stem)
        records.extend(
            detection_record(path.stem, d.label, d.box, d.confidence) for d in found
        )

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_detections_jsonl(out_path, records)
    meta = _write_metadata(
        out_path,
        "detect run",
        {"provider": provider, "tta": tta, "slice": slice_, "iou": iou,
         "jitter": jitter, "dropout": dropout},
        seed,
        {"images": tree_digest(images)},
        is_dir=False,
    )
    click.echo(f"{len(records)} detections over {len(image_paths)} images -> {out} "
               f"[digest {meta['output_digest'][:12]}]")


# ---------------------------------------------------------------- eval


@cli.group(name="eval")
def eval_group():
    """Detection evaluation."""


@eval_group.command("run")
@click.option("--preds", "preds_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False),
              help="Images matching the labels; used for coordinate denormalization.")
@click.option("--classes", "classes_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--conf", default=0.4, type=float, show_default=True,
              help="Operating point for mP/mR.")
@click.option("--group/--no-group", default=True, show_default=True,
              help="Group sub-reports by corruption tag parsed from filenames.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def eval_run(preds_file, labels, images, classes_file, conf, group, out):
    """Compute mP, mR, mAP@0.5, and mAP@0.5:0.95 with per-corruption breakdowns."""
    from .formats import file_digest, tree_digest, write_canonical_json
    from .metrics import evaluate_files

    class_list = [l for l in Path(classes_file).read_text().splitlines() if l.strip()]
    report = evaluate_files(preds_file, labels, images, class_list, conf, group)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_canonical_json(out_path, report.to_dict())
    _write_metadata(
        out_path,
        "eval run",
        {"conf_threshold": conf, "group": group},
        None,
        {"preds": file_digest(preds_file), "labels": tree_digest(labels)},
        is_dir=False,
    )
    click.echo(f"confidence operating point: {conf}")
    click.echo(report.table())
    click.echo(f"report -> {out}")


# ---------------------------------------------------------------- kb


@cli.group()
def kb():
    """Knowledge base indexing and queries."""


@kb.command("index")
@click.option("--kb", "kb_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dim", default=64, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def kb_index(kb_file, dim, out):
    """Embed every entry label and write the exact flat index."""
    from .formats import file_digest
    from .knowledge import HashingEmbedder, build_index, load_knowledge_base, save_index

    entries = load_knowledge_base(kb_file)
    index = build_index(entries, HashingEmbedder(dim=dim))
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_index(index, out_path)
    meta = _write_metadata(
        out_path, "kb index", {"dim": dim}, None,
        {"kb": file_digest(kb_file)}, is_dir=False,
    )
    click.echo(f"indexed {len(index)} entries (dim {dim}) -> {out} "
               f"[digest {meta['output_digest'][:12]}]")


@kb.command("query")
@click.option("--index", "index_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--text", required=True)
@click.option("--top", default=3, type=int, show_default=True)
def kb_query(index_file, text, top):
    """Rank the nearest entries for a query string."""
    from .knowledge import load_index, query

    index = load_index(index_file)
    for rank, (entry, distance) in enumerate(query(index, text, top), 1):
        click.echo(f"{rank}. {entry.part_id}  {entry.display_name or entry.label}  "
                   f"distance={distance:.6f}")


# ---------------------------------------------------------------- serve


@cli.command("serve")
@click.option("--index", "index_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--kb", "kb_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, type=int, show_default=True)
@click.option("--provider-cmd", help="External detector command for multipart "
                                     "image frames; the image path is appended.")
@click.option("--wrapper", type=click.Choice(["none", "tta", "slice"]), default="none",
              show_default=True, help="Inference wrapper around the provider.")
@click.option("--frontend", type=click.Path(exists=True, file_okay=False),
              help="Static operator-console build to mount at /console.")
def serve(index_file, kb_file, host, port, provider_cmd, wrapper, frontend):
    """Run the assistant HTTP JSON API."""
    import shlex

    import uvicorn

    from .service import create_app

    if not index_file and not kb_file:
        raise ConfigurationError("serve needs --index or --kb")
    provider = None
    if provider_cmd:
        from .detectors import ExternalProcessDetector

        provider = ExternalProcessDetector(shlex.split(provider_cmd))
    app = create_app(index_path=index_file, kb_path=kb_file, provider=provider,
                     provider_wrapper=wrapper, frontend_dir=frontend)
    uvicorn.run(app, host=host, port=port, log_level="warning")


# ---------------------------------------------------------------- session


@cli.group()
def session():
    """Headless session tooling."""


@session.command("simulate")
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "index_file", type=click.Path(exists=True, dir_okay=False),
              help="Flat index; defaults to the scenario's inline knowledge base.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False),
              help="Transcript path; defaults to stdout.")
def session_simulate(scenario_file, index_file, out_file):
    """Replay a recorded scenario in-process and write the transcript."""
    from .formats import canonical_json_bytes, file_digest
    from .knowledge import load_index
    from .sessions import simulate

    scenario_path = Path(scenario_file)
    try:
        scenario = json.loads(scenario_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"bad scenario file: {exc}") from exc
    index = load_index(index_file) if index_file else None
    transcript = simulate(scenario, index=index, base_dir=scenario_path.parent)
    payload = canonical_json_bytes(transcript)
    if out_file:
        out_path = Path(out_file)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_bytes(payload)
        _write_metadata(
            out_path, "session simulate", {"scenario": scenario.get("name", "unnamed")},
            None, {"scenario": file_digest(scenario_path)}, is_dir=False,
        )
        click.echo(f"transcript -> {out_file}")
    else:
        sys.stdout.buffer.write(payload)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except (InputError, ConfigurationError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except PartsightError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return 3
    except Exception as exc:  # pragma: no cover - last resort
        click.echo(f"internal error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
