"""Umbrella command-line interface.

Subcommands: extract, sparsify, prepare-corpus, train, infer, analyze, serve.
Flags beat SPEECHMELODY_* environment variables, which beat defaults.
"""

import csv
import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import compare, interval_histogram
from .audio import load_wav, write_wav
from .features import FeatureBundle, FrameTrack, TrackKind, extract_features
from .midi import read_midi
from .model import preset, save_checkpoint, train_model
from .pipeline import Contour, ConvertConfig, convert
from .service import CHECKPOINT_FILES, ModelRegistry, create_app
from .sparsify import Level, SparsifyConfig, Technique, sparsify
from .symbolic import slice_corpus
from .taskgen import Task, load_corpus, save_corpus

CSV_FIELDS = ["frame_index", "time_s", "f0", "f1", "f2", "f3", "loudness_db"]


def _write_track_csv(path, bundle, keep_mask=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fields = CSV_FIELDS + (["keep_mask"] if keep_mask is not None else [])
        writer = csv.writer(fh)
        writer.writerow(fields)
        for i in range(len(bundle.f0)):
            row = [
                i,
                f"{i * bundle.f0.hop_s:.3f}",
                f"{bundle.f0.values[i]:.3f}",
                f"{bundle.f1.values[i]:.3f}",
                f"{bundle.f2.values[i]:.3f}",
                f"{bundle.f3.values[i]:.3f}",
                f"{bundle.loudness.values[i]:.3f}",
            ]
            if keep_mask is not None:
                row.append(int(keep_mask[i]))
            writer.writerow(row)


def _read_track_csv(path):
    columns = {name: [] for name in CSV_FIELDS}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for name in CSV_FIELDS:
                columns[name].append(float(row[name]))
    tracks = {}
    for name, kind in [("f0", TrackKind.F0), ("f1", TrackKind.F1),
                       ("f2", TrackKind.F2), ("f3", TrackKind.F3),
                       ("loudness_db", TrackKind.LOUDNESS)]:
        tracks[kind] = FrameTrack(np.array(columns[name]), kind)
    return tracks


@click.group()
@click.version_option(__version__)
def main():
    """Speech-to-melody toolkit."""


@main.command()
@click.argument("wav_in", type=click.Path(exists=True, dir_okay=False))
@click.argument("csv_out", type=click.Path(dir_okay=False))
@click.option("--dump-audio", type=click.Path(dir_okay=False), default=None,
              help="Also write the canonical 16 kHz mono PCM16 WAV here.")
def extract(wav_in, csv_out, dump_audio):
    """Extract F0/F1/F2/F3/loudness tracks from WAV_IN into CSV_OUT."""
    clip = load_wav(Path(wav_in).read_bytes())
    if dump_audio:
        Path(dump_audio).write_bytes(write_wav(clip))
    bundle = extract_features(clip)
    _write_track_csv(csv_out, bundle)
    click.echo(f"wrote {len(bundle.f0)} frames to {csv_out}")


@main.command("sparsify")
@click.argument("csv_in", type=click.Path(exists=True, dir_okay=False))
@click.argument("csv_out", type=click.Path(dir_okay=False))
@click.option("--contour", type=click.Choice([c.value for c in Contour]), default="f0")
@click.option("--technique", type=click.Choice([t.value for t in Technique]),
              default="heuristic")
@click.option("--level", type=click.Choice([l.value for l in Level]), default="medium")
@click.option("--radius", type=int, default=2, help="Loudness smoothing radius in frames.")
def sparsify_cmd(csv_in, csv_out, contour, technique, level, radius):
    """Sparsify a track CSV, appending a keep_mask column."""
    tracks = _read_track_csv(csv_in)
    cfg = SparsifyConfig(Technique(technique), Level(level), radius)
    track = tracks[TrackKind(contour)]
    sparse = sparsify(track, tracks[TrackKind.LOUDNESS], tracks[TrackKind.F0], cfg)
    bundle = FeatureBundle(
        f0=tracks[TrackKind.F0], f1=tracks[TrackKind.F1], f2=tracks[TrackKind.F2],
        f3=tracks[TrackKind.F3], loudness=tracks[TrackKind.LOUDNESS],
    )
    _write_track_csv(csv_out, bundle, keep_mask=sparse.keep_mask)
    click.echo(f"kept {sparse.kept_count()}/{len(sparse)} frames")


@main.command("prepare-corpus")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("corpus_out", type=click.Path(dir_okay=False))
def prepare_corpus(manifest, corpus_out):
    """Skyline and slice the MIDI files listed (one path per line) in MANIFEST."""
    polys = []
    for line in Path(manifest).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            polys.append(read_midi(Path(line).read_bytes()))
    corpus = slice_corpus(polys)
    save_corpus(corpus_out, corpus)
    click.echo(f"{len(polys)} files -> {len(corpus)} sequences")


@main.command()
@click.option("--task", "task_name", type=click.Choice([t.value for t in Task]),
              required=True)
@click.option("--preset", "preset_name", type=click.Choice(["paper", "desk"]),
              default="desk", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", type=int, default=3000, show_default=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--warmup", type=int, default=None,
              help="LR warmup steps [default: 4000 for paper preset, 400 for desk].")
@click.option("--log-every", type=int, default=100, show_default=True)
def train(task_name, preset_name, seed, steps, corpus_path, out_path, batch_size,
          warmup, log_every):
    """Train a model variant on a prepared token corpus."""
    task = Task(task_name)
    spec = preset(preset_name, task)
    if warmup is None:
        warmup = 4000 if preset_name == "paper" else 400
    corpus = load_corpus(corpus_path)
    click.echo(f"training {task.value} ({preset_name}) on {len(corpus)} sequences")
    trainer, history = train_model(
        corpus, task, spec=spec, steps=steps, seed=seed,
        batch_size=batch_size, warmup=warmup, log_every=log_every,
    )
    save_checkpoint(out_path, trainer.model, trainer.optimizer, trainer.step)
    final = history[-1]
    click.echo(f"saved {out_path} after step {final['step']} "
               f"(pitch_nll {final['pitch_nll']:.4f})")


@main.command()
@click.argument("wav_in", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--model", "model_name", type=click.Choice([t.value for t in Task]),
              default="denoise", show_default=True)
@click.option("--contour", type=click.Choice([c.value for c in Contour]), default="f0")
@click.option("--technique", type=click.Choice([t.value for t in Technique]),
              default="heuristic")
@click.option("--level", type=click.Choice([l.value for l in Level]), default="medium")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--checkpoints-dir", envvar="SPEECHMELODY_CHECKPOINTS_DIR",
              type=click.Path(file_okay=False, exists=True), required=True)
@click.option("--dump-audio", type=click.Path(dir_okay=False), default=None)
def infer(wav_in, out_dir, model_name, contour, technique, level, seed, temperature,
          checkpoints_dir, dump_audio):
    """Convert WAV_IN, writing raw.mid, sparse.mid (gap-fill) and generated.mid."""
    registry = ModelRegistry.from_dir(checkpoints_dir)
    clip = load_wav(Path(wav_in).read_bytes())
    if dump_audio:
        Path(dump_audio).write_bytes(write_wav(clip))
    cfg = ConvertConfig(
        model=Task(model_name),
        contour=Contour(contour),
        sparsify=SparsifyConfig(Technique(technique), Level(level)),
        seed=seed,
        temperature=temperature,
    )
    result = convert(clip, cfg, registry.models)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw.mid").write_bytes(result.raw_midi)
    (out / "generated.mid").write_bytes(result.generated_midi)
    written = ["raw.mid", "generated.mid"]
    if result.sparse_midi is not None:
        (out / "sparse.mid").write_bytes(result.sparse_midi)
        written.append("sparse.mid")
    click.echo(f"wrote {', '.join(written)} to {out_dir}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "csv_out", type=click.Path(dir_okay=False), required=True)
@click.option("--against", "other_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Second corpus for a divergence report.")
@click.option("--report", "report_out", type=click.Path(dir_okay=False), default=None)
def analyze(corpus_path, csv_out, other_path, report_out):
    """Interval histogram of a token corpus as CSV, optionally vs another."""
    hist = interval_histogram(load_corpus(corpus_path))
    with open(csv_out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval", "count", "frequency"])
        freq = hist.normalized()
        for k in sorted(hist.counts):
            writer.writerow([k, hist.counts[k], f"{freq[k]:.6f}"])
    click.echo(f"wrote histogram over {hist.total} intervals to {csv_out}")
    if other_path:
        report = compare(hist, interval_histogram(load_corpus(other_path)))
        payload = json.dumps(report.to_dict(), indent=2)
        if report_out:
            Path(report_out).write_text(payload + "\n", encoding="utf-8")
        click.echo(payload)


@main.command()
@click.option("--host", envvar="SPEECHMELODY_HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="SPEECHMELODY_PORT", type=int, default=8000,
              show_default=True)
@click.option("--checkpoints-dir", envvar="SPEECHMELODY_CHECKPOINTS_DIR",
              type=click.Path(file_okay=False, exists=True), required=True)
@click.option("--max-upload-s", envvar="SPEECHMELODY_MAX_UPLOAD_S", type=float,
              default=30.0, show_default=True)
@click.option("--max-workers", envvar="SPEECHMELODY_MAX_WORKERS", type=int, default=2,
              show_default=True)
@click.option("--static-dir", envvar="SPEECHMELODY_STATIC_DIR",
              type=click.Path(file_okay=False), default=None,
              help="Directory with the built web UI, served at /.")
def serve(host, port, checkpoints_dir, max_upload_s, max_workers, static_dir):
    """Run the HTTP service."""
    import uvicorn

    registry = ModelRegistry.from_dir(checkpoints_dir)
    if not registry.models:
        click.echo("warning: no checkpoints found; conversion requests will fail",
                   err=True)
    app = create_app(registry, max_upload_s=max_upload_s, max_workers=max_workers,
                     static_dir=static_dir)
    click.echo(f"serving on http://{host}:{port} "
               f"(models: {', '.join(t.value for t in registry.models) or 'none'})")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
