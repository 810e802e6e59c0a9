"""Pipeline orchestration: every stage is a subcommand over on-disk artifacts.

Stages are separated so the human merge step can pause the pipeline for as
long as labeling takes: ingest -> embed -> candidates -> score -> cluster ->
serve (merge UI) -> dataset -> train -> evaluate/suggest. Exit codes: 0
success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import artifacts, synthetic
from .artifacts import ArtifactError, config_hash, read_json_artifact, write_json_artifact
from .candidates import CandidatePairSet, generate_candidate_pairs
from .classes import import_classes
from .classifier import (
    LabeledExample,
    ContextWindow,
    TrainingConfig,
    build_dataset,
    evaluate_accuracy,
    history_ablation,
    read_model,
    split_examples,
    train,
    write_model,
)
from .clustering import (
    cluster_set_from_records,
    cluster_set_records,
    cluster_stats,
    complete_linkage_cluster,
)
from .corpus import (
    CorpusFormatError,
    DOCTOR,
    SPEAKERS,
    Turn,
    extract_response_table,
    load_conversations,
    response_table_from_records,
    response_table_records,
)
from .embeddings import (
    EncoderSpec,
    ExternalEncoderError,
    WordVectorFormatError,
    embed,
    fit_tfidf,
    load_word_vectors,
)
from .selective import (
    ProcedureRun,
    load_judgments,
    compare_labeling_procedures,
    render_table,
    suggest as run_suggest,
)
from .similarity import ExternalScorerError, ScorerSpec, SparseDistanceMatrix, build_distance_matrix, score_pairs


@dataclass
class PipelineConfig:
    """Defaults follow the published pipeline constants where they exist."""

    corpus_path: str = "corpus.jsonl"
    word_vectors_path: str | None = None
    workdir: str = "work"
    encoders: list[dict] = field(default_factory=lambda: [{"kind": "tfidf"}])
    scorer: dict = field(default_factory=lambda: {"kind": "cosine_calibrated"})
    k: int = 10
    threshold: float = 0.25
    top_n: int = 3000
    speaker: str = DOCTOR
    placeholders: list[str] = field(default_factory=list)
    training: dict = field(default_factory=dict)
    service: dict = field(default_factory=lambda: {"host": "127.0.0.1", "port": 8000})
    seed: int = 0

    def training_config(self) -> TrainingConfig:
        fields = dict(self.training)
        fields.setdefault("seed", self.seed)
        fields.setdefault("placeholders", tuple(self.placeholders))
        return TrainingConfig(**fields)

    def encoder_specs(self) -> list[EncoderSpec]:
        return [EncoderSpec(**e) for e in self.encoders]

    def scorer_spec(self) -> ScorerSpec:
        return ScorerSpec(**self.scorer)

    def semantic_hash(self) -> str:
        # paths are excluded: two runs of the same parameters in different
        # directories must produce byte-identical catalogs and models
        cfg = asdict(self)
        for key in ("corpus_path", "word_vectors_path", "workdir", "service"):
            cfg.pop(key, None)
        cfg["training"] = asdict(self.training_config())
        cfg["training"]["placeholders"] = list(cfg["training"]["placeholders"])
        return config_hash(cfg)


def load_config(path: str | None, seed: int | None) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise click.UsageError(f"config file {path} not found")
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"config file {path} is not valid JSON: {exc.msg}")
        unknown = set(raw) - {f.name for f in PipelineConfig.__dataclass_fields__.values()}
        if unknown:
            raise ArtifactError(f"unknown config keys: {sorted(unknown)}")
        cfg = PipelineConfig(**raw)
    if seed is not None:
        cfg.seed = seed
        if "seed" in cfg.training:
            cfg.training["seed"] = seed
    if cfg.speaker not in SPEAKERS:
        raise ArtifactError(f"config speaker must be one of {SPEAKERS}")
    return cfg


class Stage:
    """Shared per-invocation context: config, workdir, hash, and flags."""

    def __init__(self, cfg: PipelineConfig, jobs: int, force: bool):
        self.cfg = cfg
        self.jobs = jobs
        self.force = force
        self.workdir = Path(cfg.workdir)
        self.hash = cfg.semantic_hash()

    def path(self, name: str) -> Path:
        return self.workdir / name

    def read(self, name: str, stage_hint: str) -> dict:
        return read_json_artifact(self.path(name), stage_hint, self.hash, self.force)

    def write(self, name: str, payload: dict) -> None:
        payload = {"config_hash": self.hash, **payload}
        write_json_artifact(self.path(name), payload)

    def load_table(self):
        return response_table_from_records(self.read("responses.json", "ingest")["responses"])

    def load_matrices(self):
        manifest = read_json_artifact(
            self.path("embeddings/manifest.json"), "embed", self.hash, self.force
        )
        directory = self.path("embeddings")
        return [artifacts.read_embedding_matrix(directory, e) for e in manifest["encoders"]]

    def load_distances(self) -> SparseDistanceMatrix:
        doc = self.read("distances.json", "score")
        entries = {(int(i), int(j)): float(d) for i, j, d in doc["entries"]}
        return SparseDistanceMatrix(size=int(doc["size"]), entries=entries)

    def load_clusters(self):
        return cluster_set_from_records(self.read("clusters.json", "cluster")["clusters"])

    def load_catalog(self, path: str | None = None):
        catalog_path = Path(path) if path else self.path("catalog.json")
        if not catalog_path.exists():
            raise ArtifactError(
                f"missing catalog {catalog_path}: complete the merge step (`serve`) and export first"
            )
        return import_classes(catalog_path)

    def load_model(self, path: str | None = None):
        model_path = Path(path) if path else self.path("model.json")
        if not model_path.exists():
            raise ArtifactError(f"missing model {model_path}: run `train` first")
        return read_model(model_path)


pass_stage = click.make_pass_decorator(Stage)


@click.group()
@click.option("--config", "config_path", type=str, default=None, help="Pipeline config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed everywhere.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker cap for parallel stages.")
@click.option("--force", is_flag=True, help="Consume artifacts even if their config hash mismatches.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, seed: int | None, jobs: int, force: bool) -> None:
    """Response-class pipeline: corpus -> clusters -> merge -> classifier -> suggestions."""
    ctx.obj = Stage(load_config(config_path, seed), jobs=jobs, force=force)


@cli.command()
@pass_stage
def ingest(stage: Stage) -> None:
    """Parse the corpus and build the deduplicated response table."""
    convs = load_conversations(stage.cfg.corpus_path)
    table = extract_response_table(convs, stage.cfg.speaker, stage.cfg.placeholders)
    stage.write("responses.json", {"responses": response_table_records(table)})
    click.echo(f"{len(convs)} conversations -> {len(table)} responses (count >= 2)")


@cli.command("embed")
@pass_stage
def embed_cmd(stage: Stage) -> None:
    """Encode every response under each configured encoder."""
    table = stage.load_table()
    specs = stage.cfg.encoder_specs()
    if not specs:
        raise ArtifactError("no encoders configured")
    needs_tfidf = any(s.kind in ("tfidf", "tfidf_weighted_wordvec") for s in specs)
    tfidf = fit_tfidf(table) if needs_tfidf else None
    wv = None
    if any(s.kind in ("avg_wordvec", "tfidf_weighted_wordvec") for s in specs):
        paths = {s.word_vectors_path for s in specs if s.word_vectors_path}
        path = paths.pop() if paths else stage.cfg.word_vectors_path
        if path is None:
            raise ArtifactError("word-vector encoders configured but no word_vectors_path set")
        wv = load_word_vectors(path)
    directory = stage.path("embeddings")
    entries = []
    used_names: set[str] = set()
    for spec in specs:
        name = spec.name
        while name in used_names:
            name += "+"
        used_names.add(name)
        mat = embed(table, spec, tfidf=tfidf, wv=wv, jobs=stage.jobs)
        entries.append(artifacts.write_embedding_matrix(directory, name, mat))
        click.echo(f"encoder {name}: {mat.n_rows} x {mat.dimension}, {int(mat.oov_flags.sum())} OOV rows")
    write_json_artifact(
        directory / "manifest.json", {"config_hash": stage.hash, "encoders": entries}
    )


@cli.command("candidates")
@pass_stage
def candidates_cmd(stage: Stage) -> None:
    """Union of per-encoder k-nearest-neighbor pairs."""
    mats = stage.load_matrices()
    pairs = generate_candidate_pairs(mats, stage.cfg.k)
    stage.write(
        "candidates.json",
        {
            "k": stage.cfg.k,
            "pairs": [[i, j] for i, j in pairs.sorted_pairs()],
            "per_encoder_counts": pairs.per_encoder_counts,
        },
    )
    click.echo(f"{len(pairs)} candidate pairs from {len(mats)} encoders (k={stage.cfg.k})")


@cli.command()
@pass_stage
def score(stage: Stage) -> None:
    """Score candidate pairs and assemble the sparse distance matrix."""
    table = stage.load_table()
    doc = stage.read("candidates.json", "candidates")
    pairs = CandidatePairSet(
        pairs={(int(i), int(j)) for i, j in doc["pairs"]},
        per_encoder_counts=doc.get("per_encoder_counts", {}),
    )
    spec = stage.cfg.scorer_spec()
    mats = stage.load_matrices() if spec.kind == "cosine_calibrated" else None
    scores = score_pairs(pairs, table, spec, mats=mats, jobs=stage.jobs)
    matrix = build_distance_matrix(scores, len(table))
    stage.write(
        "distances.json",
        {"size": matrix.size, "entries": [[i, j, d] for i, j, d in matrix.sorted_entries()]},
    )
    click.echo(f"scored {len(scores)} pairs")


@cli.command()
@pass_stage
def cluster(stage: Stage) -> None:
    """Complete-linkage agglomerative clustering over the distance matrix."""
    matrix = stage.load_distances()
    table = stage.load_table()
    cs = complete_linkage_cluster(matrix, stage.cfg.threshold, counts=table.counts)
    stage.write(
        "clusters.json",
        {"threshold": stage.cfg.threshold, "clusters": cluster_set_records(cs, table)},
    )
    stats = cluster_stats(cs, table)
    click.echo(
        f"{stats['n_clusters']} clusters, max size {stats['max_size']}, "
        f"non-singleton coverage {stats['coverage']:.1%}"
    )


@cli.command()
@click.option("--host", default=None, help="Bind host (defaults to config).")
@click.option("--port", type=int, default=None, help="Bind port (defaults to config).")
@click.option("--log", "log_path", default=None, help="Action log path (default workdir/actions.log).")
@click.option("--static-dir", default=None, help="Directory holding the UI bundle.")
@click.option("--model-path", default=None, help="Trained model for /api/suggest.")
@click.option("--catalog-path", default=None, help="Catalog matching the model.")
@pass_stage
def serve(
    stage: Stage,
    host: str | None,
    port: int | None,
    log_path: str | None,
    static_dir: str | None,
    model_path: str | None,
    catalog_path: str | None,
) -> None:
    """Host the merge-session API and UI (and /api/suggest when a model is given)."""
    from .service import ServiceStartupError, build_state, serve as run_service

    table = stage.load_table()
    cs = stage.load_clusters()
    model = catalog = None
    if model_path:
        model = stage.load_model(model_path)
        catalog = stage.load_catalog(catalog_path)
    try:
        state = build_state(
            cluster_set=cs,
            table=table,
            top_n=stage.cfg.top_n,
            log_path=log_path or stage.path("actions.log"),
            model=model,
            catalog=catalog,
            static_dir=static_dir or stage.cfg.service.get("static_dir"),
        )
    except ServiceStartupError as exc:
        raise ArtifactError(str(exc))
    run_service(
        state,
        host=host or stage.cfg.service.get("host", "127.0.0.1"),
        port=port or stage.cfg.service.get("port", 8000),
    )


@cli.command()
@click.option("--catalog-path", default=None, help="Catalog file (default workdir/catalog.json).")
@pass_stage
def dataset(stage: Stage, catalog_path: str | None) -> None:
    """Build (context, class) training examples under the membership rule."""
    convs = load_conversations(stage.cfg.corpus_path)
    table = stage.load_table()
    catalog = stage.load_catalog(catalog_path)
    examples = build_dataset(convs, catalog, table, stage.cfg.training_config())
    stage.write(
        "dataset.json",
        {
            "examples": [
                {
                    "tokens": list(ex.context.tokens),
                    "class_id": ex.class_id,
                    "conversation": ex.context.source_conversation,
                    "position": ex.context.position,
                }
                for ex in examples
            ]
        },
    )
    click.echo(f"{len(examples)} labeled examples across {len(catalog)} classes")


def _load_examples(stage: Stage, path: str | None = None) -> list[LabeledExample]:
    if path:
        doc = read_json_artifact(path, "dataset", stage.hash, stage.force)
    else:
        doc = stage.read("dataset.json", "dataset")
    return [
        LabeledExample(
            context=ContextWindow(
                tokens=tuple(rec["tokens"]),
                source_conversation=rec.get("conversation", ""),
                position=rec.get("position", -1),
            ),
            class_id=int(rec["class_id"]),
        )
        for rec in doc["examples"]
    ]


@cli.command("train")
@click.option("--catalog-path", default=None)
@pass_stage
def train_cmd(stage: Stage, catalog_path: str | None) -> None:
    """Fit the label-smoothed softmax classifier on the dataset artifact."""
    catalog = stage.load_catalog(catalog_path)
    examples = _load_examples(stage)
    cfg = stage.cfg.training_config()
    model, curve = train(examples, catalog, cfg)
    write_model(model, stage.path("model.json"), config_hash=stage.hash)
    last = curve[-1]
    val = f", val accuracy {last['val_accuracy']:.1%}" if "val_accuracy" in last else ""
    click.echo(f"trained {model.n_classes} classes on {len(examples)} examples{val}")


@cli.command("ablate-history")
@click.option("--turns", "turns_spec", default="1,2,3,4,5,6", show_default=True,
              help="Comma-separated history lengths to sweep.")
@click.option("--catalog-path", default=None)
@pass_stage
def ablate_history(stage: Stage, turns_spec: str, catalog_path: str | None) -> None:
    """Sweep how many context turns the classifier sees; one model per setting."""
    try:
        turn_counts = [int(t) for t in turns_spec.split(",") if t.strip()]
    except ValueError:
        raise click.UsageError(f"--turns must be comma-separated integers, got {turns_spec!r}")
    convs = load_conversations(stage.cfg.corpus_path)
    table = stage.load_table()
    catalog = stage.load_catalog(catalog_path)
    rows = history_ablation(convs, catalog, table, stage.cfg.training_config(), turn_counts)
    stage.write("ablation.json", {"rows": rows})
    click.echo(render_table(rows, ["max_turns", "val_accuracy", "n_examples"]))


@cli.command()
@click.option("--dataset-path", default=None, help="Dataset dump to score (default: validation split).")
@pass_stage
def evaluate(stage: Stage, dataset_path: str | None) -> None:
    """Accuracy of the trained model on labeled examples."""
    model = stage.load_model()
    if dataset_path:
        examples = _load_examples(stage, dataset_path)
    else:
        all_examples = _load_examples(stage)
        _, val_idx = split_examples(
            len(all_examples), model.config.val_fraction, model.config.seed
        )
        examples = [all_examples[i] for i in val_idx]
    click.echo(f"accuracy: {evaluate_accuracy(model, examples):.4f} on {len(examples)} examples")


@cli.command("suggest")
@click.option("--turns-json", required=True, help="JSON file: [{speaker, text}, ...].")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--catalog-path", default=None)
@pass_stage
def suggest_cmd(stage: Stage, turns_json: str, threshold: float, catalog_path: str | None) -> None:
    """Suggest a reply for a context, or opt out below the confidence threshold."""
    model = stage.load_model()
    catalog = stage.load_catalog(catalog_path)
    try:
        raw = json.loads(Path(turns_json).read_text())
        turns = [Turn(speaker=t["speaker"], text=t["text"]) for t in raw]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ArtifactError(f"cannot read turns from {turns_json}: {exc}")
    for t in turns:
        if t.speaker not in SPEAKERS:
            raise ArtifactError(f"unknown speaker {t.speaker!r}")
    result = run_suggest(model, catalog, turns, threshold)
    click.echo(json.dumps({
        "opted_out": result.opted_out,
        "class_id": result.class_id,
        "exemplar": result.exemplar_text,
        "confidence": result.confidence,
    }, indent=2))


@cli.command("compare-procedures")
@click.option("--manifest", "manifest_path", required=True,
              help='JSON: {"runs": [{label, catalog, model, judgments, suggestions}]}')
@pass_stage
def compare_procedures(stage: Stage, manifest_path: str) -> None:
    """Tabulate class count, train size, bad-rate, and variety across labeling runs."""
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read manifest {manifest_path}: {exc}")
    runs = []
    for entry in manifest.get("runs", []):
        suggestions: list[str] = []
        if entry.get("suggestions"):
            suggestions = Path(entry["suggestions"]).read_text(encoding="utf-8").splitlines()
        runs.append(
            ProcedureRun(
                label=entry.get("label", entry["catalog"]),
                catalog=import_classes(entry["catalog"]),
                model=read_model(entry["model"]),
                judgments=load_judgments(entry["judgments"]) if entry.get("judgments") else [],
                suggestions=suggestions,
            )
        )
    if not runs:
        raise ArtifactError("manifest lists no runs")
    rows = compare_labeling_procedures(runs)
    stage.write("procedures.json", {"rows": rows})
    click.echo(render_table(rows, ["label", "classes", "train_examples", "bad_pct", "unique_per_100"]))


@cli.command("make-demo-corpus")
@click.option("--out-dir", default="data", show_default=True)
@click.option("--conversations", "n_conversations", type=int, default=200, show_default=True)
@pass_stage
def make_demo_corpus(stage: Stage, out_dir: str, n_conversations: int) -> None:
    """Regenerate the bundled synthetic corpus and word vectors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    convs = synthetic.generate_conversations(n_conversations, seed=stage.cfg.seed or 7)
    synthetic.write_corpus(convs, out / "synthetic_corpus.jsonl")
    synthetic.write_word_vectors(out / "synthetic_vectors.txt")
    click.echo(f"wrote {len(convs)} conversations to {out / 'synthetic_corpus.jsonl'}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        return 1
    except (
        ArtifactError,
        CorpusFormatError,
        WordVectorFormatError,
        ExternalEncoderError,
        ExternalScorerError,
        ValueError,
    ) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
