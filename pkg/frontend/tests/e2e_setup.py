"""Prepare a workdir for the UI end-to-end test.

Writes pipeline artifacts for a 20-cluster review queue, plus the catalog the
scripted session is expected to produce (computed by replaying the shared
script through the session engine directly). The vitest e2e then drives the
same script through the HTTP API and compares catalogs.
"""

import json
import sys
from pathlib import Path

from replykit.artifacts import write_json_artifact
from replykit.classes import MergeAction, catalog_document, replay_session
from replykit.cli import PipelineConfig
from replykit.clustering import cluster_set_records, complete_linkage_cluster
from replykit.corpus import Response, ResponseTable, response_table_records
from replykit.similarity import SparseDistanceMatrix


def main() -> None:
    workdir = Path(sys.argv[1])
    workdir.mkdir(parents=True, exist_ok=True)
    script = json.loads((Path(__file__).parent / "e2e-script.json").read_text())

    responses = [
        Response(
            normalized_text=f"reply about topic {i:02d}",
            raw_variant_counts={f"Reply about topic {i:02d}!": 50 - i},
            count=50 - i,
        )
        for i in range(24)
    ]
    table = ResponseTable(responses=responses)
    distances = SparseDistanceMatrix(size=24, entries={(0, 1): 0.1})
    clusters = complete_linkage_cluster(distances, 0.25, counts=table.counts)

    config = PipelineConfig(
        corpus_path=str(workdir / "unused.jsonl"),
        workdir=str(workdir),
        top_n=script["top_n"],
        seed=1,
    )
    (workdir / "config.json").write_text(
        json.dumps(
            {
                "corpus_path": config.corpus_path,
                "workdir": config.workdir,
                "top_n": config.top_n,
                "seed": config.seed,
            }
        )
    )
    semantic = config.semantic_hash()
    write_json_artifact(
        workdir / "responses.json",
        {"config_hash": semantic, "responses": response_table_records(table)},
    )
    write_json_artifact(
        workdir / "clusters.json",
        {"config_hash": semantic, "threshold": 0.25, "clusters": cluster_set_records(clusters, table)},
    )

    actions = []
    for step in script["steps"]:
        if step["kind"] in ("expect_reject", "refresh_check"):
            continue
        actions.append(
            MergeAction(
                kind=step["kind"],
                class_id=step.get("class_id"),
                name=step.get("name"),
                exemplar=step.get("exemplar"),
            )
        )
    session = replay_session(clusters, table, script["top_n"], actions)
    if not session.is_complete():
        raise SystemExit("e2e script does not exhaust the review queue")
    (workdir / "expected_catalog.json").write_text(
        json.dumps(catalog_document(session.classes), sort_keys=True, indent=2) + "\n"
    )
    print(json.dumps({"workdir": str(workdir), "clusters": len(clusters.clusters)}))


if __name__ == "__main__":
    main()
