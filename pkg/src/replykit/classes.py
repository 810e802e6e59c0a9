"""Human merge step: walk cluster centroids by frequency and build response classes.

All mutation goes through MergeAction records. The in-memory session state is
always reproducible by folding the action log over the starting cluster set,
which is what makes the labeling service crash-safe: the log is written ahead
of every acknowledgment and replayed on startup. Undo never rewrites history;
it appends a compensating entry and inverts the most recent live action.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .clustering import Cluster, ClusterSet
from .corpus import ResponseTable

ACTION_KINDS = ("assign", "create", "skip", "undo")

LOG_FORMAT_VERSION = 1


class ActionError(ValueError):
    """An action that cannot be applied to the current session state."""


@dataclass
class ResponseClass:
    """A named group of interchangeable responses; one classifier label.

    The exemplar is the message actually sent when this class is chosen, and
    can be edited at any time without touching the class id or membership.
    """

    id: int
    name: str
    exemplar_text: str
    member_cluster_ids: set[int]
    member_response_ids: set[int]


@dataclass(frozen=True)
class MergeAction:
    kind: str
    cluster_id: int | None = None
    class_id: int | None = None
    name: str | None = None
    exemplar: str | None = None
    actor: str = ""
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")


class MergeSession:
    """Review queue plus the classes built so far; see start_session."""

    def __init__(self, cluster_set: ClusterSet, table: ResponseTable, queue: list[int]):
        self.cluster_set = cluster_set
        self.table = table
        self.queue = queue
        self.cursor = 0
        self.action_log: list[MergeAction] = []
        self.classes: list[ResponseClass] = []
        self._live: list[MergeAction] = []  # applied actions not yet undone

    # -- queries ------------------------------------------------------------

    def is_complete(self) -> bool:
        return self.cursor >= len(self.queue)

    def current_cluster(self) -> Cluster | None:
        if self.is_complete():
            return None
        return self.cluster_set.by_id(self.queue[self.cursor])

    def next_centroid(self) -> tuple[int, str, int, list[ResponseClass]] | None:
        """The cluster awaiting review, or None when the queue is exhausted."""
        cluster = self.current_cluster()
        if cluster is None:
            return None
        centroid_text = self.table[cluster.centroid_id].normalized_text
        return cluster.id, centroid_text, cluster.total_count, list(self.classes)

    def class_by_id(self, class_id: int) -> ResponseClass | None:
        for cls in self.classes:
            if cls.id == class_id:
                return cls
        return None

    def snapshot(self) -> tuple:
        """Canonical (classes, cursor) view for replay-equality checks."""
        return (
            tuple(
                (c.id, c.name, c.exemplar_text, tuple(sorted(c.member_cluster_ids)),
                 tuple(sorted(c.member_response_ids)))
                for c in self.classes
            ),
            self.cursor,
        )

    # -- mutation -----------------------------------------------------------

    def check_action(self, action: MergeAction) -> None:
        """Raise ActionError if the action cannot be applied right now."""
        if action.kind == "undo":
            if not self._live:
                raise ActionError("nothing to undo")
            return
        cluster = self.current_cluster()
        if cluster is None:
            raise ActionError("session complete; no cluster under review")
        if action.cluster_id is not None and action.cluster_id != cluster.id:
            raise ActionError(
                f"action targets cluster {action.cluster_id}, but cluster {cluster.id} is under review"
            )
        if action.kind == "assign":
            if action.class_id is None or self.class_by_id(action.class_id) is None:
                raise ActionError(f"assign to nonexistent class {action.class_id}")
        elif action.kind == "create":
            if not action.name or not action.name.strip():
                raise ActionError("create requires a non-empty class name")
            if any(c.name == action.name for c in self.classes):
                raise ActionError(f"class name {action.name!r} already exists")

    def apply_action(self, action: MergeAction) -> "MergeSession":
        """Validate, apply, and log one action. Returns self for chaining."""
        self.check_action(action)
        if action.kind == "undo":
            self._invert(self._live.pop())
        else:
            cluster = self.current_cluster()
            assert cluster is not None
            if action.kind == "assign":
                target = self.class_by_id(action.class_id)
                target.member_cluster_ids.add(cluster.id)
                target.member_response_ids.update(cluster.member_ids)
            elif action.kind == "create":
                exemplar = action.exemplar or self.table[cluster.centroid_id].most_common_raw()
                self.classes.append(
                    ResponseClass(
                        id=len(self.classes),
                        name=action.name,
                        exemplar_text=exemplar,
                        member_cluster_ids={cluster.id},
                        member_response_ids=set(cluster.member_ids),
                    )
                )
            # skip: nothing but the cursor moves
            self.cursor += 1
            self._live.append(action)
        self.action_log.append(action)
        return self

    def _invert(self, action: MergeAction) -> None:
        self.cursor -= 1
        cluster = self.current_cluster()
        assert cluster is not None
        if action.kind == "assign":
            target = self.class_by_id(action.class_id)
            target.member_cluster_ids.discard(cluster.id)
            target.member_response_ids.difference_update(cluster.member_ids)
        elif action.kind == "create":
            # a create can only sit on top of the live stack while its class
            # is still the newest one
            self.classes.pop()


def start_session(cs: ClusterSet, table: ResponseTable, top_n: int) -> MergeSession:
    """Open a review session over the top_n most frequent clusters.

    Queue order is total_count descending, ties broken by lower cluster id.
    """
    if top_n < 1:
        raise ValueError("top_n must be positive")
    if not cs.clusters:
        raise ValueError("cannot start a session on an empty cluster set")
    ranked = sorted(cs.clusters, key=lambda c: (-c.total_count, c.id))
    queue = [c.id for c in ranked[:top_n]]
    return MergeSession(cluster_set=cs, table=table, queue=queue)


def replay_session(
    cs: ClusterSet, table: ResponseTable, top_n: int, actions: Iterable[MergeAction]
) -> MergeSession:
    """Fold a recorded action log over a fresh session."""
    session = start_session(cs, table, top_n)
    for action in actions:
        session.apply_action(action)
    return session


# -- catalog persistence ----------------------------------------------------


def _canonical_class_records(classes: Sequence[ResponseClass]) -> list[dict]:
    return [
        {
            "id": c.id,
            "name": c.name,
            "exemplar": c.exemplar_text,
            "cluster_ids": sorted(c.member_cluster_ids),
            "response_ids": sorted(c.member_response_ids),
        }
        for c in sorted(classes, key=lambda c: c.id)
    ]


def catalog_content_hash(classes: Sequence[ResponseClass]) -> str:
    blob = json.dumps(_canonical_class_records(classes), separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def catalog_structural_hash(classes: Sequence[ResponseClass]) -> str:
    """Digest of ids and memberships only.

    Trained models pin this hash: renaming a class or editing its exemplar
    leaves it unchanged, so deployed suggestions can be reworded without
    retraining, while structural edits invalidate stale models.
    """
    canonical = [[c.id, sorted(c.member_response_ids)] for c in sorted(classes, key=lambda c: c.id)]
    blob = json.dumps(canonical, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def catalog_document(classes: Sequence[ResponseClass]) -> dict:
    return {"hash": catalog_content_hash(classes), "classes": _canonical_class_records(classes)}


def write_catalog(classes: Sequence[ResponseClass], path: str | Path) -> None:
    if not classes:
        raise ValueError("refusing to export an empty catalog")
    Path(path).write_text(json.dumps(catalog_document(classes), indent=2, sort_keys=True) + "\n")


def export_classes(session: MergeSession, path: str | Path) -> None:
    write_catalog(session.classes, path)


def import_classes(path: str | Path, cluster_set: ClusterSet | None = None) -> list[ResponseClass]:
    """Load a catalog file back into ResponseClass objects.

    Rejects schema violations, duplicate names, content-hash mismatches, and,
    when a cluster set is supplied, dangling cluster ids.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt catalog file: {exc.msg}") from exc
    if not isinstance(doc, dict) or "classes" not in doc or "hash" not in doc:
        raise ValueError("catalog file missing 'hash' or 'classes'")
    classes = []
    names: set[str] = set()
    for rec in doc["classes"]:
        try:
            cls = ResponseClass(
                id=int(rec["id"]),
                name=rec["name"],
                exemplar_text=rec["exemplar"],
                member_cluster_ids=set(rec["cluster_ids"]),
                member_response_ids=set(rec["response_ids"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed class record: {rec!r}") from exc
        if not cls.name or not cls.exemplar_text:
            raise ValueError(f"class {cls.id} has an empty name or exemplar")
        if cls.name in names:
            raise ValueError(f"duplicate class name {cls.name!r}")
        names.add(cls.name)
        classes.append(cls)
    if doc["hash"] != catalog_content_hash(classes):
        raise ValueError("catalog hash mismatch: file was edited without rehashing")
    if cluster_set is not None:
        known = {c.id for c in cluster_set.clusters}
        for cls in classes:
            dangling = cls.member_cluster_ids - known
            if dangling:
                raise ValueError(f"class {cls.name!r} references unknown clusters {sorted(dangling)}")
    return classes


# -- append-only action log --------------------------------------------------


def action_to_record(action: MergeAction) -> dict:
    record = {"kind": action.kind, "actor": action.actor, "ts": action.timestamp}
    for key in ("cluster_id", "class_id", "name", "exemplar"):
        value = getattr(action, key)
        if value is not None:
            record[key] = value
    return record


def action_from_record(record: dict) -> MergeAction:
    return MergeAction(
        kind=record["kind"],
        cluster_id=record.get("cluster_id"),
        class_id=record.get("class_id"),
        name=record.get("name"),
        exemplar=record.get("exemplar"),
        actor=record.get("actor", ""),
        timestamp=record.get("ts", 0.0),
    )


def timestamped(action: MergeAction) -> MergeAction:
    if action.timestamp:
        return action
    return MergeAction(
        kind=action.kind,
        cluster_id=action.cluster_id,
        class_id=action.class_id,
        name=action.name,
        exemplar=action.exemplar,
        actor=action.actor,
        timestamp=time.time(),
    )


def write_log_header(path: str | Path, top_n: int, cluster_set_hash: str) -> None:
    header = {
        "kind": "session",
        "version": LOG_FORMAT_VERSION,
        "top_n": top_n,
        "cluster_set_hash": cluster_set_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")


def append_action(path: str | Path, action: MergeAction) -> None:
    """Append one action record and flush it to disk before returning."""
    import os

    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(action_to_record(action), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_action_log(path: str | Path) -> tuple[dict, list[MergeAction]]:
    """Parse header and actions; raises ValueError with a diagnostic when corrupt."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("action log is empty (missing session header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"action log line 1: invalid JSON ({exc.msg})") from exc
    if header.get("kind") != "session":
        raise ValueError("action log line 1: expected a session header record")
    actions = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            actions.append(action_from_record(record))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValueError(f"action log line {lineno}: {exc}") from exc
    return header, actions
