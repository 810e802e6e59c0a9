"""Context featurization and the label-smoothed softmax response classifier.

Contexts are the last few speaker turns, each prefixed with a speaker marker,
normalized, and truncated to a token budget. Features are a hashed bag of
unigrams and bigrams, so the classifier is a strong lexical baseline behind
the same contracts a neural encoder would use. Training is plain mini-batch
gradient descent: deterministic given a seed, which the test suite leans on.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .classes import ResponseClass, catalog_structural_hash
from .corpus import DOCTOR, Conversation, ResponseTable, Turn, iter_speaker_blocks, normalize_text

PATIENT_MARKER = "<pat>"
DOCTOR_MARKER = "<doc>"

MODEL_FORMAT_VERSION = 1

_HASH_MULTIPLIER = 0x9E3779B97F4A7C15  # fixed odd 64-bit multiplier
_MASK64 = (1 << 64) - 1
_BIGRAM_SEP = "\x1f"  # cannot occur in normalized text


@dataclass(frozen=True)
class TrainingConfig:
    max_tokens: int = 304
    max_turns: int = 6
    smoothing: float = 0.1
    learning_rate: float = 0.5
    epochs: int = 30
    seed: int = 0
    val_fraction: float = 0.2
    batch_size: int = 32
    feature_bits: int = 18
    placeholders: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_tokens < 1 or self.max_turns < 1:
            raise ValueError("max_tokens and max_turns must be positive")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, and batch_size must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if not 2 <= self.feature_bits <= 30:
            raise ValueError("feature_bits must lie in [2, 30]")
        object.__setattr__(self, "placeholders", tuple(self.placeholders))

    @property
    def n_features(self) -> int:
        return 1 << self.feature_bits


@dataclass(frozen=True)
class ContextWindow:
    """Marker-annotated, normalized, truncated token sequence for one prediction."""

    tokens: tuple[str, ...]
    source_conversation: str = ""
    position: int = -1


@dataclass(frozen=True)
class LabeledExample:
    context: ContextWindow
    class_id: int


@dataclass
class SoftmaxModel:
    """Per-class weights over the hashed n-gram space, tied to one catalog."""

    weights: np.ndarray  # K x F
    bias: np.ndarray  # K
    config: TrainingConfig
    catalog_hash: str
    n_train_examples: int = 0

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[1])


# -- featurization ------------------------------------------------------------


def featurize_context(
    turns: Sequence[Turn],
    cfg: TrainingConfig,
    conversation_id: str = "",
    position: int = -1,
) -> ContextWindow:
    """Markers + normalized tokens for the last max_turns speaker runs.

    A "turn" here is a maximal run of consecutive messages by one speaker, so
    markers always alternate. Truncation to max_tokens happens after marker
    insertion; a marker that falls off the front is simply dropped.
    """
    if not turns:
        raise ValueError("cannot featurize an empty context")
    blocks = list(iter_speaker_blocks(turns))[-cfg.max_turns :]
    tokens: list[str] = []
    for speaker, block in blocks:
        tokens.append(DOCTOR_MARKER if speaker == DOCTOR else PATIENT_MARKER)
        text = normalize_text(" ".join(t.text for t in block), cfg.placeholders)
        tokens.extend(text.split())
    return ContextWindow(
        tokens=tuple(tokens[-cfg.max_tokens :]),
        source_conversation=conversation_id,
        position=position,
    )


def build_dataset(
    convs: Iterable[Conversation],
    catalog: Sequence[ResponseClass],
    table: ResponseTable,
    cfg: TrainingConfig,
) -> list[LabeledExample]:
    """(context, class) pairs for every doctor turn that is a member response.

    Doctor turns whose normalized text belongs to no class are dropped, as are
    doctor turns that open a conversation (there is no context to featurize).
    """
    if not catalog:
        raise ValueError("catalog is empty")
    text_to_class: dict[str, int] = {}
    for cls in catalog:
        for rid in cls.member_response_ids:
            text_to_class[table[rid].normalized_text] = cls.id
    examples: list[LabeledExample] = []
    for conv in convs:
        offset = 0  # message index where the current block starts
        for speaker, block in iter_speaker_blocks(conv.turns):
            if speaker == DOCTOR and offset > 0:
                unit = normalize_text(" ".join(t.text for t in block), cfg.placeholders)
                class_id = text_to_class.get(unit)
                if class_id is not None:
                    context = featurize_context(
                        conv.turns[:offset], cfg, conversation_id=conv.id, position=offset
                    )
                    examples.append(LabeledExample(context=context, class_id=class_id))
            offset += len(block)
    return examples


@lru_cache(maxsize=1 << 20)
def _feature_index(token: str, bits: int) -> int:
    if token == PATIENT_MARKER:
        return 0
    if token == DOCTOR_MARKER:
        return 1
    digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
    x = int.from_bytes(digest, "big") | 1
    h = ((_HASH_MULTIPLIER * x) & _MASK64) >> (64 - bits)
    return 2 + h % ((1 << bits) - 2)  # slots 0 and 1 are reserved for markers


def _context_features(tokens: Sequence[str], bits: int) -> Counter:
    counts: Counter = Counter()
    for token in tokens:
        counts[_feature_index(token, bits)] += 1
    for first, second in zip(tokens, tokens[1:]):
        counts[_feature_index(first + _BIGRAM_SEP + second, bits)] += 1
    return counts


def vectorize_contexts(
    contexts: Sequence[Sequence[str]], bits: int
) -> sparse.csr_matrix:
    """Hashed unigram+bigram count rows, one per context."""
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for tokens in contexts:
        counts = _context_features(tokens, bits)
        for idx in sorted(counts):
            indices.append(idx)
            data.append(float(counts[idx]))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (data, indices, indptr), shape=(len(contexts), 1 << bits)
    )


# -- loss ----------------------------------------------------------------------


def smoothed_targets(class_id: int, n_classes: int, smoothing: float) -> np.ndarray:
    """One-hot target mixed toward the uniform distribution over classes."""
    if not 0 <= class_id < n_classes:
        raise ValueError(f"class_id {class_id} outside [0, {n_classes})")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must lie in [0, 1)")
    q = np.full(n_classes, smoothing / n_classes)
    q[class_id] += 1.0 - smoothing
    return q


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def smoothed_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray | sparse.csr_matrix,
    class_ids: np.ndarray,
    smoothing: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean smoothed cross entropy and its exact gradient in (weights, bias).

    loss = mean_b [ -sum_k q_k log softmax(W x_b + bias)_k ]  with q the
    smoothed target for the example's class.
    """
    values = features.data if sparse.issparse(features) else np.asarray(features)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite feature values")
    n_examples, n_classes = features.shape[0], weights.shape[0]
    logits = features @ weights.T + bias
    logp = _log_softmax(np.asarray(logits))
    targets = np.full((n_examples, n_classes), smoothing / n_classes)
    targets[np.arange(n_examples), class_ids] += 1.0 - smoothing
    loss = float(-(targets * logp).sum() / n_examples)
    delta = (np.exp(logp) - targets) / n_examples
    if sparse.issparse(features):
        grad_w = np.asarray((features.T @ delta).T)
    else:
        grad_w = delta.T @ features
    return loss, grad_w, delta.sum(axis=0)


def loss_and_grad(
    model: SoftmaxModel, batch: Sequence[LabeledExample]
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Loss and gradient of the model on a batch of labeled examples."""
    if not batch:
        raise ValueError("empty batch")
    features = vectorize_contexts([ex.context.tokens for ex in batch], model.config.feature_bits)
    class_ids = np.array([ex.class_id for ex in batch])
    loss, grad_w, grad_b = smoothed_loss_and_grad(
        model.weights, model.bias, features, class_ids, model.config.smoothing
    )
    return loss, (grad_w, grad_b)


# -- training -------------------------------------------------------------------


def split_examples(
    n_examples: int, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (train_idx, val_idx) split by a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(n_examples)
    n_val = int(n_examples * val_fraction)
    return perm[n_val:], perm[:n_val]


def train(
    examples: Sequence[LabeledExample],
    catalog: Sequence[ResponseClass],
    cfg: TrainingConfig,
) -> tuple[SoftmaxModel, list[dict]]:
    """Fit the classifier; returns the model and a per-epoch training curve.

    Deterministic given cfg.seed: fixed split, fixed shuffle order, zero
    initialization. The validation slice (cfg.val_fraction) is held out of
    every update and scored after each epoch.
    """
    if not examples:
        raise ValueError("no training examples")
    class_ids = np.array([ex.class_id for ex in examples])
    if len(set(class_ids.tolist())) < 2:
        raise ValueError("training data must contain at least 2 classes")
    n_classes = len(catalog)
    if class_ids.min() < 0 or class_ids.max() >= n_classes:
        raise ValueError("example class_id outside the catalog")

    features = vectorize_contexts([ex.context.tokens for ex in examples], cfg.feature_bits)
    train_idx, val_idx = split_examples(len(examples), cfg.val_fraction, cfg.seed)
    x_val, y_val = features[val_idx], class_ids[val_idx]

    weights = np.zeros((n_classes, cfg.n_features))
    bias = np.zeros(n_classes)
    rng = np.random.default_rng(cfg.seed + 1)
    curve: list[dict] = []
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            x_batch, y_batch = features[batch_idx], class_ids[batch_idx]
            # restrict the weight update to columns the batch actually touches
            cols = np.unique(x_batch.indices)
            logits = x_batch @ weights.T + bias
            logp = _log_softmax(np.asarray(logits))
            targets = np.full((len(batch_idx), n_classes), cfg.smoothing / n_classes)
            targets[np.arange(len(batch_idx)), y_batch] += 1.0 - cfg.smoothing
            total_loss += float(-(targets * logp).sum())
            delta = (np.exp(logp) - targets) / len(batch_idx)
            if cols.size:
                grad_cols = np.asarray((x_batch[:, cols].T @ delta).T)
                weights[:, cols] -= cfg.learning_rate * grad_cols
            bias -= cfg.learning_rate * delta.sum(axis=0)
        entry = {"epoch": epoch, "train_loss": total_loss / max(len(order), 1)}
        if len(val_idx):
            val_logits = np.asarray(x_val @ weights.T + bias)
            entry["val_accuracy"] = float((val_logits.argmax(axis=1) == y_val).mean())
        curve.append(entry)

    model = SoftmaxModel(
        weights=weights,
        bias=bias,
        config=cfg,
        catalog_hash=catalog_structural_hash(catalog),
        n_train_examples=len(examples),
    )
    return model, curve


def _check_catalog(model: SoftmaxModel, catalog: Sequence[ResponseClass] | None) -> None:
    if catalog is None:
        return
    actual = catalog_structural_hash(catalog)
    if actual != model.catalog_hash:
        raise ValueError(
            f"catalog structure hash {actual} does not match the model's {model.catalog_hash}; "
            "the catalog was restructured after training"
        )


def predict_proba(
    model: SoftmaxModel,
    turns: Sequence[Turn],
    catalog: Sequence[ResponseClass] | None = None,
) -> np.ndarray:
    """Class probabilities for the given conversational context."""
    _check_catalog(model, catalog)
    context = featurize_context(turns, model.config)
    features = vectorize_contexts([context.tokens], model.config.feature_bits)
    logits = np.asarray(features @ model.weights.T + model.bias)
    return np.exp(_log_softmax(logits))[0]


def evaluate_accuracy(model: SoftmaxModel, examples: Sequence[LabeledExample]) -> float:
    """Fraction of examples whose argmax prediction matches the label."""
    if not examples:
        return 0.0
    features = vectorize_contexts([ex.context.tokens for ex in examples], model.config.feature_bits)
    logits = np.asarray(features @ model.weights.T + model.bias)
    predicted = logits.argmax(axis=1)  # ties resolve to the lowest class id
    labels = np.array([ex.class_id for ex in examples])
    return float((predicted == labels).mean())


def history_ablation(
    convs: Sequence[Conversation],
    catalog: Sequence[ResponseClass],
    table: ResponseTable,
    cfg: TrainingConfig,
    turn_counts: Sequence[int],
) -> list[dict]:
    """Validation accuracy as a function of how many context turns are kept.

    One model per setting, identical seed and split throughout.
    """
    if not turn_counts:
        raise ValueError("turn_counts is empty")
    rows = []
    for n_turns in turn_counts:
        run_cfg = replace(cfg, max_turns=n_turns)
        examples = build_dataset(convs, catalog, table, run_cfg)
        _, val_idx = split_examples(len(examples), cfg.val_fraction, cfg.seed)
        model, _ = train(examples, catalog, run_cfg)
        val_examples = [examples[i] for i in val_idx]
        rows.append(
            {
                "max_turns": n_turns,
                "val_accuracy": evaluate_accuracy(model, val_examples),
                "n_examples": len(examples),
            }
        )
    return rows


# -- persistence ----------------------------------------------------------------


def model_document(model: SoftmaxModel) -> dict:
    nonzero_cols = np.flatnonzero((model.weights != 0.0).any(axis=0))
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {**asdict(model.config), "placeholders": list(model.config.placeholders)},
        "feature_space": {"bits": model.config.feature_bits, "scheme": "blake2b-multiply-shift"},
        "catalog_hash": model.catalog_hash,
        "n_classes": model.n_classes,
        "n_train_examples": model.n_train_examples,
        "bias": model.bias.tolist(),
        "weights": {
            "columns": nonzero_cols.tolist(),
            "values": model.weights[:, nonzero_cols].tolist(),
        },
    }


def write_model(model: SoftmaxModel, path: str | Path, config_hash: str | None = None) -> None:
    doc = model_document(model)
    if config_hash is not None:
        doc["config_hash"] = config_hash
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def read_model(path: str | Path) -> SoftmaxModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    cfg_fields = dict(doc["config"])
    cfg_fields["placeholders"] = tuple(cfg_fields.get("placeholders", ()))
    cfg = TrainingConfig(**cfg_fields)
    weights = np.zeros((doc["n_classes"], cfg.n_features))
    cols = np.array(doc["weights"]["columns"], dtype=int)
    if cols.size:
        weights[:, cols] = np.array(doc["weights"]["values"])
    return SoftmaxModel(
        weights=weights,
        bias=np.array(doc["bias"]),
        config=cfg,
        catalog_hash=doc["catalog_hash"],
        n_train_examples=doc.get("n_train_examples", 0),
    )
