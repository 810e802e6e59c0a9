"""Seeded synthetic dialogue corpus with planted response classes.

Twelve reply groups are planted as paraphrase sets: each class shares a long
token stem with one varying slot, so lexical encoders place paraphrases close
together while distinct classes stay apart. Patient prompts carry
class-specific trigger tokens, giving the classifier a learnable signal. The
generator is fully deterministic for a given seed; the test suite and the
bundled demo corpus both rely on that.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classes import MergeAction, MergeSession
from .corpus import DOCTOR, PATIENT, Conversation, Turn, normalize_text


@dataclass(frozen=True)
class PlantedClass:
    name: str
    stem: str
    slots: tuple[str, ...]
    prompts: tuple[str, ...]

    @property
    def paraphrases(self) -> tuple[str, ...]:
        return tuple(f"{self.stem} {slot}" for slot in self.slots)


PLANTED_CLASSES: tuple[PlantedClass, ...] = (
    PlantedClass(
        name="Greet + Pain Scale Question",
        stem="Hello, can you rate your pain from one to ten",
        slots=("right now?", "at this moment?", "for me please?", "on the scale?"),
        prompts=(
            "my back hurts so much",
            "the pain in my shoulder is awful",
            "everything hurts since yesterday",
        ),
    ),
    PlantedClass(
        name="Advise Rest and Fluids",
        stem="Please rest well and drink plenty of",
        slots=("water today.", "fluids today.", "water tonight.", "fluids tonight."),
        prompts=(
            "i feel so tired and exhausted",
            "i am drained and fatigued lately",
            "no energy at all these days",
        ),
    ),
    PlantedClass(
        name="Ask Symptom Duration",
        stem="How long have you had these symptoms,",
        slots=("roughly?", "approximately?", "would you say?", "more or less?"),
        prompts=(
            "i have a strange rash on my arm",
            "there is a rash spreading on my leg",
            "an itchy rash appeared on my skin",
        ),
    ),
    PlantedClass(
        name="Recommend Paracetamol",
        stem="You can take paracetamol five hundred milligrams every six",
        slots=("hours as needed.", "hours if needed.", "hours when needed.", "hours with food."),
        prompts=(
            "my head is pounding with a headache",
            "this migraine headache will not stop",
            "i have a splitting headache today",
        ),
    ),
    PlantedClass(
        name="Order Fever Check",
        stem="Please measure your temperature and tell me the",
        slots=("reading now.", "reading today.", "exact reading.", "reading please."),
        prompts=(
            "i feel feverish and hot",
            "i think i have a fever and chills",
            "burning up with fever since morning",
        ),
    ),
    PlantedClass(
        name="Reassure and Monitor",
        stem="This usually settles on its own, keep monitoring it",
        slots=("for two days.", "for a few days.", "over two days.", "closely for days."),
        prompts=(
            "is this something serious doctor",
            "should i be worried about this",
            "i am scared this could be serious",
        ),
    ),
    PlantedClass(
        name="Ask About Allergies",
        stem="Do you have any known allergies to",
        slots=("medication?", "medicines?", "any medication?", "any medicines?"),
        prompts=(
            "i sneeze whenever spring comes around",
            "my nose runs and eyes itch constantly",
            "sneezing fits every single morning",
        ),
    ),
    PlantedClass(
        name="Advise Warm Salt Gargle",
        stem="Gargle with warm salt water three times a",
        slots=("day please.", "day gently.", "day regularly.", "day at home."),
        prompts=(
            "my throat is sore and scratchy",
            "it hurts to swallow anything",
            "a sore throat started last night",
        ),
    ),
    PlantedClass(
        name="Refer to Emergency",
        stem="Please go to the nearest emergency department",
        slots=("immediately.", "right away.", "straight away.", "as soon as possible."),
        prompts=(
            "there is sharp chest tightness spreading",
            "crushing chest discomfort and sweating",
            "sudden chest squeezing and dizziness",
        ),
    ),
    PlantedClass(
        name="Request Photo",
        stem="Could you send a clear photo of the affected",
        slots=("area please?", "area today?", "spot please?", "region please?"),
        prompts=(
            "a weird bump appeared on my wrist",
            "this swollen lump near my ankle worries me",
            "a strange growth formed on my elbow",
        ),
    ),
    PlantedClass(
        name="Advise Bland Diet",
        stem="Stick to a bland diet and avoid spicy food",
        slots=("for now.", "this week.", "until better.", "for days."),
        prompts=(
            "my stomach is upset and nauseous",
            "vomiting and queasy since dinner",
            "constant nausea after every meal",
        ),
    ),
    PlantedClass(
        name="Close + Take Care",
        stem="You are welcome, take care and get well",
        slots=("soon!", "soon, goodbye!", "very soon!", "soon, bye!"),
        prompts=(
            "thank you so much for the help",
            "thanks a lot that was helpful",
            "many thanks you have been great",
        ),
    ),
)

GREETING_REPLY = "Hello! How can I help you today?"
GREETING_PROMPTS = ("hi doctor", "hello doctor", "good morning doctor")

_SEED_SALT = 0xD1A106


def truth_by_normalized(placeholders: tuple[str, ...] = ()) -> dict[str, str]:
    """Normalized paraphrase text -> planted class name."""
    mapping = {}
    for cls in PLANTED_CLASSES:
        for paraphrase in cls.paraphrases:
            mapping[normalize_text(paraphrase, placeholders)] = cls.name
    return mapping


def generate_conversations(n_conversations: int = 200, seed: int = 7) -> list[Conversation]:
    """Deterministic corpus where every doctor reply answers the latest prompt."""
    rng = np.random.default_rng(_SEED_SALT ^ seed)
    paraphrase_cursor = [0] * len(PLANTED_CLASSES)
    conversations = []
    for conv_index in range(n_conversations):
        turns: list[Turn] = []
        if rng.random() < 0.5:
            turns.append(Turn(PATIENT, str(rng.choice(GREETING_PROMPTS))))
            turns.append(Turn(DOCTOR, GREETING_REPLY))
        n_rounds = int(rng.integers(2, 5))
        for _ in range(n_rounds):
            class_index = int(rng.integers(len(PLANTED_CLASSES)))
            planted = PLANTED_CLASSES[class_index]
            prompt = str(rng.choice(planted.prompts))
            if rng.random() < 0.25:
                # split the prompt across two consecutive patient messages
                words = prompt.split()
                half = len(words) // 2
                turns.append(Turn(PATIENT, " ".join(words[:half])))
                turns.append(Turn(PATIENT, " ".join(words[half:])))
            else:
                turns.append(Turn(PATIENT, prompt))
            reply = planted.paraphrases[paraphrase_cursor[class_index] % len(planted.paraphrases)]
            paraphrase_cursor[class_index] += 1
            turns.append(Turn(DOCTOR, reply))
        if rng.random() < 0.15:
            # a one-off closing note; occurs once, so the response filter drops it
            turns.append(Turn(PATIENT, "okay understood"))
            turns.append(Turn(DOCTOR, f"Noted in your file, reference {conv_index}."))
        conversations.append(Conversation(id=f"conv-{conv_index:04d}", turns=tuple(turns)))
    return conversations


def write_corpus(conversations: list[Conversation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for conv in conversations:
            record = {
                "id": conv.id,
                "turns": [{"speaker": t.speaker, "text": t.text} for t in conv.turns],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def vocabulary() -> list[str]:
    """Every normalized token the generator can emit."""
    tokens: set[str] = set()
    texts = [GREETING_REPLY, *GREETING_PROMPTS, "okay understood", "noted in your file reference"]
    for cls in PLANTED_CLASSES:
        texts.extend(cls.paraphrases)
        texts.extend(cls.prompts)
    for text in texts:
        tokens.update(normalize_text(text).split())
    return sorted(tokens)


def write_word_vectors(path: str | Path, dim: int = 16, seed: int = 11) -> None:
    """Per-token deterministic random unit vectors covering the synthetic vocabulary."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocabulary():
            digest = hashlib.blake2b(token.encode(), digest_size=4).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big") ^ seed)
            vec = rng.standard_normal(dim)
            vec /= np.linalg.norm(vec)
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def scripted_merge(session: MergeSession, actor: str = "script") -> dict[str, int]:
    """Drive the merge session from planted ground truth: deterministic labeling.

    Centroids whose text is a planted paraphrase are assigned to (or create)
    their true class; everything else is skipped. Returns name -> class id.
    """
    truth = truth_by_normalized()
    created: dict[str, int] = {}
    while True:
        item = session.next_centroid()
        if item is None:
            return created
        cluster_id, centroid_text, _count, _classes = item
        name = truth.get(centroid_text)
        if name is None:
            session.apply_action(MergeAction(kind="skip", cluster_id=cluster_id, actor=actor))
        elif name in created:
            session.apply_action(
                MergeAction(kind="assign", cluster_id=cluster_id, class_id=created[name], actor=actor)
            )
        else:
            session.apply_action(MergeAction(kind="create", cluster_id=cluster_id, name=name, actor=actor))
            created[name] = session.classes[-1].id
