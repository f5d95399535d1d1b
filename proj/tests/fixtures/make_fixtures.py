#!/usr/bin/env python3
"""Regenerates the deterministic test fixtures in this directory."""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent


def span_of(text: str, surface: str) -> list[int]:
    start = text.index(surface)
    return [start, start + len(surface)]


def make_corpus() -> None:
    rows = []

    def add(iid, lang, text, mwe_type, surface, spans=None, source="fixture"):
        spans = spans if spans is not None else [span_of(text, surface)]
        for s, e in spans:
            assert 0 <= s < e <= len(text), (iid, s, e)
        rows.append(
            {
                "id": iid,
                "language": lang,
                "text": text,
                "mwe_type": mwe_type,
                "spans": spans,
                "surface": surface,
                "source": source,
            }
        )

    add("en-001", "en", "They covered the whole field from A to Z in eight classes.",
        "idiom", "from A to Z")
    add("en-002", "en", "He decided to spill the beans about the surprise party.",
        "idiom", "spill the beans")
    add("en-003", "en", "She was ready to throw in the towel after the third defeat.",
        "idiom", "throw in the towel")
    add("en-004", "en", "The new intern broke the ice with a terrible pun.",
        "idiom", "broke the ice")
    add("en-005", "en", "Finishing the report tonight is a piece of cake for her.",
        "idiom", "piece of cake")
    add("en-006", "en", "His comment about the budget hit the nail on the head.",
        "idiom", "hit the nail on the head")
    add("en-007", "en", "Once in a blue moon the old clock chimes thirteen times.",
        "idiom", "Once in a blue moon")
    add("en-008", "en", "The deal fell through at the eleventh hour without warning.",
        "idiom", "at the eleventh hour")
    add("en-009", "en", "Keep an eye on the soup while I answer the door.",
        "idiom", "Keep an eye on")
    add("en-010", "en", "They buried the hatchet after years of petty feuding.",
        "idiom", "buried the hatchet")
    add("en-011", "en", "Her argument was on point during the long review.",
        "idiom", "on point")
    # Discontiguous annotation: both pieces of the frame belong to one unit.
    text = "He gave it all up at once and left the noisy meeting."
    add("en-012", "en", text, "idiom", "all at once",
        spans=[span_of(text, "all"), span_of(text, "at once")])

    add("en-101", "en", "She was kind, but all the same she terrified me.",
        "msu", "all the same")
    add("en-102", "en", "The trip was cancelled at the last minute by and large for cost reasons.",
        "msu", "by and large")
    add("en-103", "en", "He shows up every now and then to water the plants.",
        "msu", "every now and then")
    add("en-104", "en", "In spite of the rain the match continued until dusk.",
        "msu", "In spite of")
    add("en-105", "en", "As of today the old tickets are no longer valid.",
        "msu", "As of")
    # Single short word: maps to one subword, so within-MWE analysis skips it.
    add("en-106", "en", "The committee will meet again soon to vote.",
        "msu", "soon")
    add("ru-001", "ru", "Я всё время думал о тебе, день и ночь.",
        "msu", "всё время")
    # A long sentence whose MWE lies beyond the toy max length (truncation skip).
    filler = "very " * 70
    text = filler + "far from it indeed."
    add("en-201", "en", text, "idiom", "far from it")

    with open(HERE / "corpus_20.jsonl", "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    assert len(rows) == 20


def make_bio() -> None:
    # Foreign-style BIO: type in the tag suffix, no text header.
    blocks = [
        (
            "bio-en-1",
            "en",
            [("They", "O"), ("covered", "O"), ("the", "O"), ("whole", "O"),
             ("field", "O"), ("from", "B-IDIOM"), ("A", "I-IDIOM"), ("to", "I-IDIOM"),
             ("Z", "I-IDIOM"), ("in", "O"), ("eight", "O"), ("classes", "O"), (".", "O")],
        ),
        (
            "bio-en-2",
            "en",
            [("She", "O"), ("kept", "O"), ("tabs", "O"), ("on", "O"), ("him", "O"),
             ("all", "B-MSU"), ("the", "I-MSU"), ("same", "I-MSU"), (".", "O")],
        ),
        (
            "bio-en-3",
            "en",
            [("He", "O"), ("will", "O"), ("spill", "B-IDIOM"), ("the", "I"),
             ("beans", "I"), ("eventually", "O"), (".", "O")],
        ),
    ]
    with open(HERE / "corpus_bio.bio", "w", encoding="utf-8") as f:
        for iid, lang, toks in blocks:
            f.write(f"# id = {iid}\n# language = {lang}\n")
            for tok, tag in toks:
                f.write(f"{tok}\t{tag}\n")
            f.write("\n")


def make_tsv() -> None:
    rows = [
        ("tsv-001", "She was kind, but all the same she terrified me.",
         "all the same", "mimo vsechno"),
        ("tsv-002", "He shows up every now and then to water the plants.",
         "every now and then", "tu a tam"),
        ("tsv-003", "In spite of the rain the match continued.",
         "in spite of", "navzdory"),  # case-insensitive match
        ("tsv-004", "He gave it all up at once and left.",
         "all at once", "najednou"),  # discontiguous word subsequence
        ("tsv-005", "By and large the plan worked.",
         "By and large", "celkem vzato"),
    ]
    with open(HERE / "corpus_msu.tsv", "w", encoding="utf-8") as f:
        f.write("# language = en\n# mwe_type = msu\n")
        for iid, sent, surf, tr in rows:
            f.write(f"{iid}\t{sent}\t{surf}\t{tr}\n")


DETS = ["the", "a", "this", "that", "every", "some"]
NOUNS = ["dog", "cat", "bird", "garden", "house", "tree", "river", "child",
         "teacher", "book", "song", "road", "city", "friend", "story", "window"]
VERBS = ["sees", "finds", "likes", "follows", "paints", "reads", "sings",
         "builds", "watches", "helps"]
ADJS = ["small", "big", "quiet", "bright", "old", "young", "green", "happy"]
ADVS = ["quickly", "slowly", "often", "never", "gladly"]
ADPS = ["in", "on", "near", "under", "behind"]


def make_conllu(n_sentences: int = 130) -> None:
    rng = random.Random(42)
    templates = [
        # (pos sequence, deprel sequence)
        (["DET", "ADJ", "NOUN", "VERB", "DET", "NOUN", "PUNCT"],
         ["det", "amod", "nsubj", "root", "det", "obj", "punct"]),
        (["DET", "NOUN", "VERB", "ADV", "PUNCT"],
         ["det", "nsubj", "root", "advmod", "punct"]),
        (["DET", "NOUN", "VERB", "DET", "NOUN", "ADP", "DET", "NOUN", "PUNCT"],
         ["det", "nsubj", "root", "det", "obj", "case", "det", "obl", "punct"]),
        (["ADV", "DET", "NOUN", "VERB", "PUNCT"],
         ["advmod", "det", "nsubj", "root", "punct"]),
        (["DET", "NOUN", "VERB", "DET", "ADJ", "NOUN", "PUNCT"],
         ["det", "nsubj", "root", "det", "amod", "obj", "punct"]),
    ]
    lex = {"DET": DETS, "NOUN": NOUNS, "VERB": VERBS, "ADJ": ADJS,
           "ADV": ADVS, "ADP": ADPS, "PUNCT": ["."]}
    with open(HERE / "ud_fixture.conllu", "w", encoding="utf-8") as f:
        for s in range(n_sentences):
            pos_seq, dep_seq = templates[rng.randrange(len(templates))]
            words = [rng.choice(lex[p]) for p in pos_seq]
            f.write(f"# sent_id = fx-{s + 1}\n")
            f.write(f"# text = {' '.join(words)}\n")
            for i, (w, p, d) in enumerate(zip(words, pos_seq, dep_seq), start=1):
                head = 0 if d == "root" else pos_seq.index("VERB") + 1
                f.write(f"{i}\t{w}\t{w}\t{p}\t_\t_\t{head}\t{d}\t_\t_\n")
            f.write("\n")


PEOPLE = ["Anna", "Boris", "Clara", "David", "Elena", "Felix", "Greta", "Henry"]
SURNAMES = ["Keller", "Novak", "Marsh", "Petrov"]
ORGS = ["Acme", "Globex", "Initech", "Umbrella"]
LOCS = ["Berlin", "Paris", "Madrid", "Vienna", "Lisbon"]


def make_ner(n_sentences: int = 70) -> None:
    rng = random.Random(7)
    with open(HERE / "ner_fixture.tsv", "w", encoding="utf-8") as f:
        for _ in range(n_sentences):
            tokens: list[tuple[str, str]] = []
            person = rng.choice(PEOPLE)
            tokens.append((person, "B-PER"))
            if rng.random() < 0.4:
                tokens.append((rng.choice(SURNAMES), "I-PER"))
            tokens += [("works", "O"), ("at", "O"), (rng.choice(ORGS), "B-ORG")]
            if rng.random() < 0.3:
                tokens.append(("Labs", "I-ORG"))
            tokens += [("in", "O"), (rng.choice(LOCS), "B-LOC"), (".", "O")]
            for tok, tag in tokens:
                f.write(f"{tok}\t{tag}\n")
            f.write("\n")


def make_topic(n_per_label: int = 6) -> None:
    rng = random.Random(11)
    topics = {
        "science": ["the lab measured the new signal", "the theory predicts two results",
                    "the telescope found a faint star", "the enzyme breaks the bond",
                    "the data support the model", "the experiment ran for two weeks"],
        "sports": ["the team won the match yesterday", "the runner broke the record",
                   "the coach changed the lineup", "the keeper saved the penalty",
                   "the season ends next month", "the club signed a new striker"],
        "travel": ["the train to the coast leaves early", "the old town has narrow streets",
                   "the ferry crosses the bay twice", "the trail climbs past the lake",
                   "the hostel is near the station", "the market opens at dawn"],
        "food": ["the soup needs more basil", "the bakery sells dark rye bread",
                 "the stew simmers for an hour", "the cheese pairs well with pears",
                 "the recipe calls for lemon zest", "the cafe roasts its own beans"],
    }
    lines = []
    for label, sents in topics.items():
        for i in range(n_per_label):
            lines.append((sents[i % len(sents)], label))
    rng.shuffle(lines)
    with open(HERE / "topic_fixture.tsv", "w", encoding="utf-8") as f:
        for text, label in lines:
            f.write(f"{text}\t{label}\n")


if __name__ == "__main__":
    make_corpus()
    make_bio()
    make_tsv()
    make_conllu()
    make_ner()
    make_topic()
    print("fixtures written to", HERE)
