"""Synthetic corpus generator for experiments and the test suite.

Builds a family of disjoint table gadgets over a shared predicate
vocabulary. Each table has a subject entity connected to its column-1
entities by a topic predicate and per-row links to column 2; the one chain
using both topic predicates retrieves every connected row, while noise
predicates (drawn from a vocabulary that never appears in query text)
cover only the first two rows. The topic token appears in the query
intent string, the subject entity types and the positive chain, which
makes the corpus separable for every learning component.
"""

from __future__ import annotations

import json
import random
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .text import tokenize

TOPICS = ("music", "film", "sport", "game", "craft", "dance", "opera", "chess")
NOISE_WORDS = ("junkrel", "miscrel", "trivia", "sundry", "oddment", "clutter")


@dataclass(frozen=True)
class SynthPaths:
    root: str
    graph: str
    entity_meta: str
    predicate_meta: str
    corpus: str
    url2mid: str
    mid2types: str
    fget: str
    embeddings: str


def _url(mid: str) -> str:
    return f"https://wiki.test/{mid}"


def _embedding_for(token: str, dim: int) -> np.ndarray:
    rng = np.random.default_rng(zlib.crc32(token.encode("utf-8")))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def make_corpus(
    out_dir: str,
    n_tables: int = 100,
    seed: int = 7,
    embedding_dim: int = 16,
) -> SynthPaths:
    """Write graph, linking files, metadata, corpus and embeddings under ``out_dir``."""
    rng = random.Random(seed)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    triples: list[tuple[str, str, str]] = []
    url2mid: list[tuple[str, str]] = []
    mid2types: list[tuple[str, str]] = []
    fget: dict[str, str] = {}
    entity_meta: list[dict] = []
    predicate_tgt: dict[str, list[str]] = {}
    corpus_records: list[dict] = []

    def add_entity(mid, name, description, notable, rdf):
        entity_meta.append(
            {
                "mid": mid,
                "name": name,
                "description": description,
                "notable_types": notable,
                "rdf_types": rdf,
            }
        )

    for i in range(n_tables):
        topic = TOPICS[i % len(TOPICS)]
        n_rows = rng.randint(3, 6)
        n_noise_p1 = rng.randint(1, 2)
        n_noise_p2 = rng.randint(0, 2)
        has_junk = rng.random() < 0.35
        has_disconnected = rng.random() < 0.3

        se = f"m.t{i:03d}se"
        se_name = f"Troupe {i}"
        pos_p1 = f"{topic}.group.member"
        pos_p2 = f"{topic}.member.partner"
        predicate_tgt[pos_p1] = [f"{topic}.member"]
        predicate_tgt[pos_p2] = [f"{topic}.partner"]

        add_entity(
            se, se_name, f"{topic} troupe number {i}",
            [f"{topic}.organization"], [f"{topic}.organization", "common.topic"],
        )
        mid2types.append((se, f"{topic}.organization"))
        mid2types.append((se, "common.topic"))
        fget[f"{topic}.organization"] = f"f.{topic}_group"

        rows = []
        for j in range(n_rows):
            a = f"m.t{i:03d}a{j}"
            b = f"m.t{i:03d}b{j}"
            triples.append((se, pos_p1, a))
            triples.append((a, pos_p2, b))
            url2mid.append((_url(a), a))
            url2mid.append((_url(b), b))
            add_entity(
                a, f"Performer {i} {j}", f"{topic} performer of troupe {i}",
                [f"{topic}.member"], [f"{topic}.member", "common.topic"],
            )
            add_entity(
                b, f"Partner {i} {j}", f"{topic} partner seen with troupe {i}",
                [f"{topic}.partner"], [f"{topic}.partner", "common.topic"],
            )
            rows.append(
                [
                    {"text": f"Performer {i} {j}", "url": _url(a)},
                    {"text": f"Partner {i} {j}", "url": _url(b)},
                ]
            )

        for m in range(n_noise_p1):
            word = NOISE_WORDS[rng.randrange(len(NOISE_WORDS))]
            pred = f"{word}.group.member"
            predicate_tgt.setdefault(pred, [f"{word}.thing"])
            triples.append((se, pred, f"m.t{i:03d}a0"))
            triples.append((se, pred, f"m.t{i:03d}a1"))
        for m in range(n_noise_p2):
            word = NOISE_WORDS[rng.randrange(len(NOISE_WORDS))]
            pred = f"{word}.member.partner"
            predicate_tgt.setdefault(pred, [f"{word}.thing"])
            triples.append((f"m.t{i:03d}a0", pred, f"m.t{i:03d}b0"))
            triples.append((f"m.t{i:03d}a1", pred, f"m.t{i:03d}b1"))

        if has_junk:
            c = f"m.t{i:03d}c0"
            triples.append((f"m.t{i:03d}a0", pos_p2, c))
            add_entity(c, f"Widget {i}", "placeholder junk record", ["junk.widget"], ["junk.widget"])

        if has_disconnected:
            # A ground-truth row whose entities exist in the graph but are not
            # reachable through any table chain (knowledge-base incompleteness).
            ax = f"m.t{i:03d}ax"
            bx = f"m.t{i:03d}bx"
            triples.append((ax, "extra.link.rel", bx))
            url2mid.append((_url(ax), ax))
            url2mid.append((_url(bx), bx))
            add_entity(ax, f"Performer {i} x", f"{topic} performer of troupe {i}",
                       [f"{topic}.member"], [f"{topic}.member"])
            add_entity(bx, f"Partner {i} x", f"{topic} partner seen with troupe {i}",
                       [f"{topic}.partner"], [f"{topic}.partner"])
            rows.append(
                [
                    {"text": f"Performer {i} x", "url": _url(ax)},
                    {"text": f"Partner {i} x", "url": _url(bx)},
                ]
            )

        # One unlinkable row exercises the row-dropping path.
        rows.append([{"text": "plain text"}, {"text": "no hyperlink"}])

        corpus_records.append(
            {
                "table_id": f"t{i:03d}",
                "page_title": f"{se_name} roster",
                "caption": f"notable {topic} partners season {i % 9 + 1}",
                "headers": ["Members", "Partners"],
                "rows": rows,
                "se_mid": se,
            }
        )

    paths = SynthPaths(
        root=str(root),
        graph=str(root / "graph.tsv"),
        entity_meta=str(root / "entity_meta.jsonl"),
        predicate_meta=str(root / "predicate_meta.jsonl"),
        corpus=str(root / "corpus.jsonl"),
        url2mid=str(root / "url2mid.tsv"),
        mid2types=str(root / "mid2types.tsv"),
        fget=str(root / "fget.tsv"),
        embeddings=str(root / "embeddings.txt"),
    )

    with open(paths.graph, "w", encoding="utf-8") as fh:
        for s, p, o in triples:
            fh.write(f"{s}\t{p}\t{o}\n")
    with open(paths.entity_meta, "w", encoding="utf-8") as fh:
        for rec in entity_meta:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths.predicate_meta, "w", encoding="utf-8") as fh:
        for name in sorted(predicate_tgt):
            fh.write(
                json.dumps(
                    {"name": name, "expected_target_types": predicate_tgt[name]},
                    sort_keys=True,
                )
                + "\n"
            )
    with open(paths.corpus, "w", encoding="utf-8") as fh:
        for rec in corpus_records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths.url2mid, "w", encoding="utf-8") as fh:
        for url, mid in sorted(set(url2mid)):
            fh.write(f"{url}\t{mid}\n")
    with open(paths.mid2types, "w", encoding="utf-8") as fh:
        for mid, typ in sorted(set(mid2types)):
            fh.write(f"{mid}\t{typ}\n")
    with open(paths.fget, "w", encoding="utf-8") as fh:
        for typ in sorted(fget):
            fh.write(f"{typ}\t{fget[typ]}\n")

    # One vector per token that occurs anywhere in the generated text.
    tokens: set[str] = set()
    for rec in entity_meta:
        tokens.update(tokenize(rec["description"]))
        for t in rec["notable_types"] + rec["rdf_types"]:
            tokens.update(tokenize(t))
    for name in predicate_tgt:
        tokens.update(tokenize(name))
    for rec in corpus_records:
        tokens.update(tokenize(rec["page_title"]))
        tokens.update(tokenize(rec["caption"]))
    tokens.add("numtkn")
    with open(paths.embeddings, "w", encoding="utf-8") as fh:
        for token in sorted(tokens):
            vec = _embedding_for(token, embedding_dim)
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")

    return paths
