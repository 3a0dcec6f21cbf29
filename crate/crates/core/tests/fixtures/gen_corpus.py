"""Regenerates the bundled two-class corpus: parsed documents, word vectors
and manifests. Output is deterministic; rerun after editing the word lists.

    python3 gen_corpus.py
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
DIM = 8
DOCS = 40
TEST_PER_CLASS = 5

TOPICS = [
    ["match", "goal", "team", "coach", "league", "player", "season", "score", "striker", "keeper"],
    ["market", "stock", "price", "bank", "trade", "profit", "share", "rate", "investor", "bond"],
]
SHARED = ["the", "a", "of", "and", "in", "said", "was", "new", "on", "after"]
# Words left out of the vector file so the out-of-vocabulary path is exercised.
RARE = ["zorbix", "quellen", "ambrit", "vostal", "pemmic", "tarnel"]


def vectors(rng):
    out = {}
    for label, words in enumerate(TOPICS):
        sign = 1.0 if label == 0 else -1.0
        for w in words:
            out[w] = [sign * 0.6 + rng.gauss(0, 0.25) if k < 4 else rng.gauss(0, 0.25) for k in range(DIM)]
    for w in SHARED:
        out[w] = [rng.gauss(0, 0.25) for _ in range(DIM)]
    return out


def sentence(rng, label):
    length = rng.randint(5, 8)
    words = []
    for _ in range(length):
        r = rng.random()
        if r < 0.45:
            words.append(rng.choice(TOPICS[label]))
        elif r < 0.55:
            words.append(rng.choice(TOPICS[1 - label]))
        elif r < 0.92:
            words.append(rng.choice(SHARED))
        else:
            words.append(rng.choice(RARE))
    return words


def document(rng, doc_id, label):
    tokens, deps, roots = [], [], []
    for s in range(rng.randint(2, 3)):
        words = sentence(rng, label)
        start = len(tokens)
        ids = list(range(start, start + len(words)))
        tokens += [{"id": i, "text": w, "sentence": s} for i, w in zip(ids, words)]
        root = rng.choice(ids)
        roots.append(root)
        attached = [root]
        for i in ids:
            if i == root:
                continue
            head = rng.choice(attached)
            deps.append({"head": head, "dependent": i, "relation": "dep"})
            attached.append(i)
    return {"doc_id": doc_id, "label": label, "tokens": tokens, "dependencies": deps, "sentence_roots": roots}


def main():
    rng = random.Random(20240611)
    parsed = HERE / "parsed"
    parsed.mkdir(exist_ok=True)
    lines = []
    for k in range(DOCS):
        label = k % 2
        doc_id = f"doc{k:02d}"
        doc = document(rng, doc_id, label)
        (parsed / f"{doc_id}.json").write_text(json.dumps(doc) + "\n")
        split = "test" if k >= DOCS - 2 * TEST_PER_CLASS else "train"
        lines.append(json.dumps({"doc_id": doc_id, "split": split, "path": f"parsed/{doc_id}.json"}))
    (HERE / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    (HERE / "manifest3.jsonl").write_text("\n".join(lines[:3]) + "\n")

    with open(HERE / "embeddings.txt", "w") as f:
        for w, v in vectors(rng).items():
            f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")


if __name__ == "__main__":
    main()
