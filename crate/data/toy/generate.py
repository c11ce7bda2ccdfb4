#!/usr/bin/env python3
"""Regenerates the toy bundle: stimuli, cloze responses, reading times,
a bigram token model, static token embeddings and a frequency table.

Output is deterministic; run from any directory:

    python3 data/toy/generate.py
"""

import csv
import json
import math
import random
import struct
from pathlib import Path

OUT = Path(__file__).resolve().parent
SEED = 20240611

ITEMS = [
    ("i01", [
        "the cat sat on the soft mat near the old windows",
        "the dog slept on the carpet by the door",
        "the cats and dogs sat on the sofa",
    ]),
    ("i02", [
        "she made tea and he drank coffee in the garden",
        "they sat on the couch and read a book at night",
        "he read his book on the sofa near the windows",
    ]),
    ("i03", [
        "the wind opened the door of the old house",
        "the rain fell on the roof and the road at night",
        "the children played in the old park after school",
    ]),
    ("i04", [
        "she walked to school with her dog in the rain",
        "the old car was at the end of the road",
        "they walked to the park and played with the cats",
    ]),
]

WORD_TOKENS = """the a cat dog sat on mat by old wind car door near sofa couch she he
they made tea in morning drank coffee house rain fell roof of and read book park
walk play to with at night open soft slept garden children after school road end
his her was""".split()
PIECES = ["pet", "ow", "s", "ing", "ed"]
VOCAB = ["<|endoftext|>", ".", ","] + PIECES + [" " + w for w in WORD_TOKENS]

# Alternatives offered in the cloze task besides the target.
ALTERNATIVES = """the a cat dog sat mat old car door sofa couch tea coffee house rain
roof book park garden school road night morning children cats dogs carpet
windows walked played""".split()

FREQ = {
    "the": 5.0e7, "a": 2.2e7, "and": 2.6e7, "of": 2.9e7, "to": 2.4e7, "in": 1.8e7,
    "on": 6.5e6, "he": 8.0e6, "she": 3.1e6, "they": 4.0e6, "his": 4.3e6,
    "her": 3.5e6, "with": 6.8e6, "at": 4.6e6, "by": 4.9e6, "was": 9.2e6,
    "after": 9.0e5, "old": 4.6e5, "near": 1.3e5, "night": 2.7e5, "end": 3.0e5,
    "made": 6.3e5, "read": 1.7e5, "school": 3.3e5, "house": 3.9e5, "door": 1.7e5,
    "open": 1.5e5, "opened": 4.1e4, "road": 1.1e5, "children": 3.1e5,
    "morning": 1.3e5, "book": 2.1e5, "car": 1.5e5, "park": 8.2e4, "walk": 7.0e4,
    "walked": 5.8e4, "play": 1.4e5, "played": 6.1e4, "dog": 6.3e4, "dogs": 3.3e4,
    "cat": 3.1e4, "cats": 1.2e4, "rain": 3.0e4, "sat": 8.1e4, "fell": 6.5e4,
    "garden": 4.8e4, "tea": 3.2e4, "coffee": 3.6e4, "roof": 2.0e4, "soft": 3.1e4,
    "wind": 3.0e4, "windows": 3.2e4, "slept": 1.2e4, "drank": 1.1e4, "mat": 4.5e3,
    "sofa": 7.6e3, "couch": 6.4e3, "carpet": 7.9e3,
}

N_SUBJECTS = 8
RESPONSES_PER_CONTEXT = 20
EMBED_DIM = 8


def tokenize(word, index):
    text = " " + word
    longest = max(len(t) for t in VOCAB)
    out, pos = [], 0
    while pos < len(text):
        for n in range(min(longest, len(text) - pos), 0, -1):
            piece = text[pos:pos + n]
            if piece in index:
                out.append(index[piece])
                pos += n
                break
        else:
            raise ValueError(f"cannot tokenize {word!r}")
    return out


def write_stimuli(path):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["item_id", "sentence_id", "word_index", "word_text", "line_id"])
        for item, sentences in ITEMS:
            for s, text in enumerate(sentences, start=1):
                for i, word in enumerate(text.split()):
                    w.writerow([item, s, i, word, f"{item}-{s}"])


def contexts():
    for item, sentences in ITEMS:
        for s, text in enumerate(sentences, start=1):
            for i, word in enumerate(text.split()):
                yield item, str(s), i, word


def bigram_table(index):
    v = len(VOCAB)
    eot, stop = index["<|endoftext|>"], index["."]
    counts = {}
    unigram = [0.0] * v
    for _, sentences in ITEMS:
        for text in sentences:
            seq = [eot] + [t for w in text.split() for t in tokenize(w, index)] + [stop]
            for a, b in zip(seq, seq[1:]):
                counts.setdefault(a, [0.0] * v)[b] += 1.0
                unigram[b] += 1.0
    alpha = 0.05

    def smooth(row):
        total = sum(row) + alpha * v
        return [(c + alpha) / total for c in row]

    rows = [{"context": [], "probs": smooth(unigram)}]
    for a in sorted(counts):
        rows.append({"context": [a], "probs": smooth(counts[a])})
    return {"vocab": VOCAB, "segmentation": {}, "order": 2, "rows": rows}


def write_cloze(path, rng):
    predictability = {}
    with path.open("w") as f:
        for item, sentence, i, word in contexts():
            p = rng.betavariate(0.8, 1.6)
            alts = rng.sample([a for a in ALTERNATIVES if a != word], 3)
            responses = []
            for _ in range(RESPONSES_PER_CONTEXT):
                u = rng.random()
                if u < p:
                    r = word
                elif u < p + (1 - p) * 0.8:
                    r = rng.choice(alts)
                else:
                    r = rng.choice(ALTERNATIVES)
                if rng.random() < 0.1:
                    r = r.capitalize()
                responses.append(r)
            hits = sum(r.lower() == word for r in responses)
            predictability[(item, sentence, i)] = (hits, len(responses))
            record = {"item_id": item, "sentence_id": sentence, "word_index": i, "responses": responses}
            f.write(json.dumps(record) + "\n")
    return predictability


def write_rt(path, small_path, rng, predictability):
    rows = []
    offsets = [rng.gauss(0.0, 30.0) for _ in range(N_SUBJECTS)]
    for s in range(N_SUBJECTS):
        subject = f"s{s + 1:02d}"
        for item, sentence, i, word in contexts():
            hits, n = predictability[(item, sentence, i)]
            surprisal = -math.log2((hits + 1) / (n + 200))
            load = 4.0 * len(word) + 2.0 * surprisal ** 2
            spr = 260.0 + offsets[s] + load + rng.gauss(0.0, 35.0)
            if rng.random() < 0.01:
                spr += 3200.0
            correct = 0 if rng.random() < 0.03 else 1
            rows.append([subject, item, sentence, i, "SPR", f"{max(spr, 80.0):.1f}", "", correct])
            fixated = 1 if rng.random() < 0.7 else 0
            fp = 150.0 + 0.6 * offsets[s] + 0.7 * load + rng.gauss(0.0, 25.0)
            gp = fp + abs(rng.gauss(0.0, 40.0)) + 0.5 * load
            rows.append([subject, item, sentence, i, "FP", f"{max(fp, 60.0):.1f}", fixated, ""])
            rows.append([subject, item, sentence, i, "GP", f"{max(gp, 60.0):.1f}", fixated, ""])
    header = ["subject_id", "item_id", "sentence_id", "word_index", "measure", "rt_ms", "prev_fixated", "correct"]
    for target, selected in ((path, rows), (small_path, [r for r in rows if r[4] == "SPR"][:40])):
        with target.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(selected)


def write_embeddings(path, rng):
    vectors = {t: [rng.gauss(0.0, 1.0) for _ in range(EMBED_DIM)] for t in VOCAB}

    def near(src, dst, noise):
        vectors[dst] = [x + rng.gauss(0.0, noise) for x in vectors[src]]

    near(" sofa", " couch", 0.15)
    near(" cat", " dog", 0.6)
    near(" tea", " coffee", 0.5)
    near(" road", " park", 0.8)
    near(" she", " he", 0.3)
    header = {"magic": "PDEM", "version": 1, "dim_v": len(VOCAB), "dim_d": EMBED_DIM}
    with path.open("wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        for t in VOCAB:
            f.write(struct.pack(f"<{EMBED_DIM}f", *vectors[t]))


def write_freq(path):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["word", "per_billion"])
        for word in sorted(FREQ):
            w.writerow([word, f"{FREQ[word]:g}"])


def main():
    index = {t: i for i, t in enumerate(VOCAB)}
    assert len(VOCAB) == len(index) <= 64, len(VOCAB)
    words = [w for _, _, _, w in contexts()]
    assert len(words) == 118, len(words)
    for w in set(words) | set(ALTERNATIVES):
        tokenize(w, index)
        assert w in FREQ, w
    rng = random.Random(SEED)
    write_stimuli(OUT / "stimuli.csv")
    predictability = write_cloze(OUT / "cloze.jsonl", rng)
    write_rt(OUT / "rt.csv", OUT / "rt_small.csv", rng, predictability)
    (OUT / "ngram.json").write_text(json.dumps(bigram_table(index), indent=1) + "\n")
    write_embeddings(OUT / "embeddings.pdem", rng)
    write_freq(OUT / "freq.csv")
    print(f"wrote toy bundle: {len(VOCAB)} tokens, {len(words)} words")


if __name__ == "__main__":
    main()
