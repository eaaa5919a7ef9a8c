"""Single-threaded reference implementations used as test oracles.

These deliberately avoid the engine, the regex tokenizer and the binary
encoder so that they check those paths independently.
"""

from collections import Counter

APOSTROPHES = "'’"


def reference_tokenize(line):
    tokens, current = [], []
    for ch in line:
        if ch.isalnum() or ch in APOSTROPHES:
            current.append(ch.lower())
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def reference_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def reference_dictionary(lines):
    counts = Counter()
    for line in lines:
        counts.update(reference_tokenize(line))
    return sorted((t, n, sum(1 for _ in t)) for t, n in counts.items())


def reference_ngrams(lines, n):
    counts = Counter()
    for line in lines:
        toks = reference_tokenize(line)
        for i in range(len(toks) - n + 1):
            counts[tuple(toks[i:i + n])] += 1
    return sorted((*gram, c) for gram, c in counts.items())


def reference_fold(pairs, combine):
    acc = {}
    for k, v in pairs:
        acc[k] = combine(acc[k], v) if k in acc else v
    return acc


def flatten_count_oracle(path):
    """Σ max(1, |senses|) via a plain json.load of the whole file."""
    import json

    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return len(data), sum(max(1, len(e.get("senses", []))) for e in data)


def reference_flatten(path):
    import json

    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    docs = []
    for e in data:
        senses = e.get("senses", [])
        forms = len(e.get("forms", []))
        if not senses:
            docs.append((e["lemma"], e["pos"], -1, "", 0, forms))
        for i, s in enumerate(senses):
            docs.append((e["lemma"], e["pos"], i, s["gloss"], len(s.get("examples", [])), forms))
    return sorted(docs)
