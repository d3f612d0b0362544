"""
Planted two-level topic corpora: every fine topic is nested in one coarse topic, and documents
are tagged at a chosen level, so the best topic granularity is known in advance.
"""
import json
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

# Token mix of a document: coarse-topic words, fine-topic words, background noise.
MIX = (0.5, 0.4, 0.1)
MIN_LENGTH, MAX_LENGTH = 8, 16


def _blocks(vocab, coarse, fine):
    """Disjoint word-id blocks: one per coarse topic, one per fine topic, the rest is noise."""
    per_coarse = int(vocab * 0.3) // coarse
    per_fine = int(vocab * 0.6) // fine
    if per_coarse < 1 or per_fine < 1:
        raise ValueError(f"vocabulary of {vocab} words is too small for {coarse} coarse / {fine} fine topics")
    coarse_blocks = [np.arange(c * per_coarse, (c + 1) * per_coarse) for c in range(coarse)]
    offset = coarse * per_coarse
    fine_blocks = [np.arange(offset + f * per_fine, offset + (f + 1) * per_fine) for f in range(fine)]
    return coarse_blocks, fine_blocks


def gen_synthetic(n=2000, tags='coarse', coarse=4, fine=12, vocab=500, seed=0, test_n=0):
    """Sample `n` training and `test_n` test records ({'text', 'tags'}) from the planted hierarchy."""
    if coarse < 1 or fine < coarse or fine % coarse:
        raise ValueError(f"{fine} fine topics cannot be nested evenly in {coarse} coarse topics")
    if tags not in ('coarse', 'fine'):
        raise ValueError(f"tags must be 'coarse' or 'fine', got {tags!r}")
    if n < 1 or test_n < 0:
        raise ValueError(f"need n >= 1 and test_n >= 0, got n={n}, test_n={test_n}")

    rng = np.random.default_rng(seed)
    coarse_blocks, fine_blocks = _blocks(vocab, coarse, fine)
    children = fine // coarse
    width = len(str(vocab - 1))

    records = []
    for _ in range(n + test_n):
        f = int(rng.integers(fine))
        c = f // children
        length = int(rng.integers(MIN_LENGTH, MAX_LENGTH + 1))
        source = rng.choice(3, size=length, p=MIX)
        words = np.where(
            source == 0, rng.choice(coarse_blocks[c], size=length),
            np.where(source == 1, rng.choice(fine_blocks[f], size=length), rng.integers(vocab, size=length)))
        tag = f"coarse{c}" if tags == 'coarse' else f"fine{f}"
        records.append({'text': ' '.join(f"w{w:0{width}d}" for w in words), 'tags': [tag]})
    logger.info(f"Generated {n} training and {test_n} test texts ({coarse} coarse / {fine} fine topics, "
                f"tags at {tags} level)")
    return records[:n], records[n:]


def write_jsonl(records, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + '\n')
