import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from corpus import load_corpus, tfidf_transform  # noqa: E402
from synthetic import gen_synthetic, write_jsonl  # noqa: E402
from topics import LdaConfig, infer_corpus, train_bank  # noqa: E402

FAST_LDA = LdaConfig(alpha=0.5, beta=0.01, iters=40, infer_iters=10, infer_average=3, seed=0)


def write_records(path, records):
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record) + '\n')
    return str(path)


@pytest.fixture
def jsonl(tmp_path):
    """Write a list of {'text', 'tags'} records and return the file path."""
    def _write(records, name='corpus.jsonl'):
        return write_records(tmp_path / name, records)
    return _write


@pytest.fixture(scope='session')
def planted_files(tmp_path_factory):
    root = tmp_path_factory.mktemp('planted')
    train, test = gen_synthetic(n=160, tags='coarse', coarse=2, fine=4, vocab=80, seed=3, test_n=40)
    write_jsonl(train, root / 'train.jsonl')
    write_jsonl(test, root / 'test.jsonl')
    return str(root / 'train.jsonl'), str(root / 'test.jsonl')


@pytest.fixture(scope='session')
def planted(planted_files):
    return load_corpus(planted_files[0])


@pytest.fixture(scope='session')
def planted_test(planted_files, planted):
    return load_corpus(planted_files[1], vocab=planted.vocab, tag_names=planted.tag_names)


@pytest.fixture(scope='session')
def planted_bank(planted):
    return train_bank(planted, [2, 4, 8], FAST_LDA)


@pytest.fixture(scope='session')
def planted_thetas(planted, planted_bank):
    return {m.K: infer_corpus(m, planted) for m in planted_bank.models}


@pytest.fixture(scope='session')
def planted_tfidf(planted):
    return tfidf_transform(planted)


def class_hamming_gap(bits, tags):
    """(mean within-class, mean between-class) Hamming distance of {-1,+1} codes."""
    labels = np.array([min(t) for t in tags])
    D = (bits[:, None, :] != bits[None, :, :]).sum(axis=2)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    return D[same & off].mean(), D[~same].mean()
