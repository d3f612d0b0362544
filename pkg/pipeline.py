"""
End-to-end orchestration: topic bank -> granularity selection -> code learning -> hash
functions, plus query encoding and the bit-width evaluation sweep. Every stage is wrapped so a
failure surfaces as StageError carrying the stage name.
"""
import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.preprocessing import normalize

from config import write_config_file
from corpus import (ENGLISH_STOPWORDS, Tokenizer, drop_tags, encode_text, fit_idf, load_corpus,
                    load_vocab, restrict_vocab, save_vocab, tfidf_transform, to_csr)
from errors import ConfigError, ModelFileError, StageError
from fuse_decision import encode_dec, encode_dec_corpus, fit_codes_dec, load_dec, save_dec
from fuse_feature import encode_fea, encode_fea_corpus, load_fea, save_fea, train_fea
from modelio import read_blob, write_blob
from retrieval import (EvalReport, EvalRow, HammingIndex, evaluate, load_codes, lsh_baseline, pack_codes, pr_curve,
                       save_codes, search_radius, search_topk)
from selector import fixed_selection, relief_weights, save_selection, select_top
from topics import LdaConfig, infer_corpus, load_bank, model_filename, save_bank, train_bank

logger = logging.getLogger(__name__)

# Keys that do not change the per-width models and can vary between cached runs.
EVAL_ONLY_KEYS = ('BITS', 'BITS_SWEEP', 'TEST_PATH', 'RADIUS', 'TOPK', 'POOLED', 'WORKERS', 'REDIS_URL',
                  'MODEL_DIR')
WIDTH_ONLY_KEYS = ('VARIANT', 'C1', 'C2', 'SVM_C', 'USE_BIAS', 'DEC_MAX_ITERS', 'DEC_TOL', 'FEATURE_SPACE')
SELECTION_KEYS = ('NUM_CHOSEN', 'RELIEF_K', 'RELIEF_SAMPLE', 'KNN', 'CONF_A', 'CONF_B', 'UNIFORM_WEIGHTS', 'FIXED_KS')


@contextmanager
def stage(name):
    start = time.time()
    logger.info(f"[{name}] started")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"[{name}] failed: {e}")
        raise StageError(name, e) from e
    logger.info(f"[{name}] finished in {time.time() - start:.1f}s")


@dataclass
class Prepared:
    """Everything the per-width training needs, shared across bit widths."""
    corpus: object
    keyword: object
    idf: np.ndarray
    bank: object
    thetas: dict  # K -> n x K topic matrix of the training corpus
    selection: object
    tokenizer: Tokenizer


# --- PATHS ---
def topics_dir(model_dir):
    return os.path.join(model_dir, 'topics')


def width_dir(model_dir, bits):
    return os.path.join(model_dir, f"l{bits}")


def make_tokenizer(pc):
    if not pc.stopwords:
        return Tokenizer()
    if pc.stopwords == 'english':
        return Tokenizer(ENGLISH_STOPWORDS)
    return Tokenizer.from_file(pc.stopwords)


def _keyword_corpus(pc, c, idf):
    return tfidf_transform(c, idf) if pc.keyword_weighting == 'tfidf' else c


def _save_tags(tag_names, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(''.join(f"{t}\n" for t in tag_names))


def _write_json(obj, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')


def _read_json(path):
    if not os.path.exists(path):
        raise ModelFileError(path)
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def file_digest(path):
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


# --- SHARED STAGES ---
def load_training_corpus(pc, tokenizer=None):
    tokenizer = tokenizer or make_tokenizer(pc)
    c = load_corpus(pc.corpus_path, tokenizer=tokenizer)
    if pc.tag_dropout > 0:
        c = drop_tags(c, pc.tag_dropout, pc.seed)
    return c


def train_topics(pc, c):
    """Train (or load a matching cached) topic bank; returns (bank, thetas by K)."""
    directory = topics_dir(pc.model_dir)
    settings = pc.config_hash(exclude=EVAL_ONLY_KEYS + WIDTH_ONLY_KEYS + SELECTION_KEYS)
    corpora = {p: file_digest(p) for p in (pc.corpus_path, pc.topic_corpus_path) if p}
    stamp = os.path.join(directory, 'topics.json')
    cached = _read_json(stamp) if os.path.exists(stamp) else {}
    if cached.get('hash') == settings and cached.get('corpora') == corpora:
        logger.info(f"Reusing topic bank in {directory}")
        bank = load_bank(directory, pc.candidate_ks)
        _, arrays = read_blob(os.path.join(directory, 'thetas.bin'), 'thetas')
        return bank, {K: arrays[f"K{K}"] for K in bank.Ks}

    source = c
    if pc.topic_corpus_path:
        external = load_corpus(pc.topic_corpus_path, tokenizer=make_tokenizer(pc))
        source = restrict_vocab(external, c.vocab)
        logger.info(f"Training topics on {pc.topic_corpus_path} ({source.n} texts) with the hashing vocabulary")
    lda = LdaConfig(alpha=pc.lda_alpha, beta=pc.lda_beta, iters=pc.lda_iters, infer_iters=pc.infer_iters,
                    infer_average=pc.infer_average, seed=pc.seed)
    bank = train_bank(source, pc.candidate_ks, lda, workers=pc.workers)
    thetas = {m.K: infer_corpus(m, c) for m in bank.models}
    save_bank(bank, directory, c.terms())
    write_blob(os.path.join(directory, 'thetas.bin'), 'thetas', {'n': c.n}, {f"K{K}": t for K, t in thetas.items()})
    _write_json({'hash': settings, 'corpora': corpora, 'Ks': bank.Ks}, stamp)
    return bank, thetas


def select(pc, c, keyword, bank, thetas):
    if pc.fixed_ks:
        sel = fixed_selection(pc.fixed_ks)
        logger.info(f"Using fixed granularities {sel.Ks}")
    else:
        w = relief_weights(c, bank, pc.relief_sample, pc.relief_k, pc.seed,
                           thetas=[thetas[K] for K in bank.Ks], keyword=keyword)
        sel = select_top(w, pc.num_chosen)
        _save_relief(w, os.path.join(pc.model_dir, 'relief.txt'))
    if pc.uniform_weights:
        sel = sel.uniform()
    logger.info(f"Selected K={sel.Ks} with balance weights {[round(v, 3) for v in sel.mu_hat]}")
    save_selection(sel, os.path.join(pc.model_dir, 'selection.txt'))
    return sel


def _save_relief(w, path):
    with open(path, 'w', encoding='utf-8') as f:
        for K, value in sorted(w.weights.items()):
            f.write(f"{K}\t{value!r}\n")


def _load_stage(pc):
    os.makedirs(pc.model_dir, exist_ok=True)
    tokenizer = make_tokenizer(pc)
    with stage('load-corpus'):
        c = load_training_corpus(pc, tokenizer)
        idf = fit_idf(c)
        keyword = _keyword_corpus(pc, c, idf)
        save_vocab(c.vocab, os.path.join(pc.model_dir, 'vocab.txt'))
        _save_tags(c.tag_names, os.path.join(pc.model_dir, 'tags.txt'))
        write_blob(os.path.join(pc.model_dir, 'idf.bin'), 'idf', {'d': c.d}, {'idf': idf})
    return c, idf, keyword, tokenizer


def run_train_topics(pc):
    c, _, _, _ = _load_stage(pc)
    with stage('train-topics'):
        bank, _ = train_topics(pc, c)
    return bank


def prepare(pc):
    """Corpus, keyword space, topic bank and selection shared by every bit width."""
    c, idf, keyword, tokenizer = _load_stage(pc)
    with stage('train-topics'):
        bank, thetas = train_topics(pc, c)
    with stage('select'):
        sel = select(pc, c, keyword, bank, thetas)
    return Prepared(c, keyword, idf, bank, thetas, sel, tokenizer)


# --- PER-WIDTH TRAINING ---
def width_hash(pc):
    return pc.config_hash(exclude=EVAL_ONLY_KEYS)


def train_width(pc, prep, bits):
    """Learn codes and hash functions for one bit width; writes l{bits}/ and returns its manifest."""
    out = width_dir(pc.model_dir, bits)
    os.makedirs(out, exist_ok=True)
    sel, c = prep.selection, prep.corpus
    thetas = [prep.thetas[K] for K in sel.Ks]
    with stage('fit-codes'):
        if pc.variant == 'fea':
            model, codes, embedding = train_fea(
                c, sel, prep.bank, bits, pc.knn, pc.conf_a, pc.conf_b, pc.svm_c, pc.use_bias,
                pc.feature_space, idf=prep.idf, thetas=thetas, workers=pc.workers)
            extra = {'diagnostics': embedding.diagnostics,
                     'train_accuracy': model.hash_fn.train_accuracy.tolist()}
        else:
            model, codes, _ = fit_codes_dec(
                c, sel, prep.bank, bits, pc.knn, pc.conf_a, pc.conf_b, pc.c1, pc.c2, pc.dec_max_iters,
                pc.dec_tol, thetas=thetas, fix_alpha=pc.uniform_weights, workers=pc.workers)
            extra = {'alpha': model.alpha.tolist(), 'converged': model.converged,
                     'objective_trace': list(model.objective_trace)}
    with stage('save'):
        hash_path = os.path.join(out, 'hash.bin')
        codes_path = os.path.join(out, 'codes.bin')
        (save_fea if pc.variant == 'fea' else save_dec)(model, hash_path)
        save_codes(pack_codes(codes.bits), bits, codes_path)
        manifest = {
            'variant': pc.variant, 'bits': bits, 'config_hash': pc.config_hash(), 'width_hash': width_hash(pc),
            'selection': {'Ks': sel.Ks, 'mu': sel.mu, 'mu_hat': sel.mu_hat,
                          'uniform_fallback': sel.uniform_fallback},
            'files': ['hash.bin', 'codes.bin'], **extra,
        }
        _write_json(manifest, os.path.join(out, 'manifest.json'))
    return manifest


def train(pc, bits=None):
    """Full training run for one width (default BITS); writes the model dir and manifest.json."""
    bits = pc.bits if bits is None else bits
    prep = prepare(pc)
    manifest = train_width(pc, prep, bits)
    write_config_file(pc, os.path.join(pc.model_dir, 'config.txt'))
    _write_json({
        'config': dict(line.split('=', 1) for line in pc.listing()),
        'config_hash': pc.config_hash(),
        'variant': pc.variant,
        'bits': bits,
        'selection': manifest['selection'],
        'files': ['vocab.txt', 'tags.txt', 'idf.bin', 'selection.txt', 'config.txt',
                  *[os.path.join("topics", model_filename(K)) for K in prep.bank.Ks],
                  *[os.path.join(f"l{bits}", f) for f in manifest['files']]],
    }, os.path.join(pc.model_dir, 'manifest.json'))
    logger.info(f"Model written to {pc.model_dir} (config {pc.config_hash()[:12]})")
    return manifest


# --- LOADING & QUERYING ---
@dataclass
class TrainedModel:
    variant: str
    bits: int
    model: object
    codes: np.ndarray  # packed training codes
    vocab: dict
    tokenizer: Tokenizer

    def index(self):
        return HammingIndex(self.codes, self.bits)

    def encode_doc(self, doc, frozen_index=None):
        if self.variant == 'fea':
            return encode_fea(self.model, doc, frozen_index=frozen_index)
        return encode_dec(self.model, doc)

    def encode_text(self, text):
        return self.encode_doc(encode_text(text, self.vocab, self.tokenizer))


def load_trained(model_dir, bits=None):
    manifest = _read_json(os.path.join(model_dir, 'manifest.json'))
    bits = manifest['bits'] if bits is None else bits
    width = _read_json(os.path.join(width_dir(model_dir, bits), 'manifest.json'))
    variant = width['variant']
    vocab = load_vocab(os.path.join(model_dir, 'vocab.txt'))
    stopwords = manifest['config'].get('STOPWORDS', '')
    tokenizer = (Tokenizer() if not stopwords else
                 Tokenizer(ENGLISH_STOPWORDS) if stopwords == 'english' else Tokenizer.from_file(stopwords))
    bank = load_bank(topics_dir(model_dir), width['selection']['Ks'])
    hash_path = os.path.join(width_dir(model_dir, bits), 'hash.bin')
    model = load_fea(hash_path, bank) if variant == 'fea' else load_dec(hash_path, bank)
    codes, l = load_codes(os.path.join(width_dir(model_dir, bits), 'codes.bin'))
    return TrainedModel(variant, l, model, codes, vocab, tokenizer)


def query(model_dir, text, radius=None, topk=None, bits=None):
    """Ranked (doc id, distance) pairs for a query string, by radius or by top-K."""
    with stage('load'):
        trained = load_trained(model_dir, bits)
    if radius is not None and radius > trained.bits:
        raise ValueError(f"radius {radius} exceeds the code width {trained.bits}")
    with stage('encode'):
        code = trained.encode_text(text)
    index = trained.index()
    if radius is not None:
        return search_radius(index, code, radius)
    return search_topk(index, code, min(topk or 10, index.n))


def encode_file(model_dir, corpus_path, out_path, bits=None):
    """Hash every text of a corpus file with a trained model; writes a codes file."""
    with stage('load'):
        trained = load_trained(model_dir, bits)
    with stage('encode'):
        c = load_corpus(corpus_path, vocab=trained.vocab, tokenizer=trained.tokenizer)
        encode = encode_fea_corpus if trained.variant == 'fea' else encode_dec_corpus
        words, _ = encode(trained.model, c)
        save_codes(words, trained.bits, out_path)
    return words


# --- EVALUATION SWEEP ---
def _cached_width(pc, bits):
    path = os.path.join(width_dir(pc.model_dir, bits), 'manifest.json')
    if not os.path.exists(path):
        return False
    manifest = _read_json(path)
    return manifest.get('width_hash') == width_hash(pc) and all(
        os.path.exists(os.path.join(width_dir(pc.model_dir, bits), f)) for f in manifest['files'])


def _load_width(pc, prep, bits):
    directory = width_dir(pc.model_dir, bits)
    path = os.path.join(directory, 'hash.bin')
    model = load_fea(path, prep.bank) if pc.variant == 'fea' else load_dec(path, prep.bank)
    codes, _ = load_codes(os.path.join(directory, 'codes.bin'))
    return model, codes


def evaluate_run(pc, widths=None, enqueue=None):
    """One seeded sweep over bit widths; returns (reports by method, pr curves by method)."""
    if not pc.test_path:
        raise ConfigError('TEST_PATH', "evaluation needs a test corpus")
    widths = pc.bits_sweep if widths is None else widths
    prep = prepare(pc)
    with stage('load-test'):
        test = load_corpus(pc.test_path, vocab=prep.corpus.vocab, tag_names=prep.corpus.tag_names,
                           tokenizer=prep.tokenizer)
        test_keyword = _keyword_corpus(pc, test, prep.idf)

    missing = [bits for bits in widths if not _cached_width(pc, bits)]
    if missing and enqueue is not None:
        enqueue(pc, missing)
    for bits in missing:
        if not _cached_width(pc, bits):
            train_width(pc, prep, bits)

    reports = {pc.variant: EvalReport(pc.variant), 'lsh': EvalReport('lsh')}
    curves = {pc.variant: [], 'lsh': []}
    train_tags, test_tags = prep.corpus.tags, test.tags
    for bits in widths:
        with stage('eval'):
            model, train_codes = _load_width(pc, prep, bits)
            encode = encode_fea_corpus if pc.variant == 'fea' else encode_dec_corpus
            test_codes, _ = encode(model, test)
            lsh_train, planes = lsh_baseline(prep.keyword, bits, pc.seed)
            lsh_test = pack_codes(planes.predict(normalize(to_csr(test_keyword, width=prep.corpus.d))))
            for method, tr, te in ((pc.variant, train_codes, test_codes), ('lsh', lsh_train, lsh_test)):
                reports[method].rows.append(
                    evaluate(train_tags, tr, test_tags, te, bits, pc.radius, pc.topk, pc.pooled))
                curve = pr_curve(train_tags, tr, test_tags, te, bits, pc.pooled)
                curve.insert(0, 'bits', bits)
                curves[method].append(curve)
    return reports, {m: pd.concat(frames, ignore_index=True) for m, frames in curves.items()}


def evaluate_sweep(pc, runs=1, widths=None, enqueue=None):
    """Average `runs` seeded sweeps (seeds SEED..SEED+runs-1); writes eval_/pr_ CSVs into MODEL_DIR."""
    frames, curve_frames = {}, {}
    for r in range(runs):
        run_pc = pc if runs == 1 else pc.replace(seed=pc.seed + r,
                                                 model_dir=os.path.join(pc.model_dir, f"run{pc.seed + r}"))
        reports, curves = evaluate_run(run_pc, widths, enqueue)
        for method, report in reports.items():
            frames.setdefault(method, []).append(report.frame())
            curve_frames.setdefault(method, []).append(curves[method])

    os.makedirs(pc.model_dir, exist_ok=True)
    written = {}
    for method in frames:
        mean = pd.concat(frames[method]).groupby('bits', sort=True).mean().reset_index()
        mean['empty_queries'] = mean['empty_queries'].round().astype(int)
        report = EvalReport(method)
        report.rows = [_row_from_series(s) for _, s in mean.iterrows()]
        path = os.path.join(pc.model_dir, f"eval_{method}.csv")
        report.to_csv(path)
        curve = pd.concat(curve_frames[method]).groupby(['bits', 'radius'], sort=True).mean().reset_index()
        curve.to_csv(os.path.join(pc.model_dir, f"pr_{method}.csv"), index=False, float_format='%.6f')
        written[method] = report
        logger.info(f"Wrote {path}")
    return written


def _row_from_series(s):
    return EvalRow(int(s['bits']), float(s['precision']), float(s['recall']), float(s['mp_topk']),
                   float(s['mp_radius']), int(s['empty_queries']), int(round(s['skipped_queries'])))
