"""
Pipeline configuration: UPPER_CASE defaults, a flat KEY=VALUE file and command-line overrides.
"""
import hashlib
import logging
import os
from dataclasses import dataclass, fields

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

DEFAULTS = {
    'CORPUS_PATH': 'data/train.jsonl',
    'TEST_PATH': '',
    'TOPIC_CORPUS_PATH': '',
    'MODEL_DIR': 'models',
    'CANDIDATE_KS': '10,30,50,70,90,120,150',
    'NUM_CHOSEN': 3,
    'RELIEF_K': 10,
    'RELIEF_SAMPLE': 100,
    'KNN': 25,
    'CONF_A': 1.0,
    'CONF_B': 0.1,
    'BITS': 16,
    'BITS_SWEEP': '4:4:64',
    'VARIANT': 'fea',
    'C1': 1.0,
    'C2': 1.0,
    'SVM_C': 1.0,
    'USE_BIAS': True,
    'LDA_ALPHA': 0.5,
    'LDA_BETA': 0.01,
    'LDA_ITERS': 1000,
    'INFER_ITERS': 20,
    'INFER_AVERAGE': 5,
    'SEED': 0,
    'RADIUS': 3,
    'TOPK': 200,
    'DEC_MAX_ITERS': 20,
    'DEC_TOL': 1e-6,
    'FEATURE_SPACE': 'topics',
    'KEYWORD_WEIGHTING': 'tfidf',
    'UNIFORM_WEIGHTS': False,
    'FIXED_KS': '',
    'POOLED': False,
    'WORKERS': 1,
    'TAG_DROPOUT': 0.0,
    'STOPWORDS': '',
    'REDIS_URL': 'redis://localhost:6379',
}


def coerce(value):
    """'true'/'false' -> bool, then int, then float; anything else stays a string."""
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() == 'true':
        return True
    if text.lower() == 'false':
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config_file(path):
    """KEY=VALUE file in .env syntax; keys are upper-cased."""
    with open(path, encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if line and not line.startswith('#') and '=' not in line:
                raise ConfigError(f"{path}:{line_no}", f"expected KEY=VALUE, got {line!r}")
    return {key.strip().upper(): value for key, value in dotenv_values(path, interpolate=False).items()
            if value is not None}


def get_config(path=None, overrides=None):
    """Merged config dict: DEFAULTS < config file < environment (model dir, redis) < overrides."""
    config = DEFAULTS.copy()
    layers = []
    if path:
        if not os.path.exists(path):
            raise ConfigError('CONFIG', f"config file not found: {path}")
        layers.append(read_config_file(path))
    env = {}
    if os.getenv('HMTT_MODEL_DIR'):
        env['MODEL_DIR'] = os.getenv('HMTT_MODEL_DIR')
    if os.getenv('REDIS_URL'):
        env['REDIS_URL'] = os.getenv('REDIS_URL')
    layers.append(env)
    layers.append(dict(overrides or {}))
    for layer in layers:
        for key, value in layer.items():
            if key not in config:
                raise ConfigError(key, "unknown configuration key")
            config[key] = coerce(value)
    return config


def _int_list(key, value):
    if isinstance(value, int):
        return (value,)
    text = str(value).strip()
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(key, f"expected a comma-separated list of integers, got {value!r}")


def parse_sweep(key, value):
    """'4:4:64' -> (4, 8, ..., 64); plain lists and single integers are accepted too."""
    text = str(value).strip()
    if ':' in text:
        try:
            start, step, stop = (int(v) for v in text.split(':'))
        except ValueError:
            raise ConfigError(key, f"expected start:step:stop, got {value!r}")
        if step < 1:
            raise ConfigError(key, f"sweep step must be positive, got {step}")
        return tuple(range(start, stop + 1, step))
    return _int_list(key, value)


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str
    test_path: str
    topic_corpus_path: str
    model_dir: str
    candidate_ks: tuple
    num_chosen: int
    relief_k: int
    relief_sample: int
    knn: int
    conf_a: float
    conf_b: float
    bits: int
    bits_sweep: tuple
    variant: str
    c1: float
    c2: float
    svm_c: float
    use_bias: bool
    lda_alpha: float
    lda_beta: float
    lda_iters: int
    infer_iters: int
    infer_average: int
    seed: int
    radius: int
    topk: int
    dec_max_iters: int
    dec_tol: float
    feature_space: str
    keyword_weighting: str
    uniform_weights: bool
    fixed_ks: tuple
    pooled: bool
    workers: int
    tag_dropout: float
    stopwords: str
    redis_url: str

    @classmethod
    def from_dict(cls, config):
        values = {}
        for f in fields(cls):
            key = f.name.upper()
            value = config[key]
            if key in ('CANDIDATE_KS', 'FIXED_KS'):
                value = _int_list(key, value)
            elif key == 'BITS_SWEEP':
                value = parse_sweep(key, value)
            elif f.type is float:
                value = float(value)
            elif f.type is str:
                value = '' if value is None else str(value)
            values[f.name] = value
        pc = cls(**values)
        pc.validate()
        return pc

    def validate(self):
        def require(ok, key, message):
            if not ok:
                raise ConfigError(key, message)

        for key in ('num_chosen', 'relief_k', 'relief_sample', 'knn', 'bits', 'lda_iters', 'infer_iters',
                    'infer_average', 'seed', 'radius', 'topk', 'dec_max_iters', 'workers'):
            require(isinstance(getattr(self, key), int) and not isinstance(getattr(self, key), bool),
                    key.upper(), f"expected an integer, got {getattr(self, key)!r}")
        for key in ('use_bias', 'uniform_weights', 'pooled'):
            require(isinstance(getattr(self, key), bool), key.upper(), f"expected true/false, got {getattr(self, key)!r}")

        ks = self.candidate_ks
        require(len(ks) > 0, 'CANDIDATE_KS', "at least one candidate topic number is needed")
        require(len(set(ks)) == len(ks), 'CANDIDATE_KS', f"duplicate topic numbers in {list(ks)}")
        require(all(k >= 2 for k in ks), 'CANDIDATE_KS', f"topic numbers must be >= 2, got {list(ks)}")
        require(1 <= self.num_chosen <= len(ks), 'NUM_CHOSEN', f"must be in [1, {len(ks)}], got {self.num_chosen}")
        require(set(self.fixed_ks) <= set(ks), 'FIXED_KS', f"{list(self.fixed_ks)} not all among CANDIDATE_KS")
        require(len(set(self.fixed_ks)) == len(self.fixed_ks), 'FIXED_KS', "duplicate topic numbers")
        require(self.relief_k >= 1, 'RELIEF_K', "must be >= 1")
        require(self.relief_sample >= 1, 'RELIEF_SAMPLE', "must be >= 1")
        require(self.knn >= 1, 'KNN', "must be >= 1")
        require(1.0 >= self.conf_a >= self.conf_b > 0.0, 'CONF_A',
                f"confidences must satisfy 1 >= a >= b > 0, got a={self.conf_a}, b={self.conf_b}")
        for width in (self.bits,) + self.bits_sweep:
            require(4 <= width <= 64, 'BITS', f"bit widths must be in [4, 64], got {width}")
        require(len(self.bits_sweep) > 0, 'BITS_SWEEP', "empty sweep")
        require(self.variant in ('fea', 'dec'), 'VARIANT', f"expected fea or dec, got {self.variant!r}")
        require(self.c1 > 0, 'C1', "must be positive")
        require(self.c2 > 0, 'C2', "must be positive")
        require(self.svm_c > 0, 'SVM_C', "must be positive")
        require(self.lda_alpha > 0, 'LDA_ALPHA', "must be positive")
        require(self.lda_beta > 0, 'LDA_BETA', "must be positive")
        require(self.lda_iters >= 1, 'LDA_ITERS', "must be >= 1")
        require(self.infer_iters >= 1, 'INFER_ITERS', "must be >= 1")
        require(self.infer_average >= 1, 'INFER_AVERAGE', "must be >= 1")
        require(self.radius >= 0, 'RADIUS', "must be >= 0")
        require(self.topk >= 1, 'TOPK', "must be >= 1")
        require(self.dec_max_iters >= 1, 'DEC_MAX_ITERS', "must be >= 1")
        require(self.dec_tol >= 0, 'DEC_TOL', "must be >= 0")
        require(self.feature_space in ('topics', 'keywords'), 'FEATURE_SPACE',
                f"expected topics or keywords, got {self.feature_space!r}")
        require(self.keyword_weighting in ('tfidf', 'count'), 'KEYWORD_WEIGHTING',
                f"expected tfidf or count, got {self.keyword_weighting!r}")
        require(self.workers >= 1, 'WORKERS', "must be >= 1")
        require(0.0 <= self.tag_dropout <= 1.0, 'TAG_DROPOUT', "must be in [0, 1]")

    def listing(self, exclude=()):
        """Canonical KEY=VALUE lines, sorted by key."""
        excluded = {key.upper() for key in exclude}
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            key = f.name.upper()
            if key in excluded:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ','.join(str(v) for v in value)
            lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return lines

    def config_hash(self, exclude=()):
        return hashlib.sha256('\n'.join(self.listing(exclude)).encode('utf-8')).hexdigest()

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        pc = PipelineConfig(**values)
        pc.validate()
        return pc


def load_pipeline_config(path=None, overrides=None):
    return PipelineConfig.from_dict(get_config(path, overrides))


def write_config_file(pc, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(pc.listing()) + '\n')
