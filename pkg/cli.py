"""
Command-line surface: gen, train-topics, select, train, encode, query, eval.
"""
import logging
import os
import sys
import time

import click

from config import load_pipeline_config
from errors import HashingError, StageError

logger = logging.getLogger(__name__)

POLL_SECONDS = 2


def _parse_sets(values):
    overrides = {}
    for text in values:
        if '=' not in text:
            raise click.BadParameter(f"expected KEY=VALUE, got {text!r}", param_hint='--set')
        key, value = text.split('=', 1)
        overrides[key.strip().upper()] = value.strip()
    return overrides


def _fail(e):
    if isinstance(e, StageError):
        click.echo(f"[{e.stage}] {e.cause}", err=True)
    else:
        click.echo(f"error: {e}", err=True)
    sys.exit(1)


class Context:
    def __init__(self, config_path, overrides):
        self.config_path = config_path
        self.overrides = overrides

    def config(self, **extra):
        overrides = dict(self.overrides)
        overrides.update({k: str(v) for k, v in extra.items() if v is not None})
        try:
            return load_pipeline_config(self.config_path, overrides)
        except HashingError as e:
            _fail(e)


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='KEY=VALUE configuration file.')
@click.option('--set', 'sets', multiple=True, metavar='KEY=VALUE', help='Override one configuration key.')
@click.option('--model-dir', envvar='HMTT_MODEL_DIR', default=None, help='Model directory.')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging.')
@click.pass_context
def cli(ctx, config_path, sets, model_dir, verbose):
    """Multi-granularity topic hashing for short texts."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    overrides = _parse_sets(sets)
    if model_dir:
        overrides['MODEL_DIR'] = model_dir
    ctx.obj = Context(config_path, overrides)


@cli.command()
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Training corpus (JSONL).')
@click.option('--test-out', type=click.Path(dir_okay=False), default=None, help='Test corpus (JSONL).')
@click.option('--n', 'n', default=2000, show_default=True)
@click.option('--test-n', default=0, show_default=True)
@click.option('--tags', type=click.Choice(['coarse', 'fine']), default='coarse', show_default=True)
@click.option('--coarse', default=4, show_default=True)
@click.option('--fine', default=12, show_default=True)
@click.option('--vocab', default=500, show_default=True)
@click.option('--seed', default=0, show_default=True)
def gen(out, test_out, n, test_n, tags, coarse, fine, vocab, seed):
    """Write a planted two-level synthetic corpus."""
    from synthetic import gen_synthetic, write_jsonl

    if test_n and not test_out:
        raise click.UsageError('--test-n needs --test-out')
    try:
        train, test = gen_synthetic(n, tags, coarse, fine, vocab, seed, test_n)
    except ValueError as e:
        raise click.BadParameter(str(e))
    write_jsonl(train, out)
    if test_out:
        write_jsonl(test, test_out)
    click.echo(f"wrote {len(train)} texts to {out}" + (f" and {len(test)} to {test_out}" if test_out else ''))


@cli.command('train-topics')
@click.pass_obj
def train_topics_cmd(obj):
    """Train the candidate topic bank."""
    from pipeline import run_train_topics

    pc = obj.config()
    try:
        bank = run_train_topics(pc)
    except HashingError as e:
        _fail(e)
    click.echo(f"topic models K={bank.Ks} in {os.path.join(pc.model_dir, 'topics')}")


@cli.command('select')
@click.pass_obj
def select_cmd(obj):
    """Weight the candidate granularities and choose NUM_CHOSEN of them."""
    from pipeline import prepare

    pc = obj.config()
    try:
        sel = prepare(pc).selection
    except HashingError as e:
        _fail(e)
    for K, mu, mu_hat in zip(sel.Ks, sel.mu, sel.mu_hat):
        click.echo(f"K={K}\tmu={mu:.6f}\tmu_hat={mu_hat:.4f}")


@cli.command()
@click.option('--bits', type=int, default=None, help='Code width (default BITS).')
@click.pass_obj
def train(obj, bits):
    """Train topics, select granularities and learn hash functions for one code width."""
    from pipeline import train as run_train

    pc = obj.config(BITS=bits)
    try:
        manifest = run_train(pc, pc.bits)
    except HashingError as e:
        _fail(e)
    click.echo(f"{manifest['variant']} model, {manifest['bits']} bits, K={manifest['selection']['Ks']} "
               f"-> {pc.model_dir}")


@cli.command()
@click.option('--text', default=None, help='Encode one text and print its code.')
@click.option('--corpus', 'corpus_path', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Codes file for --corpus.')
@click.option('--bits', type=int, default=None)
@click.pass_obj
def encode(obj, text, corpus_path, out, bits):
    """Hash a text or a whole corpus file with a trained model."""
    from pipeline import encode_file, load_trained, stage

    if (text is None) == (corpus_path is None):
        raise click.UsageError('give exactly one of --text or --corpus')
    pc = obj.config()
    try:
        if text is not None:
            with stage('load'):
                trained = load_trained(pc.model_dir, bits)
            with stage('encode'):
                code = trained.encode_text(text)
            click.echo(''.join('1' if b > 0 else '0' for b in code.bits()))
        else:
            if not out:
                raise click.UsageError('--corpus needs --out')
            words = encode_file(pc.model_dir, corpus_path, out, bits)
            click.echo(f"wrote {words.shape[0]} codes to {out}")
    except HashingError as e:
        _fail(e)


@cli.command()
@click.argument('text')
@click.option('--radius', '-r', type=int, default=None, help='Return every text within this Hamming radius.')
@click.option('--topk', '-k', type=int, default=None, help='Return the K nearest texts.')
@click.option('--bits', type=int, default=None)
@click.pass_obj
def query(obj, text, radius, topk, bits):
    """Search the training texts nearest to TEXT in Hamming space."""
    from pipeline import query as run_query

    if radius is not None and topk is not None:
        raise click.UsageError('give at most one of --radius or --topk')
    pc = obj.config()
    try:
        results = run_query(pc.model_dir, text, radius=radius, topk=topk, bits=bits)
    except HashingError as e:
        _fail(e)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint='--radius/--topk')
    for doc_id, dist in results:
        click.echo(f"{doc_id}\t{dist}")


def _queue_widths(pc, widths):
    """Enqueue one training job per width on REDIS_URL and wait for all of them."""
    from redis import Redis
    from rq import Queue
    from rq.job import Job

    from worker import train_width_task

    redis_conn = Redis.from_url(pc.redis_url)
    task_queue = Queue('default', connection=redis_conn)
    overrides = dict(line.split('=', 1) for line in pc.listing())
    jobs = [task_queue.enqueue(train_width_task, None, overrides, bits, job_timeout='30m') for bits in widths]
    logger.info(f"Queued {len(jobs)} training jobs on {pc.redis_url}")
    pending = {job.id for job in jobs}
    while pending:
        time.sleep(POLL_SECONDS)
        for job_id in sorted(pending):
            job = Job.fetch(job_id, connection=redis_conn)
            if job.is_finished:
                result = job.result
                logger.info(f"job {job_id}: {result['status']} - {result['message']}")
                pending.discard(job_id)
            elif job.is_failed:
                logger.error(f"job {job_id} failed: {job.exc_info}")
                pending.discard(job_id)


@cli.command('eval')
@click.option('--bits-sweep', default=None, help='Widths as start:step:stop or a comma list (default BITS_SWEEP).')
@click.option('--runs', default=1, show_default=True, help='Average over this many seeds.')
@click.option('--queue', is_flag=True, help='Train missing widths through the RQ worker queue.')
@click.pass_obj
def eval_cmd(obj, bits_sweep, runs, queue):
    """Evaluate the model and the LSH baseline over a sweep of code widths."""
    from pipeline import evaluate_sweep

    if runs < 1:
        raise click.BadParameter('must be >= 1', param_hint='--runs')
    pc = obj.config(BITS_SWEEP=bits_sweep)
    try:
        reports = evaluate_sweep(pc, runs=runs, enqueue=_queue_widths if queue else None)
    except HashingError as e:
        _fail(e)
    for method, report in reports.items():
        click.echo(f"[{method}]")
        click.echo(report.frame().to_string(index=False))


if __name__ == '__main__':
    cli()
