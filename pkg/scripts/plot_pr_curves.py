"""
Plot precision-recall curves and the mP-vs-bits sweep from the CSVs written by `cli.py eval`.

Usage: python scripts/plot_pr_curves.py MODEL_DIR [--bits 16] [--out plots/]
"""
import glob
import os
import sys

import click
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd


def plot_pr(model_dir, bits, out_dir):
    fig, ax = plt.subplots(figsize=(6, 5))
    for path in sorted(glob.glob(os.path.join(model_dir, 'pr_*.csv'))):
        method = os.path.basename(path)[3:-4]
        df = pd.read_csv(path)
        curve = df[df['bits'] == bits].sort_values('radius')
        if curve.empty:
            click.echo(f"WARNING: no {bits}-bit curve in {path}", err=True)
            continue
        ax.plot(curve['recall'], curve['precision'], marker='o', markersize=3, label=method)
    ax.set_xlabel('Recall')
    ax.set_ylabel('Precision')
    ax.set_title(f"Precision-recall over Hamming radius ({bits} bits)")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    filename = os.path.join(out_dir, f"pr_{bits}bits.png")
    plt.savefig(filename, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return filename


def plot_sweep(model_dir, out_dir, column='mp_topk'):
    fig, ax = plt.subplots(figsize=(6, 5))
    for path in sorted(glob.glob(os.path.join(model_dir, 'eval_*.csv'))):
        method = os.path.basename(path)[5:-4]
        df = pd.read_csv(path).sort_values('bits')
        ax.plot(df['bits'], df[column], marker='s', markersize=3, label=method)
    ax.set_xlabel('Bits')
    ax.set_ylabel(column)
    ax.grid(alpha=0.3)
    ax.legend()
    filename = os.path.join(out_dir, f"{column}_vs_bits.png")
    plt.savefig(filename, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return filename


@click.command()
@click.argument('model_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--bits', type=int, default=16, show_default=True, help='Code width of the precision-recall plot.')
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Output directory (default MODEL_DIR/plots).')
def main(model_dir, bits, out):
    """Plot precision-recall curves and the mP-vs-bits sweep of MODEL_DIR."""
    if not glob.glob(os.path.join(model_dir, 'eval_*.csv')):
        click.echo(f"ERROR: no eval_*.csv files in {model_dir}; run `python cli.py eval` first.", err=True)
        sys.exit(1)
    out_dir = out or os.path.join(model_dir, 'plots')
    os.makedirs(out_dir, exist_ok=True)
    for filename in (plot_pr(model_dir, bits, out_dir),
                     plot_sweep(model_dir, out_dir, 'mp_topk'),
                     plot_sweep(model_dir, out_dir, 'mp_radius')):
        click.echo(f"Saved {filename}")


if __name__ == '__main__':
    main()
