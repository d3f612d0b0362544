import os
import sys

import pandas as pd
from click.testing import CliRunner

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'scripts')))

from plot_pr_curves import main  # noqa: E402


def _write_reports(model_dir):
    for method, shift in (('fea', 0.1), ('lsh', 0.0)):
        pd.DataFrame({
            'bits': [4, 8], 'precision': [0.5 + shift, 0.6 + shift], 'recall': [0.4, 0.3],
            'mp_topk': [0.5 + shift, 0.55 + shift], 'mp_radius': [0.45, 0.5], 'empty_queries': [0, 1],
        }).to_csv(model_dir / f"eval_{method}.csv", index=False)
        pd.DataFrame({
            'bits': [8] * 9, 'radius': list(range(9)),
            'precision': [0.9 - 0.05 * r - shift for r in range(9)], 'recall': [0.1 * r + 0.1 for r in range(9)],
        }).to_csv(model_dir / f"pr_{method}.csv", index=False)


def test_writes_every_plot(tmp_path):
    _write_reports(tmp_path)
    result = CliRunner().invoke(main, [str(tmp_path), '--bits', '8', '--out', str(tmp_path / 'figs')])
    assert result.exit_code == 0, result.output
    for name in ('pr_8bits.png', 'mp_topk_vs_bits.png', 'mp_radius_vs_bits.png'):
        assert os.path.getsize(tmp_path / 'figs' / name) > 0


def test_default_output_directory(tmp_path):
    _write_reports(tmp_path)
    result = CliRunner().invoke(main, [str(tmp_path), '--bits', '8'])
    assert result.exit_code == 0, result.output
    assert os.path.exists(tmp_path / 'plots' / 'pr_8bits.png')


def test_missing_width_still_plots(tmp_path):
    _write_reports(tmp_path)
    result = CliRunner().invoke(main, [str(tmp_path), '--bits', '16'])
    assert result.exit_code == 0, result.output
    assert 'no 16-bit curve' in result.output


def test_needs_eval_reports(tmp_path):
    result = CliRunner().invoke(main, [str(tmp_path)])
    assert result.exit_code == 1
    assert 'eval_*.csv' in result.output


def test_missing_directory_is_a_usage_error(tmp_path):
    assert CliRunner().invoke(main, [str(tmp_path / 'absent')]).exit_code == 2
