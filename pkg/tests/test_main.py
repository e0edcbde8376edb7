"""Tests for the benchmark command line"""

import pandas as pd
import pytest
import yaml

import kestrel_main
from kestrel_errors import BenchConfigError
from kestrel_main import main, parse_dims, parse_rank_sweep
from kestrel_sptensor import random_sparse, write_tns


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = {
        'directories': {
            'tensors': str(tmp_path / 'tensors'),
            'reports': str(tmp_path / 'reports'),
            'plots': str(tmp_path / 'plots'),
        },
        'bench': {'out': str(tmp_path / 'reports' / 'bench.csv'), 'peak_gbps': 20.0},
        'logging': {'level': 'WARNING', 'file': str(tmp_path / 'logs' / 'kestrel.log')},
    }
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(config))
    return tmp_path, str(path)


BASE = ['--dims', '20x30x40', '--nnz', '800', '--rank', '3', '--iters', '1', '--no-progress']


def test_parse_dims():
    assert parse_dims('300x400x500') == (300, 400, 500)
    assert parse_dims('7') == (7,)
    with pytest.raises(BenchConfigError):
        parse_dims('3xa')
    with pytest.raises(BenchConfigError):
        parse_dims('3x0')


def test_parse_rank_sweep():
    assert parse_rank_sweep('8:32:8') == [8, 16, 24, 32]
    assert parse_rank_sweep('8:256:8')[-1] == 256
    for bad in ('8:4:1', '0:8:2', '1:8', 'a:b:c'):
        with pytest.raises(BenchConfigError):
            parse_rank_sweep(bad)


def test_csv_run(workspace):
    tmp_path, config = workspace
    out = tmp_path / 'out' / 'report.csv'
    code = main(['--config', config, *BASE, '--variant', 'atomic', '--variant', 'perm',
                 '--threads', '1', '--threads', '2', '--out', str(out)])
    assert code == 0
    rows = pd.read_csv(out)
    assert len(rows) == 2 * 2 * 3
    assert set(rows['variant']) == {'atomic', 'perm'}
    assert (tmp_path / 'logs' / 'kestrel.log').exists()


def test_json_run_uses_config_path(workspace):
    tmp_path, config = workspace
    code = main(['--config', config, *BASE, '--variant', 'blocked', '--threads', '1',
                 '--format', 'json', '--mttkrp-only'])
    assert code == 0
    rows = pd.read_json(tmp_path / 'reports' / 'bench.json')
    assert len(rows) == 3


def test_input_file_and_plots(workspace):
    tmp_path, config = workspace
    X = random_sparse((10, 12, 14), 300, seed=2)
    tensor = tmp_path / 'x.tns'
    write_tns(X, str(tensor))
    plots = tmp_path / 'charts'
    code = main(['--config', config, '--input', str(tensor), '--rank-sweep', '2:4:2', '--iters', '1',
                 '--variant', 'blocked', '--variant', 'dup', '--threads', '1', '--no-progress',
                 '--plot-dir', str(plots)])
    assert code == 0
    assert (plots / 'bench_summary.txt').exists()
    rows = pd.read_csv(tmp_path / 'reports' / 'bench.csv')
    assert sorted(set(rows['rank'])) == [2, 4]


def test_precision_flags(workspace):
    tmp_path, config = workspace
    out = tmp_path / 'narrow.csv'
    code = main(['--config', config, *BASE, '--variant', 'blocked', '--threads', '1',
                 '--float-bytes', '4', '--ordinal-bytes', '4', '--out', str(out)])
    assert code == 0
    rows = pd.read_csv(out)
    assert (rows['storage_base_bytes'] == (4 + 3 * 4) * 800).all()


def test_bad_dims_exit_one(workspace):
    _, config = workspace
    assert main(['--config', config, '--dims', '3xq', '--no-progress']) == 1


def test_missing_input_exit_one(workspace):
    tmp_path, config = workspace
    assert main(['--config', config, '--input', str(tmp_path / 'nope.tns'), '--no-progress']) == 1


def test_invalid_configuration_exit_one(workspace):
    _, config = workspace
    assert main(['--config', config, *BASE, '--threads', '0']) == 1


def test_unexpected_error_exit_two(workspace, monkeypatch):
    _, config = workspace

    def boom(_config):
        raise RuntimeError("kernel exploded")

    monkeypatch.setattr(kestrel_main, 'run_benchmark', boom)
    assert main(['--config', config, *BASE]) == 2


def test_unknown_variant_rejected_by_parser(workspace):
    _, config = workspace
    with pytest.raises(SystemExit):
        main(['--config', config, '--variant', 'segmented'])
