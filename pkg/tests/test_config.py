import logging

import pytest

from thermo_network.simulation.integrator import IntegrationOptions
from thermo_network.utils.config import CONFIG_ENV_VAR, DEFAULT_CONFIG, LOG_LEVEL_ENV_VAR, load_config
from thermo_network.utils.logging_config import get_logger, setup_logging


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.delenv(LOG_LEVEL_ENV_VAR, raising=False)


def test_partial_file_is_merged_over_defaults(tmp_path):
    path = tmp_path / 'config.yml'
    path.write_text("integration:\n  method: rk4\naudit:\n  mole_tol: 1.0e-6\n")
    config = load_config(path)
    assert config['integration']['method'] == 'rk4'
    assert config['integration']['h0'] == DEFAULT_CONFIG['integration']['h0']
    assert config['audit']['mole_tol'] == 1e-6
    assert config['logging'] == DEFAULT_CONFIG['logging']
    assert DEFAULT_CONFIG['integration']['method'] == 'rk45'


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / 'config.yml'
    path.write_text("")
    assert load_config(path) == DEFAULT_CONFIG


def test_environment_selects_file_and_level(tmp_path, monkeypatch):
    path = tmp_path / 'other.yml'
    path.write_text("output:\n  dir: elsewhere\n")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    monkeypatch.setenv(LOG_LEVEL_ENV_VAR, 'debug')
    config = load_config()
    assert config['output']['dir'] == 'elsewhere'
    assert config['logging']['level'] == 'DEBUG'


def test_missing_explicit_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / 'absent.yml')


def test_options_from_loaded_config(tmp_path):
    path = tmp_path / 'config.yml'
    path.write_text("integration:\n  sample_dt: 0.25\n")
    options = IntegrationOptions.from_config(load_config(path), t_final=2.0)
    assert options.sample_dt == 0.25
    assert options.t_final == 2.0


def test_setup_logging_does_not_stack_handlers(tmp_path):
    config = {'logging': {'level': 'DEBUG', 'file': str(tmp_path / 'logs' / 'run.log')}}
    root = logging.getLogger()
    setup_logging(config)
    setup_logging(config)
    ours = [h for h in root.handlers if getattr(h, '_thermo_network_handler', False)]
    assert len(ours) == 2
    assert sum(isinstance(h, logging.FileHandler) for h in ours) == 1
    get_logger('test').debug("written to the file")
    for handler in root.handlers:
        handler.flush()
    assert "written to the file" in (tmp_path / 'logs' / 'run.log').read_text()
    assert get_logger('test').name == 'thermo_network.test'


def test_logging_without_file(tmp_path):
    setup_logging({'logging': {'level': 'warning', 'file': None}})
    assert logging.getLogger('thermo_network').level == logging.WARNING
