"""
KESTREL Configuration & Logging
Shared YAML configuration loading and tagged subsystem loggers
"""

import copy
import logging
import os

import yaml
from dotenv import load_dotenv

DEFAULT_CONFIG = {
    'system': {
        'name': 'KESTREL',
        'version': '1.0.0',
        'description': 'Sparse Tensor CP Decomposition & MTTKRP Benchmarks'
    },
    'directories': {
        'tensors': './data/tensors/',
        'reports': './data/processed/reports/',
        'plots': './data/processed/plots/'
    },
    'precision': {
        'float_bytes': 8,
        'ordinal_bytes': 8
    },
    'mttkrp': {
        'profile': 'cpu-like',
        'nzptm': 128,
        'chunk_size': 1
    },
    'sorting': {
        'counting_sort_ratio': 8
    },
    'als': {
        'rank': 16,
        'max_iters': 10,
        'fit_tolerance': 1e-4,
        'regularization': 0.0,
        'seed': 42
    },
    'bench': {
        'iters': 10,
        'variants': ['blocked', 'perm'],
        'threads': [1, 4],
        'peak_gbps': None,
        'stream_array_mb': 256,
        'stream_repetitions': 10,
        'format': 'csv',
        'out': './data/processed/reports/kestrel_bench.csv',
        'warmup': True
    },
    'oracle': {
        'dense_cap': 1000000
    },
    'logging': {
        'level': 'INFO',
        'file': 'logs/kestrel.log'
    }
}


def get_logger(name, tag):
    """Return a module logger with a tagged console handler, installed once"""
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(f'🪶 KESTREL-{tag} [%(levelname)s]: %(message)s')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
        logger.propagate = False
    return logger


logger = get_logger(__name__, 'CONFIG')


def merge_configs(default, user):
    """Recursively merge user config into default config"""
    for key, value in user.items():
        if key in default:
            if isinstance(default[key], dict) and isinstance(value, dict):
                merge_configs(default[key], value)
            else:
                default[key] = value
        else:
            default[key] = value
    return default


def resolve_config_path(config_file=None):
    """CLI path wins, then KESTREL_CONFIG (a .env file is honored), then ./config.yaml"""
    if config_file:
        return config_file
    load_dotenv()
    return os.environ.get('KESTREL_CONFIG', 'config.yaml')


def load_configuration(config_file=None):
    """Load system configuration merged over the built-in defaults"""
    config = copy.deepcopy(DEFAULT_CONFIG)
    config_path = resolve_config_path(config_file)

    if os.path.exists(config_path):
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                user_config = yaml.safe_load(f) or {}
            if not isinstance(user_config, dict):
                raise ValueError("top level of the config file must be a mapping")
            merge_configs(config, user_config)
            logger.info(f"Configuration loaded from: {config_path}")
        except Exception as e:
            logger.warning(f"Failed to load config file: {e}, using defaults")
            config = copy.deepcopy(DEFAULT_CONFIG)
    else:
        logger.debug(f"No config file at {config_path}, using defaults")

    return config


def setup_logging(config):
    """Initialize system-wide logging for CLI runs"""
    log_config = config.get('logging', {})
    log_file = log_config.get('file')
    level = getattr(logging, str(log_config.get('level', 'INFO')).upper(), logging.INFO)

    formatter = logging.Formatter(
        'KESTREL [%(levelname)s] %(asctime)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handlers = []
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    root = logging.getLogger()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)

    # Subsystem loggers keep their own console handler; they also feed the file
    for name in list(logging.root.manager.loggerDict):
        if name.startswith('kestrel_') or name == '__main__':
            sub = logging.getLogger(name)
            sub.setLevel(level)
            for handler in handlers:
                if handler not in sub.handlers:
                    sub.addHandler(handler)

    return logging.getLogger('kestrel_main')
