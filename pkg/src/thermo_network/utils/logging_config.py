import logging
from typing import Dict
from pathlib import Path

_HANDLER_TAG = "_thermo_network_handler"


def setup_logging(config: Dict) -> None:
    """
    Set up logging configuration for the application.

    Args:
        config: Dictionary containing logging configuration settings
            Expected format:
            {
                'logging': {
                    'level': 'INFO',
                    'file': 'data/logs/thermo_network.log',
                }
            }
            A null or empty 'file' disables the file handler.
    """
    level_name = config['logging']['level'].upper()
    level = getattr(logging, level_name)

    root_logger = logging.getLogger()
    # Repeated CLI invocations in one process must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root_logger.removeHandler(handler)
            handler.close()

    file_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_formatter = logging.Formatter('%(message)s')

    handlers = []
    log_path = config['logging'].get('file')
    if log_path:
        log_file = Path(log_path)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(str(log_file))
        file_handler.setFormatter(file_formatter)
        file_handler.setLevel(level)
        handlers.append(file_handler)

    # Console only gets warnings and errors; results go to stdout
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(console_formatter)
    console_handler.setLevel(logging.WARNING)
    handlers.append(console_handler)

    root_logger.setLevel(level)
    for handler in handlers:
        setattr(handler, _HANDLER_TAG, True)
        root_logger.addHandler(handler)

    logger = logging.getLogger('thermo_network')
    logger.setLevel(level)

    if level_name == 'DEBUG':
        debug_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        for handler in handlers:
            if isinstance(handler, logging.FileHandler):
                handler.setFormatter(debug_formatter)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Name of the module requesting the logger

    Returns:
        Logger instance configured for the module
    """
    return logging.getLogger(f'thermo_network.{name}')
