"""sivctl entry point: logging setup, signal handling and command dispatch"""

import signal
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main as cli_main


CONSOLE_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}"
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}"


def _setup_logging(settings: Optional[Dict[str, Any]] = None):
    """Configure logging from the logging section of the run configuration"""
    settings = settings or {}
    logger.remove()  # Remove default handler

    # Console logging
    logger.add(
        sys.stderr,
        format=CONSOLE_FORMAT,
        level=settings.get('level', 'INFO'),
        colorize=True
    )

    # File logging
    if settings.get('file_logging', False):
        log_dir = Path(settings.get('directory', 'logs'))
        log_dir.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_dir / "sivctl_{time}.log",
            format=FILE_FORMAT,
            level='DEBUG',
            rotation=settings.get('rotation', '10 MB'),
            retention=settings.get('retention', 5)
        )


def _signal_handler(signum, frame):
    logger.warning(f"Received signal {signum}, stopping")
    raise KeyboardInterrupt


def main() -> int:
    _setup_logging()
    signal.signal(signal.SIGINT, _signal_handler)
    if hasattr(signal, 'SIGTERM'):
        signal.signal(signal.SIGTERM, _signal_handler)

    try:
        return cli_main(sys.argv[1:], configure_logging=_setup_logging)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
