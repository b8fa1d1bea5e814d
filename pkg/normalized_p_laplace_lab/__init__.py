import logging

__version__ = "0.1.0"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message).1000s"


def configure_logging(level: str | int = logging.INFO) -> None:
    logging.basicConfig(format=LOG_FORMAT, level=level)
