import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def verbosity_level(verbose: int, default: str = "WARNING") -> int:
    """Map a count of ``-V`` flags to a logging level.

    Parameters
    ----------
    verbose : int
        Number of times ``--verbose`` was given.
    default : str
        Level name used when ``verbose`` is 0.

    Returns
    -------
    int
        INFO for one flag, DEBUG for two or more, otherwise ``default``.
    """
    if verbose >= 2:
        return logging.DEBUG
    if verbose == 1:
        return logging.INFO
    return logging.getLevelName(default.upper())


def configure_logging(level: int | str = logging.WARNING) -> logging.Logger:
    """Send the package's log records to standard error.

    Parameters
    ----------
    level : int | str
        Threshold for the ``secureabc`` logger.

    Returns
    -------
    logging.Logger
        The package logger.
    """
    logger = logging.getLogger("secureabc")
    logger.setLevel(level)
    if not any(getattr(handler, "_secureabc", False) for handler in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._secureabc = True
        logger.addHandler(handler)
    return logger
