class HistCondenseError(Exception):
    """Base class for errors raised by histcondense."""
