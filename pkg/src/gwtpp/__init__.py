"""Recurrent temporal point processes regularized toward a nonparametric sequence kernel."""

__version__ = "0.1.0"

from .core import Dataset, DataError, Event, EventSequence, load_dataset, save_dataset  # noqa: E402

__all__ = ["Dataset", "DataError", "Event", "EventSequence", "load_dataset", "save_dataset", "__version__"]
