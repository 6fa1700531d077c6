"""Rest-to-oddball EEG network reconfiguration toolkit."""

__version__ = "0.1.0"
