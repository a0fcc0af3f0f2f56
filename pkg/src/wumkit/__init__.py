"""Web usage mining toolkit: synthetic traffic, sessionization, learners and anomaly detection."""

__version__ = "0.1.0"
