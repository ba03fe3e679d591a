"""Neural model server implementing the contrastive-editing wire protocol."""

__version__ = "0.1.0"
