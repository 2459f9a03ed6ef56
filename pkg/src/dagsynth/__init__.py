"""DAG-structured GAN for synthetic tabular data."""

__version__ = "0.1.0"
