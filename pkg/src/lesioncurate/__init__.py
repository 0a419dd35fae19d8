"""Seed selection and generated-image curation for long-tailed image datasets."""

__version__ = "0.1.0"
