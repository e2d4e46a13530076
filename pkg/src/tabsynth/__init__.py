"""Tabular data synthesis with autoregressive language models.

Pipeline: serialize a table into "Feature is Value" sentences, train or
fine-tune a generative backend on them, sample new rows under prompting
strategies, pseudo-label the rows with a backbone predictor, and evaluate
the synthetic data across privacy, low-resource, imputation, and imbalance
scenarios.
"""

__version__ = "0.1.0"
