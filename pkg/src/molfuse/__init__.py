"""Multimodal relational pretraining and fusion for molecular property
prediction.

Molecular graphs are encoded by message-passing networks whose pairwise
similarity distributions are aligned to fixed per-modality target
similarity distributions during pretraining; downstream prediction then
combines the pretrained replicas by early (target-level), intermediate
(embedding-level) or late (decision-level) fusion.
"""

__version__ = "0.1.0"
