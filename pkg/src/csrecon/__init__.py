"""Configuration-space reconstruction toolkit for a planar 2-link arm.

Pipeline: obstacle scenarios -> collision-free / colliding joint samples ->
image-conditioned gaussian-means WGAN-GP reconstruction -> topology-based
evaluation (geometry score with complement augmentation) -> generator-biased
RRT planning.
"""

__version__ = "0.1.0"
