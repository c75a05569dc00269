"""rewardlab: a desk-scale reward-learning and planning workbench.

Pipeline in one sentence: synthesize human/robot clip datasets from a toy
tabletop simulator, train a contrastive reward model that also organizes
robot failures into learnable failure prompts via spherical k-means
pseudo-labels, then plan with random shooting and CEM against that reward.
"""

__version__ = "0.1.0"
