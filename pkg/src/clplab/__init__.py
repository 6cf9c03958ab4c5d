"""Conditional multi-objective policies on finite contextual bandits.

Modules
-------
weightings    KL-mixing map and Dirichlet weighting sampler
env           finite multi-reward bandits
policy        softmax policies with named parameter segments
conditioning  parameter bundles, mixing, soups and logit mixing
trainer       REINFORCE and exact-gradient training
oracle        closed-form optimal policies, values and regret
theory        logit-mixing sub-optimality bound and fuzzing
evaluation    Pareto fronts, dominance and spread
experiments   verification suites shared by the CLI and tests
cli           command-line entry point
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
