"""Euclidean-symmetry toolkit for control and model-based RL.

Modules:
    groups     finite matrix groups and their representations
    steerable  steerable kernel bases, intertwiners, orbit projection
    eqnet      equivariant MLPs parameterized in the intertwiner basis
    lqr        finite-horizon LQR and steerability checks for its solutions
    envs       symmetric benchmark environments
    planner    sampling-based planning and tabular value iteration
    tdmpc      joint latent-model training with planning at action time
    cli        command-line entry point
"""

__version__ = "0.1.0"
