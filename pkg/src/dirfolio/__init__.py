"""Dirichlet-policy reinforcement learning for daily portfolio allocation.

Subpackages and modules:

- ``panel``: CSV ingestion, panel tensor, returns, z-scores, splits
- ``simplex``: Dirichlet distribution, masking, capped-simplex projection
- ``env``: portfolio MDP with cost and risk shaped reward
- ``autodiff``: reverse-mode tensor library, layers, Adam
- ``policy``: temporal encoder + cross-sectional attention + Dirichlet head
- ``train``: rollouts, GAE, PPO / A2C / REINFORCE, grid fine-tuning
- ``metrics`` and ``backtest``: performance battery and deterministic evaluation
- ``cli``: the ``dirfolio`` command
"""

__version__ = "0.1.0"
