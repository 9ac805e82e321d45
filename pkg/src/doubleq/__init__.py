"""Q-learning, Double Q-learning, DQN and Double DQN with overestimation analysis tools."""

__version__ = "0.1.0"
