"""Split Q-learning with reward-processing bias profiles."""
