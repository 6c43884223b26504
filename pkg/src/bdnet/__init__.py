"""Imperceptible backdoor perturbation masks for small convolutional
classifiers: generation, poisoned training (before-training and
during-updating), evaluation metrics, and test-time defenses."""

__version__ = "0.1.0"
