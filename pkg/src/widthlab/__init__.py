"""Width-scaling laboratory for wide leaky-ReLU classifiers."""

__version__ = "0.1.0"
