"""Knowledge distillation as a training-efficiency tool, at desk scale."""

__version__ = "0.1.0"
