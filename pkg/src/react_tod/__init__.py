"""ReAct tool-calling engine and evaluation workbench for task-oriented dialogue."""

__version__ = "0.1.0"
