"""contredit: minimal, fluent edits that flip a classifier to a contrast label."""

__version__ = "0.1.0"
