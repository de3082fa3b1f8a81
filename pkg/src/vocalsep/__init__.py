"""Singing-voice separation with human-in-the-loop continual adaptation."""

__version__ = "0.1.0"
