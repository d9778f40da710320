"""CogTutor: adaptive tutoring conversations from programming-video transcripts."""

__version__ = "0.1.0"
