"""Roll dynamics analysis: CSST frequency responses, characteristic values,
rating statistics and rating prediction models."""

__version__ = "0.1.0"
