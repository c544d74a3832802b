"""Heavy-tailed breach-risk modeling toolkit.

Library layout mirrors the analysis pipeline: ``catalog`` ingests event
data, ``distributions`` holds the numerical kernels, ``evt`` and
``severity`` estimate tail and severity dynamics, ``frequency`` the event
rate, ``projection`` the compound-process forecasts, ``firmsize`` the
size-scaling analyses, and ``montecarlo`` the shared simulation /
bootstrap engine.  ``cli`` is the command-line frontend.
"""

__version__ = "0.1.0"
