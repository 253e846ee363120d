"""Landmark/identifier watermarking toolkit for proactive face forensics.

Embeds a composite payload (normalized facial geometry plus a hashed source
identifier) into face images, simulates distortions and proxy face swaps, and
reads detection, localization and tracing verdicts back out of a single
decoded payload.
"""

__version__ = "0.1.0"
