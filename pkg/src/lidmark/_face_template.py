"""Canonical 68-point face template in unit coordinates.

Generated by scripts/regen_face_template.py; edit that script, not this
file. Ordering: jaw 0-16, right brow 17-21, left brow 22-26, nose 27-35,
right eye 36-41, left eye 42-47, mouth 48-67."""

import numpy as np

FACE_TEMPLATE_68 = np.array([
    (0.160000000000, 0.480000000000),
    (0.166533004663, 0.558036128806),
    (0.185880958946, 0.633073372946),
    (0.217300331817, 0.702228093208),
    (0.259583694397, 0.762842712475),
    (0.311106120773, 0.812587844921),
    (0.369887632996, 0.849551813005),
    (0.433669290515, 0.872314112161),
    (0.500000000000, 0.880000000000),
    (0.566330709485, 0.872314112161),
    (0.630112367004, 0.849551813005),
    (0.688893879227, 0.812587844921),
    (0.740416305603, 0.762842712475),
    (0.782699668183, 0.702228093208),
    (0.814119041054, 0.633073372946),
    (0.833466995337, 0.558036128806),
    (0.840000000000, 0.480000000000),
    (0.245000000000, 0.355000000000),
    (0.298750000000, 0.340857864376),
    (0.352500000000, 0.335000000000),
    (0.406250000000, 0.340857864376),
    (0.460000000000, 0.355000000000),
    (0.540000000000, 0.355000000000),
    (0.593750000000, 0.340857864376),
    (0.647500000000, 0.335000000000),
    (0.701250000000, 0.340857864376),
    (0.755000000000, 0.355000000000),
    (0.500000000000, 0.420000000000),
    (0.500000000000, 0.466666666667),
    (0.500000000000, 0.513333333333),
    (0.500000000000, 0.560000000000),
    (0.430000000000, 0.600000000000),
    (0.465000000000, 0.615000000000),
    (0.500000000000, 0.625000000000),
    (0.535000000000, 0.615000000000),
    (0.570000000000, 0.600000000000),
    (0.293000000000, 0.420000000000),
    (0.334333333333, 0.392000000000),
    (0.375666666667, 0.392000000000),
    (0.417000000000, 0.420000000000),
    (0.375666666667, 0.448000000000),
    (0.334333333333, 0.448000000000),
    (0.707000000000, 0.420000000000),
    (0.665666666667, 0.392000000000),
    (0.624333333333, 0.392000000000),
    (0.583000000000, 0.420000000000),
    (0.624333333333, 0.448000000000),
    (0.665666666667, 0.448000000000),
    (0.375000000000, 0.740000000000),
    (0.425000000000, 0.712000000000),
    (0.465000000000, 0.700000000000),
    (0.500000000000, 0.705000000000),
    (0.535000000000, 0.700000000000),
    (0.575000000000, 0.712000000000),
    (0.625000000000, 0.740000000000),
    (0.575000000000, 0.772000000000),
    (0.535000000000, 0.785000000000),
    (0.500000000000, 0.788000000000),
    (0.465000000000, 0.785000000000),
    (0.425000000000, 0.772000000000),
    (0.410000000000, 0.740000000000),
    (0.460000000000, 0.728000000000),
    (0.500000000000, 0.730000000000),
    (0.540000000000, 0.728000000000),
    (0.590000000000, 0.740000000000),
    (0.540000000000, 0.755000000000),
    (0.500000000000, 0.758000000000),
    (0.460000000000, 0.755000000000),
], dtype=np.float64)
