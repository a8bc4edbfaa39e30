"""Feature-based fluid representation and entrainer-distillation toolkit.

Physically interpretable VLE features (boiling points, infinite-dilution
activity coefficients and slopes, vaporization enthalpies, pressure) mapped
to Margules + two-parameter Antoine models, with a tailored column
simulator, a three-column entrainer flowsheet, NQ Pareto optimization,
hypothetical-entrainer feature optimization and candidate ranking on top.
"""

__version__ = "0.1.0"

from .kernels import BACKEND_NAME as kernel_backend  # noqa: F401
