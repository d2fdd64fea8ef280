"""Adaptive reduced-order digital twin for incremental sheet forming.

Submodules: ``dataset``, ``reduction``, ``toolpath``, ``plant``, ``koopman``,
``qp``, ``mpc``, ``adapt``, ``manifest``, ``report`` and ``cli``.
"""

__version__ = "0.1.0"
