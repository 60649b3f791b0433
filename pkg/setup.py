"""Builds the optional compiled kernel extension.

The package is fully functional without it (a numpy fallback is selected
at import time), so a failed compilation must not abort installation.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        ["src/superliouville/_kernels/_core.pyx"],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    include_dirs = [np.get_include()]
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"superliouville: compiled kernels skipped ({exc!r})")
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
