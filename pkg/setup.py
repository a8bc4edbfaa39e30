"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-Python backend is selected
at import time), so a failed compile only costs speed, not functionality.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
pyx = "src/modelfluid/kernels/_core.pyx"
if os.path.exists(pyx):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "modelfluid.kernels._core",
                    [pyx],
                    include_dirs=[np.get_include()],
                )
            ],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
