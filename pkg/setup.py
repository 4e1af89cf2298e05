"""Build script: compiles the optional Cython kernel core.

The package works without the extension (the numpy backend is selected at
import time); set DUALGR_SKIP_EXT=1 to force a pure-Python install.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DUALGR_SKIP_EXT", "0") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "dualgr._kernels._core",
                    ["src/dualgr/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
