"""Build script for the compiled kernel extension.

The extension is optional at runtime: advgait falls back to pure-Python
kernels when the compiled module is missing (see advgait.backend).
``-ffp-contract=off`` keeps the C arithmetic bit-compatible with the
numpy fallback (no fused multiply-add).
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "advgait._core",
        ["src/advgait/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
