from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "gridsentry.kernels._ckernels",
                ["src/gridsentry/kernels/_ckernels.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python only, kernels fall back at import.
    ext_modules = []

setup(ext_modules=ext_modules)
