from setuptools import Extension, setup

# The stride-2 filter-bank kernels are compiled with Cython when available.
# Without the extension the package falls back to the vectorized numpy
# kernels at import time, so a pure-Python install still works.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "strokewave.dwt._kernels",
                ["src/strokewave/dwt/_kernels.pyx"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
