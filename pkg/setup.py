"""Build script for the optional compiled edit-distance kernel.

The package works without the extension: contredit.kernels falls back to the
pure-Python implementation when the compiled module is absent.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "contredit.kernels._clev",
                ["src/contredit/kernels/_clev.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
