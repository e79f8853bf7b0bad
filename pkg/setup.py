"""Build script: compiles the optional Cython simulation kernel.

The package works without the extension (a NumPy fallback kernel is
selected at import time); set FLEXNNSIM_NO_EXT=1 to skip the build.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("FLEXNNSIM_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/flexnnsim/pesim/_kernel.pyx"],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
