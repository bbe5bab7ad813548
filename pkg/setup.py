"""Build hook: compiles the optional vote-tally extension when Cython is available.

The package is fully functional without the extension (``banyan.tally``
falls back to the pure-Python twin at import time).  Set BANYAN_NO_EXT=1
to skip the compiled lane entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("BANYAN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "banyan._tally_ext",
                    ["src/banyan/_tally_ext.pyx"],
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
