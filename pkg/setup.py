"""Build script: compiles the optional simplex kernel when Cython is present.

`pip install .` works without Cython or a C compiler; the package then runs on
the pure-Python kernel (see lmpsim/solvers/__init__.py).
"""

import os

import numpy as np
from setuptools import setup

ext_modules = []
if os.path.exists("src/lmpsim/solvers/_simplex_c.pyx"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/lmpsim/solvers/_simplex_c.pyx"],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )
        for ext in ext_modules:
            ext.include_dirs.append(np.get_include())
            ext.extra_compile_args = ["-O2", "-ffp-contract=off"]
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
