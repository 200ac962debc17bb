"""Build script: compiles the optional Jacobi rotation kernel.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the eigensolver much faster. Run

    python setup.py build_ext --inplace

or simply `pip install -e . --no-build-isolation`.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "tracelab._kernels._jacobi_cy",
                ["src/tracelab/_kernels/_jacobi_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
