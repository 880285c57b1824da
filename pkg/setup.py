"""Build hook for the optional Cython time-stepper core.

The package works without the extension (a NumPy fallback is selected at
import); building it makes long-horizon simulations and MCMC several times
faster.
"""
import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "fracdengue._core",
        ["src/fracdengue/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
