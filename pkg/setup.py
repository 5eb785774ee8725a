import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # sdist without Cython: pure-Python backend only
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("GEOSMD_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                "geosmd._kernels",
                ["src/geosmd/_kernels.pyx"],
                extra_compile_args=["-O2"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
