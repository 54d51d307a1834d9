import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "r2pack._kernels_cy",
                ["src/r2pack/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                # the pure-Python twin in _kernels_py is used when this
                # extension is unavailable
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )
else:
    extensions = []

setup(ext_modules=extensions)
