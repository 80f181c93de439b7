from setuptools import Extension, setup

# The compiled kernel is optional: if Cython (or a C compiler) is missing the
# package falls back to the pure-numpy implementation at import time.
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fiberopt._kernels",
                ["src/fiberopt/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
