import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "dashcrash._kernels._native",
                sources=["src/dashcrash/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # Build failure falls back to the pure-python kernels at import.
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
