"""Build the optional compiled kernel extension.

The package works without it (pure-numpy fallback is selected at import
time), so a failed extension build should not fail the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "dispatchclust._kernels._core",
        sources=["src/dispatchclust/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level="3")
except Exception as exc:  # pragma: no cover - degraded build path
    import sys

    print(f"dispatchclust: skipping compiled kernels ({exc!r}); "
          "the pure-python backend will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
