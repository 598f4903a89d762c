import sys

from setuptools import Extension, setup

# The compiled kernels are optional: if Cython (or a C compiler) is missing
# the package installs anyway and falls back to the pure-Python kernels.
ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "bitfed.kernels._cykernels",
                ["src/bitfed/kernels/_cykernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("warning: Cython not available, building without compiled kernels", file=sys.stderr)

setup(ext_modules=ext_modules)
