"""Build script: compiles the projected-SOR sweep kernel if a toolchain exists.

The package works without the extension (a pure-Python sweep with identical
semantics is selected at import time), so a failed compile only costs speed.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            warnings.warn(f"building the compiled SOR kernel failed ({exc}); "
                          "falling back to the pure-Python sweep")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"building {ext.name} failed ({exc}); "
                          "falling back to the pure-Python sweep")


extensions = [
    Extension(
        "tgfem._kernels._sor",
        ["src/tgfem/_kernels/_sor.pyx"],
        extra_compile_args=["-O3"],
    )
]

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})
except ImportError:
    warnings.warn("Cython not available; installing with the pure-Python SOR sweep")
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
