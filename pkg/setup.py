"""Build script for the optional compiled Polya-Gamma kernel.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile degrades the install instead of
breaking it.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler/toolchain missing
            sys.stderr.write(
                f"warning: compiled PG kernel not built ({exc!r}); "
                "falling back to the pure-Python implementation\n"
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            sys.stderr.write(
                f"warning: could not compile {ext.name} ({exc!r}); "
                "falling back to the pure-Python implementation\n"
            )


def extensions():
    import numpy as np
    import numpy.random
    from Cython.Build import cythonize

    randlib = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext = Extension(
        "bgrass.pg._core",
        sources=["src/bgrass/pg/_core.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[randlib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
