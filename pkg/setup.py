"""Build script for the optional compiled moment-matching kernel.

The package is pure Python plus one Cython extension holding the hot
inner loops of Gaussian moment matching.  If Cython or a C compiler is
unavailable the extension is skipped and the numpy fallback is used at
import time, so installation never fails on the extension's account.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, otherwise continue without it."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # compiler missing or broken toolchain
            print(f"warning: skipping compiled extension ({exc!r})")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc!r}); "
                  "the numpy fallback will be used")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "gpds_ep._moment_cy",
                ["src/gpds_ep/_moment_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
