"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: ``ickalman.kernels``
falls back to the pure-NumPy implementation when ``ickalman._kernels`` is
missing. Building is therefore best-effort; a missing compiler or Cython
degrades to a pure-Python install instead of failing.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the accelerator extension if possible, otherwise skip it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: skipping compiled kernels ({exc}); "
                  "pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "pure-Python fallback will be used")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError as exc:
        print(f"warning: {exc}; building without compiled kernels")
        return []
    return cythonize(
        [
            Extension(
                "ickalman._kernels",
                sources=["src/ickalman/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
