"""Build script. The compiled kernels are optional: if Cython or a C compiler
is missing the install falls back to the pure-python backend."""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if we can, otherwise warn and move on."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: compiled kernels skipped ({exc}); "
                  "using pure-python backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "using pure-python backend")


ext_modules = []
if os.environ.get("FRACGAUSS_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("fracgauss._kernels", ["src/fracgauss/_kernels.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("warning: Cython not found; using pure-python backend")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
