"""Builds the _symmetria extension by driving the project's CMake build.

Metadata lives in pyproject.toml; this file only wires the extension so that
`pip install -e . --no-build-isolation` works without extra build backends.
"""

import os
import subprocess
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = os.path.abspath(os.path.dirname(__file__))
        out_dir = os.path.abspath(os.path.dirname(self.get_ext_fullpath(ext.name)))
        build_temp = os.path.abspath(self.build_temp)
        os.makedirs(build_temp, exist_ok=True)
        cmake_args = [
            "-DCMAKE_BUILD_TYPE=Release",
            "-DSYMMETRIA_PYTHON=ON",
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
            f"-DPython3_EXECUTABLE={sys.executable}",
        ]
        subprocess.run(["cmake", "-S", source_dir, "-B", build_temp] + cmake_args, check=True)
        subprocess.run(
            ["cmake", "--build", build_temp, "--target", "_symmetria", "-j"], check=True
        )


setup(
    ext_modules=[CMakeExtension("_symmetria")],
    cmdclass={"build_ext": CMakeBuild},
)
