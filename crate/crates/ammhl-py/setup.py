"""Builds the `ammhl` extension by invoking cargo on the bindings crate.

The usual Rust build backends are not assumed to be installed; plain
setuptools plus a cargo subprocess is enough for a cdylib that does not
link libpython.
"""

import os
import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

CRATE_DIR = Path(__file__).parent.resolve()


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            [
                "cargo",
                "build",
                "--release",
                "--manifest-path",
                str(CRATE_DIR / "Cargo.toml"),
            ],
            check=True,
        )
        target = os.environ.get("CARGO_TARGET_DIR")
        target_dir = Path(target) if target else CRATE_DIR.parent.parent / "target"
        built = target_dir / "release" / "libammhl.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[Extension("ammhl", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
