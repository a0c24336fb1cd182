"""``<out>.meta`` sidecar files: resolved settings plus library versions."""

import platform

import numpy as np
import scipy

from . import __version__


def write_meta(path, lines):
    with open(str(path) + ".meta", "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
        fh.write("library_version=%s\n" % __version__)
        fh.write("numpy_version=%s\n" % np.__version__)
        fh.write("scipy_version=%s\n" % scipy.__version__)
        fh.write("python_version=%s\n" % platform.python_version())


def read_meta(path):
    """Parse a sidecar back into a dict of strings."""
    out = {}
    with open(str(path) + ".meta", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, v = line.split("=", 1)
                out[k] = v
    return out
