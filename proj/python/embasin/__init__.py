"""EM for the symmetric two-component spherical Gaussian mixture.

Thin re-export of the compiled extension. The installed wheel places the
extension inside this package; a build-tree checkout puts it on sys.path
directly, so fall back to a top-level import in that layout.
"""

try:
    from embasin._core import *  # noqa: F401,F403
    from embasin._core import __doc__ as _core_doc
except ImportError:  # build tree, extension next to the interpreter path
    from _core import *  # noqa: F401,F403
    from _core import __doc__ as _core_doc

__doc__ = (__doc__ or "") + "\n\n" + (_core_doc or "")
__version__ = "0.1.0"
