import os
import sys
import types
from pathlib import Path

# Inside a CMake build tree the extension sits next to its target, not in an
# installed package; stitch the package together from both places.
_ext_dir = os.environ.get("GRADLEAK_EXTENSION_DIR")
if _ext_dir:
    sys.path.insert(0, _ext_dir)
    import _gradleak

    pkg_dir = Path(__file__).resolve().parents[1] / "gradleak"
    pkg = types.ModuleType("gradleak")
    pkg.__path__ = [str(pkg_dir)]
    sys.modules["gradleak"] = pkg
    sys.modules["gradleak._gradleak"] = _gradleak
    exec(compile((pkg_dir / "__init__.py").read_text(), str(pkg_dir / "__init__.py"), "exec"), pkg.__dict__)
