"""
Utility helper functions for the NEFEM flow solver.
Contains the generated-mesh cache and report formatting utilities.
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from core.mesh import Mesh
from core.nurbs import NurbsCurve

MeshKey = Tuple[str, int, Optional[int], Optional[float]]


class MeshCache:
    """Keeps generated benchmark meshes so a study builds each grid once."""

    def __init__(self):
        self._cache: Dict[MeshKey, Tuple[Mesh, NurbsCurve]] = {}

    def store(self, key: MeshKey, mesh: Mesh, curve: NurbsCurve):
        """Store a generated mesh and its wall curve."""
        self._cache[key] = (mesh, curve)

    def get(self, key: MeshKey) -> Optional[Tuple[Mesh, NurbsCurve]]:
        """Get a cached (mesh, curve) pair."""
        return self._cache.get(key)

    def clear(self):
        self._cache.clear()


def format_report(title: str, items: Sequence[Tuple[str, object]]) -> str:
    """
    Format a titled list of key/value lines.

    Args:
        title: First line of the report
        items: (label, value) pairs; floats use 6 significant digits

    Returns:
        Multi-line report string
    """
    width = max((len(label) for label, _ in items), default=0)
    lines = [title]
    for label, value in items:
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        lines.append(f"  {label.ljust(width)} : {text}")
    return "\n".join(lines)


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Align rows under a header.

    Args:
        header: Column names
        rows: Row values; floats are printed with 6 significant digits

    Returns:
        Table with one line per row
    """
    cells: List[List[str]] = [list(header)]
    for row in rows:
        cells.append([f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def truncate_message(text: str, max_length: int = 200) -> str:
    """
    Truncate a message to a maximum length with ellipsis.

    Args:
        text: Message to truncate
        max_length: Maximum length before truncation

    Returns:
        Truncated message
    """
    if len(text) > max_length:
        return text[:max_length] + "..."
    return text


# Global cache instance
mesh_cache = MeshCache()
