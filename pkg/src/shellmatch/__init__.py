"""Dense non-rigid shape correspondence by hierarchical alignment of smooth shells."""
from .config import RunConfig
from .errors import InputError, ShellMatchError
from .mesh import PointMap, TriMesh
from .meshio import load_mesh, save_mesh
from .pipeline import MatchResult, hierarchical_match
from .run import match_shapes

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "InputError", "ShellMatchError", "PointMap", "TriMesh", "load_mesh",
    "save_mesh", "MatchResult", "hierarchical_match", "match_shapes",
]
