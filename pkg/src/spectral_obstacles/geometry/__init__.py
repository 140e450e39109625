from .domains import BoundaryPoint, DomainSpec, faber_krahn_threshold, inradius
from .hausdorff import directed_hausdorff, hausdorff_distance
from .obstacles import (
    PROFILES,
    BumpObstacleSpec,
    BumpRegion,
    CellRegion,
    ObstacleRegion,
    ReferenceBump,
    bump_region,
    mapped_area,
    match_volume,
    midpoint_area,
    obstacle_region,
)
from .straighten import StraighteningMap, graph_map, straightening_map

__all__ = [
    "BoundaryPoint", "DomainSpec", "faber_krahn_threshold", "inradius",
    "directed_hausdorff", "hausdorff_distance",
    "PROFILES", "BumpObstacleSpec", "BumpRegion", "CellRegion", "ObstacleRegion",
    "ReferenceBump", "bump_region", "mapped_area", "match_volume", "midpoint_area",
    "obstacle_region",
    "StraighteningMap", "graph_map", "straightening_map",
]
