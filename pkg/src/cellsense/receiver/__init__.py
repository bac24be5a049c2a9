"""Cell search, MIB decoding and channel estimation."""

from .estimation import (CsiSeries, ReGroup, compensate_cfo, crs_ls_estimate, joint_ls_estimate,
                         measure_rsrp, re_groups)
from .search import CellInfo, Detection, decode_mib, detect_cell, rank_cells, sic_cell_search

__all__ = [
    "CellInfo", "CsiSeries", "Detection", "ReGroup", "compensate_cfo", "crs_ls_estimate",
    "decode_mib", "detect_cell", "joint_ls_estimate", "measure_rsrp", "rank_cells", "re_groups",
    "sic_cell_search",
]
