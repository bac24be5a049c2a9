"""LTE downlink signal generation and reconstruction."""

from .cell import (CellConfig, CellIdentity, cell_layout, generate_crs, known_region, map_frame,
                   map_frames, modulate_pbch, reconstruct_pbch_sequence, validate_cells)
from .grid import ReMap, ResourceGrid, Role, read_grid, write_grid
from .mib import MibPayload, encode_mib
from .sequences import crs_subcarrier_offset, generate_pss, generate_sss, gold_sequence

__all__ = [
    "CellConfig", "CellIdentity", "MibPayload", "ReMap", "ResourceGrid", "Role",
    "cell_layout", "crs_subcarrier_offset", "encode_mib", "generate_crs", "generate_pss",
    "generate_sss", "gold_sequence", "known_region", "map_frame", "map_frames",
    "modulate_pbch", "read_grid", "reconstruct_pbch_sequence", "validate_cells", "write_grid",
]
