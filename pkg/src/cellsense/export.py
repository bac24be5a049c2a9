"""Plain-text artifacts shared by the staged command-line workflow."""

import json
from pathlib import Path

import numpy as np

CSI_HEADER = "frame_index,group_k,group_l,stream,re,im"


def write_csi_csv(path, values: np.ndarray) -> None:
    """Write CSI of shape (n_frames, n_streams, n_k, n_l) one value per row.

    ``group_k``/``group_l`` index the frequency/time position of an RE group
    (PBCH) or of a pilot subcarrier/symbol (CRS).
    """
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 4:
        raise ValueError("CSI must have shape (n_frames, n_streams, n_k, n_l)")
    nf, ns, nk, nl = values.shape
    f, s, k, l = np.meshgrid(np.arange(nf), np.arange(ns), np.arange(nk), np.arange(nl),
                             indexing="ij")
    table = np.column_stack([f.ravel(), k.ravel(), l.ravel(), s.ravel()])
    with open(path, "w") as fh:
        fh.write(CSI_HEADER + "\n")
        for (fi, ki, li, si), v in zip(table, values.ravel()):
            fh.write(f"{fi},{ki},{li},{si},{v.real:.9g},{v.imag:.9g}\n")


def read_csi_csv(path) -> np.ndarray:
    """Inverse of :func:`write_csi_csv`; missing entries are zero."""
    with open(path) as fh:
        header = fh.readline().strip()
    if header != CSI_HEADER:
        raise ValueError(f"{path}: unexpected CSI header {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no CSI rows")
    idx = data[:, :4].astype(np.int64)
    f, k, l, s = idx.T
    out = np.zeros((f.max() + 1, s.max() + 1, k.max() + 1, l.max() + 1), np.complex128)
    out[f, s, k, l] = data[:, 4] + 1j * data[:, 5]
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
