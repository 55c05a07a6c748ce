"""JSON schemas for operators, states, and spectra.

Matrices: ``{"dim": D, "data": [[re, im], ...]}`` with D*D entries in
row-major order.  Spectra add eigenvalues as [re, im] pairs plus the
biorthonormal mode matrices and their symmetry-sector labels.
"""
from __future__ import annotations

import json

import numpy as np

from .liouvillian import Spectrum


def matrix_to_json(mat: np.ndarray) -> dict:
    m = np.asarray(mat, complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    flat = m.reshape(-1)
    return {
        "dim": int(m.shape[0]),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    dim = int(obj["dim"])
    data = np.array(obj["data"], float)
    if data.shape != (dim * dim, 2):
        raise ValueError(f"matrix payload has shape {data.shape}, want ({dim*dim}, 2)")
    return (data[:, 0] + 1j * data[:, 1]).reshape(dim, dim)


def spectrum_to_json(spec: Spectrum) -> dict:
    return {
        "dim": spec.dim,
        "eigenvalues": [[float(l.real), float(l.imag)] for l in spec.eigenvalues],
        "sectors": [list(s) if isinstance(s, tuple) else s for s in spec.sectors],
        "right_modes": [matrix_to_json(R) for R in spec.right_modes],
        "left_modes": [matrix_to_json(L) for L in spec.left_modes],
    }


def spectrum_from_json(obj: dict) -> Spectrum:
    lams = np.array([complex(re, im) for re, im in obj["eigenvalues"]])
    sectors = [tuple(s) if isinstance(s, list) else s for s in obj["sectors"]]
    return Spectrum(
        dim=int(obj["dim"]),
        eigenvalues=lams,
        right_modes=np.array([matrix_from_json(R) for R in obj["right_modes"]]),
        left_modes=np.array([matrix_from_json(L) for L in obj["left_modes"]]),
        sectors=sectors,
    )


def dump(obj: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
