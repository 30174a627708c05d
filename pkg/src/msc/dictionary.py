"""The ``Dictionary`` value type and its on-disk form.

A dictionary is stored as an MSC1 matrix of atoms plus a JSON sidecar next to
it (same stem, ``.json`` suffix) holding the shape, the modality blocks of a
joint dictionary and free-form provenance (solver, seed, coupling weights).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError
from .tensor import as_matrix, gram, load_matrix, save_matrix

NORM_SLACK = 1e-12


@dataclass(frozen=True)
class ModalityBlock:
    """Rows ``[row_start, row_end)`` of a joint atom belong to modality ``name``.

    ``weight`` is the scale applied to that modality when it was stacked into
    the joint input (``1/sqrt(dim)`` for joint coding).
    """

    name: str
    row_start: int
    row_end: int
    weight: float

    @property
    def dim(self) -> int:
        return self.row_end - self.row_start

    def to_dict(self):
        return {"name": self.name, "row_start": self.row_start,
                "row_end": self.row_end, "weight": self.weight}


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: np.ndarray
    modality_blocks: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        atoms = as_matrix(self.atoms, "atoms").copy()
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "modality_blocks", tuple(self.modality_blocks))
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms > 1.0 + NORM_SLACK):
            worst = int(np.argmax(norms))
            raise ArgumentError(f"atom {worst} has norm {norms[worst]!r} > 1")
        if self.modality_blocks:
            pos = 0
            for b in self.modality_blocks:
                if b.row_start != pos or b.row_end <= b.row_start:
                    raise ArgumentError("modality blocks must partition the atom rows")
                pos = b.row_end
            if pos != atoms.shape[0]:
                raise ArgumentError("modality blocks must cover every atom row")

    @property
    def atom_dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        g = np.ascontiguousarray(gram(self.atoms))
        g.setflags(write=False)
        return g

    def block(self, name) -> ModalityBlock:
        for b in self.modality_blocks:
            if b.name == name:
                return b
        raise ArgumentError(f"unknown modality {name!r}")

    def atom_norms(self) -> np.ndarray:
        return np.linalg.norm(self.atoms, axis=0)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_dictionary(d: Dictionary, path, **extra) -> None:
    save_matrix(d.atoms, path)
    meta = {
        "atom_dim": d.atom_dim,
        "num_atoms": d.num_atoms,
        "modality_blocks": [b.to_dict() for b in d.modality_blocks],
    }
    meta.update(d.meta)
    meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dictionary(path) -> tuple[Dictionary, dict]:
    """Load atoms and sidecar; returns ``(dictionary, raw_metadata)``."""
    atoms = load_matrix(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing dictionary metadata {side}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{side}: {exc}") from exc
    if (meta.get("atom_dim"), meta.get("num_atoms")) != atoms.shape:
        raise FormatError(f"{side}: shape does not match {path}")
    blocks = tuple(
        ModalityBlock(b["name"], int(b["row_start"]), int(b["row_end"]), float(b["weight"]))
        for b in meta.get("modality_blocks", [])
    )
    extra = {k: v for k, v in meta.items()
             if k not in ("atom_dim", "num_atoms", "modality_blocks")}
    return Dictionary(atoms, blocks, extra), meta
