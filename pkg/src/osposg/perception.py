"""Perception adapters: a percept table keyed by region, or a ReLU classifier.

Both are evaluated once, at load time, on every environment point; the model
then only keeps the resulting ``(loc1, point) -> percept`` table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass
class TablePerception:
    table: np.ndarray  # (n_loc, n_regions) percept index

    @classmethod
    def from_document(cls, doc: Mapping, loc1, per1, regions) -> "TablePerception":
        from osposg.model import ModelValidationError

        table = np.full((len(loc1), len(regions)), -1, dtype=np.int64)
        for loc, row in doc.items():
            if loc not in loc1:
                raise ModelValidationError(f"perception.table.{loc}", "unknown loc1")
            for region, percept in row.items():
                if region not in regions:
                    raise ModelValidationError(f"perception.table.{loc}.{region}", "unknown region")
                if percept not in per1:
                    raise ModelValidationError(f"perception.table.{loc}.{region}", f"unknown percept {percept!r}")
                table[loc1.index(loc), regions.index(region)] = per1.index(percept)
        missing = np.argwhere(table < 0)
        if len(missing):
            l, r = missing[0]
            raise ModelValidationError(f"perception.table.{loc1[l]}.{regions[r]}", "no percept")
        return cls(table)

    def materialize(self, coords, region_of, n_loc) -> np.ndarray:
        return self.table[:, region_of]

    @staticmethod
    def table_from(model) -> dict:
        out = {}
        for l, loc in enumerate(model.loc1):
            row = {}
            for r, region in enumerate(model.regions):
                first = np.flatnonzero(model.region_of == r)[0]
                row[region] = model.per1[model.perception[l, first]]
            out[loc] = row
        return out

    def to_document(self, model) -> dict:
        return {"table": self.table_from(model)}


@dataclass
class ReluNetwork:
    """Fully connected ReLU network; the last layer is linear."""

    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=float))
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h

    def classify(self, x: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.logits(x), axis=1)

    @classmethod
    def from_document(cls, doc: Mapping) -> "ReluNetwork":
        ws, bs = [], []
        for layer in doc["layers"]:
            w = np.asarray(layer["weights"], dtype=float)
            b = np.asarray(layer["bias"], dtype=float)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                from osposg.model import ModelParseError

                raise ModelParseError("mlp layer: weights must be (out, in) and bias (out,)")
            ws.append(w)
            bs.append(b)
        return cls(ws, bs)

    def to_document(self) -> dict:
        return {"layers": [{"weights": w.tolist(), "bias": b.tolist()}
                           for w, b in zip(self.weights, self.biases)]}


@dataclass
class MlpPerception:
    """Percept = argmax class of a ReLU network at the point's coordinates.

    ``networks`` maps each local state to its network; a single shared network
    is stored under every local state.
    """

    networks: list[ReluNetwork]
    classes: list[int]  # output class -> percept index
    shared: bool = True

    @classmethod
    def from_document(cls, doc: Mapping, loc1: Sequence[str], per1: Sequence[str]) -> "MlpPerception":
        from osposg.model import ModelValidationError

        def classes_of(d):
            try:
                return [per1.index(c) for c in d["classes"]]
            except ValueError as exc:
                raise ModelValidationError("perception.mlp.classes", str(exc)) from None

        if "layers" in doc:
            net = ReluNetwork.from_document(doc)
            return cls([net] * len(loc1), classes_of(doc), shared=True)
        nets, classes = [], None
        for loc in loc1:
            if loc not in doc:
                raise ModelValidationError(f"perception.mlp.{loc}", "no network")
            nets.append(ReluNetwork.from_document(doc[loc]))
            c = classes_of(doc[loc])
            if classes is not None and c != classes:
                raise ModelValidationError(f"perception.mlp.{loc}", "class lists differ")
            classes = c
        return cls(nets, classes, shared=False)

    def materialize(self, coords, region_of, n_loc) -> np.ndarray:
        classes = np.asarray(self.classes)
        return np.stack([classes[net.classify(coords)] for net in self.networks])

    def to_document(self, model) -> dict:
        names = [model.per1[c] for c in self.classes]
        if self.shared:
            return {"mlp": {**self.networks[0].to_document(), "classes": names}}
        return {"mlp": {loc: {**net.to_document(), "classes": names}
                        for loc, net in zip(model.loc1, self.networks)}}
