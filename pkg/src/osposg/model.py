"""Finite one-sided partially observable stochastic games.

A game is given by the partially informed agent's local states and percepts,
both action sets, a finite set of environment points grouped into regions, a
deterministic perception function, the local and environment transition
functions, a reward table and a discount factor.

Internally every name is replaced by an integer index.  The agent state
``(loc1, per1)`` is encoded as ``loc1 * n_per + per1``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from osposg.perception import MlpPerception, TablePerception

PROB_TOL = 1e-9


class ModelParseError(ValueError):
    """The model document is not well formed."""


class ModelValidationError(ValueError):
    """The model violates an invariant; ``path`` names the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class AgentState:
    loc1: str
    per1: str


class Transitions(NamedTuple):
    """All joint transitions out of one state ``(s1, e)``, flattened."""

    a1: np.ndarray
    a2: np.ndarray
    s1_next: np.ndarray
    e_next: np.ndarray
    prob: np.ndarray


@dataclass(eq=False)
class GameModel:
    loc1: tuple[str, ...]
    per1: tuple[str, ...]
    a1: tuple[str, ...]
    a2: tuple[str, ...]
    points: tuple[str, ...]
    coords: np.ndarray                # (n_points, dim)
    regions: tuple[str, ...]
    region_of: np.ndarray             # (n_points,) region index
    perception: np.ndarray            # (n_loc, n_points) percept index
    delta1: np.ndarray                # (n_s1, n_a1, n_a2, n_loc)
    deltaE: list                      # [loc][e][a1][a2] -> (targets, probs)
    reward: np.ndarray                # (n_s1, n_points, n_a1, n_a2)
    beta: float
    init_s1: int
    init_points: np.ndarray
    init_weights: np.ndarray
    perception_adapter: Any = None
    name: str = "game"
    _trans_cache: dict = field(default_factory=dict, repr=False)
    _hash: str | None = field(default=None, repr=False)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_loc(self) -> int:
        return len(self.loc1)

    @property
    def n_per(self) -> int:
        return len(self.per1)

    @property
    def n_s1(self) -> int:
        return self.n_loc * self.n_per

    @property
    def n_a1(self) -> int:
        return len(self.a1)

    @property
    def n_a2(self) -> int:
        return len(self.a2)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    # -- naming --------------------------------------------------------------
    def s1_index(self, state: AgentState | tuple[str, str]) -> int:
        loc, per = (state.loc1, state.per1) if isinstance(state, AgentState) else state
        return self.loc1.index(loc) * self.n_per + self.per1.index(per)

    def agent_state(self, s1: int) -> AgentState:
        return AgentState(self.loc1[s1 // self.n_per], self.per1[s1 % self.n_per])

    def loc_of(self, s1: int) -> int:
        return s1 // self.n_per

    def point_index(self, point_id: str) -> int:
        try:
            return self._point_lookup[point_id]
        except AttributeError:
            self._point_lookup = {p: i for i, p in enumerate(self.points)}
            return self._point_lookup[point_id]

    @property
    def init_belief(self):
        from osposg.belief import WeightedBelief

        return WeightedBelief(self.init_s1, self.init_points.copy(), self.init_weights.copy())

    @property
    def reward_bounds(self) -> tuple[float, float]:
        return float(self.reward.min()), float(self.reward.max())

    # -- dynamics ------------------------------------------------------------
    def transitions_from(self, s1: int, e: int) -> Transitions:
        """Joint transitions from ``(s1, e)`` under every joint action."""
        key = (s1, e)
        cached = self._trans_cache.get(key)
        if cached is not None:
            return cached
        loc = s1 // self.n_per
        a1s, a2s, s1n, en, pr = [], [], [], [], []
        for a1 in range(self.n_a1):
            for a2 in range(self.n_a2):
                locs_next = np.flatnonzero(self.delta1[s1, a1, a2] > 0)
                targets, probs = self.deltaE[loc][e][a1][a2]
                for ln in locs_next:
                    pl = self.delta1[s1, a1, a2, ln]
                    pers = self.perception[ln, targets]
                    n = len(targets)
                    a1s.append(np.full(n, a1))
                    a2s.append(np.full(n, a2))
                    s1n.append(ln * self.n_per + pers)
                    en.append(targets)
                    pr.append(pl * probs)
        out = Transitions(
            np.concatenate(a1s).astype(np.int64),
            np.concatenate(a2s).astype(np.int64),
            np.concatenate(s1n).astype(np.int64),
            np.concatenate(en).astype(np.int64),
            np.concatenate(pr).astype(float),
        )
        self._trans_cache[key] = out
        return out

    def consistent_points(self, s1: int) -> np.ndarray:
        """Points whose percept, seen from ``loc(s1)``, equals ``per(s1)``."""
        return np.flatnonzero(self.perception[s1 // self.n_per] == s1 % self.n_per)

    @property
    def model_hash(self) -> str:
        if self._hash is None:
            doc = model_to_document(self)
            blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
            self._hash = hashlib.sha256(blob).hexdigest()
        return self._hash


def joint_transition(model: GameModel, s: tuple[int, int], a: tuple[int, int]) -> dict:
    """Distribution over ``(s1', e')`` after joint action ``a`` in state ``s``."""
    s1, e = s
    t = model.transitions_from(s1, e)
    mask = (t.a1 == a[0]) & (t.a2 == a[1])
    out: dict[tuple[int, int], float] = {}
    for sn, en, p in zip(t.s1_next[mask], t.e_next[mask], t.prob[mask]):
        if p > 0:
            k = (int(sn), int(en))
            out[k] = out.get(k, 0.0) + float(p)
    return out


def perceive(model: GameModel, loc1: int, e: int) -> int:
    return int(model.perception[loc1, e])


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_distribution(path: str, probs: np.ndarray) -> None:
    if len(probs) == 0:
        raise ModelValidationError(path, "empty support")
    if np.any(probs < 0):
        raise ModelValidationError(path, "negative probability")
    total = float(np.sum(probs))
    if abs(total - 1.0) > PROB_TOL:
        raise ModelValidationError(path, f"probabilities sum to {total!r}, not 1")


def validate(model: GameModel) -> GameModel:
    """Check every structural invariant; raise ModelValidationError on the first breach."""
    if not 0.0 < model.beta < 1.0:
        raise ModelValidationError("beta", f"discount {model.beta} not in (0, 1)")
    for name in ("loc1", "per1", "a1", "a2", "points"):
        vals = getattr(model, name)
        if len(vals) == 0:
            raise ModelValidationError(name, "empty set")
        if len(set(vals)) != len(vals):
            raise ModelValidationError(name, "duplicate names")
    if model.delta1.shape != (model.n_s1, model.n_a1, model.n_a2, model.n_loc):
        raise ModelValidationError("delta1", f"bad shape {model.delta1.shape}")
    for s1 in range(model.n_s1):
        st = model.agent_state(s1)
        for a1 in range(model.n_a1):
            for a2 in range(model.n_a2):
                _check_distribution(
                    f"delta1[{st.loc1},{st.per1},{model.a1[a1]},{model.a2[a2]}]",
                    model.delta1[s1, a1, a2],
                )
    for loc in range(model.n_loc):
        for e in range(model.n_points):
            for a1 in range(model.n_a1):
                for a2 in range(model.n_a2):
                    targets, probs = model.deltaE[loc][e][a1][a2]
                    _check_distribution(
                        f"deltaE[{model.loc1[loc]},{model.points[e]},{model.a1[a1]},{model.a2[a2]}]",
                        probs,
                    )
                    if len(np.unique(targets)) != len(targets):
                        raise ModelValidationError(
                            f"deltaE[{model.loc1[loc]},{model.points[e]}]", "repeated target")
    if not np.all(np.isfinite(model.reward)):
        raise ModelValidationError("reward", "non-finite reward")
    # perception and reward are constant per region
    for r in range(model.n_regions):
        members = np.flatnonzero(model.region_of == r)
        if len(members) == 0:
            raise ModelValidationError(f"regions[{model.regions[r]}]", "empty region")
        first = members[0]
        for loc in range(model.n_loc):
            bad = members[model.perception[loc, members] != model.perception[loc, first]]
            if len(bad):
                raise ModelValidationError(
                    f"perception[{model.loc1[loc]},{model.regions[r]}]",
                    f"points {model.points[first]} and {model.points[bad[0]]} map to different percepts",
                )
        diff = np.any(model.reward[:, members] != model.reward[:, first : first + 1], axis=(0, 2, 3))
        if np.any(diff):
            bad = members[np.flatnonzero(diff)[0]]
            raise ModelValidationError(
                f"reward[{model.regions[r]}]",
                f"points {model.points[first]} and {model.points[bad]} carry different rewards",
            )
    # initial belief
    w = model.init_weights
    if len(w) == 0 or np.any(w <= 0):
        raise ModelValidationError("init", "weights must be positive")
    if abs(float(w.sum()) - 1.0) > PROB_TOL:
        raise ModelValidationError("init", f"weights sum to {float(w.sum())!r}, not 1")
    if len(np.unique(model.init_points)) != len(model.init_points):
        raise ModelValidationError("init", "repeated particle")
    loc, per = model.init_s1 // model.n_per, model.init_s1 % model.n_per
    wrong = model.init_points[model.perception[loc, model.init_points] != per]
    if len(wrong):
        raise ModelValidationError(
            "init", f"point {model.points[wrong[0]]} is not perceived as {model.per1[per]}")
    return model


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------

def _names(doc: Mapping, key: str) -> tuple[str, ...]:
    vals = doc.get(key)
    if not isinstance(vals, list) or not all(isinstance(v, str) for v in vals):
        raise ModelParseError(f"'{key}' must be a list of strings")
    return tuple(vals)


def _pick(entry: Mapping, key: str, names: Sequence[str], path: str) -> list[int]:
    """Indices selected by an optional field; a missing field selects all."""
    if key not in entry:
        return list(range(len(names)))
    try:
        return [names.index(entry[key])]
    except ValueError:
        raise ModelValidationError(path, f"unknown {key} {entry[key]!r}") from None


def load_model(text: str | Mapping) -> GameModel:
    """Parse and validate a JSON model document (string or already-decoded mapping)."""
    try:
        return _load_model(text)
    except (ModelParseError, ModelValidationError):
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelParseError(f"malformed document: {exc!r}") from exc


def _load_model(text: str | Mapping) -> GameModel:
    if isinstance(text, Mapping):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ModelParseError("document must be a JSON object")
    for key in ("loc1", "per1", "a1", "a2", "points", "perception", "delta1", "deltaE", "beta", "init"):
        if key not in doc:
            raise ModelParseError(f"missing key '{key}'")
    loc1, per1, a1, a2 = (_names(doc, k) for k in ("loc1", "per1", "a1", "a2"))
    try:
        pts = doc["points"]
        point_ids = tuple(str(p["id"]) for p in pts)
        coords = np.array([[float(c) for c in p.get("coords", [])] for p in pts], dtype=float)
        region_names = [str(p.get("region", p["id"])) for p in pts]
    except (TypeError, KeyError) as exc:
        raise ModelParseError(f"malformed 'points': {exc}") from exc
    if coords.ndim != 2:
        coords = coords.reshape(len(point_ids), -1)
    regions = tuple(dict.fromkeys(region_names))
    region_of = np.array([regions.index(r) for r in region_names], dtype=np.int64)
    n_loc, n_per, n_a1, n_a2, n_pts = len(loc1), len(per1), len(a1), len(a2), len(point_ids)
    n_s1 = n_loc * n_per
    point_pos = {p: i for i, p in enumerate(point_ids)}

    # perception
    pspec = doc["perception"]
    if not isinstance(pspec, Mapping) or not ({"table", "mlp"} & set(pspec)):
        raise ModelParseError("'perception' must hold 'table' or 'mlp'")
    if "table" in pspec:
        adapter = TablePerception.from_document(pspec["table"], loc1, per1, regions)
    else:
        adapter = MlpPerception.from_document(pspec["mlp"], loc1, per1)
    perception = adapter.materialize(coords, region_of, n_loc)

    def point_idx(pid, path):
        try:
            return point_pos[pid]
        except KeyError:
            raise ModelValidationError(path, f"unknown point {pid!r}") from None

    # delta1
    delta1 = np.full((n_s1, n_a1, n_a2, n_loc), np.nan)
    for k, entry in enumerate(doc["delta1"]):
        path = f"delta1[{k}]"
        row = np.zeros(n_loc)
        for target, prob in entry["next"]:
            row[_pick({"loc1": target}, "loc1", loc1, path)[0]] += float(prob)
        for l in _pick(entry, "loc1", loc1, path):
            for p in _pick(entry, "per1", per1, path):
                for x in _pick(entry, "a1", a1, path):
                    for y in _pick(entry, "a2", a2, path):
                        delta1[l * n_per + p, x, y] = row
    missing = np.argwhere(np.isnan(delta1[..., 0]))
    if len(missing):
        s1, x, y = missing[0]
        raise ModelValidationError(
            f"delta1[{loc1[s1 // n_per]},{per1[s1 % n_per]},{a1[x]},{a2[y]}]", "no entry")

    # deltaE
    deltaE: list = [[[[None] * n_a2 for _ in range(n_a1)] for _ in range(n_pts)] for _ in range(n_loc)]
    for k, entry in enumerate(doc["deltaE"]):
        path = f"deltaE[{k}]"
        acc: dict[int, float] = {}
        for target, prob in entry["next"]:
            t = point_idx(target, path)
            acc[t] = acc.get(t, 0.0) + float(prob)
        targets = np.array(sorted(acc), dtype=np.int64)
        probs = np.array([acc[t] for t in targets], dtype=float)
        es = [point_idx(entry["point"], path)] if "point" in entry else range(n_pts)
        for l in _pick(entry, "loc1", loc1, path):
            for e in es:
                for x in _pick(entry, "a1", a1, path):
                    for y in _pick(entry, "a2", a2, path):
                        deltaE[l][e][x][y] = (targets, probs)
    for l in range(n_loc):
        for e in range(n_pts):
            for x in range(n_a1):
                for y in range(n_a2):
                    if deltaE[l][e][x][y] is None:
                        raise ModelValidationError(
                            f"deltaE[{loc1[l]},{point_ids[e]},{a1[x]},{a2[y]}]", "no entry")

    # reward
    reward = np.zeros((n_s1, n_pts, n_a1, n_a2))
    for k, entry in enumerate(doc.get("reward", [])):
        path = f"reward[{k}]"
        if "point" in entry:
            es = [point_idx(entry["point"], path)]
        elif "region" in entry:
            if entry["region"] not in regions:
                raise ModelValidationError(path, f"unknown region {entry['region']!r}")
            es = list(np.flatnonzero(region_of == regions.index(entry["region"])))
        else:
            es = list(range(n_pts))
        value = float(entry["value"])
        for l in _pick(entry, "loc1", loc1, path):
            for p in _pick(entry, "per1", per1, path):
                for x in _pick(entry, "a1", a1, path):
                    for y in _pick(entry, "a2", a2, path):
                        reward[l * n_per + p, es, x, y] = value

    init = doc["init"]
    try:
        s1 = (loc1.index(init["loc1"])) * n_per + per1.index(init["per1"])
    except (KeyError, ValueError) as exc:
        raise ModelValidationError("init", f"bad agent state: {exc}") from None
    parts = sorted((point_idx(p, "init"), float(w)) for p, w in init["particles"])
    model = GameModel(
        loc1=loc1, per1=per1, a1=a1, a2=a2,
        points=point_ids, coords=coords, regions=regions, region_of=region_of,
        perception=perception, delta1=delta1, deltaE=deltaE, reward=reward,
        beta=float(doc["beta"]), init_s1=s1,
        init_points=np.array([p for p, _ in parts], dtype=np.int64),
        init_weights=np.array([w for _, w in parts], dtype=float),
        perception_adapter=adapter, name=str(doc.get("name", "game")),
    )
    return validate(model)


def model_to_document(model: GameModel) -> dict:
    """Fully expanded JSON-ready document; ``load_model`` inverts it."""
    n_per = model.n_per
    if model.perception_adapter is not None:
        perception = model.perception_adapter.to_document(model)
    else:
        perception = {"table": TablePerception.table_from(model)}
    delta1 = []
    for s1 in range(model.n_s1):
        st = model.agent_state(s1)
        for x in range(model.n_a1):
            for y in range(model.n_a2):
                row = model.delta1[s1, x, y]
                delta1.append({
                    "loc1": st.loc1, "per1": st.per1, "a1": model.a1[x], "a2": model.a2[y],
                    "next": [[model.loc1[l], float(row[l])] for l in np.flatnonzero(row > 0)],
                })
    deltaE = []
    for l in range(model.n_loc):
        for e in range(model.n_points):
            for x in range(model.n_a1):
                for y in range(model.n_a2):
                    targets, probs = model.deltaE[l][e][x][y]
                    deltaE.append({
                        "loc1": model.loc1[l], "point": model.points[e],
                        "a1": model.a1[x], "a2": model.a2[y],
                        "next": [[model.points[t], float(p)] for t, p in zip(targets, probs)],
                    })
    reward = []
    for s1, e, x, y in zip(*np.nonzero(model.reward)):
        st = model.agent_state(s1)
        reward.append({
            "loc1": st.loc1, "per1": st.per1, "point": model.points[e],
            "a1": model.a1[x], "a2": model.a2[y], "value": float(model.reward[s1, e, x, y]),
        })
    init_state = model.agent_state(model.init_s1)
    return {
        "name": model.name,
        "loc1": list(model.loc1), "per1": list(model.per1),
        "a1": list(model.a1), "a2": list(model.a2),
        "points": [
            {"id": p, "coords": [float(c) for c in model.coords[i]],
             "region": model.regions[model.region_of[i]]}
            for i, p in enumerate(model.points)
        ],
        "perception": perception,
        "delta1": delta1, "deltaE": deltaE, "reward": reward,
        "beta": float(model.beta),
        "init": {
            "loc1": init_state.loc1, "per1": init_state.per1,
            "particles": [[model.points[p], float(w)]
                          for p, w in zip(model.init_points, model.init_weights)],
        },
    }


def build_model(
    *,
    loc1: Sequence[str],
    per1: Sequence[str],
    a1: Sequence[str],
    a2: Sequence[str],
    points: Sequence[str],
    perception: np.ndarray,
    delta1: np.ndarray,
    deltaE: list,
    reward: np.ndarray,
    beta: float,
    init_s1: int,
    init_particles: Mapping[int, float],
    coords: np.ndarray | None = None,
    region_of: np.ndarray | None = None,
    regions: Sequence[str] | None = None,
    name: str = "game",
    adapter: Any = None,
) -> GameModel:
    """Assemble a model from index-level arrays and validate it."""
    n = len(points)
    if region_of is None:
        region_of = np.arange(n)
        regions = tuple(points)
    parts = sorted(init_particles.items())
    deltaE = [
        [[[(np.asarray(t, dtype=np.int64), np.asarray(p, dtype=float)) for t, p in row]
          for row in per_e] for per_e in per_loc]
        for per_loc in deltaE
    ]
    model = GameModel(
        loc1=tuple(loc1), per1=tuple(per1), a1=tuple(a1), a2=tuple(a2),
        points=tuple(points),
        coords=np.zeros((n, 0)) if coords is None else np.asarray(coords, dtype=float),
        regions=tuple(regions), region_of=np.asarray(region_of, dtype=np.int64),
        perception=np.asarray(perception, dtype=np.int64),
        delta1=np.asarray(delta1, dtype=float), deltaE=deltaE,
        reward=np.asarray(reward, dtype=float), beta=float(beta), init_s1=int(init_s1),
        init_points=np.array([p for p, _ in parts], dtype=np.int64),
        init_weights=np.array([w for _, w in parts], dtype=float),
        perception_adapter=adapter, name=name,
    )
    return validate(model)
