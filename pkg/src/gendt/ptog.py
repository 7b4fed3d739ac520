"""Physical twin observation graph: runs x process states x sensor series.

The graph is immutable after construction and safe to share across concurrent
readers. Vertices are (run, state) pairs; a vertex may exist without a stored
measurement series (the measurement has not been received), but a stored
series always implies a vertex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import GendtError

SCHEMA_VERSION = 1


class PtogError(GendtError):
    """Graph construction or persistence failure."""


class DuplicateVertex(PtogError):
    """Two manifest entries or series target the same (run, state)."""


class MissingSeriesFile(PtogError):
    """A referenced sample file does not exist."""


class NonFiniteSample(PtogError):
    """A sample is NaN, infinite, or unparseable."""


class SensorMismatch(PtogError):
    """One process state was mapped to two different sensors."""


class SchemaVersionMismatch(PtogError):
    """A persisted graph was written with an unsupported schema version."""


@dataclass(frozen=True, order=True)
class RunId:
    """1-based chronological run index."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise PtogError(f"run index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class StateId:
    """Process state within a run, e.g. index 1 with label 'P1'."""

    index: int
    label: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise PtogError(f"state index must be >= 1, got {self.index}")
        if not self.label:
            raise PtogError("state label must be non-empty")


@dataclass(frozen=True)
class SensorId:
    name: str
    unit: str


@dataclass(frozen=True)
class MeasurementSeries:
    """One sensor trace for a single (run, state) vertex."""

    run: RunId
    state: StateId
    sensor: SensorId
    sample_rate_hz: float
    samples: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(float(v) for v in self.samples))
        if self.sample_rate_hz <= 0:
            raise PtogError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if not self.samples:
            raise PtogError(f"series for run {self.run.index} {self.state.label} has no samples")
        for i, v in enumerate(self.samples):
            if not math.isfinite(v):
                raise NonFiniteSample(
                    f"non-finite sample at position {i} in run {self.run.index} {self.state.label}"
                )

    @property
    def length(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Ptog:
    """Validated observation graph. Treat all mappings as read-only."""

    runs: tuple[RunId, ...]
    states: tuple[StateId, ...]
    sensors: Mapping[StateId, SensorId]
    vertices: frozenset[tuple[RunId, StateId]]
    series: Mapping[tuple[RunId, StateId], MeasurementSeries]
    run_metadata: Mapping[RunId, Mapping[str, float]] = field(default_factory=dict)

    @classmethod
    def from_series(
        cls,
        series: Iterable[MeasurementSeries],
        run_metadata: Optional[Mapping[int, Mapping[str, float]]] = None,
        empty_vertices: Iterable[tuple[RunId, StateId]] = (),
    ) -> "Ptog":
        """Assemble and validate a graph from measurement series.

        `empty_vertices` declares (run, state) pairs that exist in the process
        timeline but carry no measurement yet; absence stays explicit instead
        of being modeled as an empty series.
        """
        series_map: dict[tuple[RunId, StateId], MeasurementSeries] = {}
        sensors: dict[StateId, SensorId] = {}
        labels: dict[str, StateId] = {}
        indices: dict[int, StateId] = {}

        def register_state(state: StateId) -> None:
            known = labels.get(state.label)
            if known is not None and known != state:
                raise PtogError(f"state label {state.label!r} bound to two different indices")
            known = indices.get(state.index)
            if known is not None and known != state:
                raise PtogError(f"state index {state.index} bound to two different labels")
            labels[state.label] = state
            indices[state.index] = state

        for s in series:
            key = (s.run, s.state)
            if key in series_map:
                raise DuplicateVertex(f"duplicate series for run {s.run.index} {s.state.label}")
            register_state(s.state)
            assigned = sensors.get(s.state)
            if assigned is None:
                sensors[s.state] = s.sensor
            elif assigned != s.sensor:
                raise SensorMismatch(
                    f"state {s.state.label} mapped to sensors {assigned.name!r} and {s.sensor.name!r}"
                )
            series_map[key] = s

        vertices = set(series_map)
        for run, state in empty_vertices:
            register_state(state)
            sensors.setdefault(state, SensorId("unassigned", ""))
            vertices.add((run, state))

        run_set = {r for r, _ in vertices}
        metadata: dict[RunId, dict[str, float]] = {}
        for run_index, meta in (run_metadata or {}).items():
            if not meta:
                continue
            rid = run_index if isinstance(run_index, RunId) else RunId(int(run_index))
            if rid not in run_set:
                raise PtogError(f"metadata for unknown run {rid.index}")
            metadata[rid] = {str(k): float(v) for k, v in meta.items()}

        return cls(
            runs=tuple(sorted(run_set)),
            states=tuple(sorted(labels.values(), key=lambda s: s.index)),
            sensors=sensors,
            vertices=frozenset(vertices),
            series=series_map,
            run_metadata=metadata,
        )

    def _coerce_run(self, run: Union[RunId, int]) -> RunId:
        return run if isinstance(run, RunId) else RunId(int(run))

    def _coerce_state(self, state: Union[StateId, str]) -> Optional[StateId]:
        if isinstance(state, StateId):
            return state
        return self.state_by_label(state)

    def state_by_label(self, label: str) -> Optional[StateId]:
        for s in self.states:
            if s.label == label:
                return s
        return None

    def get_series(
        self, run: Union[RunId, int], state: Union[StateId, str]
    ) -> Optional[MeasurementSeries]:
        """Stored series for a vertex, or None. Absence is a value, not an error."""
        sid = self._coerce_state(state)
        if sid is None:
            return None
        return self.series.get((self._coerce_run(run), sid))

    def has_vertex(self, run: Union[RunId, int], state: Union[StateId, str]) -> bool:
        sid = self._coerce_state(state)
        return sid is not None and (self._coerce_run(run), sid) in self.vertices

    def runs_with_series(self, state: StateId) -> tuple[RunId, ...]:
        """Runs that carry a measurement for `state`, in chronological order."""
        return tuple(r for r in self.runs if (r, state) in self.series)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_series(self) -> int:
        return len(self.series)

    def to_dict(self) -> dict:
        states_doc = [
            {
                "index": s.index,
                "label": s.label,
                "sensor": {"name": self.sensors[s].name, "unit": self.sensors[s].unit},
            }
            for s in self.states
        ]
        runs_doc = [
            {"index": r.index, "metadata": dict(self.run_metadata.get(r, {}))} for r in self.runs
        ]
        series_doc = [
            {
                "run": key[0].index,
                "state": key[1].index,
                "sample_rate_hz": s.sample_rate_hz,
                "samples": list(s.samples),
            }
            for key, s in sorted(self.series.items(), key=lambda kv: (kv[0][0], kv[0][1].index))
        ]
        extra = sorted(
            [r.index, s.index] for (r, s) in self.vertices if (r, s) not in self.series
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "states": states_doc,
            "runs": runs_doc,
            "series": series_doc,
            "extra_vertices": extra,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Ptog":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"expected schema_version {SCHEMA_VERSION}, got {version!r}")
        try:
            states = {}
            sensors = {}
            for s in doc["states"]:
                sid = StateId(int(s["index"]), str(s["label"]))
                states[sid.index] = sid
                sensors[sid] = SensorId(str(s["sensor"]["name"]), str(s["sensor"]["unit"]))
            metadata = {
                int(r["index"]): {k: float(v) for k, v in r.get("metadata", {}).items()}
                for r in doc["runs"]
            }
            series = [
                MeasurementSeries(
                    run=RunId(int(e["run"])),
                    state=states[int(e["state"])],
                    sensor=sensors[states[int(e["state"])]],
                    sample_rate_hz=float(e["sample_rate_hz"]),
                    samples=tuple(e["samples"]),
                )
                for e in doc["series"]
            ]
            extra = [(RunId(int(r)), states[int(s)]) for r, s in doc.get("extra_vertices", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise PtogError(f"malformed graph document: {exc}") from exc
        return cls.from_series(series, run_metadata=metadata, empty_vertices=extra)


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset-manifest row; csv_path None declares a series-less vertex."""

    run: int
    state_label: str
    sensor: str
    unit: str
    sample_rate_hz: float
    csv_path: Optional[str]
    metadata: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "ManifestEntry":
        try:
            return cls(
                run=int(doc["run"]),
                state_label=str(doc["state_label"]),
                sensor=str(doc["sensor"]),
                unit=str(doc["unit"]),
                sample_rate_hz=float(doc["sample_rate_hz"]),
                csv_path=None if doc.get("csv_path") is None else str(doc["csv_path"]),
                metadata={str(k): float(v) for k, v in doc.get("metadata", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PtogError(f"malformed manifest entry: {exc}") from exc


def load_manifest(path: Union[str, Path]) -> list[ManifestEntry]:
    doc = json.loads(Path(path).read_text())
    entries = doc["entries"] if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise PtogError("manifest must be a list of entries or {'entries': [...]}")
    return [ManifestEntry.from_mapping(e) for e in entries]


def read_samples_csv(path: Union[str, Path]) -> tuple[float, ...]:
    """Single-column header-less CSV of decimal samples."""
    p = Path(path)
    if not p.exists():
        raise MissingSeriesFile(str(p))
    values = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError as exc:
            raise NonFiniteSample(f"{p}:{lineno}: unparseable sample {line!r}") from exc
        if not math.isfinite(v):
            raise NonFiniteSample(f"{p}:{lineno}: non-finite sample {line!r}")
        values.append(v)
    if not values:
        raise PtogError(f"{p}: series file is empty")
    return tuple(values)


def build_ptog(
    manifest: Union[str, Path, Sequence[Union[ManifestEntry, Mapping]]],
    base_dir: Optional[Union[str, Path]] = None,
) -> Ptog:
    """Build a validated graph from a dataset manifest.

    `manifest` is a JSON file path or an in-memory entry list. Relative
    csv_path values resolve against the manifest's directory (or `base_dir`).
    State indices are assigned by first appearance, runs sorted chronologically.
    """
    if isinstance(manifest, (str, Path)):
        if base_dir is None:
            base_dir = Path(manifest).parent
        entries = load_manifest(manifest)
    else:
        entries = [e if isinstance(e, ManifestEntry) else ManifestEntry.from_mapping(e) for e in manifest]
    base = Path(base_dir) if base_dir is not None else Path(".")

    state_ids: dict[str, StateId] = {}
    for e in entries:
        if e.state_label not in state_ids:
            state_ids[e.state_label] = StateId(len(state_ids) + 1, e.state_label)

    seen: set[tuple[int, str]] = set()
    series: list[MeasurementSeries] = []
    empty_vertices: list[tuple[RunId, StateId]] = []
    metadata: dict[int, dict[str, float]] = {}
    sensor_by_state: dict[str, SensorId] = {}
    for e in entries:
        key = (e.run, e.state_label)
        if key in seen:
            raise DuplicateVertex(f"duplicate manifest entry for run {e.run} state {e.state_label}")
        seen.add(key)
        sensor = SensorId(e.sensor, e.unit)
        assigned = sensor_by_state.setdefault(e.state_label, sensor)
        if assigned != sensor:
            raise SensorMismatch(
                f"state {e.state_label} mapped to sensors {assigned.name!r} and {sensor.name!r}"
            )
        state = state_ids[e.state_label]
        if e.csv_path is None:
            empty_vertices.append((RunId(e.run), state))
        else:
            csv_path = Path(e.csv_path)
            if not csv_path.is_absolute():
                csv_path = base / csv_path
            series.append(
                MeasurementSeries(
                    run=RunId(e.run),
                    state=state,
                    sensor=sensor,
                    sample_rate_hz=e.sample_rate_hz,
                    samples=read_samples_csv(csv_path),
                )
            )
        if e.metadata:
            metadata.setdefault(e.run, {}).update(e.metadata)

    return Ptog.from_series(series, run_metadata=metadata, empty_vertices=empty_vertices)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_ptog(ptog: Ptog, path: Union[str, Path]) -> None:
    """Write the graph as one self-describing JSON document (canonical key order)."""
    Path(path).write_text(canonical_json(ptog.to_dict()) + "\n")


def load_ptog(path: Union[str, Path]) -> Ptog:
    return Ptog.from_dict(json.loads(Path(path).read_text()))
