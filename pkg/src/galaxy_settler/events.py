"""Impulse event log: the canonical campaign artifact.

One row per burn.  Vehicles are reconstructed from rows alone: a
vehicle's first event starts at its parent star's state (pods instead
inherit their host ship's in-flight state; the host is the vehicle-id
prefix before "-P").  The settlement tree and all scoring derive from
this file, never the other way around.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GalaxyError

__all__ = ["Event", "EventLog", "write_events", "read_events", "VEHICLE_KINDS"]

VEHICLE_KINDS = ("mothership", "pod", "fastship", "settler")

CSV_COLUMNS = ["event_id", "vehicle_id", "vehicle_kind", "parent_star",
               "target_star", "t_myr", "dvx", "dvy", "dvz", "note"]


@dataclass
class Event:
    """A single impulsive burn of one vehicle."""

    event_id: int
    vehicle_id: str
    vehicle_kind: str
    parent_star: int  # star the vehicle departed from; -1 for in-flight pods
    target_star: int  # star this vehicle is working toward; -1 if n/a
    t_myr: float
    dv: np.ndarray  # km/s
    note: str = ""

    def __post_init__(self):
        self.dv = np.asarray(self.dv, dtype=float).copy()
        if self.vehicle_kind not in VEHICLE_KINDS:
            raise GalaxyError(f"unknown vehicle kind {self.vehicle_kind!r}")

    @property
    def dv_mag(self):
        return float(np.linalg.norm(self.dv))

    def host_vehicle(self):
        """For pods, the vehicle id of the carrying ship."""
        if self.vehicle_kind != "pod":
            return None
        return self.vehicle_id.rsplit("-P", 1)[0]


class EventLog(list):
    """Ordered event collection with convenience accessors."""

    def by_vehicle(self):
        out = {}
        for ev in self:
            out.setdefault(ev.vehicle_id, []).append(ev)
        for rows in out.values():
            rows.sort(key=lambda e: (e.t_myr, e.event_id))
        return out

    def total_dv(self):
        return float(sum(ev.dv_mag for ev in self))


def write_events(events, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for ev in events:
            writer.writerow([ev.event_id, ev.vehicle_id, ev.vehicle_kind,
                             ev.parent_star, ev.target_star, repr(ev.t_myr),
                             repr(float(ev.dv[0])), repr(float(ev.dv[1])),
                             repr(float(ev.dv[2])), ev.note])


def read_events(path) -> EventLog:
    path = Path(path)
    log = EventLog()
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise GalaxyError(f"cannot open event log {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CSV_COLUMNS:
            raise GalaxyError(f"{path}: bad event log header")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise GalaxyError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields")
            try:
                log.append(Event(
                    event_id=int(row[0]), vehicle_id=row[1], vehicle_kind=row[2],
                    parent_star=int(row[3]), target_star=int(row[4]),
                    t_myr=float(row[5]),
                    dv=np.array([float(row[6]), float(row[7]), float(row[8])]),
                    note=row[9],
                ))
            except (ValueError, GalaxyError) as exc:
                raise GalaxyError(f"{path}:{lineno}: {exc}") from None
    return log
