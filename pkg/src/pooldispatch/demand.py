"""Request model, request file ingestion, sub-sampling and pre-booking split."""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, TextIO, Tuple

from .network import Network


class Kind(str, Enum):
    ON_DEMAND = "od"
    PRE_BOOKED = "pb"


class DemandError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Request:
    """One customer trip demand.

    For on-demand requests the request time equals the earliest pick-up time;
    pre-booked requests are known before the operating day starts, so their
    request time is 0.
    """
    id: int
    origin: str
    destination: str
    request_time: float
    earliest_pickup: float
    kind: Kind
    direct_time: float
    direct_distance: float

    def __post_init__(self):
        if self.origin == self.destination:
            raise DemandError(f"request {self.id}: origin equals destination ({self.origin!r})")
        if self.kind is Kind.ON_DEMAND and self.request_time != self.earliest_pickup:
            raise DemandError(f"request {self.id}: on-demand requests need request time == earliest pickup")
        if self.kind is Kind.PRE_BOOKED and self.request_time != 0.0:
            raise DemandError(f"request {self.id}: pre-booked requests need request time 0")
        if not self.direct_time > 0.0:
            raise DemandError(f"request {self.id}: direct travel time must be positive")


def make_request(req_id: int, origin: str, destination: str, earliest_pickup: float,
                 kind: Kind, net: Network) -> Request:
    """Build a request with cached direct travel time and distance."""
    if origin == destination:
        raise DemandError(f"request {req_id}: origin equals destination ({origin!r})")
    direct_tt = net.travel_time(origin, destination)
    direct_d = net.travel_distance(origin, destination)
    request_time = 0.0 if kind is Kind.PRE_BOOKED else float(earliest_pickup)
    return Request(
        id=req_id,
        origin=origin,
        destination=destination,
        request_time=request_time,
        earliest_pickup=float(earliest_pickup),
        kind=kind,
        direct_time=direct_tt,
        direct_distance=direct_d,
    )


REQUEST_HEADER = ["request_id", "origin_node", "destination_node", "earliest_pickup_s", "kind"]


def load_requests(source: TextIO, net: Network) -> List[Request]:
    """Parse the request CSV.

    Header: request_id,origin_node,destination_node,earliest_pickup_s,kind
    with kind in {od, pb, auto}. Rows with kind=auto are loaded as on-demand
    and are meant to be re-partitioned with :func:`split_prebooking`.

    :raises DemandError: parse problems (with line number), unknown nodes,
        duplicate ids or origin == destination
    """
    reader = csv.reader(source)
    header = next(reader, None)
    requests: List[Request] = []
    if header is None:
        return requests
    header = [h.strip() for h in header]
    if header != REQUEST_HEADER:
        raise DemandError(f"requests CSV: expected header {','.join(REQUEST_HEADER)!r}, got {','.join(header)!r}")
    seen_ids = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        row = [c.strip() for c in row]
        if len(row) != 5:
            raise DemandError(f"requests CSV line {lineno}: expected 5 fields")
        try:
            rid = int(row[0])
            t_e = float(row[3])
        except ValueError as exc:
            raise DemandError(f"requests CSV line {lineno}: {exc}") from None
        if rid in seen_ids:
            raise DemandError(f"requests CSV line {lineno}: duplicate request id {rid}")
        seen_ids.add(rid)
        kind_token = row[4]
        if kind_token == "od" or kind_token == "auto":
            kind = Kind.ON_DEMAND
        elif kind_token == "pb":
            kind = Kind.PRE_BOOKED
        else:
            raise DemandError(f"requests CSV line {lineno}: kind must be od, pb or auto, got {kind_token!r}")
        try:
            requests.append(make_request(rid, row[1], row[2], t_e, kind, net))
        except (DemandError, ValueError) as exc:
            raise DemandError(f"requests CSV line {lineno}: {exc}") from None
    requests.sort(key=lambda r: r.id)
    return requests


def request_kind_tokens(source: TextIO) -> dict:
    """Raw kind token per request id (od, pb or auto); auto rows are the ones
    subject to the pre-booking split."""
    reader = csv.reader(source)
    header = next(reader, None)
    tokens = {}
    if header is None:
        return tokens
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        tokens[int(row[0].strip())] = row[4].strip()
    return tokens


def subsample(requests: List[Request], fraction: float, seed: int) -> List[Request]:
    """Keep each request independently with probability `fraction` (seeded)."""
    if not 0.0 < fraction <= 1.0:
        raise DemandError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(requests)
    rng = random.Random(f"{seed}/subsample")
    return [r for r in requests if rng.random() < fraction]


def split_prebooking(requests: List[Request], share: float, seed: int) -> Tuple[List[Request], List[Request]]:
    """Randomly partition requests into (on_demand, pre_booked).

    Each request is marked pre-booked independently with probability `share`.
    Pre-booked copies get request time 0 while the earliest pick-up time keeps
    the original trip time.
    """
    if not 0.0 <= share <= 1.0:
        raise DemandError(f"share must be in [0, 1], got {share}")
    rng = random.Random(f"{seed}/split")
    on_demand: List[Request] = []
    pre_booked: List[Request] = []
    for r in requests:
        if rng.random() < share:
            pre_booked.append(replace(r, kind=Kind.PRE_BOOKED, request_time=0.0))
        else:
            on_demand.append(replace(r, kind=Kind.ON_DEMAND, request_time=r.earliest_pickup))
    return on_demand, pre_booked
