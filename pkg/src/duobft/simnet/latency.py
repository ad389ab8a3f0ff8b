"""Region latency matrices for the simulator.

``wan10`` approximates a ten-region deployment from three published bands:
North American pairs under 30 ms round trip, North America to Europe under
150 ms, Canada to South East Asia around 240 ms. Every other pair is an
interpolation chosen to sit inside those bands; treat results as shaped by
this approximation, not as measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations


@dataclass(frozen=True)
class LatencyMatrix:
    name: str
    regions: tuple[str, ...]
    rtt: dict  # frozenset({a, b}) or (a,) -> round trip in ms
    approximate: bool = False

    def __post_init__(self) -> None:
        for r in self.regions:
            if (r,) not in self.rtt:
                raise ValueError(f"missing diagonal for {r}")
        for a, b in combinations(self.regions, 2):
            pair = frozenset((a, b))
            if pair not in self.rtt:
                raise ValueError(f"missing pair {a}-{b}")
            if self.rtt[pair] < max(self.rtt[(a,)], self.rtt[(b,)]):
                raise ValueError(f"off-diagonal {a}-{b} below diagonal")

    def round_trip(self, a: str, b: str) -> int:
        return self.rtt[(a,)] if a == b else self.rtt[frozenset((a, b))]

    def one_way(self, a: str, b: str) -> int:
        return max(1, self.round_trip(a, b) // 2)


def _matrix(name: str, regions: list[str], diag: int, pairs: dict, approximate: bool):
    rtt = {(r,): diag for r in regions}
    for (a, b), ms in pairs.items():
        rtt[frozenset((a, b))] = ms
    return LatencyMatrix(name, tuple(regions), rtt, approximate)


def unit_matrix() -> LatencyMatrix:
    """Single region, every hop (self included) takes one millisecond."""
    return _matrix("unit", ["unit"], 2, {}, False)


WAN_REGIONS = [
    "east-us", "west-us", "south-central-us", "central-us", "canada-central",
    "canada-east", "uk-south", "north-europe", "west-europe", "southeast-asia",
]

_NA = WAN_REGIONS[:6]
_EU = WAN_REGIONS[6:9]
_SEA = "southeast-asia"


def _wan_pairs() -> dict:
    pairs = {}
    # North America: all under 30 ms; longer for coast-to-coast-ish pairs
    na_rtt = {
        ("east-us", "west-us"): 28, ("east-us", "south-central-us"): 22,
        ("east-us", "central-us"): 18, ("east-us", "canada-central"): 16,
        ("east-us", "canada-east"): 18, ("west-us", "south-central-us"): 24,
        ("west-us", "central-us"): 22, ("west-us", "canada-central"): 29,
        ("west-us", "canada-east"): 29, ("south-central-us", "central-us"): 16,
        ("south-central-us", "canada-central"): 26, ("south-central-us", "canada-east"): 28,
        ("central-us", "canada-central"): 20, ("central-us", "canada-east"): 24,
        ("canada-central", "canada-east"): 10,
    }
    pairs.update(na_rtt)
    eu_rtt = {("uk-south", "north-europe"): 14, ("uk-south", "west-europe"): 10,
              ("north-europe", "west-europe"): 18}
    pairs.update(eu_rtt)
    # North America to Europe: under 150 ms, east coast closest
    base = {"east-us": 80, "canada-east": 85, "canada-central": 95, "central-us": 105,
            "south-central-us": 115, "west-us": 140}
    eu_extra = {"uk-south": 0, "west-europe": 6, "north-europe": 4}
    for na in _NA:
        for eu in _EU:
            pairs[(na, eu)] = min(148, base[na] + eu_extra[eu])
    # South East Asia: Canada about 240 ms, the rest interpolated
    sea = {"canada-central": 240, "canada-east": 245, "east-us": 230, "central-us": 200,
           "south-central-us": 205, "west-us": 170, "uk-south": 170, "north-europe": 180,
           "west-europe": 165}
    for r, ms in sea.items():
        pairs[(r, _SEA)] = ms
    return pairs


def wan10_matrix() -> LatencyMatrix:
    return _matrix("wan10", WAN_REGIONS, 2, _wan_pairs(), True)


BUILTIN = {"unit": unit_matrix, "wan10": wan10_matrix}


def builtin(name: str) -> LatencyMatrix:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown latency matrix {name!r}; known: {sorted(BUILTIN)}") from None


def assign_regions(matrix: LatencyMatrix, replicas: int, clients: int) -> dict[int, str]:
    """Round-robin placement: replica 0 (the first primary) lands in the first region.

    Replica ids are 0..replicas-1 and client ids follow them.
    """
    regions = matrix.regions
    placement = {r: regions[r % len(regions)] for r in range(replicas)}
    for c in range(clients):
        placement[replicas + c] = regions[c % len(regions)]
    return placement
