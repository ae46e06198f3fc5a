"""Distribution network description and its YAML scenario format.

Scenario file layout::

    power_base_mva: 10.0
    slack_voltage: [1.0, 0.0]          # real, imaginary (pu)
    transformer_bus: d
    evcs_buses: [a, b, c]              # resource order of the game
    buses:
      - {id: head, kind: slack}
      - {id: d, kind: transformer}
      - {id: a, kind: evcs, base_load_kw: 2500.0}
    lines:
      - {from: head, to: d, impedance: [0.01, 0.02]}    # series r, x in pu
      - {from: d, to: a, admittance: [8.0, -16.0]}      # or series g, b in pu
    pricing: {eta: 0.005, rho_kwh: 3.0, fd_step_kw: 0.1}

A line with ``impedance: [0, 0]`` is a bus tie: both ends are merged into a
single electrical node by the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

BUS_KINDS = ("slack", "transformer", "evcs", "load")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: str
    kind: str
    base_load_kw: float = 0.0

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise NetworkError(f"bus {self.id!r}: unknown kind {self.kind!r}")
        if self.base_load_kw < 0:
            raise NetworkError(f"bus {self.id!r}: base load must be >= 0")


@dataclass(frozen=True)
class Line:
    """Series branch. ``admittance is None`` marks a zero-impedance tie."""

    from_bus: str
    to_bus: str
    admittance: Optional[complex]

    @property
    def is_tie(self) -> bool:
        return self.admittance is None


@dataclass(frozen=True)
class PricingConfig:
    eta: float
    rho_kwh: float
    fd_step_kw: float = 0.1

    def __post_init__(self):
        if not (self.eta > 0 and self.rho_kwh > 0 and self.fd_step_kw > 0):
            raise NetworkError("pricing constants must all be positive")

    def to_dict(self):
        return {"eta": self.eta, "rho_kwh": self.rho_kwh, "fd_step_kw": self.fd_step_kw}


@dataclass(frozen=True)
class GridNetwork:
    buses: tuple
    lines: tuple
    transformer_bus: str
    evcs_buses: tuple
    slack_voltage: complex = 1.0 + 0.0j
    power_base_mva: float = 10.0
    pricing: Optional[PricingConfig] = field(default=None, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "evcs_buses", tuple(self.evcs_buses))
        object.__setattr__(self, "slack_voltage", complex(self.slack_voltage))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("bus ids must be unique")
        slack = [b.id for b in self.buses if b.kind == "slack"]
        if len(slack) != 1:
            raise NetworkError(f"exactly one slack bus required, found {len(slack)}")
        known = set(ids)
        if self.transformer_bus not in known:
            raise NetworkError(f"transformer bus {self.transformer_bus!r} does not exist")
        if not self.evcs_buses:
            raise NetworkError("at least one EVCS bus is required")
        for b in self.evcs_buses:
            if b not in known:
                raise NetworkError(f"EVCS bus {b!r} does not exist")
        if len(set(self.evcs_buses)) != len(self.evcs_buses):
            raise NetworkError("EVCS buses must be distinct")
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise NetworkError(f"line {ln.from_bus}-{ln.to_bus} references an unknown bus")
            if ln.from_bus == ln.to_bus:
                raise NetworkError(f"line {ln.from_bus}-{ln.to_bus} is a self loop")
            if ln.admittance is not None and (ln.admittance == 0 or not _finite(ln.admittance)):
                raise NetworkError(f"line {ln.from_bus}-{ln.to_bus} needs a nonzero finite admittance")
        if self.power_base_mva <= 0:
            raise NetworkError("power_base_mva must be positive")
        if self._components() != 1:
            raise NetworkError("network is not connected")

    def _components(self) -> int:
        parent = {b.id: b.id for b in self.buses}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for ln in self.lines:
            parent[find(ln.from_bus)] = find(ln.to_bus)
        return len({find(b.id) for b in self.buses})

    @property
    def slack_bus(self) -> str:
        return next(b.id for b in self.buses if b.kind == "slack")

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise NetworkError(f"unknown bus {bus_id!r}")

    def base_loads(self) -> dict:
        """Base demand (kW) of every non-slack bus."""
        return {b.id: b.base_load_kw for b in self.buses if b.kind != "slack"}

    def evcs_base_loads(self) -> list:
        return [self.bus(b).base_load_kw for b in self.evcs_buses]

    def scaled(self, factor: float) -> "GridNetwork":
        """Copy with every line admittance multiplied by ``factor``."""
        lines = tuple(Line(ln.from_bus, ln.to_bus,
                           None if ln.is_tie else ln.admittance * factor) for ln in self.lines)
        return GridNetwork(self.buses, lines, self.transformer_bus, self.evcs_buses,
                           self.slack_voltage, self.power_base_mva, self.pricing)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        lines = []
        for ln in self.lines:
            entry = {"from": ln.from_bus, "to": ln.to_bus}
            if ln.is_tie:
                entry["impedance"] = [0.0, 0.0]
            else:
                entry["admittance"] = [ln.admittance.real, ln.admittance.imag]
            lines.append(entry)
        d = {
            "power_base_mva": self.power_base_mva,
            "slack_voltage": [self.slack_voltage.real, self.slack_voltage.imag],
            "transformer_bus": self.transformer_bus,
            "evcs_buses": list(self.evcs_buses),
            "buses": [{"id": b.id, "kind": b.kind, "base_load_kw": b.base_load_kw}
                      for b in self.buses],
            "lines": lines,
        }
        if self.pricing is not None:
            d["pricing"] = self.pricing.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridNetwork":
        try:
            buses = [Bus(str(b["id"]), b["kind"], float(b.get("base_load_kw", 0.0)))
                     for b in d["buses"]]
            lines = [_line_from_dict(ln) for ln in d["lines"]]
            sv = d.get("slack_voltage", [1.0, 0.0])
            pricing = d.get("pricing")
            return cls(
                buses=buses,
                lines=lines,
                transformer_bus=str(d["transformer_bus"]),
                evcs_buses=[str(b) for b in d["evcs_buses"]],
                slack_voltage=complex(float(sv[0]), float(sv[1])),
                power_base_mva=float(d.get("power_base_mva", 10.0)),
                pricing=PricingConfig(**{k: float(v) for k, v in pricing.items()}) if pricing else None,
            )
        except KeyError as exc:
            raise NetworkError(f"missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise NetworkError(str(exc)) from None


def _finite(z: complex) -> bool:
    return z.real == z.real and z.imag == z.imag and abs(z) != float("inf")


def _line_from_dict(ln: dict) -> Line:
    a, b = str(ln["from"]), str(ln["to"])
    if "admittance" in ln:
        g, bb = ln["admittance"]
        return Line(a, b, complex(float(g), float(bb)))
    if "impedance" in ln:
        r, x = (float(v) for v in ln["impedance"])
        if r == 0 and x == 0:
            return Line(a, b, None)
        return Line(a, b, 1.0 / complex(r, x))
    raise NetworkError(f"line {a}-{b} needs 'impedance' or 'admittance'")


def load_network(path) -> GridNetwork:
    with open(path) as fh:
        return GridNetwork.from_dict(yaml.safe_load(fh))


def save_network(net: GridNetwork, path):
    Path(path).write_text(yaml.safe_dump(net.to_dict(), sort_keys=False))


def default_scenario_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "default_grid.yaml"


def default_network() -> GridNetwork:
    return load_network(default_scenario_path())
