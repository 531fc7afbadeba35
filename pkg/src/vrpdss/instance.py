"""Problem instances: parameters, synthetic generation and JSON persistence.

Node indexing: 0 is the start depot, 1..c the customers and c+1 the end depot
(same physical location as node 0).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from .energy import DroneSpec, octocopter

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EARTH_RADIUS_KM = 6371.0088
DEFAULT_SPEEDS = (8.0, 10.0, 12.0, 14.0, 16.0)
EIGHT_HOURS_S = 8 * 3600.0


class InstanceError(ValueError):
    """Invalid instance data or configuration."""


class InstanceFormatError(InstanceError):
    """Instance file does not follow the schema; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class BatterySpec:
    E: float = 3516.48  # kJ
    epsilon: float = 0.8
    P_C: float = 3516.48 / 3600.0  # kJ/s

    def __post_init__(self):
        if self.E < 0 or not 0 < self.epsilon <= 1 or not self.P_C > 0:
            raise InstanceError("battery needs E >= 0, epsilon in (0, 1], P_C > 0")

    @property
    def available(self) -> float:
        return self.epsilon * self.E

    @property
    def floor(self) -> float:
        """Lowest admissible residual energy (1 - epsilon) * E."""
        return (1.0 - self.epsilon) * self.E


@dataclass(frozen=True)
class TimeParams:
    service_truck: float = 120.0
    service_drone: float = 90.0
    launch_prep: float = 60.0
    max_hover: float = EIGHT_HOURS_S
    max_stationary: float = EIGHT_HOURS_S
    max_route: float = EIGHT_HOURS_S

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise InstanceError(f"times.{f.name} must be >= 0")


@dataclass(frozen=True)
class CostParams:
    fuel_per_km: float = 0.16
    wage_per_h: float = 20.0
    energy_per_kJ: float = 0.09 / 3600.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise InstanceError(f"costs.{f.name} must be >= 0")

    @property
    def wage_per_s(self) -> float:
        return self.wage_per_h / 3600.0


Matrix = tuple[tuple[float, ...], ...]


def _as_matrix(rows) -> Matrix:
    return tuple(tuple(float(x) for x in row) for row in rows)


@dataclass(frozen=True)
class Instance:
    truck_dist: Matrix  # km
    truck_time: Matrix  # s
    drone_dist: Matrix  # m
    mass: tuple[float, ...]  # per customer 1..c, kg
    drone_eligible: tuple[bool, ...]
    speeds: tuple[float, ...] = DEFAULT_SPEEDS
    battery: BatterySpec = field(default_factory=BatterySpec)
    times: TimeParams = field(default_factory=TimeParams)
    costs: CostParams = field(default_factory=CostParams)
    n_tandems: int = 1
    n_drones: int = 1
    drone_spec: DroneSpec = field(default_factory=octocopter)
    payload: float = 5.0
    coords: Optional[tuple[tuple[float, float], ...]] = None  # (lat, lon) per node
    name: str = "instance"

    def __post_init__(self):
        for attr in ("truck_dist", "truck_time", "drone_dist"):
            object.__setattr__(self, attr, _as_matrix(getattr(self, attr)))
        object.__setattr__(self, "mass", tuple(float(m) for m in self.mass))
        object.__setattr__(self, "drone_eligible", tuple(bool(b) for b in self.drone_eligible))
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        if self.coords is not None:
            object.__setattr__(self, "coords", tuple((float(a), float(b)) for a, b in self.coords))
        self._validate()

    def _validate(self):
        c = len(self.mass)
        n = c + 2
        if c < 1:
            raise InstanceError("instance needs at least one customer")
        if len(self.drone_eligible) != c:
            raise InstanceError("drone_eligible must have one entry per customer")
        for attr in ("truck_dist", "truck_time", "drone_dist"):
            mat = np.asarray(getattr(self, attr))
            if mat.shape != (n, n):
                raise InstanceError(f"{attr} must be {n}x{n}, got {mat.shape}")
            if not np.all(np.isfinite(mat)) or np.any(mat < 0):
                raise InstanceError(f"{attr} entries must be finite and >= 0")
            if np.any(np.diag(mat) != 0):
                raise InstanceError(f"{attr} must have a zero diagonal")
            end = n - 1
            for j in range(1, end):
                if mat[0, j] != mat[end, j] or mat[j, 0] != mat[j, end]:
                    raise InstanceError(f"{attr}: depot copies 0 and {end} differ at node {j}")
        dd = np.asarray(self.drone_dist)
        if not np.array_equal(dd, dd.T):
            raise InstanceError("drone_dist must be symmetric")
        for j, (m, ok) in enumerate(zip(self.mass, self.drone_eligible), start=1):
            if m < 0:
                raise InstanceError(f"mass of customer {j} is negative")
            if ok and m > self.payload:
                raise InstanceError(f"customer {j} is drone-eligible but exceeds the payload")
        if not self.speeds or any(v <= 0 for v in self.speeds):
            raise InstanceError("speeds must be a non-empty set of positive values")
        if len(set(self.speeds)) != len(self.speeds):
            raise InstanceError("speeds must be distinct")
        if self.n_tandems < 1 or self.n_drones < 0:
            raise InstanceError("need n_tandems >= 1 and n_drones >= 0")
        if self.coords is not None and len(self.coords) != n:
            raise InstanceError(f"coords must list {n} nodes")

    # index sets

    @property
    def c(self) -> int:
        return len(self.mass)

    @property
    def end(self) -> int:
        return self.c + 1

    @property
    def nodes(self) -> range:
        return range(self.c + 2)

    @property
    def customers(self) -> range:
        return range(1, self.c + 1)

    @property
    def departure_nodes(self) -> range:
        return range(0, self.c + 1)

    @property
    def arrival_nodes(self) -> range:
        return range(1, self.c + 2)

    @property
    def eligible_customers(self) -> list[int]:
        return [j for j in self.customers if self.drone_eligible[j - 1]]

    def is_depot(self, i: int) -> bool:
        return i == 0 or i == self.end

    def m(self, j: int) -> float:
        return 0.0 if self.is_depot(j) else self.mass[j - 1]

    def service_truck(self, j: int) -> float:
        return 0.0 if self.is_depot(j) else self.times.service_truck

    def service_drone(self, j: int) -> float:
        return 0.0 if self.is_depot(j) else self.times.service_drone

    def latest_departure(self, i: int) -> float:
        """Big-M used in timing rows: M - tau^T(i, c+1)."""
        return self.times.max_route - self.truck_time[i][self.end]

    def with_(self, **changes) -> "Instance":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "n_customers": self.c,
            "coords_latlon": None if self.coords is None else [list(p) for p in self.coords],
            "truck_dist_km": [list(r) for r in self.truck_dist],
            "truck_time_s": [list(r) for r in self.truck_time],
            "drone_dist_m": [list(r) for r in self.drone_dist],
            "mass_kg": list(self.mass),
            "drone_eligible": list(self.drone_eligible),
            "payload_kg": self.payload,
            "speeds_mps": list(self.speeds),
            "battery": {"E_kJ": self.battery.E, "epsilon": self.battery.epsilon,
                        "charge_rate_kJ_per_s": self.battery.P_C},
            "times": {
                "service_truck_s": self.times.service_truck,
                "service_drone_s": self.times.service_drone,
                "launch_prep_s": self.times.launch_prep,
                "max_hover_s": self.times.max_hover,
                "max_stationary_s": self.times.max_stationary,
                "max_route_s": self.times.max_route,
            },
            "costs": {"fuel_usd_per_km": self.costs.fuel_per_km,
                      "wage_usd_per_h": self.costs.wage_per_h,
                      "energy_usd_per_kJ": self.costs.energy_per_kJ},
            "fleet": {"tandems": self.n_tandems, "drones_per_tandem": self.n_drones},
            "drone_spec": asdict(self.drone_spec),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# JSON schema (pydantic is used only for validation and error paths)

class _Strict(BaseModel):
    model_config = ConfigDict(extra="allow", strict=False)


class _BatteryDoc(_Strict):
    E_kJ: float
    epsilon: float
    charge_rate_kJ_per_s: float


class _TimesDoc(_Strict):
    service_truck_s: float
    service_drone_s: float
    launch_prep_s: float
    max_hover_s: float
    max_stationary_s: float
    max_route_s: float


class _CostsDoc(_Strict):
    fuel_usd_per_km: float
    wage_usd_per_h: float
    energy_usd_per_kJ: float


class _FleetDoc(_Strict):
    tandems: int
    drones_per_tandem: int


class _DroneDoc(_Strict):
    n: int
    D: float
    m_db: float
    m_b: float
    c_db: float
    c_b: float
    c_p: float
    A_db: float
    A_b: float
    A_p: float
    g: float
    rho: float
    eta: float
    sigma: float


class _InstanceDoc(_Strict):
    schema_version: int
    name: str = "instance"
    n_customers: int
    coords_latlon: Optional[list[tuple[float, float]]] = None
    truck_dist_km: list[list[float]]
    truck_time_s: list[list[float]]
    drone_dist_m: list[list[float]]
    mass_kg: list[float]
    drone_eligible: list[bool]
    payload_kg: float = 5.0
    speeds_mps: list[float]
    battery: _BatteryDoc
    times: _TimesDoc
    costs: _CostsDoc
    fleet: _FleetDoc
    drone_spec: _DroneDoc


def _warn_extras(model: BaseModel, prefix: str = ""):
    for key in sorted(model.model_extra or {}):
        warnings.warn(f"unknown instance field '{prefix}{key}' ignored", UserWarning, stacklevel=3)
    for name in type(model).model_fields:
        sub = getattr(model, name)
        if isinstance(sub, BaseModel):
            _warn_extras(sub, f"{prefix}{name}.")


def instance_from_dict(data: dict) -> Instance:
    try:
        doc = _InstanceDoc.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        raise InstanceFormatError(path, err["msg"]) from None
    if doc.schema_version != SCHEMA_VERSION:
        raise InstanceFormatError("schema_version", f"unsupported version {doc.schema_version}")
    _warn_extras(doc)
    if len(doc.mass_kg) != doc.n_customers:
        raise InstanceFormatError("mass_kg", "length differs from n_customers")
    try:
        return Instance(
            truck_dist=doc.truck_dist_km,
            truck_time=doc.truck_time_s,
            drone_dist=doc.drone_dist_m,
            mass=doc.mass_kg,
            drone_eligible=doc.drone_eligible,
            speeds=doc.speeds_mps,
            battery=BatterySpec(doc.battery.E_kJ, doc.battery.epsilon, doc.battery.charge_rate_kJ_per_s),
            times=TimeParams(doc.times.service_truck_s, doc.times.service_drone_s,
                             doc.times.launch_prep_s, doc.times.max_hover_s,
                             doc.times.max_stationary_s, doc.times.max_route_s),
            costs=CostParams(doc.costs.fuel_usd_per_km, doc.costs.wage_usd_per_h,
                             doc.costs.energy_usd_per_kJ),
            n_tandems=doc.fleet.tandems,
            n_drones=doc.fleet.drones_per_tandem,
            drone_spec=DroneSpec(**{f.name: getattr(doc.drone_spec, f.name) for f in fields(DroneSpec)}),
            payload=doc.payload_kg,
            coords=doc.coords_latlon,
            name=doc.name,
        )
    except ValueError as exc:
        raise InstanceError(str(exc)) from exc


def save_instance(instance: Instance, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(instance.to_dict(), indent=1) + "\n")
    return path


def load_instance(path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError("<root>", f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InstanceFormatError("<root>", "expected a JSON object")
    return instance_from_dict(data)


def persist_instance(instance: Optional[Instance], path, direction: str):
    """Save (returns the path) or load (returns the Instance)."""
    if direction == "save":
        if instance is None:
            raise InstanceError("nothing to save")
        return save_instance(instance, path)
    if direction == "load":
        return load_instance(path)
    raise InstanceError(f"direction must be 'save' or 'load', not {direction!r}")


# geometry

def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def great_circle_matrix_km(coords: Sequence[tuple[float, float]]) -> np.ndarray:
    n = len(coords)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = haversine_km(coords[i], coords[j])
    return out


@dataclass(frozen=True)
class SyntheticRoads:
    """Road distance = circuity x great-circle distance, driven at a constant speed."""
    circuity: float = 1.3
    truck_speed: float = 50 / 3.6  # m/s

    def __post_init__(self):
        if self.circuity < 1:
            raise InstanceError("circuity must be >= 1")
        if not self.truck_speed > 0:
            raise InstanceError("truck speed must be > 0")


def _check_finite(name: str, mat: np.ndarray):
    if not np.all(np.isfinite(mat)):
        raise InstanceError(f"{name} contains non-finite entries")


def fill_truck_matrices(instance: Instance, source) -> Instance:
    """Replace truck distance/time matrices from a routing service or synthetic road model.

    ``source`` is a :class:`SyntheticRoads` or any object with a
    ``matrix(coords) -> (km, s)`` method over unique locations (depot first).
    """
    if instance.coords is None:
        raise InstanceError("coordinates are required to fill truck matrices")
    unique = list(instance.coords[:-1])  # depot once, then customers
    if isinstance(source, SyntheticRoads):
        km = great_circle_matrix_km(unique) * source.circuity
        sec = km * 1000.0 / source.truck_speed
    else:
        km, sec = source.matrix(unique)
        km, sec = np.asarray(km, dtype=float), np.asarray(sec, dtype=float)
    _check_finite("truck_dist", km)
    _check_finite("truck_time", sec)
    expand = list(range(len(unique))) + [0]
    km = km[np.ix_(expand, expand)]
    sec = sec[np.ix_(expand, expand)]
    np.fill_diagonal(km, 0.0)
    np.fill_diagonal(sec, 0.0)
    km[0, -1] = km[-1, 0] = 0.0
    sec[0, -1] = sec[-1, 0] = 0.0
    return instance.with_(truck_dist=km.tolist(), truck_time=sec.tolist())


@dataclass(frozen=True)
class GenConfig:
    n_customers: int = 20
    area_km: tuple[float, float] = (20.0, 30.0)
    seed: int = 1
    light_share: float = 0.9
    eligible_share: float = 0.75
    circuity: float = 1.3
    truck_speed: float = 50 / 3.6
    origin_latlon: tuple[float, float] = (43.45, -96.85)
    depot: str = "corner"  # "corner" (lower right) or "center"
    light_range: tuple[float, float] = (0.05, 5.0)
    heavy_range: tuple[float, float] = (5.0, 50.0)
    speeds: tuple[float, ...] = DEFAULT_SPEEDS
    n_tandems: int = 1
    n_drones: int = 1

    def __post_init__(self):
        if self.n_customers < 1:
            raise InstanceError("n_customers must be >= 1")
        w, h = self.area_km
        if not (w > 0 and h > 0 and math.isfinite(w) and math.isfinite(h)):
            raise InstanceError("area must have positive finite width and height")
        for share in (self.light_share, self.eligible_share):
            if not 0 <= share <= 1:
                raise InstanceError("shares must lie in [0, 1]")
        if self.circuity < 1:
            raise InstanceError("circuity must be >= 1")
        if self.depot not in ("corner", "center"):
            raise InstanceError("depot must be 'corner' or 'center'")


def _to_latlon(origin: tuple[float, float], x_km: float, y_km: float) -> tuple[float, float]:
    lat0, lon0 = origin
    return (lat0 + y_km / 111.32, lon0 + x_km / (111.32 * math.cos(math.radians(lat0))))


def sample_masses(rng: np.random.Generator, n: int, cfg: GenConfig) -> np.ndarray:
    u = rng.random(n)
    light = rng.uniform(*cfg.light_range, size=n)
    lo, hi = cfg.heavy_range
    heavy = rng.uniform(np.nextafter(lo, hi), hi, size=n)
    return np.where(u <= cfg.light_share, light, heavy)


def generate_instance(cfg: GenConfig, battery: Optional[BatterySpec] = None,
                      times: Optional[TimeParams] = None, costs: Optional[CostParams] = None,
                      drone_spec: Optional[DroneSpec] = None) -> Instance:
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.area_km
    c = cfg.n_customers
    xy = rng.uniform((0.0, 0.0), (w, h), size=(c, 2))
    depot_xy = (w, 0.0) if cfg.depot == "corner" else (w / 2, h / 2)
    masses = sample_masses(rng, c, cfg)
    accept = rng.random(c)
    eligible = (masses <= 5.0) & (accept <= cfg.eligible_share)

    coords = [_to_latlon(cfg.origin_latlon, *depot_xy)]
    coords += [_to_latlon(cfg.origin_latlon, x, y) for x, y in xy]
    coords.append(coords[0])
    beeline_m = great_circle_matrix_km(coords) * 1000.0
    beeline_m[0, -1] = beeline_m[-1, 0] = 0.0
    zeros = np.zeros_like(beeline_m)
    inst = Instance(
        truck_dist=zeros.tolist(), truck_time=zeros.tolist(), drone_dist=beeline_m.tolist(),
        mass=masses.tolist(), drone_eligible=eligible.tolist(), speeds=cfg.speeds,
        battery=battery or BatterySpec(), times=times or TimeParams(), costs=costs or CostParams(),
        n_tandems=cfg.n_tandems, n_drones=cfg.n_drones, drone_spec=drone_spec or octocopter(),
        coords=coords, name=f"gen_c{c}_s{cfg.seed}",
    )
    return fill_truck_matrices(inst, SyntheticRoads(cfg.circuity, cfg.truck_speed))
