"""HTTP client for a road-network matrix service (openrouteservice-style API)."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx

log = logging.getLogger(__name__)


class RoutingTransportError(RuntimeError):
    """Service unreachable, rejected the request or exhausted its quota."""


class RoutingDataError(ValueError):
    """Service answered with a malformed or non-finite matrix."""


@dataclass(frozen=True)
class RoutingConfig:
    base_url: str = "https://api.openrouteservice.org"
    profile: str = "driving-car"
    api_key_env: str = "VRPDSS_ROUTING_KEY"
    timeout_s: float = 30.0


class RoutingClient:
    """Fetches truck distance (km) and duration (s) matrices.

    The API key is read from the environment variable named in the config.
    """

    def __init__(self, config: RoutingConfig = RoutingConfig(),
                 transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._transport = transport

    def matrix(self, coords: Sequence[tuple[float, float]]):
        key = os.environ.get(self.config.api_key_env)
        headers = {"Accept": "application/json"}
        if key:
            headers["Authorization"] = key
        body = {
            "locations": [[lon, lat] for lat, lon in coords],
            "metrics": ["distance", "duration"],
            "units": "km",
        }
        url = f"{self.config.base_url.rstrip('/')}/v2/matrix/{self.config.profile}"
        log.info("routing request %s with %d locations", url, len(coords))
        try:
            with httpx.Client(timeout=self.config.timeout_s, transport=self._transport) as client:
                resp = client.post(url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise RoutingTransportError(f"routing service unreachable: {exc}") from exc
        log.info("routing response status %s", resp.status_code)
        if resp.status_code == 429:
            raise RoutingTransportError("routing service quota exhausted (HTTP 429)")
        if resp.status_code >= 400:
            raise RoutingTransportError(f"routing service error HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            km, sec = data["distances"], data["durations"]
        except (ValueError, KeyError, TypeError) as exc:
            raise RoutingDataError(f"malformed routing response: {exc}") from exc
        n = len(coords)
        for name, mat in (("distances", km), ("durations", sec)):
            if len(mat) != n or any(len(row) != n for row in mat):
                raise RoutingDataError(f"{name} matrix is not {n}x{n}")
            if any(x is None or not math.isfinite(x) for row in mat for x in row):
                raise RoutingDataError(f"{name} matrix has missing or non-finite entries")
        return km, sec
