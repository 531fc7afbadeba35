"""File-based bridge to an external MILP solver (CBC command line)."""
from __future__ import annotations

import importlib.util
import json
import logging
import os
import platform
import re
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .esec import add_esec_rows, separate_esec, support_from_values
from .lpfile import export_model
from .model import ModelArtifact, variable_values

log = logging.getLogger(__name__)

ENV_SOLVER = "VRPDSS_CBC"
ENV_CONFIG = "VRPDSS_SOLVER_CONFIG"
INTEGRALITY_TOL = 1e-6
LOG_EXCERPT = 2000


class BridgeError(RuntimeError):
    def __init__(self, message: str, log_text: str = ""):
        self.log_excerpt = log_text[-LOG_EXCERPT:]
        super().__init__(message + (f"\n--- solver log (tail) ---\n{self.log_excerpt}" if log_text else ""))


class SolverMissingError(BridgeError):
    """No solver binary could be located."""


class SolverExitError(BridgeError):
    """The solver process returned a nonzero exit code or timed out."""

    def __init__(self, message: str, log_text: str = "", returncode: Optional[int] = None):
        super().__init__(message, log_text)
        self.returncode = returncode


class SolverOutputError(BridgeError):
    """The solution file is missing or cannot be parsed."""


class InfeasibleModelError(BridgeError):
    """The solver proved the model infeasible (or found no incumbent)."""


@dataclass(frozen=True)
class BridgeConfig:
    solver_path: Optional[str] = None
    time_limit: Optional[float] = None  # s
    seed: Optional[int] = None
    threads: Optional[int] = None
    options: tuple[str, ...] = ()  # passed verbatim before "solve"
    fmt: str = "MPS"
    workdir: Optional[str] = None
    keep_files: bool = False
    wall_slack: float = 60.0  # s added to time_limit before the process is killed


@dataclass
class RawSolution:
    status: str  # optimal | limit | infeasible | unbounded
    objective: Optional[float]
    values: dict[str, float]
    has_incumbent: bool
    log: str = ""
    wall_s: float = 0.0
    solver: str = ""
    command: list[str] = field(default_factory=list)
    start_dropped: bool = False  # the start was withdrawn after the solver crashed on it

    def require_incumbent(self) -> "RawSolution":
        if not self.has_incumbent:
            raise InfeasibleModelError(f"solver returned status {self.status!r} without an integer solution", self.log)
        return self


def _pulp_cbc() -> Optional[str]:
    spec = importlib.util.find_spec("pulp")
    if spec is None or not spec.submodule_search_locations:
        return None
    base = Path(list(spec.submodule_search_locations)[0]) / "solverdir" / "cbc"
    system = {"Linux": "linux", "Darwin": "osx", "Windows": "win"}.get(platform.system())
    arch = "64" if platform.system() == "Darwin" else "i64"
    if platform.machine().lower() in ("aarch64", "arm64"):
        arch = "arm64" if system == "linux" else arch
    if system is None:
        return None
    exe = base / system / arch / ("cbc.exe" if system == "win" else "cbc")
    return str(exe) if exe.is_file() else None


def find_solver(cfg: BridgeConfig = BridgeConfig()) -> Optional[str]:
    """Locate CBC: explicit path, env var, JSON config file, PATH, then the pulp wheel."""
    cands = [cfg.solver_path, os.environ.get(ENV_SOLVER)]
    conf = os.environ.get(ENV_CONFIG)
    if conf and Path(conf).is_file():
        try:
            cands.append(json.loads(Path(conf).read_text()).get("cbc_path"))
        except (OSError, ValueError) as exc:
            log.warning("ignoring solver config %s: %s", conf, exc)
    cands.append(shutil.which("cbc"))
    cands.append(_pulp_cbc())
    for c in cands:
        if c and Path(c).is_file() and os.access(c, os.X_OK):
            return str(c)
    return None


def solver_available(cfg: BridgeConfig = BridgeConfig()) -> bool:
    return find_solver(cfg) is not None


_STATUS = [
    (re.compile(r"^Optimal"), "optimal"),
    (re.compile(r"^(Integer )?[Ii]nfeasible"), "infeasible"),
    (re.compile(r"^Unbounded"), "unbounded"),
    (re.compile(r"^Stopped"), "limit"),
]
_OBJ = re.compile(r"objective value\s+(\S+)")
_CPU = re.compile(r"Total time \(CPU seconds\):\s+(\S+)")
_PRE_INFEASIBLE = "Pre-processing says infeasible"


def _cut_short(log_text: str, time_limit: Optional[float], elapsed: float) -> bool:
    """CBC 2.10 reports "infeasible" when the time limit expires inside preprocessing."""
    if time_limit is None or _PRE_INFEASIBLE not in log_text:
        return False
    m = _CPU.search(log_text)
    used = float(m.group(1)) if m else elapsed
    return used >= 0.95 * time_limit


def parse_solution_file(text: str) -> tuple[str, Optional[float], dict[str, float]]:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty solution file")
    head = lines[0].strip()
    status = next((s for pat, s in _STATUS if pat.search(head)), None)
    if status is None:
        raise ValueError(f"unknown status line {head!r}")
    m = _OBJ.search(head)
    obj = float(m.group(1)) if m else None
    values = {}
    for ln in lines[1:]:
        parts = ln.replace("**", " ").split()
        if not parts:
            continue
        if len(parts) < 3:
            raise ValueError(f"bad solution line {ln!r}")
        values[parts[1]] = float(parts[2])
    return status, obj, values


_lock = threading.Lock()
_model_locks: dict[int, threading.Lock] = {}


def _lock_for(model: ModelArtifact) -> threading.Lock:
    with _lock:
        return _model_locks.setdefault(id(model), threading.Lock())


def _start_text(model: ModelArtifact, start: Mapping[str, float]) -> str:
    """MIP start in the solver's own solution-file layout."""
    lines = ["Stopped on iterations - objective value 0"]
    for idx, c in enumerate(model.columns):
        if c.integer:
            lines.append(f"{idx} {c.name} {start.get(c.name, 0.0)!r} 0")
    return "\n".join(lines) + "\n"


def _run(model: ModelArtifact, cfg: BridgeConfig, relax: bool,
         start: Optional[Mapping[str, float]] = None) -> RawSolution:
    exe = find_solver(cfg)
    if exe is None:
        raise SolverMissingError(
            f"no CBC binary found (set {ENV_SOLVER}, {ENV_CONFIG}, put cbc on PATH or install pulp)")
    tmp = Path(cfg.workdir) if cfg.workdir else Path(tempfile.mkdtemp(prefix="vrpdss_"))
    tmp.mkdir(parents=True, exist_ok=True)
    ext = "lp" if cfg.fmt.upper() == "LP" else "mps"
    model_path = export_model(model, tmp / f"model.{ext}", cfg.fmt)
    sol_path = tmp / "solution.txt"
    if sol_path.exists():
        sol_path.unlink()
    cmd = [exe, str(model_path)]
    if start and not relax:
        start_path = tmp / "start.txt"
        start_path.write_text(_start_text(model, start))
        cmd += ["mips", str(start_path)]
    if cfg.time_limit is not None:
        cmd += ["sec", repr(float(cfg.time_limit))]
    if cfg.seed is not None:
        cmd += ["randomCbcSeed", str(int(cfg.seed)), "randomSeed", str(int(cfg.seed))]
    if cfg.threads is not None:
        cmd += ["threads", str(int(cfg.threads))]
    cmd += list(cfg.options)
    cmd += ["initialSolve" if relax else "solve", "solu", str(sol_path)]
    wall = None if cfg.time_limit is None else cfg.time_limit + cfg.wall_slack
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=wall)
    except subprocess.TimeoutExpired as exc:
        # subprocess.run kills the child with SIGKILL on timeout
        raise SolverExitError(f"solver exceeded wall limit {wall} s", str(exc.stdout or ""), -9) from exc
    except OSError as exc:
        raise SolverMissingError(f"cannot execute {exe}: {exc}") from exc
    elapsed = time.perf_counter() - t0
    out = proc.stdout + proc.stderr
    try:
        if proc.returncode != 0:
            raise SolverExitError(f"solver exited with code {proc.returncode}", out, proc.returncode)
        if not sol_path.is_file():
            raise SolverOutputError("solver wrote no solution file", out)
        try:
            status, obj, values = parse_solution_file(sol_path.read_text())
        except ValueError as exc:
            raise SolverOutputError(f"cannot parse solution file: {exc}", out) from exc
    finally:
        if not cfg.keep_files and not cfg.workdir:
            shutil.rmtree(tmp, ignore_errors=True)
    cut_short = status == "infeasible" and _cut_short(out, cfg.time_limit, elapsed)
    if cut_short:
        log.warning("solver stopped by the time limit during preprocessing; reporting 'limit'")
        status = "limit"
    if relax:
        incumbent = status == "optimal"
    else:
        incumbent = status in ("optimal", "limit") and not cut_short and _integral(model, values)
    if status == "limit" and not incumbent:
        obj = None
    return RawSolution(status, obj, values, incumbent, out, elapsed, exe, cmd)


def _integral(model: ModelArtifact, values: dict[str, float]) -> bool:
    for c in model.columns:
        if c.integer:
            v = values.get(c.name, 0.0)
            if abs(v - round(v)) > INTEGRALITY_TOL:
                return False
    return True


def solve_with_bridge(model: ModelArtifact, cfg: BridgeConfig = BridgeConfig(), relax: bool = False,
                      start: Optional[Mapping[str, float]] = None) -> RawSolution:
    """One solver run. Solver-side failures raise; infeasibility comes back as a status.

    ``start`` maps integer column names to values of a feasible assignment
    (missing names are 0); the solver completes the continuous part.
    """
    with _lock_for(model):
        try:
            return _run(model, cfg, relax, start)
        except SolverExitError as exc:
            # CBC 2.10 can crash or overrun the limit when the time limit hits while it processes a start
            if not start or relax or exc.returncode is None or exc.returncode >= 0:
                raise
            log.warning("solver killed by signal %d with a start; retrying without it", -exc.returncode)
            raw = _run(model, cfg, relax, None)
            raw.start_dropped = True
            return raw


@dataclass
class LazyResult:
    raw: RawSolution
    rounds: int
    cuts: list[frozenset[int]]
    root_cuts: list[frozenset[int]]
    wall_s: float


def solve_lazy(model: ModelArtifact, cfg: BridgeConfig = BridgeConfig(), root_separation: bool = False,
               max_rounds: int = 50, threshold: float = 0.5,
               start: Optional[Mapping[str, float]] = None) -> LazyResult:
    """Resolve loop: solve, separate subtours on the incumbent, append rows, repeat.

    With root_separation the LP relaxation is first tightened by the
    fractional heuristic until it finds nothing more.
    """
    t0 = time.perf_counter()
    root_cuts: list[frozenset[int]] = []
    if root_separation:
        for _ in range(max_rounds):
            raw = solve_with_bridge(model, cfg, relax=True)
            if raw.status != "optimal":
                break
            sets = separate_esec(support_from_values(model, variable_values(model, raw.values)),
                                 integer=False, threshold=threshold)
            added = add_esec_rows(model, sets)
            if not added:
                break
            root_cuts += [frozenset(s) for s in sets]
    cuts: list[frozenset[int]] = []
    for rounds in range(1, max_rounds + 1):
        raw = solve_with_bridge(model, cfg, start=start)
        if not raw.has_incumbent or raw.status != "optimal":
            break
        sets = separate_esec(support_from_values(model, variable_values(model, raw.values)), integer=True)
        if not add_esec_rows(model, sets):
            break
        cuts += sets
    else:
        log.warning("lazy loop stopped after %d rounds", max_rounds)
    return LazyResult(raw, rounds, cuts, root_cuts, time.perf_counter() - t0)


def solver_version(cfg: BridgeConfig = BridgeConfig()) -> Optional[str]:
    exe = find_solver(cfg)
    if exe is None:
        return None
    try:
        out = subprocess.run([exe, "-quit"], capture_output=True, text=True, timeout=30).stdout
    except (OSError, subprocess.TimeoutExpired):
        return None
    m = re.search(r"Version:\s*(\S+)", out)
    return m.group(1) if m else None
