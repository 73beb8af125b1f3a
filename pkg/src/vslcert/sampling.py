"""Disturbance samples and linear density propagation.

A disturbance realization is the pair (initial densities, net inflow
matrix). Net inflows are in veh/h and enter the dynamics through the
discretization ratio ``h``; initial densities are veh/km.

Propagation applies the linear recursion

    rho_e(t+1) = rho_e(t) + h * (u_s rho_s(t) - u_e rho_e(t) + omega_e(t))

with ``s`` the upstream neighbour (the first edge has none, its only feed
is ``omega_1``). The recursion is intentionally unclamped: it is affine in
the disturbance, which the certificate machinery relies on, so physically
impossible negative densities are passed through rather than projected.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .network import HighwayScenario, SpeedProfile

# Validation seeds are derived from training seeds by this fixed offset so
# the two streams never overlap for a given run.
VALIDATION_SEED_OFFSET = 7919


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DisturbanceSample:
    """One realization: rho0 with shape (n,), omega with shape (n, T)."""

    rho0: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        rho0 = _frozen(self.rho0)
        omega = _frozen(self.omega)
        if rho0.ndim != 1 or omega.ndim != 2 or omega.shape[0] != rho0.shape[0]:
            raise ValueError("rho0 must be (n,) and omega (n, T)")
        if not (np.isfinite(rho0).all() and np.isfinite(omega).all()):
            raise ValueError("disturbance entries must be finite")
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class SampleSet:
    """An ordered collection of equally-shaped disturbance samples."""

    samples: tuple[DisturbanceSample, ...]
    provenance: str = ""

    def __post_init__(self):
        if not self.samples:
            raise ValueError("need at least one sample")
        n, T = self.samples[0].rho0.shape[0], self.samples[0].omega.shape[1]
        for s in self.samples:
            if s.rho0.shape[0] != n or s.omega.shape[1] != T:
                raise ValueError("samples disagree on dimensions")

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return self.samples[0].rho0.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples[0].omega.shape[1]


@dataclass(frozen=True)
class GeneratorSpec:
    """Per-edge uniform bounds for rho0 and omega draws."""

    rho0_lo: tuple[float, ...]
    rho0_hi: tuple[float, ...]
    omega_lo: tuple[float, ...]
    omega_hi: tuple[float, ...]

    def __post_init__(self):
        n = len(self.rho0_lo)
        if not (len(self.rho0_hi) == len(self.omega_lo) == len(self.omega_hi) == n):
            raise ValueError("bound tuples disagree on edge count")
        if any(lo > hi for lo, hi in zip(self.rho0_lo, self.rho0_hi)):
            raise ValueError("rho0 lower bound exceeds upper bound")
        if any(lo > hi for lo, hi in zip(self.omega_lo, self.omega_hi)):
            raise ValueError("omega lower bound exceeds upper bound")


def _per_edge_bounds(raw, n: int, path: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Accept a scalar, a {lo, hi} object, or a per-edge list of either."""

    def one(v, p):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v), float(v)
        if isinstance(v, dict) and set(v) == {"lo", "hi"}:
            return float(v["lo"]), float(v["hi"])
        raise ConfigError(p, "expected a number or an object with keys lo, hi")

    if isinstance(raw, list):
        if len(raw) != n:
            raise ConfigError(path, f"expected {n} per-edge entries, got {len(raw)}")
        pairs = [one(v, f"{path}[{e}]") for e, v in enumerate(raw)]
    else:
        pairs = [one(raw, path)] * n
    lo, hi = zip(*pairs)
    return lo, hi


def load_generator(cfg: dict, n: int) -> GeneratorSpec:
    """Parse the ``disturbance`` section of a scenario config.

    Schema::

        "disturbance": {
          "rho0": 260,                                  # or {lo, hi} or list
          "omega": [{"lo": 2.0e4, "hi": 2.4e4},
                    {"lo": -1500, "hi": 2500}, ...]     # same three forms
        }
    """
    if "disturbance" not in cfg:
        raise ConfigError("disturbance", "missing required key")
    section = cfg["disturbance"]
    if not isinstance(section, dict):
        raise ConfigError("disturbance", "expected an object")
    for key in ("rho0", "omega"):
        if key not in section:
            raise ConfigError(f"disturbance.{key}", "missing required key")
    rho0_lo, rho0_hi = _per_edge_bounds(section["rho0"], n, "disturbance.rho0")
    omega_lo, omega_hi = _per_edge_bounds(section["omega"], n, "disturbance.omega")
    try:
        return GeneratorSpec(rho0_lo, rho0_hi, omega_lo, omega_hi)
    except ValueError as exc:
        raise ConfigError("disturbance", str(exc)) from exc


def generate_samples(
    gen: GeneratorSpec, count: int, horizon: int, seed: int
) -> SampleSet:
    """Draw ``count`` i.i.d. samples; deterministic for a given seed."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    n = len(gen.rho0_lo)
    rho0_lo = np.array(gen.rho0_lo)
    rho0_hi = np.array(gen.rho0_hi)
    om_lo = np.array(gen.omega_lo)[:, None]
    om_hi = np.array(gen.omega_hi)[:, None]
    samples = []
    for _ in range(count):
        rho0 = rng.uniform(rho0_lo, rho0_hi)
        omega = rng.uniform(np.broadcast_to(om_lo, (n, horizon)),
                            np.broadcast_to(om_hi, (n, horizon)))
        samples.append(DisturbanceSample(rho0, omega))
    return SampleSet(tuple(samples), provenance=f"generator(seed={seed})")


def propagate(
    scenario: HighwayScenario, profile: SpeedProfile, sample: DisturbanceSample
) -> np.ndarray:
    """Density trajectory (n, T) for slots t = 1..T under the recursion."""
    n, T, h = scenario.n, scenario.T, scenario.h
    if sample.rho0.shape[0] != n:
        raise ValueError("sample edge count does not match the scenario")
    if sample.omega.shape[1] < T:
        raise ValueError("sample horizon is shorter than the scenario's T")
    u = profile.as_array()
    rho = sample.rho0.copy()
    out = np.empty((n, T))
    for t in range(T):
        flow = u * rho
        inflow = np.concatenate(([0.0], flow[:-1]))
        rho = rho + h * (inflow - flow + sample.omega[:, t])
        out[:, t] = rho
    return out


@dataclass(frozen=True)
class TrajectoryBatch:
    """Per-sample trajectories (count, n, T) plus the generating profile."""

    rho: np.ndarray
    u: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))

    @property
    def count(self) -> int:
        return self.rho.shape[0]


def propagate_batch(
    scenario: HighwayScenario, profile: SpeedProfile, samples: SampleSet
) -> TrajectoryBatch:
    """Propagate every sample; order preserving."""
    rho = np.stack([propagate(scenario, profile, s) for s in samples.samples])
    return TrajectoryBatch(rho=rho, u=profile.u)


def recursion_residual(
    scenario: HighwayScenario, batch: TrajectoryBatch, samples: SampleSet
) -> float:
    """Largest relative defect of the recursion across a batch."""
    u = np.array(batch.u)
    h = scenario.h
    worst = 0.0
    for l, sample in enumerate(samples.samples):
        prev = sample.rho0
        for t in range(scenario.T):
            flow = u * prev
            inflow = np.concatenate(([0.0], flow[:-1]))
            expect = prev + h * (inflow - flow + sample.omega[:, t])
            got = batch.rho[l, :, t]
            scale = max(1.0, float(np.abs(expect).max()))
            worst = max(worst, float(np.abs(got - expect).max()) / scale)
            prev = got
    return worst


def write_samples(samples: SampleSet, prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>_rho0.csv`` (l, e, rho0) and ``<prefix>_omega.csv``
    (l, e, t, omega); indices are 1-based for l and e, 0-based for t."""
    prefix = Path(prefix)
    rho0_path = prefix.with_name(prefix.name + "_rho0.csv")
    omega_path = prefix.with_name(prefix.name + "_omega.csv")
    with open(rho0_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l", "e", "rho0"])
        for l, s in enumerate(samples.samples, start=1):
            for e, v in enumerate(s.rho0, start=1):
                w.writerow([l, e, repr(float(v))])
    with open(omega_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l", "e", "t", "omega"])
        for l, s in enumerate(samples.samples, start=1):
            for e in range(s.omega.shape[0]):
                for t in range(s.omega.shape[1]):
                    w.writerow([l, e + 1, t, repr(float(s.omega[e, t]))])
    return rho0_path, omega_path


def read_samples(prefix: str | Path, scenario: HighwayScenario) -> SampleSet:
    """Load the two-file pair written by :func:`write_samples`."""
    prefix = Path(prefix)
    rho0_path = prefix.with_name(prefix.name + "_rho0.csv")
    omega_path = prefix.with_name(prefix.name + "_omega.csv")
    rho0_rows: dict[int, dict[int, float]] = {}
    try:
        with open(rho0_path, newline="") as fh:
            for row in csv.DictReader(fh):
                l, e = int(row["l"]), int(row["e"])
                rho0_rows.setdefault(l, {})[e] = float(row["rho0"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(rho0_path), f"bad sample file: {exc}") from exc
    omega_rows: dict[int, dict[tuple[int, int], float]] = {}
    try:
        with open(omega_path, newline="") as fh:
            for row in csv.DictReader(fh):
                l, e, t = int(row["l"]), int(row["e"]), int(row["t"])
                omega_rows.setdefault(l, {})[(e, t)] = float(row["omega"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(omega_path), f"bad sample file: {exc}") from exc
    if sorted(rho0_rows) != sorted(omega_rows) or not rho0_rows:
        raise ConfigError(str(prefix), "sample indices disagree between the two files")
    n = scenario.n
    samples = []
    for l in sorted(rho0_rows):
        if sorted(rho0_rows[l]) != list(range(1, n + 1)):
            raise ConfigError(str(rho0_path), f"sample {l}: expected edges 1..{n}")
        horizon = 1 + max(t for (_, t) in omega_rows[l])
        omega = np.full((n, horizon), np.nan)
        rho0 = np.array([rho0_rows[l][e] for e in range(1, n + 1)])
        for (e, t), v in omega_rows[l].items():
            if not (1 <= e <= n):
                raise ConfigError(str(omega_path), f"sample {l}: edge {e} out of range")
            omega[e - 1, t] = v
        if np.isnan(omega).any():
            raise ConfigError(str(omega_path), f"sample {l}: missing omega entries")
        for e, v in enumerate(rho0):
            if not (0 <= v <= scenario.segments[e].rho_bar):
                raise ConfigError(
                    str(rho0_path),
                    f"sample {l}: rho0 on edge {e + 1} outside [0, rho_bar]",
                )
        samples.append(DisturbanceSample(rho0, omega))
    return SampleSet(tuple(samples), provenance=str(prefix))


def write_trajectories(batch: TrajectoryBatch, path: str | Path, header="") -> Path:
    """Write trajectories as CSV rows (l, e, t, rho); t runs from 1.

    header may be a plain string (one comment line) or a mapping, written
    as one "# key=value" comment line per entry.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if isinstance(header, dict):
            for key, value in header.items():
                fh.write(f"# {key}={value}\n")
        elif header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["l", "e", "t", "rho"])
        count, n, T = batch.rho.shape
        for l in range(count):
            for e in range(n):
                for t in range(T):
                    w.writerow([l + 1, e + 1, t + 1, repr(float(batch.rho[l, e, t]))])
    return path
