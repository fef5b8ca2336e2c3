"""Ground-truth generators for the three testbeds.

* planar linear dynamics integrated by explicit Euler, paired as
  (dynamics matrix, observed trajectory)
* the unit simple harmonic oscillator evolved exactly, paired as
  (initial state, state a random time later)
* the Gray-Scott reaction-diffusion system on a periodic grid, paired as
  (rate parameters, final concentration fields)

All sampling is driven by per-record seed streams derived from
``(seed, stream tag, record index)``, so records are reproducible
individually and independently of generation order or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import PairDataset
from .errors import ContractError, IntegrationError, NumericError

LINEAR_MATRIX_RANGE = (-1.0, 1.0)
LINEAR_X0_RANGE = (-1.0, 1.0)
SHO_STATE_RANGE = (-1.5, 1.5)
TURING_PARAM_RANGES = {
    "diff_a": (0.1, 0.2),
    "diff_b": (0.05, 0.1),
    "feed": (0.01, 0.09),
    "kill": (0.045, 0.07),
}
GRAY_SCOTT_BOUNDS = (-0.1, 1.5)
GRAY_SCOTT_NOISE = 0.01
# Classic perturbation used to nucleate patterns: inside the seeded square
# species a drops to 0.5 and species b rises by 0.25. Stronger b seeds
# overshoot the field bounds under unit explicit-Euler steps.
GRAY_SCOTT_SEED_A = 0.5
GRAY_SCOTT_SEED_B = 0.25

# Stream tags keep the record streams of different generators disjoint.
_RECORD_STREAM = 301


# ---------------------------------------------------------------------------
# Linear dynamical system


@dataclass(frozen=True)
class LinearSystemSpec:
    """Planar linear dynamics dx/dt = M x, discretized by explicit Euler
    with step 1/steps."""

    matrix: np.ndarray
    x0: np.ndarray
    steps: int = 8

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if self.matrix.shape != (2, 2):
            raise ContractError("matrix must be 2x2")
        if self.x0.shape != (2,):
            raise ContractError("x0 must be a 2-vector")
        if self.steps < 1:
            raise ContractError("steps must be at least 1")
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.x0))):
            raise NumericError("non-finite linear system spec")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps


@dataclass(frozen=True)
class Trajectory:
    """Observed points [x_1, ..., x_n] (the initial state is not included)."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ContractError("trajectory points must be [n, 2]")
        if not np.all(np.isfinite(self.points)):
            raise NumericError("non-finite trajectory")

    def flat(self) -> np.ndarray:
        return self.points.ravel().copy()


def linear_rollout(spec: LinearSystemSpec) -> Trajectory:
    """Iterate x <- x + (M x) dt for ``steps`` steps and record each point."""
    points = np.empty((spec.steps, 2))
    x = spec.x0.copy()
    dt = spec.dt
    for t in range(spec.steps):
        x = x + (spec.matrix @ x) * dt
        points[t] = x
    return Trajectory(points)


# ---------------------------------------------------------------------------
# Simple harmonic oscillator (unit mass and stiffness)


@dataclass(frozen=True)
class ShoState:
    """Phase-space point of the unit oscillator; energy is (p^2 + x^2) / 2."""

    x: float
    p: float


def sho_energy(state: ShoState) -> float:
    return 0.5 * (state.p * state.p + state.x * state.x)


def sho_evolve(state: ShoState, tau: float) -> ShoState:
    """Exact evolution by time ``tau``: a clockwise rotation in (x, p)."""
    if not math.isfinite(tau):
        raise NumericError("non-finite time interval")
    c, s = math.cos(tau), math.sin(tau)
    return ShoState(x=state.x * c + state.p * s, p=state.p * c - state.x * s)


# ---------------------------------------------------------------------------
# Gray-Scott reaction-diffusion


@dataclass(frozen=True)
class GrayScottParams:
    """Rate constants: diffusion of each species, feed rate, kill rate.

    Vector order (for dataset records) is (diff_a, diff_b, feed, kill).
    """

    diff_a: float
    diff_b: float
    feed: float
    kill: float

    def __post_init__(self):
        for name in ("diff_a", "diff_b", "feed", "kill"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ContractError(f"{name} must be strictly positive, got {value}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.diff_a, self.diff_b, self.feed, self.kill])

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "GrayScottParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (4,):
            raise ContractError("parameter vector must have 4 entries")
        return cls(diff_a=float(vec[0]), diff_b=float(vec[1]), feed=float(vec[2]), kill=float(vec[3]))


@dataclass
class GrayScottField:
    """Concentration fields on a periodic square grid after integration.

    Vector layout (for dataset records) is a.ravel() followed by b.ravel(),
    row major.
    """

    a: np.ndarray
    b: np.ndarray
    params: GrayScottParams
    steps_run: int

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.b.ravel()])


def stability_limit(params: GrayScottParams, spacing: float = 1.0) -> float:
    """Largest explicit-Euler step for which diffusion stays stable."""
    return spacing * spacing / (4.0 * max(params.diff_a, params.diff_b))


def laplacian(z: np.ndarray) -> np.ndarray:
    """5-point periodic Laplacian on the last two axes (unit spacing)."""
    return (
        np.roll(z, 1, axis=-1)
        + np.roll(z, -1, axis=-1)
        + np.roll(z, 1, axis=-2)
        + np.roll(z, -1, axis=-2)
        - 4.0 * z
    )


def _initial_fields(grid: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Near-homogeneous start: a ~ 1, b ~ 0, 1% uniform noise everywhere,
    and a perturbed central square that nucleates patterning."""
    a = 1.0 + GRAY_SCOTT_NOISE * rng.uniform(-1.0, 1.0, size=(grid, grid))
    b = GRAY_SCOTT_NOISE * rng.uniform(-1.0, 1.0, size=(grid, grid))
    side = max(2, grid // 4)
    lo = (grid - side) // 2
    a[lo : lo + side, lo : lo + side] = GRAY_SCOTT_SEED_A
    b[lo : lo + side, lo : lo + side] += GRAY_SCOTT_SEED_B
    return a, b


def _integrate_gray_scott(
    a: np.ndarray,
    b: np.ndarray,
    diff_a: np.ndarray,
    diff_b: np.ndarray,
    feed: np.ndarray,
    kill: np.ndarray,
    steps: int,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Explicit-Euler integration on [batch, grid, grid] fields.

    Elementwise arithmetic order is identical for any batch size, so a
    record integrated inside a batch matches the same record run alone
    bit for bit. Bounds are checked every step; leaving them (or going
    non-finite) raises naming the step.
    """
    lo, hi = GRAY_SCOTT_BOUNDS
    for t in range(1, steps + 1):
        reaction = a * b * b
        a = a + dt * (diff_a * laplacian(a) - reaction + feed * (1.0 - a))
        b = b + dt * (diff_b * laplacian(b) + reaction - (feed + kill) * b)
        ok = (a >= lo) & (a <= hi) & (b >= lo) & (b <= hi)
        if not ok.all():
            bad = np.nonzero(~ok.reshape(ok.shape[0], -1).all(axis=1))[0]
            raise IntegrationError(
                f"field left bounds [{lo}, {hi}] at step {t}"
                f" (record index {int(bad[0])})"
            )
    return a, b


def gray_scott_run(
    params: GrayScottParams,
    grid: int = 16,
    steps: int = 5000,
    seed: int | Sequence[int] = 0,
    dt: float = 1.0,
) -> GrayScottField:
    """Integrate the reaction-diffusion system from a seeded initial state.

    ``seed`` may be an integer or a sequence of integers (a seed-stream
    path), so dataset records can be regenerated individually.
    """
    if grid < 4:
        raise ContractError("grid must be at least 4")
    if steps < 0:
        raise ContractError("steps must be nonnegative")
    limit = stability_limit(params)
    if dt > limit:
        raise ContractError(
            f"dt {dt} violates the stability bound {limit:.6g} for {params}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    a, b = _initial_fields(grid, rng)
    vec = params.as_vector().reshape(4, 1, 1, 1)
    a3, b3 = _integrate_gray_scott(
        a[None], b[None], vec[0], vec[1], vec[2], vec[3], steps, dt
    )
    return GrayScottField(a=a3[0], b=b3[0], params=params, steps_run=steps)


def save_field_snapshot(field: GrayScottField, basepath) -> None:
    """Write the fields as flat row-major float64 (little endian) next to a
    plain-text header describing the layout."""
    import pathlib

    base = pathlib.Path(basepath)
    data = field.as_vector().astype("<f8")
    base.with_suffix(".f64").write_bytes(data.tobytes())
    grid = field.a.shape[0]
    header = (
        "format: flat float64 little-endian, row major\n"
        f"layout: a[{grid}x{grid}] then b[{grid}x{grid}]\n"
        f"grid: {grid}\n"
        f"steps_run: {field.steps_run}\n"
        f"diff_a: {field.params.diff_a!r}\n"
        f"diff_b: {field.params.diff_b!r}\n"
        f"feed: {field.params.feed!r}\n"
        f"kill: {field.params.kill!r}\n"
    )
    base.with_suffix(".hdr").write_text(header)


# ---------------------------------------------------------------------------
# Dataset builders

TESTBEDS = ("linear", "sho", "turing")


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _RECORD_STREAM, index]))


def _sample_turing_params(rng: np.random.Generator) -> GrayScottParams:
    draws = {
        name: rng.uniform(low, high)
        for name, (low, high) in TURING_PARAM_RANGES.items()
    }
    return GrayScottParams(**draws)


def build_pair_dataset(
    testbed: str,
    count: int,
    seed: int,
    *,
    grid: int = 16,
    sim_steps: int = 5000,
    traj_steps: int = 8,
    batch: int = 256,
) -> PairDataset:
    """Sample ``count`` paired records for one testbed.

    Record i draws everything it needs from the stream
    ``SeedSequence([seed, 301, i])``: linear draws the matrix then x0, sho
    draws (x, p) then tau, turing draws the four rates then the initial
    fields. Turing records are integrated in batches for speed; the batched
    kernel is bit-identical to per-record runs.
    """
    if testbed not in TESTBEDS:
        raise ContractError(f"unknown testbed '{testbed}'")
    if count < 0:
        raise ContractError("count must be nonnegative")

    metadata = {
        "generator": testbed,
        "seed": int(seed),
        "count": int(count),
    }

    if testbed == "linear":
        metadata["ranges"] = {"matrix": LINEAR_MATRIX_RANGE, "x0": LINEAR_X0_RANGE}
        metadata["traj_steps"] = int(traj_steps)
        u = np.empty((count, 4))
        v = np.empty((count, 2 * traj_steps))
        for i in range(count):
            rng = _record_rng(seed, i)
            matrix = rng.uniform(*LINEAR_MATRIX_RANGE, size=(2, 2))
            x0 = rng.uniform(*LINEAR_X0_RANGE, size=2)
            spec = LinearSystemSpec(matrix=matrix, x0=x0, steps=traj_steps)
            u[i] = matrix.ravel()
            v[i] = linear_rollout(spec).flat()
        return PairDataset(u, v, metadata)

    if testbed == "sho":
        metadata["ranges"] = {"state": SHO_STATE_RANGE, "tau": (0.0, 2.0 * math.pi)}
        u = np.empty((count, 2))
        v = np.empty((count, 2))
        for i in range(count):
            rng = _record_rng(seed, i)
            x0, p0 = rng.uniform(*SHO_STATE_RANGE, size=2)
            tau = rng.uniform(0.0, 2.0 * math.pi)
            evolved = sho_evolve(ShoState(x=x0, p=p0), tau)
            u[i] = (x0, p0)
            v[i] = (evolved.x, evolved.p)
        return PairDataset(u, v, metadata)

    metadata["ranges"] = {k: v for k, v in TURING_PARAM_RANGES.items()}
    metadata["grid"] = int(grid)
    metadata["sim_steps"] = int(sim_steps)
    metadata["dt"] = 1.0
    u = np.empty((count, 4))
    v = np.empty((count, 2 * grid * grid))
    for start in range(0, count, batch):
        stop = min(start + batch, count)
        size = stop - start
        a = np.empty((size, grid, grid))
        b = np.empty((size, grid, grid))
        rates = np.empty((size, 4))
        for j in range(size):
            index = start + j
            params = _sample_turing_params(_record_rng(seed, index))
            rates[j] = params.as_vector()
            # Fields get their own child stream so a record can be
            # regenerated by gray_scott_run(params, seed=[seed, 301, i, 1]).
            field_rng = np.random.default_rng(
                np.random.SeedSequence([seed, _RECORD_STREAM, index, 1])
            )
            a[j], b[j] = _initial_fields(grid, field_rng)
            if 1.0 > stability_limit(params):
                raise ContractError("sampled parameters violate the stability bound")
        shaped = rates.T.reshape(4, size, 1, 1)
        a, b = _integrate_gray_scott(
            a, b, shaped[0], shaped[1], shaped[2], shaped[3], sim_steps, 1.0
        )
        u[start:stop] = rates
        v[start:stop] = np.concatenate(
            [a.reshape(size, -1), b.reshape(size, -1)], axis=1
        )
    return PairDataset(u, v, metadata)


def resimulate(
    testbed: str,
    u_rows: np.ndarray,
    seed: int | Sequence[int],
    *,
    grid: int = 16,
    sim_steps: int = 5000,
    traj_steps: int = 8,
) -> np.ndarray:
    """Run the testbed simulator on each parameter row and return v-records.

    Used by the design pipeline to check sampled parameters. Row j uses the
    stream ``SeedSequence([*seed, j])`` for its latent draws (initial state
    for linear, initial fields for turing). The sho testbed has no latent
    side information, so its "parameters" evolve by a freshly drawn time.
    """
    u_rows = np.asarray(u_rows, dtype=np.float64)
    if u_rows.ndim != 2:
        raise ContractError("u_rows must be [count, dim]")
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    count = u_rows.shape[0]

    if testbed == "linear":
        if u_rows.shape[1] != 4:
            raise ContractError("linear parameters have 4 entries")
        v = np.empty((count, 2 * traj_steps))
        for j in range(count):
            rng = np.random.default_rng(np.random.SeedSequence(base + [j]))
            x0 = rng.uniform(*LINEAR_X0_RANGE, size=2)
            spec = LinearSystemSpec(u_rows[j].reshape(2, 2), x0, steps=traj_steps)
            v[j] = linear_rollout(spec).flat()
        return v

    if testbed == "sho":
        if u_rows.shape[1] != 2:
            raise ContractError("sho states have 2 entries")
        v = np.empty((count, 2))
        for j in range(count):
            rng = np.random.default_rng(np.random.SeedSequence(base + [j]))
            tau = rng.uniform(0.0, 2.0 * math.pi)
            evolved = sho_evolve(ShoState(*u_rows[j]), tau)
            v[j] = (evolved.x, evolved.p)
        return v

    if testbed == "turing":
        if u_rows.shape[1] != 4:
            raise ContractError("turing parameters have 4 entries")
        a = np.empty((count, grid, grid))
        b = np.empty((count, grid, grid))
        for j in range(count):
            params = GrayScottParams.from_vector(u_rows[j])
            if 1.0 > stability_limit(params):
                raise ContractError("parameters violate the stability bound")
            rng = np.random.default_rng(np.random.SeedSequence(base + [j]))
            a[j], b[j] = _initial_fields(grid, rng)
        shaped = u_rows.T.reshape(4, count, 1, 1)
        a, b = _integrate_gray_scott(
            a, b, shaped[0], shaped[1], shaped[2], shaped[3], sim_steps, 1.0
        )
        return np.concatenate([a.reshape(count, -1), b.reshape(count, -1)], axis=1)

    raise ContractError(f"unknown testbed '{testbed}'")


def clip_to_ranges(testbed: str, u_rows: np.ndarray) -> np.ndarray:
    """Clamp sampled parameters into the testbed's sampling ranges so that
    re-simulation stays inside the regime the simulator is validated for."""
    u_rows = np.array(u_rows, dtype=np.float64)
    if testbed == "linear":
        lo, hi = LINEAR_MATRIX_RANGE
        return np.clip(u_rows, lo, hi)
    if testbed == "sho":
        lo, hi = SHO_STATE_RANGE
        return np.clip(u_rows, lo, hi)
    if testbed == "turing":
        bounds = np.array([TURING_PARAM_RANGES[k] for k in ("diff_a", "diff_b", "feed", "kill")])
        return np.clip(u_rows, bounds[:, 0], bounds[:, 1])
    raise ContractError(f"unknown testbed '{testbed}'")


def testbed_dims(
    testbed: str, *, grid: int = 16, traj_steps: int = 8
) -> tuple[int, int]:
    """(dim_u, dim_v) for a testbed at the given resolution."""
    if testbed == "linear":
        return 4, 2 * traj_steps
    if testbed == "sho":
        return 2, 2
    if testbed == "turing":
        return 4, 2 * grid * grid
    raise ContractError(f"unknown testbed '{testbed}'")
