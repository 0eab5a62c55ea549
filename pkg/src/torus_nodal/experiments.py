"""Reproducible Monte Carlo studies over the random eigenfunction ensemble.

Every per-sample seed is ``derive_seed(master_seed, energy, index)``, so a
record depends only on its config, never on scheduling or worker count.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import calibration, kacrice, nodal
from .ensemble import (
    evaluate,
    evaluate_jet,
    sample_eigenfunction,
    u_moment_exact,
)
from .errors import InvalidArgumentError
from .lattice import enumerate_frequencies, moment_matrix, multiplicity_formula_d2, orbit_decomposition
from .rng import derive_seed, uniforms

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

CSV_COLUMNS = ("energy", "sample_index", "seed", "Z", "Z_normalized", "grid_M", "refinement_error")


@dataclass
class ExperimentConfig:
    dim: int = 2
    energies: list[int] = field(default_factory=lambda: [65])
    samples_per_energy: int = 1000
    grid: Union[str, int] = "auto"
    master_seed: int = 0
    output_path: Optional[str] = None
    histogram: bool = False

    def __post_init__(self):
        self.energies = [int(E) for E in self.energies]
        if self.samples_per_energy < 2:
            raise InvalidArgumentError("samples_per_energy must be at least 2")
        if not self.energies:
            raise InvalidArgumentError("need at least one energy")
        if self.grid != "auto" and (isinstance(self.grid, bool) or int(self.grid) < 1):
            raise InvalidArgumentError(f"grid must be 'auto' or a positive integer, got {self.grid!r}")
        for E in self.energies:
            if enumerate_frequencies(self.dim, E).N == 0:
                raise InvalidArgumentError(f"E={E} has no lattice points in dimension {self.dim}")

    def grid_for(self, E: int) -> Optional[int]:
        return None if self.grid == "auto" else int(self.grid)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls(**data.get("experiment", data))


@dataclass(frozen=True)
class SampleResult:
    energy: int
    sample_index: int
    seed: int
    Z: float
    Z_normalized: float
    grid_M: int
    refinement_error: float


@dataclass
class EnergySummary:
    energy: int
    N: int
    samples: int
    mean: float
    std_error: float
    expected: float
    variance: float
    variance_std_error: float
    variance_sqrt_N: float
    variance_N: float
    wall_clock: float


@dataclass
class ExperimentRecord:
    kind: str
    config: dict
    summaries: list[EnergySummary]
    csv_path: Optional[str] = None
    checks: dict = field(default_factory=dict)
    samples: list[SampleResult] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("samples")
        return out

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.summaries])


def _measure(args) -> SampleResult:
    dim, E, index, seed, M = args
    fs = enumerate_frequencies(dim, E)
    est = nodal.nodal_volume_marching(sample_eigenfunction(fs, seed), M)
    return SampleResult(E, index, seed, est.volume, est.volume / math.sqrt(E), est.grid_M, est.refinement_error)


def _workers() -> int:
    return max(1, int(os.environ.get("TORUS_NODAL_WORKERS", "1")))


def sample_volumes(cfg: ExperimentConfig, E: int) -> list[SampleResult]:
    tasks = [(cfg.dim, E, i, derive_seed(cfg.master_seed, E, i), cfg.grid_for(E))
             for i in range(cfg.samples_per_energy)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_measure, tasks, chunksize=16))
    else:
        results = [_measure(t) for t in tasks]
    return sorted(results, key=lambda r: r.sample_index)


def variance_std_error(x: np.ndarray) -> float:
    """Large-sample standard error of the unbiased sample variance."""
    n = len(x)
    c = x - x.mean()
    m4 = float(np.mean(c**4))
    s2 = float(c @ c / (n - 1))
    return math.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)


def summarize(dim: int, E: int, results: Sequence[SampleResult], wall_clock: float = 0.0) -> EnergySummary:
    z = np.array([r.Z_normalized for r in results])
    N = enumerate_frequencies(dim, E).N
    var = float(z.var(ddof=1))
    return EnergySummary(
        energy=E, N=N, samples=len(z),
        mean=float(z.mean()), std_error=float(z.std(ddof=1) / math.sqrt(len(z))),
        expected=kacrice.nodal_constant(dim),
        variance=var, variance_std_error=variance_std_error(z),
        variance_sqrt_N=var * math.sqrt(N), variance_N=var * N,
        wall_clock=wall_clock,
    )


def write_csv(results: Sequence[SampleResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in results:
            w.writerow([r.energy, r.sample_index, r.seed, repr(r.Z), repr(r.Z_normalized),
                        r.grid_M, repr(r.refinement_error)])


def read_csv(path) -> list[SampleResult]:
    with open(path, newline="") as fh:
        return [SampleResult(int(row["energy"]), int(row["sample_index"]), int(row["seed"]),
                             float(row["Z"]), float(row["Z_normalized"]), int(row["grid_M"]),
                             float(row["refinement_error"]))
                for row in csv.DictReader(fh)]


def _write_histogram(results: Sequence[SampleResult], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    energies = sorted({r.energy for r in results})
    fig, ax = plt.subplots(figsize=(6, 4))
    for E in energies:
        ax.hist([r.Z_normalized for r in results if r.energy == E], bins=40, histtype="step", label=f"E={E}")
    ax.set_xlabel("Z / sqrt(E)")
    ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _run(kind: str, cfg: ExperimentConfig) -> ExperimentRecord:
    summaries, samples = [], []
    for E in cfg.energies:
        t0 = time.perf_counter()
        res = sample_volumes(cfg, E)
        summaries.append(summarize(cfg.dim, E, res, time.perf_counter() - t0))
        samples.extend(res)
        log.info("E=%d: mean %.5f var %.3e", E, summaries[-1].mean, summaries[-1].variance)
    record = ExperimentRecord(kind, asdict(cfg), summaries, samples=samples)
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(samples, out / "samples.csv")
        record.csv_path = str(out / "samples.csv")
    return record


def _persist(record: ExperimentRecord, cfg: ExperimentConfig) -> None:
    if not cfg.output_path:
        return
    out = Path(cfg.output_path)
    (out / "results.json").write_text(json.dumps(record.to_json(), indent=2) + "\n")
    if cfg.histogram:
        _write_histogram(record.samples, out / "histogram.svg")


def run_expectation(cfg: ExperimentConfig) -> ExperimentRecord:
    """Mean of ``Z / sqrt(E)`` per energy against ``I_d``."""
    record = _run("expectation", cfg)
    record.checks = {
        f"E={s.energy}": abs(s.mean - s.expected) <= 3 * s.std_error for s in record.summaries
    }
    _persist(record, cfg)
    return record


def variance_band_ratio(record: ExperimentRecord, column: str = "variance_sqrt_N") -> float:
    col = record.column(column)
    return float(col.max() / col.min())


def run_variance(cfg: ExperimentConfig) -> ExperimentRecord:
    """``Var(Z / sqrt(E))`` per energy with the ``*sqrt(N)`` and ``*N`` columns."""
    Ns = [enumerate_frequencies(cfg.dim, E).N for E in cfg.energies]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise InvalidArgumentError(f"energies must have strictly increasing N, got {Ns}")
    record = _run("variance", cfg)
    ratio = variance_band_ratio(record)
    record.checks = {
        "variance_positive": bool((record.column("variance") > 0).all()),
        "band_ratio": ratio,
        "within_band": ratio <= calibration.VARIANCE_BAND_FACTOR,
    }
    _persist(record, cfg)
    return record


# ---------------------------------------------------------------------------
# identity verification suite


@dataclass
class VerifyReport:
    seed: int
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def add(self, name: str, ok: bool, detail: str) -> None:
        self.checks.append((name, bool(ok), detail))

    def render(self) -> str:
        buf = io.StringIO()
        for name, ok, detail in self.checks:
            buf.write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
        buf.write(f"{'ALL PASSED' if self.passed else 'FAILURES'} ({sum(ok for _, ok, _ in self.checks)}/{len(self.checks)})\n")
        return buf.getvalue()


def _points(seed: int, stream: int, n: int, d: int) -> np.ndarray:
    return uniforms(seed, stream, n * d).reshape(n, d)


def run_verify(seed: int = 0, fuzz: int = 50) -> VerifyReport:
    """Fast deterministic checks of the identities the other modules rely on."""
    rep = VerifyReport(seed)

    bad = []
    for d, Es in ((2, range(1, 101)), (3, range(1, 41))):
        for E in Es:
            fs = enumerate_frequencies(d, E)
            for orb in orbit_decomposition(fs):
                target = Fraction(orb.size * E, d)
                mm = moment_matrix(orb.members, d, E)
                if any(mm[j][k] != (target if j == k else 0) for j in range(d) for k in range(d)):
                    bad.append((d, E, orb.representative))
    rep.add("orbit moment identity", not bad, f"{len(bad)} failing orbits")

    bad = [E for E in range(1, 501) if multiplicity_formula_d2(E) != enumerate_frequencies(2, E).N]
    rep.add("d=2 multiplicity formula", not bad, f"{len(bad)} mismatches for E <= 500")

    bad = []
    for d, E in ((2, 5), (2, 25), (2, 65), (3, 6)):
        fs = enumerate_frequencies(d, E)
        if u_moment_exact(fs, 2) != Fraction(1, fs.N):
            bad.append((d, E))
    rep.add("integral of u^2 = 1/N", not bad, f"failing {bad}")

    worst = 0.0
    for d, E in ((2, 25), (3, 6)):
        fs = enumerate_frequencies(d, E)
        for z in _points(seed, 101, 100, d):
            b = kacrice.covariance_blocks(fs, z)
            lhs, rhs = np.linalg.det(b.Sigma), (1 - b.u**2) * np.linalg.det(b.Omega)
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
    rep.add("det Sigma = (1-u^2) det Omega", worst <= 1e-8, f"max relative error {worst:.2e}")

    # With D = H = 0 the kernel has the closed form I_d^2 E / sqrt(1 - u^2).
    u = 0.6
    blocks = kacrice.blocks_from_two_point(u, np.zeros(2), np.zeros((2, 2)), 2, 25)
    est = kacrice.kernel_K(blocks, 200_000, seed, stream=7)
    target = kacrice.nodal_constant(2) ** 2 * 25 / math.sqrt(1 - u * u)
    rep.add("kernel closed form at u=0.6", abs(est.value - target) <= 4 * est.std_error,
            f"{est.value:.4f} +- {est.std_error:.4f} vs {target:.4f}")

    fs = enumerate_frequencies(2, 65)
    f = sample_eigenfunction(fs, derive_seed(seed, 65, 0))
    worst = 0.0
    for x in _points(seed, 102, 20, 2):
        jet = evaluate_jet(f, x)
        lap = float(np.trace(jet.hessian))
        worst = max(worst, abs(lap + 4 * math.pi**2 * 65 * jet.value) / (4 * math.pi**2 * 65))
    rep.add("Laplacian eigen-equation", worst <= 1e-9, f"max residual {worst:.2e}")

    viol = 0
    for i in range(fuzz):
        d, E = (2, 25) if i % 2 == 0 else (3, 6)
        f = sample_eigenfunction(enumerate_frequencies(d, E), derive_seed(seed, 17, i))
        for eps in (0.5, 0.1):
            M = 32 if d == 2 else 16
            if nodal.smoothed_functional(f, eps, M) > 6 * d * math.sqrt(E):
                viol += 1
    rep.add("uniform bound Z_eps <= 6 d sqrt(E)", viol == 0, f"{viol} violations in {2 * fuzz}")

    viol = 0
    for i in range(fuzz):
        g = nodal.random_trig_polynomial(10, derive_seed(seed, 23, i))
        for eps in (0.5, 0.05):
            if nodal.crossing_functional_1d(g, eps) > 6 * 10:
                viol += 1
    rep.add("1-D crossing bound", viol == 0, f"{viol} violations in {2 * fuzz}")

    fs = enumerate_frequencies(2, 25)
    pts = _points(seed, 103, 2000, 4)
    m = min(kacrice.min_eig_sigma(fs, p[:2], p[2:]) for p in pts)
    diag = kacrice.min_eig_sigma(fs, pts[0, :2], pts[0, :2])
    rep.add("non-degeneracy of Sigma", m > 0 and abs(diag) <= 1e-10,
            f"min over pairs {m:.3e}, at y=x {diag:.1e}")

    f = nodal.make_separable_eigenfunction(2, 3, "single-sine")
    r1 = nodal.nodal_volume_marching(f).volume / 3.0
    f = nodal.make_separable_eigenfunction(2, 2, "product-of-sines")
    r2 = nodal.nodal_volume_marching(f, 512).volume / math.sqrt(8)
    ok = abs(r1 - 2) <= 0.01 and abs(r2 / (2 * math.sqrt(2)) - 1) <= 0.005
    rep.add("deterministic nodal volumes", ok, f"single-sine {r1:.5f}, product {r2:.5f}")
    return rep


# ---------------------------------------------------------------------------
# pilot calibration


def run_calibration(seed: int = 0, kernel_points: int = 300, kernel_mc: int = 20_000,
                    sigma_grid: int = 64) -> dict:
    """Pilot quantities behind the constants pinned in ``calibration``.

    Reports the largest observed ``K sqrt(1-u^2) / E`` (plus three standard
    errors), the ratios ``meas(B) / integral(u^4)`` with ``M = floor(sqrt(E))``,
    and the ``sigma * sqrt(N)`` band; the variance column comes from
    ``run_variance``.
    """
    energies = (5, 25, 65, 325, 1105)
    fs = enumerate_frequencies(2, 25)
    worst = 0.0
    for i, z in enumerate(_points(seed, 201, kernel_points, 2)):
        b = kacrice.covariance_blocks(fs, z)
        est = kacrice.kernel_K(b, kernel_mc, seed, stream=1000 + i)
        worst = max(worst, (est.value + 3 * est.std_error) * math.sqrt(1 - b.u**2) / 25)
    singular, sigma = {}, {}
    for E in energies:
        fs = enumerate_frequencies(2, E)
        meas = kacrice.singular_set_measure(fs, math.isqrt(E), seed)
        singular[E] = meas / float(u_moment_exact(fs, 4))
        st = kacrice.sigma_statistics(fs, sigma_grid)
        sigma[E] = {"sigma_sqrt_N": st.mean_sigma * math.sqrt(fs.N), "sigma_sq_N": st.mean_sigma_sq * fs.N}
    return {"kernel_bound_observed": worst, "singular_ratio": singular, "sigma_band": sigma}
