"""Command line interface: ``torus-nodal <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import experiments, kacrice, nodal
from .ensemble import (
    Eigenfunction,
    evaluate_grid,
    export_grid,
    sample_eigenfunction,
    u_moment_exact,
)
from .errors import TorusNodalError
from .lattice import enumerate_frequencies, orbit_decomposition


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, default=_jsonable) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_lattice(args) -> int:
    fs = enumerate_frequencies(args.dim, args.energy)
    if args.format == "csv":
        w = csv.writer(sys.stdout)
        w.writerow([f"x{j + 1}" for j in range(fs.dim)] + ["in_half_set"])
        half = set(fs.half_set)
        for lam in fs.frequencies:
            w.writerow(list(lam) + [int(lam in half)])
        return 0
    out = {"dim": fs.dim, "energy": fs.energy, "multiplicity": fs.N,
           "frequencies": [list(lam) for lam in fs.frequencies]}
    if args.orbits:
        out["orbits"] = [{"representative": list(o.representative), "size": o.size}
                         for o in orbit_decomposition(fs)]
    _emit(out)
    return 0


def cmd_sample(args) -> int:
    f = sample_eigenfunction(enumerate_frequencies(args.dim, args.energy), args.seed)
    if args.out:
        f.save(args.out)
    else:
        _emit(f.to_json())
    return 0


def _load_or_sample(args) -> Eigenfunction:
    if args.input:
        return Eigenfunction.load(args.input)
    if args.dim is None or args.energy is None:
        raise SystemExit("need --input or both --dim and --energy")
    return sample_eigenfunction(enumerate_frequencies(args.dim, args.energy), args.seed)


def cmd_grid(args) -> int:
    f = _load_or_sample(args)
    export_grid(evaluate_grid(f, args.grid, args.backend), args.out, args.format)
    return 0


def cmd_nodal(args) -> int:
    f = _load_or_sample(args)
    if args.method == "marching":
        est = nodal.nodal_volume_marching(f, args.grid)
    else:
        est = nodal.nodal_volume_smoothed(f, args.epsilon, args.grid)
    if args.mesh:
        nodal.write_mesh(nodal.nodal_mesh(f, 2 * est.grid_M), args.mesh)
    out = est.to_json()
    out["normalized"] = est.volume / math.sqrt(f.energy)
    out["expected"] = kacrice.expected_volume(f.dim, f.energy)
    _emit(out, args.out)
    return 0


def cmd_kernel(args) -> int:
    fs = enumerate_frequencies(args.dim, args.energy)
    blocks = kacrice.covariance_blocks(fs, _floats(args.z))
    est = kacrice.kernel_K(blocks, args.mc, args.seed)
    out = asdict(est)
    out.update(u=blocks.u, sigma_norm=blocks.sigma_norm,
               config={"dim": args.dim, "energy": args.energy, "z": _floats(args.z), "mc": args.mc})
    _emit(out)
    return 0


def cmd_moments(args) -> int:
    fs = enumerate_frequencies(args.dim, args.energy)
    res = kacrice.second_moment(fs, args.grid, args.mc_per_point, args.seed)
    out = res.to_json()
    out["mean_squared"] = kacrice.expected_volume(args.dim, args.energy) ** 2
    out["config"] = {"dim": args.dim, "energy": args.energy, "grid": args.grid,
                     "mc_per_point": args.mc_per_point, "seed": args.seed}
    _emit(out, args.out)
    return 0


def cmd_singular(args) -> int:
    fs = enumerate_frequencies(args.dim, args.energy)
    M = args.cubes or max(1, math.isqrt(args.energy))
    meas = kacrice.singular_set_measure(fs, M, args.seed)
    _emit({"dim": args.dim, "energy": args.energy, "cubes": M, "seed": args.seed,
           "measure": meas, "u4_integral": float(u_moment_exact(fs, 4))})
    return 0


def _experiment_config(args) -> experiments.ExperimentConfig:
    if args.config:
        cfg = experiments.ExperimentConfig.from_toml(args.config)
        if args.out:
            cfg.output_path = args.out
        return cfg
    energies = [int(e) for e in args.energies.split(",")]
    grid = args.grid if args.grid is not None else "auto"
    return experiments.ExperimentConfig(args.dim, energies, args.samples, grid, args.seed,
                                        args.out, args.histogram)


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    run = experiments.run_expectation if args.kind == "expectation" else experiments.run_variance
    record = run(cfg)
    _emit(record.to_json())
    return 0


def cmd_verify(args) -> int:
    report = experiments.run_verify(args.seed)
    sys.stdout.write(report.render())
    return report.exit_code


def cmd_calibrate(args) -> int:
    _emit(experiments.run_calibration(args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus-nodal", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def dim_energy(sp, required=True):
        sp.add_argument("--dim", type=int, required=required)
        sp.add_argument("--energy", type=int, required=required)

    sp = sub.add_parser("lattice", help="enumerate the frequency set")
    dim_energy(sp)
    sp.add_argument("--orbits", action="store_true", help="include the signed-permutation orbits")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.set_defaults(func=cmd_lattice)

    sp = sub.add_parser("sample", help="draw a random eigenfunction")
    dim_energy(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    for name, func, help_ in (("grid", cmd_grid, "evaluate on an M^d grid"),
                              ("nodal", cmd_nodal, "nodal volume of one eigenfunction")):
        sp = sub.add_parser(name, help=help_)
        dim_energy(sp, required=False)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--in", "--input", dest="input", help="eigenfunction JSON from `sample`")
        sp.set_defaults(func=func)
        if name == "grid":
            sp.add_argument("--grid", type=int, required=True)
            sp.add_argument("--backend", choices=("spectral", "direct"), default="spectral")
            sp.add_argument("--format", choices=("bin", "csv"), default="bin")
            sp.add_argument("--out", required=True)
        else:
            sp.add_argument("--grid", type=int)
            sp.add_argument("--method", choices=("marching", "smoothed"), default="marching")
            sp.add_argument("--eps", "--epsilon", dest="epsilon", type=float, default=0.05)
            sp.add_argument("--mesh", help="write the extracted segments/triangles here")
            sp.add_argument("--out", help="write the estimate JSON here instead of stdout")

    sp = sub.add_parser("kernel", help="Monte Carlo estimate of the kernel K(z)")
    dim_energy(sp)
    sp.add_argument("--z", required=True, help="comma separated separation")
    sp.add_argument("--mc", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("moments", help="second moment as the integral of K")
    dim_energy(sp)
    sp.add_argument("--grid", type=int, default=128)
    sp.add_argument("--mc-per-point", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("singular", help="sampled measure of the singular cubes")
    dim_energy(sp)
    sp.add_argument("--cubes", type=int, help="cubes per side (default floor(sqrt(E)))")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_singular)

    sp = sub.add_parser("experiment", help="Monte Carlo study over the ensemble")
    sp.add_argument("kind", choices=("expectation", "variance"))
    sp.add_argument("--config", help="TOML file with an [experiment] table")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--energies", default="65")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="output directory for samples.csv and results.json")
    sp.add_argument("--histogram", action="store_true")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("verify", help="run the identity checks; exit 1 on failure")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("calibrate", help="pilot run behind the pinned constants")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TorusNodalError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
