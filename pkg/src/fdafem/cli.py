"""Command-line entry point: run one experiment and write its CSV and JSON files.

Examples
--------
``fdafem --experiment uzawa --outer 8 --out runs/k6``
``fdafem --experiment conditioning --levels 1 2 3 4 5 6 --out runs/cond``
``fdafem --config run.json --K 15``
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import report
from .femcore import SOLVER_OPTIONS

log = logging.getLogger("fdafem")

EXPERIMENTS = ("uzawa", "conditioning")


@dataclass
class RunConfig:
    """Complete description of one run; serialises to flat JSON."""

    experiment: str = "uzawa"
    K: int = 6
    theta: float = 0.1
    beta: float = 2.5
    Lbar: float = 0.1
    zeta: float = math.sqrt(2.0)
    I: int = 8
    n0: int = 8
    c_upp: float = 1.0
    levels: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    lbb_factor: float = 0.25
    wavelet: str = "cdf13"
    solver_rtol: float = 1e-10
    direct_limit: int = 200_000
    out: str = "fdafem-out"
    seed: int = 0
    plots: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        self.levels = [int(v) for v in self.levels]
        if not self.levels or min(self.levels) < 1:
            raise ValueError("levels must be positive integers")
        if not self.lbb_factor > 0:
            raise ValueError("lbb_factor must be positive")
        if not self.solver_rtol > 0:
            raise ValueError("solver_rtol must be positive")
        self.uzawa_params()  # validates the iteration knobs

    def uzawa_params(self):
        from .uzawa import UzawaParams

        return UzawaParams(K=self.K, beta=self.beta, Lbar=self.Lbar, zeta=self.zeta,
                           theta=self.theta, I=self.I, n0=self.n0, c_upp=self.c_upp)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def run_experiment(config):
    """Run ``config.experiment`` and return the written file paths."""
    SOLVER_OPTIONS.update(rtol=config.solver_rtol, direct_limit=config.direct_limit)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json() + "\n")
    if config.experiment == "uzawa":
        paths = _run_uzawa(config, out)
    else:
        paths = _run_conditioning(config, out)
    if config.plots:
        from .plots import plot_run

        paths = tuple(paths) + tuple(plot_run(out, config.experiment))
    return paths


def _run_uzawa(config, out):
    from .testproblem import LShapeProblem
    from .uzawa import run_uzawa

    pb = LShapeProblem()

    def progress(row):
        log.info("i=%d j=%d #tau=%d #sigma=%d rounds=%d E_inner=%.3e e_u=%.3e e_lambda=%.3e",
                 row.i, row.j, row.n_tri, row.n_sigma, row.afem_rounds, row.E_inner,
                 row.e_u, row.e_lambda)

    trace = run_uzawa(pb.volume_data(), pb.g, pb.curve, config.uzawa_params(), problem=pb,
                      g_norm=pb.g_h1_norm(), progress=progress)
    return report.emit_report(trace, out, config)


def _run_conditioning(config, out):
    from .diagnostics import schur_spectrum
    from .testproblem import LShapeProblem

    pb = LShapeProblem()
    reps = []
    for lv in config.levels:
        r = schur_spectrum(lv, pb.curve, n0=config.n0, factor=config.lbb_factor,
                           wavelet=config.wavelet)
        log.info("#sigma=%d #tau=%d kappa_S=%.3f kappa_MinvS=%.3f", r.n_sigma, r.n_tri,
                 r.kappa_S, r.kappa_MS)
        reps.append(r)
    return report.emit_conditioning(reps, out, config)


def build_parser():
    p = argparse.ArgumentParser(prog="fdafem", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--K", type=int, help="inner Uzawa steps per level")
    p.add_argument("--theta", type=float, help="Doerfler parameter")
    p.add_argument("--beta", type=float, help="Richardson damping")
    p.add_argument("--Lbar", type=float, help="tolerance prefactor")
    p.add_argument("--zeta", type=float, help="tolerance ratio per outer iteration")
    p.add_argument("--outer", type=int, dest="I", help="number of outer iterations")
    p.add_argument("--n0", type=int, help="intervals of the coarsest curve partition")
    p.add_argument("--c-upp", type=float, dest="c_upp", help="constant in the afem stopping test")
    p.add_argument("--levels", type=int, nargs="+", help="partition levels (conditioning)")
    p.add_argument("--lbb-factor", type=float, dest="lbb_factor",
                   help="diameter bound near the curve, in units of |I| (conditioning)")
    p.add_argument("--wavelet", choices=("haar", "cdf13"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--plots", action="store_true", default=None,
                   help="also render PNG figures from the CSV (needs matplotlib)")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging")
    return p


def config_from_args(args):
    data = json.loads(args.config.read_text()) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    return RunConfig.from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        config = config_from_args(args)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"fdafem: invalid configuration: {exc}", file=sys.stderr)
        return 2
    for path in run_experiment(config):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
