"""Command-line interface: ``qphase <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
``QPHASE_THREADS`` sets the default worker count.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .analysis import (
    Histogram,
    compare_distributions,
    fidelity,
    husimi_q,
    reconstruct_density,
    sse_phase_histogram,
    wigner,
)
from .dynamics import TrajectoryConfig, default_workers, simulate_ensemble, steady_state
from .exceptions import InvalidDimensionError, InvalidParameterError, InvalidStateError, QPhaseError
from .io import (
    ConfigError,
    density_to_dict,
    perturbation_operator,
    read_density,
    read_json,
    read_model,
    read_perturbation,
    write_json,
)
from .limit_cycle import LimitCycle, find_limit_cycle
from .models import model_config, model_from_config
from .operators import make_generator_basis
from .phase_equation import PhaseSDE, add_perturbation, build_phase_sde, stationary_distribution
from .prc import PRCTable, prc_direct, prc_table

logger = logging.getLogger("qphase")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def _load_lc(path):
    return LimitCycle.from_dict(read_json(path))


def _workers(args):
    return args.threads if getattr(args, "threads", None) else default_workers()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_model(args):
    config = {"model": args.name}
    if args.params:
        config["params"] = json.loads(args.params)
    if args.n_levels is not None:
        config["n_levels"] = args.n_levels
    model = model_from_config(config)
    doc = {"model_config": model_config(model), "operators": model.to_dict()}
    if args.steady_state:
        doc["steady_state"] = density_to_dict(steady_state(model))
    _emit(args.out, doc)


def cmd_limit_cycle(args):
    model = read_model(args.model)
    lc = find_limit_cycle(model, n_grid=args.n_grid, dt=args.dt, t_relax=args.t_relax,
                          seed=args.seed)
    write_json(args.out, lc.to_dict())
    logger.info("period %.12g, omega %.12g", lc.period, lc.omega)


def cmd_prc(args):
    lc = _load_lc(args.lc)
    if args.direct:
        if not args.hp:
            raise ConfigError("--direct needs --hp")
        Hp = read_perturbation(args.hp, lc.model.n)
        n_theta = args.n_theta or lc.n_grid
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        z = prc_direct(lc, Hp, theta, eps=args.eps, n_periods=args.n_periods)
        with open(args.out, "w") as fh:
            fh.write("theta,Z\n")
            for th, val in zip(theta, z):
                fh.write(f"{float(th)!r},{float(val)!r}\n")
        return
    if args.basis != "sun":
        raise ConfigError(f"unknown basis {args.basis!r}; only 'sun' is available")
    table = prc_table(lc, make_generator_basis(lc.model.n), n_theta=args.n_theta, eps=args.eps,
                      n_periods=args.n_periods, n_jobs=_workers(args))
    table.to_csv(args.out)


def cmd_build_sde(args):
    lc = _load_lc(args.lc)
    table = PRCTable.from_csv(args.prc)
    basis = make_generator_basis(lc.model.n)
    sde = build_phase_sde(lc, table, basis)
    if args.perturb:
        Hp = read_perturbation(args.perturb, lc.model.n)
        sde = add_perturbation(sde, Hp, args.eps, table, basis)
    write_json(args.out, sde.to_dict())


def cmd_simulate_phase(args):
    sde = PhaseSDE.from_dict(read_json(args.sde))
    hist = stationary_distribution(sde, n_traj=args.n_traj, t_end=args.t_end, dt=args.dt,
                                   seed=args.seed, n_bins=args.n_bins, scheme=args.scheme,
                                   n_jobs=_workers(args))
    hist.to_csv(args.out)


def cmd_simulate_sse(args):
    if args.lc:
        lc = _load_lc(args.lc)
        model, psi0 = lc.model, lc.samples[0]
    else:
        if not args.model:
            raise ConfigError("simulate-sse needs --model or --lc")
        model = read_model(args.model)
        psi0 = np.zeros(model.n, complex)
        psi0[0] = 1.0
        lc = None
    cfg = TrajectoryConfig(dt=args.dt, t_end=args.t_end, seed=args.seed, scheme=args.scheme,
                           record_every=args.record_every)
    res = simulate_ensemble(psi0, model, cfg, args.n_traj, keep_states=lc is not None,
                            n_jobs=_workers(args))
    write_json(args.out, {"t": float(res.times[-1]), "n_traj": res.n_traj,
                          "rho": density_to_dict(res.rho_mean[-1])})
    if lc is not None and args.hist:
        burn = int(0.2 * res.states.shape[1])
        hist = sse_phase_histogram(lc, res.states[:, burn:], n_bins=args.n_bins)
        hist.to_csv(args.hist)


def cmd_reconstruct(args):
    lc = _load_lc(args.lc)
    hist = Histogram.from_csv(args.hist)
    write_json(args.out, density_to_dict(reconstruct_density(hist, lc)))


def cmd_wigner(args):
    rho = read_density(args.rho)
    axis = None
    if args.extent:
        axis = np.linspace(-args.extent, args.extent, args.points)
    elif args.points != 201:
        half = np.sqrt(2 * rho.shape[0]) + 2
        axis = np.linspace(-half, half, args.points)
    fn = husimi_q if args.kind == "husimi" else wigner
    fn(rho, axis, axis).to_csv(args.out)


def cmd_fidelity(args):
    value = fidelity(read_density(args.a), read_density(args.b))
    _emit(None, {"fidelity": value})


def _emit(path, doc):
    if path:
        write_json(path, doc)
    else:
        json.dump(doc, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

STAGES = ("limit_cycle", "prc", "sde", "phase", "sse", "reconstruct")

DEFAULT_NUMERICS = {
    "dt": None,
    "t_relax": None,
    "n_grid": 512,
    "n_theta": 128,
    "eps": 1e-4,
    "n_periods": None,
    "n_traj": 10_000,
    "t_end": None,
    "phase_dt": None,
    "n_bins": 64,
    "seed": 0,
    "scheme": "stratonovich",
    "sse_n_traj": 200,
    "sse_dt": None,
    "sse_t_end": None,
    "sse_record_every": None,
}


def load_run_config(path):
    cfg = read_json(path)
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ConfigError(f"{path}: config must be an object with a 'model' entry")
    model_spec = cfg["model"]
    if isinstance(model_spec, str):
        model_spec = {"model": model_spec}
    numerics = dict(DEFAULT_NUMERICS)
    unknown = set(cfg.get("numerics", {})) - set(numerics)
    if unknown:
        raise ConfigError(f"{path}: unknown numerics keys {sorted(unknown)}")
    numerics.update(cfg.get("numerics", {}))
    stages = cfg.get("stages", list(STAGES))
    bad = set(stages) - set(STAGES)
    if bad:
        raise ConfigError(f"{path}: unknown stages {sorted(bad)}; known: {list(STAGES)}")
    return {
        "model": model_spec,
        "numerics": numerics,
        "stages": [s for s in STAGES if s in stages],
        "perturbation": cfg.get("perturbation"),
        "output_dir": cfg.get("output_dir"),
        "reference": cfg.get("reference", "steady_state"),
    }


def run_pipeline(config_path, out_dir=None, resume=False, n_jobs=None):
    """Run the configured stages; returns the report dictionary.

    Artifacts of completed stages are kept when a later stage fails, and the
    report records the failing stage.
    """
    cfg = load_run_config(config_path)
    num = cfg["numerics"]
    out_dir = out_dir or cfg["output_dir"] or os.path.join(os.path.dirname(os.path.abspath(config_path)), "out")
    os.makedirs(out_dir, exist_ok=True)
    n_jobs = n_jobs or default_workers()

    def path(name):
        return os.path.join(out_dir, name)

    model = model_from_config(cfg["model"])
    report = {"model": model_config(model), "stages": [], "status": "ok"}
    stage = "setup"
    try:
        stage = "limit_cycle"
        if resume and os.path.exists(path("lc.json")):
            lc = _load_lc(path("lc.json"))
        else:
            lc = find_limit_cycle(model, n_grid=num["n_grid"], dt=num["dt"],
                                  t_relax=num["t_relax"], seed=num["seed"])
            write_json(path("lc.json"), lc.to_dict())
        report["stages"].append(stage)
        report["period"] = lc.period
        report["omega"] = lc.omega
        basis = make_generator_basis(model.n)

        table = sde = hist = None
        if "prc" in cfg["stages"]:
            stage = "prc"
            table = prc_table(lc, basis, n_theta=num["n_theta"], eps=num["eps"],
                              n_periods=num["n_periods"], n_jobs=n_jobs)
            table.to_csv(path("prc.csv"))
            report["stages"].append(stage)
        if "sde" in cfg["stages"]:
            stage = "sde"
            if table is None:
                table = PRCTable.from_csv(path("prc.csv"), epsilon=num["eps"])
            sde = build_phase_sde(lc, table, basis)
            if cfg["perturbation"]:
                spec = dict(cfg["perturbation"])
                eps = float(spec.pop("eps", 0.0))
                sde = add_perturbation(sde, perturbation_operator(spec, model.n), eps, table, basis)
            write_json(path("sde.json"), sde.to_dict())
            report["stages"].append(stage)
        if "phase" in cfg["stages"]:
            stage = "phase"
            if sde is None:
                sde = PhaseSDE.from_dict(read_json(path("sde.json")))
            hist = stationary_distribution(sde, n_traj=num["n_traj"], t_end=num["t_end"],
                                           dt=num["phase_dt"], seed=num["seed"],
                                           n_bins=num["n_bins"], scheme=num["scheme"], n_jobs=n_jobs)
            hist.to_csv(path("hist.csv"))
            report["max_density"] = hist.max_density
            report["clustering"] = hist.max_density * 2 * np.pi
            report["stages"].append(stage)
        if "sse" in cfg["stages"]:
            stage = "sse"
            sse_dt = num["sse_dt"] or min(1e-3 / model.gamma_max, lc.dt / 4)
            sse_t_end = num["sse_t_end"] or 20 * lc.period
            # by default record about eight states per period
            every = num["sse_record_every"] or max(1, int(lc.period / 8 / sse_dt))
            tcfg = TrajectoryConfig(dt=sse_dt, t_end=sse_t_end, seed=num["seed"], record_every=every)
            res = simulate_ensemble(lc.samples[0], model, tcfg, num["sse_n_traj"],
                                    keep_states=True, n_jobs=n_jobs)
            burn = int(0.2 * res.states.shape[1])
            sse_hist = sse_phase_histogram(lc, res.states[:, burn:], n_bins=num["n_bins"])
            sse_hist.to_csv(path("hist_sse.csv"))
            if hist is not None:
                report["tv_sse_phase"] = compare_distributions(sse_hist, hist)
            report["sse_max_density"] = sse_hist.max_density
            report["stages"].append(stage)
        if "reconstruct" in cfg["stages"]:
            stage = "reconstruct"
            if hist is None:
                hist = Histogram.from_csv(path("hist.csv"))
            rho = reconstruct_density(hist, lc)
            write_json(path("rho.json"), density_to_dict(rho))
            if cfg["reference"] == "steady_state":
                report["fidelity"] = fidelity(rho, steady_state(model))
            report["stages"].append(stage)
    except QPhaseError as exc:
        report["status"] = "failed"
        report["failed_stage"] = stage
        report["error"] = f"{type(exc).__name__}: {exc}"
        write_json(path("report.json"), report)
        raise
    write_json(path("report.json"), report)
    return report


def cmd_run(args):
    report = run_pipeline(args.config, out_dir=args.out_dir, resume=args.resume,
                          n_jobs=args.threads)
    _emit(None, report)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="qphase", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (default: QPHASE_THREADS or all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="build a catalog model and write its operators")
    p.add_argument("--name", required=True, help="builder or preset name, e.g. qvdp or fig2a")
    p.add_argument("--params", help="JSON object of builder parameters")
    p.add_argument("--n-levels", type=int)
    p.add_argument("--steady-state", action="store_true", help="include the Lindblad steady state")
    p.add_argument("--out")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("limit-cycle", help="find and sample the deterministic limit cycle")
    p.add_argument("--model", required=True, help="preset name or model JSON")
    p.add_argument("--n-grid", type=int, default=512)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-relax", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_limit_cycle)

    p = sub.add_parser("prc", help="phase response curves")
    p.add_argument("--lc", required=True)
    p.add_argument("--basis", default="sun")
    p.add_argument("--hp", help="perturbation JSON for the direct method")
    p.add_argument("--direct", action="store_true")
    p.add_argument("--n-theta", type=int)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--n-periods", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prc)

    p = sub.add_parser("build-sde", help="assemble the reduced phase equation")
    p.add_argument("--lc", required=True)
    p.add_argument("--prc", required=True)
    p.add_argument("--perturb")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_sde)

    p = sub.add_parser("simulate-sse", help="ensemble of stochastic Schrödinger trajectories")
    p.add_argument("--model")
    p.add_argument("--lc", help="start on this cycle and record phases")
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scheme", default="ito_euler")
    p.add_argument("--record-every", type=int, default=10)
    p.add_argument("--n-bins", type=int, default=64)
    p.add_argument("--hist", help="phase histogram CSV (needs --lc)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_sse)

    p = sub.add_parser("simulate-phase", help="stationary distribution of the phase equation")
    p.add_argument("--sde", required=True)
    p.add_argument("--n-traj", type=int, default=10_000)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-bins", type=int, default=64)
    p.add_argument("--scheme", default="stratonovich")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_phase)

    p = sub.add_parser("reconstruct", help="density operator from a phase histogram")
    p.add_argument("--hist", required=True)
    p.add_argument("--lc", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("wigner", help="Wigner (or Husimi) function on a grid")
    p.add_argument("--rho", required=True)
    p.add_argument("--kind", choices=("wigner", "husimi"), default="wigner")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--extent", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("fidelity", help="Uhlmann fidelity of two density operators")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("run", help="run a configured pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--resume", action="store_true", help="reuse an existing lc.json")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, InvalidParameterError, InvalidDimensionError, InvalidStateError,
            json.JSONDecodeError) as exc:
        print(f"qphase: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QPhaseError as exc:
        print(f"qphase: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"qphase: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
