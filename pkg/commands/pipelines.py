"""
Subcommands running one pipeline each, plus `run` for any configuration file.
"""
import logging

from commands.common import add_common_arguments, print_errors, run_pipeline

logger = logging.getLogger(__name__)

PME_FIGURES = {"gauge": "fig3-gauge", "efield": "fig3-efield", "current": "fig4-current"}


def spectrum(args) -> int:
    extra = {"name": "fig2", "model.lambda": args.lam, "model.a": args.a,
             "parameters.a_values": args.a_values}
    return run_pipeline(args, {}, extra)


def chern_form(args) -> int:
    extra = {"name": "fig4-chernform", "model.m": args.m, "grid.n_q": args.n_q,
             "grid.n_theta": args.n_theta, "grid.q_cut": args.q_cut}
    return run_pipeline(args, {"model": {"m": 8.0}}, extra)


def c2_sweep(args) -> int:
    extra = {"name": "fig4-c2sweep", "model.a": args.a, "parameters.masses": args.masses,
             "grid.q_cut": args.q_cut,
             "parameters.protocol": True if args.protocol else None,
             "parameters.extrapolate": True if args.extrapolate else None}
    return run_pipeline(args, {}, extra)


def pme(args) -> int:
    return run_pipeline(args, {}, {"name": PME_FIGURES[args.figure], "model.lambda": args.lam})


def device(args) -> int:
    extra = {"name": "device", "parameters.coupling_scale": args.coupling_scale, "parameters.rabi": args.rabi}
    return run_pipeline(args, {}, extra)


def winding(args) -> int:
    extra = {"name": "invariants", "model.a": args.a, "model.lambda": args.lam,
             "parameters.chern": False if args.skip_chern else None}
    return run_pipeline(args, {}, extra)


def run(args) -> int:
    if args.path is not None:
        if args.config is not None and args.config != args.path:
            print_errors([f"xplab-cli.config: both {args.path} and --config {args.config} given"])
            return 2
        args.config = args.path
    return run_pipeline(args, {})


def register(subparsers):
    p = subparsers.add_parser("spectrum", help="Band structure along k_w and k_x")
    p.add_argument("--a", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--a-values", type=float, nargs="+")
    add_common_arguments(p)
    p.set_defaults(handler=spectrum)

    p = subparsers.add_parser("chern-form", help="Chern form on the (q, θ) grid")
    p.add_argument("--m", type=float, help="Mass (MHz), default 8")
    p.add_argument("--n-q", type=int)
    p.add_argument("--n-theta", type=int)
    p.add_argument("--q-cut", type=float)
    add_common_arguments(p)
    p.set_defaults(handler=chern_form)

    p = subparsers.add_parser("c2-sweep", help="Second Chern number against the mass")
    p.add_argument("--a", type=float)
    p.add_argument("--masses", type=float, nargs="+")
    p.add_argument("--q-cut", type=float)
    p.add_argument("--protocol", action="store_true", help="Also measure C2 through the ramp protocol")
    p.add_argument("--extrapolate", action="store_true", help="Extrapolate the cutoff to infinity")
    add_common_arguments(p)
    p.set_defaults(handler=c2_sweep)

    p = subparsers.add_parser("pme", help="Parity magnetic effect: gauge sweep, separation or current")
    p.add_argument("--figure", choices=sorted(PME_FIGURES), default="gauge")
    p.add_argument("--lambda", dest="lam", type=float)
    add_common_arguments(p)
    p.set_defaults(handler=pme)

    p = subparsers.add_parser("device", help="Floquet, ATS and spectroscopy checks of the device")
    p.add_argument("--coupling-scale", type=float)
    p.add_argument("--rabi", type=float)
    add_common_arguments(p)
    p.set_defaults(handler=device)

    p = subparsers.add_parser("winding", help="Winding numbers and the other invariants")
    p.add_argument("--a", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--skip-chern", action="store_true", help="Skip the valley and Yang charges")
    add_common_arguments(p)
    p.set_defaults(handler=winding)

    p = subparsers.add_parser("run", help="Run the pipeline named in a configuration file")
    p.add_argument("path", nargs="?", metavar="CONFIG", help="JSON run configuration")
    add_common_arguments(p)
    p.set_defaults(handler=run)
