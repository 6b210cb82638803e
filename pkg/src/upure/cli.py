"""Command-line interface: poison, purify, measure and bound reports.

Exit status: 0 success, 1 usage or validation error, 2 I/O error, 3 numeric
domain error. Options may also come from a flat ``key=value`` file given by
``--config``; command-line flags override it.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    RepetTriggerParams,
    SingleTriggerParams,
    covering_count,
    lattice_count,
    p_defense,
    p_repet_lower,
    p_repet_monte_carlo,
    p_single_lower,
    p_single_monte_carlo,
    sweep_single,
    sweep_repet,
)
from .exceptions import DatasetFormatError, NumericDomainError, PurificationError
from .io import (
    Dataset,
    format_number,
    load_dataset,
    save_dataset,
    write_csv,
    write_mask,
    write_run_header,
)
from .metrics import batch_fidelity
from .purify import PurifyConfig, Strategy, calibrate_sigma, cutout, purify_dataset
from .rdp import (
    GaussianSource,
    measure_distortion,
    measure_perception,
    min_beta_for_target,
    min_tau,
    rdp_curve,
    rdp_gaussian,
)
from ._validation import image_rng
from .trigger import PatchTrigger, PoisonConfig, RepetitiveTrigger, poison_dataset

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _probability_list(text):
    values = [float(v) for v in text.split(",")]
    return values[0] if len(values) == 1 else values


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _position(text):
    if text in ("corner", "random"):
        return text
    r, c = (int(v) for v in text.split(","))
    return (r, c)


def _add_common(p, seed=True, workers=False):
    p.add_argument("--config", help="key=value file; flags override its values")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if workers:
        p.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")


def _add_output_format(p):
    p.add_argument(
        "--format",
        choices=["cifar10", "png", "ppm"],
        default=None,
        help="output format (default: png/ppm if OUTPUT ends in that suffix, else cifar10)",
    )


def _add_single_params(p):
    p.add_argument("--image-h", type=int, default=32)
    p.add_argument("--image-w", type=int, default=32)
    p.add_argument("--cut-h", type=int, default=16)
    p.add_argument("--cut-w", type=int, default=16)
    p.add_argument("--trig-h", type=int, default=4)
    p.add_argument("--trig-w", type=int, default=4)
    p.add_argument("--alpha", type=int, default=16)


def _add_repet_params(p):
    p.add_argument("--n-coeffs", type=int, default=16)
    p.add_argument("--n-preserved", type=int, default=4)
    p.add_argument("--beta", type=int, default=6)
    p.add_argument("--q", type=_probability_list, default="0.5", help="scalar or comma-separated vector")


def build_parser():
    parser = _Parser(prog="upure", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"upure {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("poison", help="inject a backdoor trigger into a fraction of a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mask", help="mask sidecar path (default: OUTPUT.mask.txt)")
    _add_output_format(p)
    p.add_argument("--gamma", type=float, default=0.002, help="poisoning rate")
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--trigger", choices=["repetitive", "patch"], default="repetitive")
    p.add_argument("--intensity", type=float, default=30.0)
    p.add_argument("--line-width", type=int, default=1)
    p.add_argument("--gap", type=int, default=1)
    p.add_argument("--axes", choices=["rows", "cols", "both"], default="both")
    p.add_argument("--polarity", choices=["bipolar", "unipolar"], default="bipolar")
    p.add_argument("--patch-size", type=int, default=4)
    p.add_argument("--patch-position", type=_position, default="corner", help="corner, random or ROW,COL")
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("purify", help="purify the high-frequency DCT block of every image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--donors", help="donor dataset for replace_from_other (default: the input)")
    _add_output_format(p)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.ADD_PERTURBATION.value)
    p.add_argument("--tau", type=int, default=16)
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--max-draws", type=int, default=1000)
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("cutout", help="apply cutout augmentation")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_output_format(p)
    p.add_argument("--cut-height", type=int, default=16)
    p.add_argument("--cut-width", type=int, default=16)
    p.add_argument("--fill", type=float, default=127.0)
    _add_common(p)
    p.set_defaults(func=cmd_cutout)

    p = sub.add_parser("bounds", help="trigger-failure probability bounds")
    bsub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    b = bsub.add_parser("single")
    _add_single_params(b)
    b.add_argument("--mc-trials", type=int, default=0, help="also run a Monte-Carlo check")
    b.add_argument("--trigger-row", type=int, default=0)
    b.add_argument("--trigger-col", type=int, default=0)
    _add_common(b)
    b.set_defaults(func=cmd_bounds_single)
    b = bsub.add_parser("repet")
    _add_repet_params(b)
    b.add_argument("--mc-trials", type=int, default=0)
    _add_common(b)
    b.set_defaults(func=cmd_bounds_repet)
    b = bsub.add_parser("combined")
    _add_single_params(b)
    _add_repet_params(b)
    _add_common(b, seed=False)
    b.set_defaults(func=cmd_bounds_combined)
    b = bsub.add_parser("sweep")
    b.add_argument("--kind", dest="sweep", choices=["single", "repet"], required=True)
    b.add_argument("--output", help="CSV path (default: stdout)")
    _add_common(b, seed=False)
    b.set_defaults(func=cmd_bounds_sweep)

    p = sub.add_parser("rdp", help="Gaussian rate-distortion-perception function")
    rsub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    r = rsub.add_parser("rate")
    r.add_argument("--sigma-x", type=float, default=1.0)
    r.add_argument("--distortion", type=float, required=True)
    r.add_argument("--perception", type=float, required=True)
    _add_common(r, seed=False)
    r.set_defaults(func=cmd_rdp_rate)
    r = rsub.add_parser("curve")
    r.add_argument("--sigma-x", type=float, default=1.0)
    r.add_argument("--perception", type=float, required=True)
    r.add_argument("--d-grid", type=_float_list, help="comma-separated distortions")
    r.add_argument("--d-min", type=float, default=0.05)
    r.add_argument("--d-max", type=float, default=1.5)
    r.add_argument("--d-steps", type=int, default=30)
    r.add_argument("--output", help="CSV path (default: stdout)")
    _add_common(r, seed=False)
    r.set_defaults(func=cmd_rdp_curve)

    p = sub.add_parser("metrics", help="PSNR/SSIM report for two datasets")
    p.add_argument("--reference", required=True)
    p.add_argument("--processed", required=True)
    p.add_argument("--output", help="CSV path (default: stdout)")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("measure", help="distortion, perception and rate lower bound")
    p.add_argument("--reference", required=True)
    p.add_argument("--processed", required=True)
    p.add_argument("--sigma-x", type=float, required=True, help="source std for the rate bound")
    p.add_argument("--strategy", default="unspecified", help="label for the report row")
    p.add_argument("--output", help="CSV path (default: stdout)")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("calibrate-sigma", help="find sigma reaching a target mean PSNR")
    p.add_argument("--input", required=True)
    p.add_argument("--target-psnr", type=float, required=True)
    p.add_argument("--tau", type=int, default=16)
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("min-tau", help="smallest purification block for a target failure probability")
    p.add_argument("--target-pf", type=float, required=True)
    p.add_argument("--q", type=_probability_list, required=True)
    p.add_argument("--n-preserved", type=int, required=True)
    p.add_argument("--n-coeffs", type=int, required=True)
    p.add_argument("--channels", type=int, default=3)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_min_tau)
    return parser


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def _leaf_parser(parser, argv):
    """The subparser that will handle ``argv``."""
    node = parser
    for token in argv:
        subs = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs:
            break
        if token in subs[0].choices:
            node = subs[0].choices[token]
    return node


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        values = read_config(known.config)
        leaf = _leaf_parser(parser, argv)
        dests = {a.dest: a for a in leaf._actions}
        unknown = sorted(set(values) - set(dests) - {"config"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in values.items():
            if key != "config":
                # argparse applies the action's type to string defaults
                dests[key].default = value
                dests[key].required = False
    return parser.parse_args(argv)


def run_header(args):
    """Resolved configuration echoed into every output."""
    skip = {"func"}
    header = {"upure_version": __version__}
    for key, value in sorted(vars(args).items()):
        if key not in skip:
            header[key] = value
    return header


def _output_format(args):
    if args.format:
        return args.format
    suffix = Path(args.output).suffix.lower()
    return {".png": "png", ".ppm": "ppm"}.get(suffix, "cifar10")


def _save(ds, args):
    save_dataset(ds, args.output, _output_format(args))
    write_run_header(args.output, run_header(args))


def _open_out(path):
    if path is None:
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w"), True


def _emit_csv(args, rows, columns):
    fh, close = _open_out(getattr(args, "output", None))
    try:
        write_csv(fh, rows, columns, run_header(args))
    finally:
        if close:
            fh.close()


def cmd_poison(args):
    ds = load_dataset(args.input)
    if args.trigger == "repetitive":
        trigger = RepetitiveTrigger(args.intensity, args.line_width, args.gap, args.axes, args.polarity)
    else:
        trigger = PatchTrigger(args.patch_size, args.patch_size, position=args.patch_position)
    cfg = PoisonConfig(args.gamma, args.target_class, args.seed)
    images, mask = poison_dataset(ds.images, ds.labels, cfg, trigger, n_jobs=args.workers)
    _save(Dataset(images, ds.labels), args)
    write_mask(mask, args.mask or f"{args.output}.mask.txt")
    print(f"poisoned {int(mask.sum())} of {len(mask)} images")


def cmd_purify(args):
    ds = load_dataset(args.input)
    cfg = PurifyConfig(args.strategy, args.tau, args.sigma, args.epsilon, args.seed, args.max_draws)
    donors = None
    if cfg.strategy is Strategy.REPLACE_FROM_OTHER:
        donors = load_dataset(args.donors).images if args.donors else ds.images
    images = purify_dataset(ds.images, cfg, donors, n_jobs=args.workers)
    _save(Dataset(images, ds.labels), args)
    print(f"purified {len(images)} images with {cfg.strategy.value}, tau={cfg.tau}")


def cmd_cutout(args):
    ds = load_dataset(args.input)
    out = ds.images.copy()
    for i, x in enumerate(ds.images):
        out[i] = cutout(x, args.cut_height, args.cut_width, image_rng(args.seed, i), args.fill)
    _save(Dataset(out, ds.labels), args)


def _single(args):
    return SingleTriggerParams(
        args.image_h, args.image_w, args.cut_h, args.cut_w, args.trig_h, args.trig_w, args.alpha
    )


def _repet(args):
    return RepetTriggerParams(args.n_coeffs, args.n_preserved, args.beta, args.q)


def cmd_bounds_single(args):
    p = _single(args)
    print(format_number(p_single_lower(p)))
    if args.mc_trials:
        pos = (args.trigger_row, args.trigger_col)
        est = p_single_monte_carlo(p, pos, args.mc_trials, args.seed)
        exact = covering_count(p, pos) / p.n_placements
        print(
            f"lattice_count={lattice_count(p)} exact_at_position={format_number(exact)} "
            f"monte_carlo={format_number(est.estimate)} stderr={format_number(est.stderr)}"
        )


def cmd_bounds_repet(args):
    p = _repet(args)
    print(format_number(p_repet_lower(p)))
    if args.mc_trials:
        est = p_repet_monte_carlo(p, args.mc_trials, args.seed)
        print(f"monte_carlo={format_number(est.estimate)} stderr={format_number(est.stderr)}")


def cmd_bounds_combined(args):
    print(format_number(p_defense(_single(args), _repet(args))))


def cmd_bounds_sweep(args):
    rows = sweep_single() if args.sweep == "single" else sweep_repet()
    _emit_csv(args, rows, list(rows[0]))


def cmd_rdp_rate(args):
    print(format_number(rdp_gaussian(GaussianSource(args.sigma_x), args.distortion, args.perception)))


def cmd_rdp_curve(args):
    grid = args.d_grid or np.linspace(args.d_min, args.d_max, args.d_steps)
    points = rdp_curve(GaussianSource(args.sigma_x), args.perception, grid)
    rows = [{"D": pt.distortion, "P": pt.perception, "rate_bits": pt.rate} for pt in points]
    _emit_csv(args, rows, ["D", "P", "rate_bits"])


def _pair(args):
    ref, proc = load_dataset(args.reference), load_dataset(args.processed)
    if len(ref) != len(proc):
        raise UsageError(f"datasets differ in size: {len(ref)} vs {len(proc)}")
    return ref, proc


def cmd_metrics(args):
    ref, proc = _pair(args)
    rep = batch_fidelity(ref.images, proc.images)
    columns = ["psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "n", "n_identical"]
    _emit_csv(args, [vars(rep)], columns)


def cmd_measure(args):
    ref, proc = _pair(args)
    d = measure_distortion(ref.images, proc.images)
    p = measure_perception(ref.images, proc.images)
    rate = rdp_gaussian(GaussianSource(args.sigma_x), d, p)
    row = {"strategy": args.strategy, "distortion": d, "perception": p, "rate_lower_bound": rate}
    _emit_csv(args, [row], list(row))


def cmd_calibrate(args):
    ds = load_dataset(args.input)
    sigma, achieved = calibrate_sigma(ds.images, args.target_psnr, args.tau, args.seed, n_jobs=args.workers)
    print(f"sigma={format_number(sigma)} psnr={format_number(achieved)}")


def cmd_min_tau(args):
    beta = min_beta_for_target(args.target_pf, args.n_coeffs, args.n_preserved, args.q)
    print(f"beta={beta} tau={min_tau(beta, args.channels)}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"upure: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericDomainError as exc:
        print(f"upure: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DatasetFormatError) as exc:
        print(f"upure: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, PurificationError) as exc:
        print(f"upure: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
