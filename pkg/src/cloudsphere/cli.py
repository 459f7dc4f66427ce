"""Command-line entry point: ``cloudsphere <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 optimization failure.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import correspond as corr
from . import metrics
from .config import RunConfig, load_config
from .errors import CloudSphereError, InvalidArgumentError, OptimizationFailure
from .fitter import fit, reconstruct
from .geometry import (
    Transform,
    build_pyramid,
    farthest_point_sampling,
    generate_sphere_template,
    normalize_cloud,
)
from .plyio import FORMATS, read_cloud, write_cloud
from .repfile import load_rep, load_sidecar, save_rep, save_sidecar
from .shapes import SHAPES, make_shape

log = logging.getLogger("cloudsphere")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_OPTIMIZATION = 3

ABLATION_SETS = ((), (16,), (16, 256), (16, 64, 256, 1024))


def _int_list(text):
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def run_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in ("seed", "points", "grid_res", "iterations", "joint_iterations"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "stages", None) is not None:
        overrides["stages"] = tuple(sorted(_int_list(args.stages), reverse=True))
    if getattr(args, "format", None):
        overrides["format"] = args.format
    return replace(cfg, **overrides)


def load_points(source, seed=0, n=4096):
    """Read a cloud from disk, or generate one from ``synth:<shape>``."""
    if source.startswith("synth:"):
        return make_shape(source[len("synth:"):], n, seed)
    return read_cloud(source)


def prepare_target(source, cfg, points_given):
    """Load, FPS-downsample to ``cfg.points`` when larger, and normalize."""
    pts = load_points(source, cfg.seed, cfg.points)
    if len(pts) < cfg.points and points_given:
        raise InvalidArgumentError(f"input has {len(pts)} points, fewer than --points {cfg.points}")
    if len(pts) > cfg.points:
        pts = pts[farthest_point_sampling(pts, cfg.points, 0)]
    normed, transform = normalize_cloud(pts)
    return normed, transform


def _write_history(path, history):
    if not history:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0]), lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def cmd_synth(args):
    cfg = run_config(args)
    pts = make_shape(args.shape, cfg.points, cfg.seed)
    write_cloud(pts, args.output, cfg.format)
    print(f"wrote {len(pts)} points to {args.output}")


def cmd_template(args):
    cfg = run_config(args)
    tpl = generate_sphere_template(cfg.points)
    write_cloud(tpl.points, args.output, cfg.format)
    print(f"wrote {len(tpl)}-point template to {args.output}")


def cmd_preprocess(args):
    cfg = run_config(args)
    target, _ = prepare_target(args.input, cfg, args.points is not None)
    pyramid = build_pyramid(target, cfg.stages, cfg.sigma_factor, cfg.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for k, level in enumerate(pyramid.levels):
        write_cloud(level, out / f"level_{k}.ply", cfg.format)
    print(f"wrote {pyramid.num_levels} levels of {pyramid.n} points to {out}")


def run_fit(target, transform, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = fit(target, cfg.fit_config())
    except OptimizationFailure as exc:
        _write_history(out / "history.csv", exc.history)
        raise
    rep = result.rep
    save_rep(rep, out / "rep.csr")
    save_sidecar(
        out / "rep.csr",
        config=result_config(cfg),
        transform=transform.to_dict(),
        final_loss=result.history[-1]["loss"],
    )
    for k in range(rep.stage_count):
        write_cloud(reconstruct(rep, k), out / f"recon_stage{k}.ply", cfg.format)
    _write_history(out / "history.csv", result.history)
    (out / "config.txt").write_text(cfg.dump())
    return result


def result_config(cfg):
    return {"run": cfg.dump(), "fit": cfg.fit_config().to_dict()}


def cmd_fit(args):
    cfg = run_config(args)
    target, transform = prepare_target(args.input, cfg, args.points is not None)
    result = run_fit(target, transform, cfg, args.output)
    cd = metrics.chamfer(reconstruct(result.rep, 0), target)
    print(f"fit {len(target)} points, {result.rep.stage_count} stages: CDx1000 = {cd * metrics.CD_SCALE:.6g}")


def evaluate_rep(rep, target, cfg):
    recon = reconstruct(rep, 0)
    return metrics.evaluate(
        target, recon, rep.template,
        cd=cfg.metric_cd, emd_enabled=cfg.metric_emd, iou=cfg.metric_iou,
        spread_enabled=cfg.metric_spread, shift_enabled=cfg.metric_shift,
        iou_resolution=cfg.grid_res, spread_resolution=cfg.spread_res,
    )


def cmd_eval(args):
    cfg = run_config(args)
    rep = load_rep(args.rep)
    target = load_points(args.input, cfg.seed, rep.n)
    side = load_sidecar(args.rep)
    if side and "transform" in side:
        # put the target in the same normalized frame the rep was fitted in
        target = Transform.from_dict(side["transform"]).apply(target)
    report = evaluate_rep(rep, target, cfg)
    out = Path(args.output)
    payload = {"metrics": report.to_dict(), "scales": {"cd": metrics.CD_SCALE, "emd": metrics.EMD_SCALE},
               "config": cfg.dump()}
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    row = report.row()
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
    print(",".join(row))
    print(",".join(str(v) for v in row.values()))


def cmd_correspond(args):
    rep = load_rep(args.rep)
    fmt = args.format or "ply-binary-le"
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    c = corr.correspondence(rep)
    for axis in "xyz":
        colors = corr.color_code(rep.template, axis)
        write_cloud(c.template, out / f"template_{axis}.ply", fmt, colors)
        write_cloud(c.recon, out / f"recon_{axis}.ply", fmt, colors)
    print(f"wrote color-coded correspondence to {out} (shift = {c.shift():.6g})")


def cmd_edit(args):
    sources = [load_rep(p) for p in args.input]
    donor = load_rep(args.donor)
    fmt = args.format or "ply-binary-le"
    first_recon = reconstruct(sources[0], 0)
    mask = corr.read_mask(args.mask, sources[0].template, first_recon)
    if args.smooth:
        from .fitter import build_reg_graph
        mask = corr.smooth_mask(mask, build_reg_graph(sources[0].template), args.smooth)
    stages = _int_list(args.edit_stages) if args.edit_stages else None
    edited = corr.co_edit(sources, donor, mask, args.t, stages)
    out = Path(args.output)
    if len(edited) == 1 and out.suffix:
        write_cloud(edited[0], out, fmt)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for i, pts in enumerate(edited):
            write_cloud(pts, out / f"edited_{i}.ply", fmt)
    print(f"edited {len(edited)} shape(s), {int(mask.selected.sum())} masked points, t = {args.t}")


def parse_sets(text):
    sets = []
    for chunk in text.split(";"):
        chunk = chunk.strip().strip("{}")
        sets.append(_int_list(chunk))
    return tuple(sets)


def cmd_ablate(args):
    cfg = run_config(args)
    target, transform = prepare_target(args.input, cfg, args.points is not None)
    sets = parse_sets(args.sets) if args.sets else ABLATION_SETS
    rows = []
    for stage_set in sets:
        counts = tuple(sorted(stage_set, reverse=True))
        run = replace(cfg, stages=counts)
        result = fit(target, run.fit_config())
        report = evaluate_rep(result.rep, target, replace(run, metric_spread=False, metric_shift=False))
        label = "{" + ",".join(str(c) for c in sorted(stage_set)) + "}"
        row = {"stages": label}
        row.update({k: v for k, v in report.row().items() if k in ("cd_x1000", "emd_x100", "iou")})
        rows.append(row)
        log.info("ablation %s: %s", label, row)
    with open(args.output, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(row)


def build_parser():
    parser = argparse.ArgumentParser(prog="cloudsphere", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fit_opts=False):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--grid-res", type=int, dest="grid_res", help="IoU voxel resolution")
        if fit_opts:
            p.add_argument("--points", type=int, help="resample the input to this many points with FPS")
            p.add_argument("--stages", help="comma-separated centroid counts, e.g. 1024,256,64,16")
            p.add_argument("--iterations", type=int, help="iterations per sequential phase")
            p.add_argument("--joint-iterations", type=int, dest="joint_iterations")

    p = sub.add_parser("synth", help="write a synthetic test shape")
    common(p)
    p.add_argument("--shape", required=True, choices=sorted(SHAPES))
    p.add_argument("--points", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("template", help="write the sphere template")
    common(p)
    p.add_argument("--points", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_template)

    p = sub.add_parser("preprocess", help="write every abstraction level of a cloud")
    common(p, fit_opts=True)
    p.add_argument("--input", required=True, help="cloud file or synth:<shape>")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="fit a representation to a target cloud")
    common(p, fit_opts=True)
    p.add_argument("--input", required=True, help="cloud file or synth:<shape>")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a representation against a target")
    common(p)
    p.add_argument("--rep", required=True)
    p.add_argument("--input", required=True, help="target cloud file or synth:<shape>")
    p.add_argument("--output", required=True, help="JSON report path (CSV row written alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correspond", help="write color-coded template/reconstruction pairs")
    common(p)
    p.add_argument("--rep", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_correspond)

    p = sub.add_parser("edit", help="blend masked offsets of one or more reps toward a donor")
    common(p)
    p.add_argument("--input", required=True, nargs="+", help="source rep file(s)")
    p.add_argument("--donor", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--edit-stages", dest="edit_stages", help="comma-separated stage indices (default: all)")
    p.add_argument("--smooth", type=int, default=0, help="mask smoothing passes over the template graph")
    p.add_argument("--output", required=True, help="PLY path for one input, directory otherwise")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("ablate", help="fit over several stage sets and tabulate metrics")
    common(p, fit_opts=True)
    p.add_argument("--input", required=True, help="cloud file or synth:<shape>")
    p.add_argument("--sets", help="';'-separated centroid-count sets, e.g. '{};16;16,256'")
    p.add_argument("--output", required=True, help="CSV path")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except OptimizationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (CloudSphereError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
