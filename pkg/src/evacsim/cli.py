"""Command line entry point: ``evacsim run | replicate | validate | presets``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .pathfield import format_field
from .report import emit_stats, render_frame
from .scenario import PRESETS, ScenarioError, load_scenario, preset_text
from .simulation import Simulation, replicate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _config(spec, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "master_seed", None) is not None:
        changes["seed"] = args.master_seed
    if getattr(args, "max_ticks", None) is not None:
        changes["max_ticks"] = args.max_ticks
    if getattr(args, "n", None) is not None:
        changes["replications"] = args.n
    return dataclasses.replace(spec.sim, **changes)


def cmd_run(args) -> int:
    spec = load_scenario(args.scenario)
    config = _config(spec, args)
    sim = Simulation(spec, config.seed, config.max_ticks)
    frames = Path(args.frames) if args.frames else None
    ext = "txt" if args.frame_format == "text" else "pgm"

    def dump(tick):
        if frames is not None and tick % args.frame_every == 0:
            (frames / f"frame_{tick:05d}.{ext}").write_bytes(
                render_frame(sim.world.grid, tick, args.frame_format))

    if frames is not None:
        frames.mkdir(parents=True, exist_ok=True)
        dump(0)
    while not sim.finished():
        sim.step()
        dump(sim.tick)
    if args.field_dump:
        out = Path(args.field_dump)
        out.mkdir(parents=True, exist_ok=True)
        for j, fld in sim.world.fields.items():
            (out / f"field_E{j}.txt").write_text(format_field(fld))
    res = sim.result()
    print(f"scenario   {spec.name}")
    print(f"seed       {config.seed}")
    print(f"ticks      {res.ticks}")
    print(f"TET        {res.tet_seconds:.2f} s")
    print(f"METxI      {res.met_seconds:.2f} s")
    print(f"MDxI       {res.md_meters:.2f} m")
    for j, n in sorted(res.exit_counts.items()):
        print(f"#E{j:<9}{n}")
    print(f"trapped    {res.trapped_count}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    spec = load_scenario(args.scenario)
    config = _config(spec, args)
    stats = replicate(spec, config, workers=args.workers)
    csv_text = emit_stats(stats, "csv")
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    sys.stdout.write(emit_stats(stats, "table") if args.out else "")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = load_scenario(args.scenario)
    h, w = spec.shape
    print(f"ok: {spec.name} ({h}x{w} cells, {spec.population} agents, {len(spec.exits)} exits)")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(preset_text(args.name))
    else:
        print("\n".join(PRESETS))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evacsim", description="Fire evacuation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single seeded run")
    p.add_argument("scenario", help="preset name (caseA..caseG) or scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-ticks", type=int)
    p.add_argument("--frames", metavar="DIR", help="write frame dumps into DIR")
    p.add_argument("--frame-every", type=int, default=1, metavar="N")
    p.add_argument("--frame-format", choices=("text", "graymap"), default="text")
    p.add_argument("--field-dump", metavar="DIR", help="write final distance fields into DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replicate", help="independent replications with confidence intervals")
    p.add_argument("scenario")
    p.add_argument("-n", type=int, help="number of replications")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--max-ticks", type=int)
    p.add_argument("--out", metavar="FILE", help="CSV output file (default: stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("presets", help="list bundled presets or print one")
    p.add_argument("name", nargs="?", choices=PRESETS)
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "frame_every", 1) < 1:
        print("error: --frame-every must be >= 1", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        return args.func(args)
    except (ScenarioError, OSError, UnicodeDecodeError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
