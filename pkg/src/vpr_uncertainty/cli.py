"""Command-line entry point: ``vpr-uncertainty {synth,evaluate,fuse,sweep}``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 parse, 5 data
consistency, 6 missing input file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, ParseError, VPRError
from .pipeline import RunManifest, evaluate, run_fuse, run_sweep, write_evaluation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARSE = 4
EXIT_DATA = 5
EXIT_MISSING_INPUT = 6

log = logging.getLogger("vpr_uncertainty")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_synth(args) -> int:
    from .evaluation import label_retrievals
    from .ingest import save_scores
    from .retrieval import batch_retrieve, build_index
    from .synthgen import WorldConfig, generate_world, synthetic_gv_confidence, write_world

    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{args.config}: expected a JSON object")
    world = generate_world(WorldConfig.from_dict(data))
    out = Path(args.out)
    paths = write_world(world, out)
    if args.with_gv:
        matches = batch_retrieve(build_index(world.map), world.queries, 1)
        labels = label_retrievals(world.query_poses, matches)
        conf = synthetic_gv_confidence([lab.correct for lab in labels], world.config.seed + 1)
        gv_path = out / "gv_scores.csv"
        save_scores(gv_path, [(lab.query_id, float(c)) for lab, c in zip(labels, conf)])
        paths.append(gv_path)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = RunManifest.load(args.manifest, args.out)
    summary = write_evaluation(evaluate(manifest))
    for name, auc in summary["auc_pr"].items():
        print(f"{name}\tAUC-PR {auc:.4f}")
    for name, acc in summary.get("fusion_accuracy", {}).items():
        print(f"{name}\taccuracy {acc:.4f}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    rows = run_fuse(RunManifest.load(args.train), RunManifest.load(args.test), args.out)
    for name, acc in rows.items():
        print(f"{name}\taccuracy {acc:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    manifest = RunManifest.load(args.manifest, args.out)
    result = run_sweep(manifest, args.k, args.alpha, manifest.output_dir)
    for k, a, v in result["k_sweep"]:
        print(f"K={k}\talpha={a:g}\tAUC-PR {v:.4f}")
    for k, a, v in result["alpha_sweep"]:
        print(f"K={k}\talpha={a:g}\tAUC-PR {v:.4f}")
    check = result["plateau_check"]
    if check is not None:
        print(f"plateau check (AUC K=10 >= K=1): {'pass' if check['passed'] else 'FAIL'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpr-uncertainty",
        description="Image-matching uncertainty estimation benchmark for visual place recognition.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--with-gv", action="store_true",
                   help="also write a synthetic inlier-count channel gv_scores.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="score and evaluate the methods of a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", type=Path, default=None, help="override the manifest output_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fuse", help="train SVM fusion on one manifest, test on another")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("sweep", help="SUE AUC-PR over K and alpha grids")
    p.add_argument("manifest")
    p.add_argument("--k", type=_int_list, default=[1, 2, 5, 10, 20])
    p.add_argument("--alpha", type=_float_list, default=[0, 50, 200, 350, 500])
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DataError as exc:
        print(f"error: data: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VPRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
