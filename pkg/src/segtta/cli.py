"""Command line interface.

Each pipeline stage is independently scriptable:

    segtta run     --config cfg.json --manifest data/manifest.json --out runs/x
    segtta ablate  --config cfg.json --manifest data/manifest.json --out runs/a
    segtta sweep   --config cfg.json --manifest data/manifest.json --taus 0.3,0.6,0.9
    segtta augment --input scan.nii.gz --output blurred.nii.gz --kind gaussian_blur --sigma 1.5
    segtta fuse    --output mask.nii.gz --mode threshold_weighted --tau 0.6 map1.nii map2.nii
    segtta metrics --pred mask.nii.gz --gt label.nii.gz --classes 2
    segtta report  --result runs/x/result.json --format csv --out runs/x/report.csv
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path
import sys

from . import augment, nifti
from .config import load_config, load_manifest
from .core import AugmentationSpec, Spacing, normalize_intensity
from .errors import SegTTAError
from .fusion import FusionInput, fuse
from .metrics import evaluate
from .pipeline import (
    EventLog,
    RunResult,
    attach_run_log,
    detach_run_log,
    run_ablation,
    run_segtta,
    run_threshold_sweep,
)
from .report import FORMATS, emit_report, render
from .rng import SeededRng


def _add_run_options(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", help="output directory (masks, report, result, log)")
    p.add_argument("--tau", type=float, help="override the voting threshold")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--jobs", type=int, help="override the worker pool size")
    p.add_argument("--format", choices=FORMATS, default="markdown",
                   help="report format (default markdown)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segtta",
        description="Training-free test-time-augmentation ensembling "
                    "for volumetric segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_options(sub.add_parser("run", help="full pipeline over a manifest"))
    _add_run_options(sub.add_parser("ablate", help="leave-one-augmentation-out"))
    sweep = sub.add_parser("sweep", help="fuse at several voting thresholds")
    _add_run_options(sweep)
    sweep.add_argument("--taus", required=True,
                       help="comma-separated thresholds, e.g. 0.3,0.6,0.9")

    aug = sub.add_parser("augment", help="apply one transform to a volume")
    aug.add_argument("--input", required=True)
    aug.add_argument("--output", required=True)
    aug.add_argument("--kind", required=True, choices=[
        "identity", "gaussian_blur", "gaussian_noise",
        "gamma_correction", "contrast_enhancement",
    ])
    aug.add_argument("--sigma", type=float)
    aug.add_argument("--gamma", type=float)
    aug.add_argument("--alpha", type=float)
    aug.add_argument("--beta", type=float, default=0.0)
    aug.add_argument("--slice-axis", default="2",
                     help="0, 1, 2, or 'none' for full 3D blur")
    aug.add_argument("--seed", type=int, default=2024)
    aug.add_argument("--normalize", action="store_true",
                     help="normalize intensities to [0, 1] first")

    fz = sub.add_parser("fuse", help="fuse precomputed probability maps")
    fz.add_argument("maps", nargs="+", help="4D float32 NIfTI probability maps")
    fz.add_argument("--output", required=True, help="fused mask (uint8 NIfTI)")
    fz.add_argument("--mode", default="threshold_weighted", choices=[
        "majority", "confidence_weighted", "threshold_weighted",
    ])
    fz.add_argument("--tau", type=float, default=0.6)

    met = sub.add_parser("metrics", help="score a mask against ground truth")
    met.add_argument("--pred", required=True)
    met.add_argument("--gt", required=True)
    met.add_argument("--classes", type=int,
                     help="class count (default: inferred from the masks)")

    rep = sub.add_parser("report", help="re-render a saved run result")
    rep.add_argument("--result", required=True, help="result.json from a run")
    rep.add_argument("--format", choices=FORMATS, default="markdown")
    rep.add_argument("--out", help="output file (default: stdout)")

    return parser


def _apply_overrides(config, args):
    overrides = {}
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return replace(config, **overrides) if overrides else config


def _finish_run(result: RunResult, args) -> int:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.save(out / "result.json")
        suffix = "csv" if args.format == "csv" else "md"
        emit_report(result, args.format, out / f"report.{suffix}")
        print(f"wrote {out / 'result.json'} and report.{suffix}")
    else:
        print(render(result, args.format))
    for case_id, message in result.failures:
        print(f"FAILED {case_id}: {message}", file=sys.stderr)
    if result.per_case:
        return 0
    print("no case completed", file=sys.stderr)
    return 1


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    manifest = load_manifest(args.manifest)
    log, handler = _open_log(args)
    try:
        if args.command == "run":
            result = run_segtta(config, manifest, out_dir=args.out, log=log)
        elif args.command == "ablate":
            result = run_ablation(config, manifest, out_dir=args.out, log=log)
        else:
            taus = [float(t) for t in args.taus.split(",") if t.strip()]
            result = run_threshold_sweep(
                config, manifest, taus, out_dir=args.out, log=log
            )
    finally:
        detach_run_log(handler)
    return _finish_run(result, args)


def _open_log(args):
    log = EventLog(Path(args.out) / "run.log.jsonl" if args.out else None)
    handler = attach_run_log(log)
    return log, handler


def _cmd_augment(args) -> int:
    volume = nifti.read_volume(args.input)
    if args.normalize:
        volume, _, _ = normalize_intensity(volume)
    axis = None if str(args.slice_axis).lower() == "none" else int(args.slice_axis)
    spec = AugmentationSpec(
        kind=args.kind, sigma=args.sigma, gamma=args.gamma,
        alpha=args.alpha, beta=args.beta, slice_axis=axis,
    )
    rng = SeededRng(args.seed, "augment", volume.vol_id, spec.label())
    out = augment.apply(spec, volume, rng)
    nifti.write_volume(out, args.output, datatype=16)
    print(f"wrote {args.output}")
    return 0


def _cmd_fuse(args) -> int:
    maps = tuple(nifti.read_probability_map(p) for p in args.maps)
    mask = fuse(FusionInput(maps, mode=args.mode, tau=args.tau))
    header = nifti.read_header(args.maps[0])
    spacing = Spacing(*header.pixdim[1:4])
    nifti.write_label_mask(mask, spacing, args.output)
    print(f"wrote {args.output}")
    return 0


def _infer_classes(*paths) -> int:
    top = max(int(nifti.read_volume(p).data.max()) for p in paths)
    return max(top + 1, 2)


def _cmd_metrics(args) -> int:
    classes = args.classes if args.classes else _infer_classes(args.pred, args.gt)
    pred = nifti.read_label_mask(args.pred, classes)
    gt = nifti.read_label_mask(args.gt, classes)
    header = nifti.read_header(args.gt)
    spacing = Spacing(*header.pixdim[1:4])
    report = evaluate(pred, gt, spacing)
    for c in sorted(report.per_class_iou):
        print(f"class {c}: IoU={report.per_class_iou[c]:.4f} "
              f"Dice={report.per_class_dice[c]:.4f}")
    print(f"mIoU={report.miou:.4f} mDice={report.mdice:.4f} "
          f"aIoU={report.aiou:.4f} aDice={report.adice:.4f}")
    if report.hd95_mm is None:
        print(f"HD95=undefined ({report.undefined_reason})")
    else:
        print(f"HD95={report.hd95_mm:.4f} mm")
    return 0


def _cmd_report(args) -> int:
    result = RunResult.load(args.result)
    if args.out:
        emit_report(result, args.format, args.out)
        print(f"wrote {args.out}")
    else:
        print(render(result, args.format))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "ablate": _cmd_run,
        "sweep": _cmd_run,
        "augment": _cmd_augment,
        "fuse": _cmd_fuse,
        "metrics": _cmd_metrics,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (SegTTAError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
