"""Command-line surface: train, edit, reconstruct, eval, gradcheck.

Malformed inputs exit nonzero with one machine-parseable JSON line on
standard error. All commands are deterministic given their arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import AblationConfig, RunConfig, load_config
from .gradchecks import SUITES, run_suites
from .metrics import frame_consistency, textual_alignment
from .model import build_model
from .pipeline import EditRequest, edit_video, reconstruct_video
from .ppm import load_video_dir, save_video_dir
from .training import train_on_video

_ABLATE_CHOICES = ("no-tu", "no-stu", "no-ta", "no-3dconv")


def _ablation_from_flags(flags: list[str]) -> AblationConfig:
    return AblationConfig(
        temporal_unet="no-tu" not in flags,
        stu="no-stu" not in flags,
        temporal_attention="no-ta" not in flags,
        conv3d="no-3dconv" not in flags,
    )


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.ablate:
        cfg = cfg.with_ablation(_ablation_from_flags(args.ablate))
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcve",
        description="Temporal-consistent video editing with a toy latent "
                    "diffusion stack")
    parser.add_argument("--ablate", action="append", choices=_ABLATE_CHOICES,
                        default=[], help="disable a component (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune on one video + prompt")
    p.add_argument("--video", required=True, help="directory of PPM frames")
    p.add_argument("--prompt", required=True, help="source prompt")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint output path")

    p = sub.add_parser("edit", help="zero-shot prompt-guided edit")
    p.add_argument("--video", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source-prompt", required=True)
    p.add_argument("--prompt", required=True, help="edited prompt")
    p.add_argument("--guidance", type=float, default=12.5)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--config", help="JSON config file (must match the checkpoint)")

    p = sub.add_parser("reconstruct", help="invert + resample at guidance 1")
    p.add_argument("--video", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file (must match the checkpoint)")

    p = sub.add_parser("eval", help="print frame consistency and textual alignment")
    p.add_argument("--video", required=True)
    p.add_argument("--prompt", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference verification suites")
    p.add_argument("--module", choices=sorted(SUITES), default=None)
    return parser


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    video = load_video_dir(args.video)
    result = train_on_video(video, args.prompt, cfg)
    save_checkpoint(args.out, result.model.state())
    trace_path = Path(str(args.out) + ".trace.json")
    trace_path.write_text(json.dumps({"losses": result.losses}), encoding="utf-8")
    print(json.dumps({"checkpoint": str(args.out), "trace": str(trace_path),
                      "final_loss": result.losses[-1]}))
    return 0


def _restore_model(args):
    cfg = _load_run_config(args)
    model = build_model(cfg)
    model.load_state(load_checkpoint(args.ckpt))
    return cfg, model


def _cmd_edit(args) -> int:
    cfg, model = _restore_model(args)
    video = load_video_dir(args.video)
    req = EditRequest(video, args.source_prompt, args.prompt,
                      guidance_scale=args.guidance, ddim_steps=args.steps)
    edited = edit_video(req, model, cfg.schedule)
    save_video_dir(args.out, edited)
    print(json.dumps({"out": str(args.out), "frames": edited.frame_count}))
    return 0


def _cmd_reconstruct(args) -> int:
    cfg, model = _restore_model(args)
    video = load_video_dir(args.video)
    recon, report = reconstruct_video(video, args.prompt, model, steps=args.steps,
                                      schedule=cfg.schedule)
    save_video_dir(args.out, recon)
    payload = {"latent_l2_rel": report.latent_l2_rel, "pixel_mae": report.pixel_mae,
               "steps": report.steps}
    Path(args.out, "report.json").write_text(json.dumps(payload), encoding="utf-8")
    print(json.dumps(payload))
    return 0


def _cmd_eval(args) -> int:
    video = load_video_dir(args.video)
    print(json.dumps({
        "frame_consistency": frame_consistency(video),
        "textual_alignment": textual_alignment(video, args.prompt),
    }))
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_suites(args.module)
    failed = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status} {r.suite}/{r.name} max_rel_err={r.max_rel_err:.3e} "
              f"tol={r.tolerance:.0e}")
        failed += not r.passed
    if failed:
        print(f"{failed} gradient check(s) failed", file=sys.stderr)
        return 1
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "edit": _cmd_edit,
    "reconstruct": _cmd_reconstruct,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
