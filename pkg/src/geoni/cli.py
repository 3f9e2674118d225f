"""Command line entry point: ``geoni {train,reconstruct,depth,eval,sweep,rerun}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .depth import filter_cost_volume, render_depth
from .evaluation import EvalEntry, EvalReport, evaluate, input_positions, sweep_shear_range
from .lightfield import LightField4D, LightFieldError, LightFieldSlice, _write_png, load_lightfield, save_lightfield, to_luminance
from .networks import load_checkpoint
from .pipeline import reconstruct_4d, reconstruct_rgb, reconstruct_slice, stage_hypotheses
from .training import DivergenceError, TrainConfig, train
from .validation import check_hypotheses

log = logging.getLogger("geoni")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class ConfigError(ValueError):
    pass


def parse_shears(text: str) -> np.ndarray:
    """Parse ``"0,±4,±8"``, ``"-8,-4,0,4,8"`` or ``"range:lo:hi:step"``."""
    text = text.strip()
    if text.startswith("range:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"bad shear range {text!r}; expected range:lo:hi:step")
        lo, hi, step = (float(p) for p in parts[1:])
        if step <= 0:
            raise ConfigError("shear range step must be positive")
        values = np.arange(lo, hi + step * 1e-6, step)
    else:
        values = []
        for tok in filter(None, (t.strip() for t in text.split(","))):
            m = re.fullmatch(r"(±|\+-|\+/-)(.+)", tok)
            try:
                if m:
                    v = float(m.group(2))
                    values += [-v, v]
                else:
                    values.append(float(tok))
            except ValueError:
                raise ConfigError(f"bad shear value {tok!r}") from None
    values = np.unique(np.round(np.asarray(values, dtype=np.float64), 9))
    try:
        return check_hypotheses(values)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _seed(default: int) -> int:
    env = os.environ.get("GEONI_SEED")
    if env is None:
        return default
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"GEONI_SEED must be an integer, got {env!r}") from None


def _write_run(path: Path, argv, resolved: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"version": __version__, "argv": list(argv), "cwd": os.getcwd(), "config": resolved}
    path.write_text(json.dumps(record, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o)}")


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} does not exist: {p}")
    return p


def _load_nets(args):
    ni = dibr = None
    if args.ni:
        ni = load_checkpoint(_existing(_ckpt(args.ni), "NI checkpoint"))
        if ni.spec.alpha != args.alpha:
            raise ConfigError(f"NI checkpoint was built for alpha={ni.spec.alpha}, got --alpha {args.alpha}")
    elif not args.bilinear:
        raise ConfigError("--ni is required unless --bilinear is given")
    if args.dibr:
        dibr = load_checkpoint(_existing(_ckpt(args.dibr), "DIBR checkpoint"))
    return ni, dibr


def _ckpt(path: str) -> str:
    p = Path(path)
    return str(p if p.suffix in (".npz", ".json") else p.with_suffix(".npz"))


def _inference_config(args, shears) -> dict:
    return {
        "alpha": args.alpha,
        "shears": shears,
        "cascade": getattr(args, "cascade", 1),
        "ni": args.ni,
        "dibr": args.dibr,
        "bilinear": args.bilinear,
        "seed": _seed(0),
    }


def cmd_train(args, argv):
    cfg_path = _existing(args.config, "config file")
    raw = json.loads(cfg_path.read_text())
    lf_dirs = raw.pop("lf_dirs", None)
    ckpt_dir = raw.pop("checkpoint_dir", None)
    if not lf_dirs or not ckpt_dir:
        raise ConfigError("training config needs 'lf_dirs' and 'checkpoint_dir'")
    base = cfg_path.parent
    lf_dirs = [str(_existing(base / d if not Path(d).is_absolute() else d, "light field")) for d in lf_dirs]
    ckpt_dir = Path(ckpt_dir) if Path(ckpt_dir).is_absolute() else base / ckpt_dir
    raw["seed"] = _seed(raw.get("seed", 0))
    try:
        config = TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    _write_run(ckpt_dir / "run.json", argv, {"lf_dirs": lf_dirs, "checkpoint_dir": ckpt_dir, **config.to_dict()})
    result = train(config, lf_dirs, ckpt_dir)
    last = result.history[-1] if result.history else {}
    print(f"trained {len(result.history)} epochs, final loss {last.get('loss', float('nan')):.6f}")
    return EXIT_OK


def cmd_reconstruct(args, argv):
    shears = parse_shears(args.shears)
    lf = load_lightfield(_existing(args.input, "input light field"))
    ni, dibr = _load_nets(args)
    interp = "bilinear" if args.bilinear else "ni"
    out = Path(args.out)
    _write_run(out / "run.json", argv, {**_inference_config(args, shears), "input": args.input, "order": args.order})
    if lf.color_space == "rgb":
        result = reconstruct_rgb(lf, args.alpha, shears, ni, dibr, cascade=args.cascade, interpolator=interp)
    else:
        result = reconstruct_4d(lf, shears, ni, dibr, args.alpha, order=args.order,
                                cascade=args.cascade, interpolator=interp)
        result = LightField4D(np.clip(result.data, 0.0, 1.0), color_space="y")
    save_lightfield(result, out, bits=args.bits)
    print(f"wrote {result.angular_s}x{result.angular_t} views to {out}")
    return EXIT_OK


def cmd_depth(args, argv):
    shears = parse_shears(args.shears)
    lf = to_luminance(load_lightfield(_existing(args.input, "input light field")))
    ni, dibr = _load_nets(args)
    interp = "bilinear" if args.bilinear else "ni"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_run(out / "run.json", argv, {**_inference_config(args, shears), "input": args.input,
                                        "filter": args.filter, "radius": args.radius, "eps": args.eps})
    d_min, d_max = float(shears.min()), float(shears.max())
    span = max(d_max - d_min, 1e-12)
    written = 0
    for t in range(lf.angular_t):
        sl = LightFieldSlice(lf.data[:, :, :, t], axis="s", index=t)
        r = reconstruct_slice(sl, shears, ni, dibr, args.alpha, interpolator=interp)
        costs = r.costs
        if args.filter:
            costs = filter_cost_volume(costs, r.slice, radius=args.radius, eps=args.eps)
        depth = render_depth(costs, shears)
        for s in range(depth.shape[2]):
            img = ((depth[:, :, s] - d_min) / span)[..., None]
            _write_png(out / f"depth_{s:02d}_{t:02d}.png", img, bits=16)
            written += 1
        if args.dump_costs:
            raw = np.ascontiguousarray(r.costs[..., 0], dtype="<f4")
            raw.tofile(out / f"costs_{t:02d}.f32")
            (out / f"costs_{t:02d}.json").write_text(json.dumps(
                {"shape": list(raw.shape), "dtype": "<f4", "axes": ["d", "x", "y", "s"],
                 "hypotheses": shears.tolist()}))
    (out / "depth.json").write_text(json.dumps({"d_min": d_min, "d_max": d_max}))
    print(f"wrote {written} depth maps to {out}")
    return EXIT_OK


def cmd_eval(args, argv):
    recon = load_lightfield(_existing(args.recon, "reconstruction"))
    truth = load_lightfield(_existing(args.truth, "ground truth"))
    if recon.shape[:4] != truth.shape[:4]:
        raise ConfigError(f"shape mismatch: {recon.shape} vs {truth.shape}")
    alpha = args.alpha
    if args.exclude_inputs and alpha is None:
        run = Path(args.recon) / "run.json"
        if run.exists():
            alpha = json.loads(run.read_text())["config"].get("alpha")
        if alpha is None:
            raise ConfigError("--exclude-inputs needs --alpha (or a run.json in the reconstruction directory)")
    excluded = None
    if args.exclude_inputs:
        ps = input_positions(recon.angular_s, alpha) if recon.angular_s > 1 else [0]
        ts = input_positions(recon.angular_t, alpha) if recon.angular_t > 1 else [0]
        excluded = [(s, t) for s in ps for t in ts]
    res = evaluate(recon, truth, excluded, border=args.border)
    report = EvalReport(config={"alpha": alpha, "exclude_inputs": args.exclude_inputs, "border": args.border})
    report.add(EvalEntry(args.scene or Path(args.truth).name, args.scale, res["psnr_db"], res["ssim"]))
    psnr_txt = "inf" if np.isinf(res["psnr_db"]) else f"{res['psnr_db']:.4f}"
    print(f"psnr_db={psnr_txt} ssim={res['ssim']:.6f} views={res['views']}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.write(out)
    run_path = Path(args.out).parent / "run.json" if args.out else Path(args.recon) / "eval_run.json"
    _write_run(run_path, argv, {"recon": args.recon, "truth": args.truth, **report.config})
    return EXIT_OK


def cmd_sweep(args, argv):
    truth_lf = to_luminance(load_lightfield(_existing(args.input, "ground-truth light field")))
    ni, dibr = _load_nets(args)
    try:
        ranges = [float(r) for r in args.ranges.split(",") if r.strip()]
    except ValueError:
        raise ConfigError(f"bad --ranges {args.ranges!r}") from None
    t = args.t
    if not 0 <= t < truth_lf.angular_t:
        raise ConfigError(f"--t {t} out of range")
    dense = truth_lf.data[:, :, :, t]
    views = (dense.shape[2] - 1) // args.alpha * args.alpha + 1
    dense = dense[:, :, :views]
    sparse = LightFieldSlice(np.ascontiguousarray(dense[:, :, ::args.alpha]))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    rows = sweep_shear_range(sparse, dense, ranges, ni, dibr, args.alpha, step=args.step,
                             interpolator="bilinear" if args.bilinear else "ni", out_csv=args.out)
    for row in rows:
        print(f"[{row['lo']:g},{row['hi']:g}] psnr_db={row['psnr_db']:.4f} ssim={row['ssim']:.6f}")
    _write_run(Path(args.out).parent / "run.json", argv,
               {"input": args.input, "ranges": ranges, "alpha": args.alpha, "step": args.step,
                "ni": args.ni, "dibr": args.dibr, "bilinear": args.bilinear})
    return EXIT_OK


def cmd_rerun(args, argv):
    record = json.loads(_existing(args.run, "run record").read_text())
    seed = record.get("config", {}).get("seed")
    if seed is not None:
        os.environ["GEONI_SEED"] = str(seed)
    if "cwd" in record:
        os.chdir(record["cwd"])  # argv paths are relative to the original working directory
    return main(record["argv"])


def _add_inference_args(p, cascade=True):
    p.add_argument("--in", dest="input", required=True, help="light-field directory")
    p.add_argument("--alpha", type=int, required=True, help="angular upsampling factor")
    p.add_argument("--shears", default="0", help='hypotheses, e.g. "0,±4,±8" or "range:-16:16:4"')
    if cascade:
        p.add_argument("--cascade", type=int, default=1, help="number of cascaded stages")
    p.add_argument("--ni", help="NI checkpoint (.npz with .json manifest)")
    p.add_argument("--dibr", help="DIBR checkpoint")
    p.add_argument("--bilinear", action="store_true", help="linear angular interpolation instead of NI")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoni", description="Geometry-aware light-field angular super-resolution")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train NI and DIBR networks")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="upsample a light field")
    _add_inference_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--order", choices=("st", "ts"), default="st")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("depth", help="render depth maps from the cost volume")
    _add_inference_args(p, cascade=False)
    p.add_argument("--out", required=True)
    p.add_argument("--filter", action="store_true", help="guided-filter the cost volume first")
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--dump-costs", action="store_true", help="also write raw float32 cost volumes")
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("eval", help="PSNR/SSIM of a reconstruction")
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--exclude-inputs", action="store_true")
    p.add_argument("--alpha", type=int)
    p.add_argument("--border", type=int, default=0)
    p.add_argument("--scene")
    p.add_argument("--scale", default="")
    p.add_argument("--out", help="report path (.csv or .json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="PSNR against shear range")
    _add_inference_args(p, cascade=False)
    p.add_argument("--ranges", required=True, help="half-widths, e.g. 8,16,24")
    p.add_argument("--step", type=float, default=4.0)
    p.add_argument("--t", type=int, default=0, help="angular t index of the slice to sweep")
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rerun", help="replay a run.json")
    p.add_argument("run")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except DivergenceError as e:
        print(f"error: {e}; last good checkpoint: {e.last_good}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, LightFieldError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
