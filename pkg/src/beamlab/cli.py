"""``beamlab`` command line: simulate, enhance, sweep, optimize-fb, inspect-fb."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .beamformer import BEAMFORMERS
from .filterbank import (
    Filterbank,
    frequency_response,
    macs,
    make_analytic_filterbank,
    make_free_filterbank,
    make_stft_filterbank,
)
from .io import (
    dump_json,
    load_filterbank,
    load_scene_config,
    read_mask_csv,
    read_wav,
    save_filterbank,
    write_wav,
)
from .optimizer import OptimizerConfig, train
from .pipeline import enhance, evaluate, oracle_mask
from .scene import SceneRender, make_source, render_scene
from .scm import DEFAULT_DIAG_LOAD
from .signal import num_frames

logger = logging.getLogger("beamlab")

SCENE_FILES = ("mixture.wav", "target.wav", "interferer.wav")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BEAMLAB_THREADS", "1")))
    except ValueError:
        return 1


def _parse_stft(text: str) -> tuple[int, int, int, str]:
    parts = text.split(",")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError("--stft expects N,L,H[,window]")
    n, length, hop = (int(p) for p in parts[:3])
    return n, length, hop, parts[3] if len(parts) == 4 else "sqrt_hann"


def _parse_values(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("values must be comma-separated integers") from None


def _make_fb(kind: str, n: int, length: int, hop: int, window: str, seed: int) -> Filterbank:
    if kind == "stft":
        return make_stft_filterbank(n, length, hop, window)
    if kind == "free":
        return make_free_filterbank(n, length, hop, seed)
    if kind == "analytic":
        return make_analytic_filterbank(n, length, hop, seed)
    raise ValueError(f"unknown filterbank kind {kind!r}")


def load_scene_dir(path) -> SceneRender:
    path = Path(path)
    mixture, target, interferer = (read_wav(path / name) for name in SCENE_FILES)
    if not (mixture.samples.shape == target.samples.shape == interferer.samples.shape):
        raise ValueError(f"{path}: mixture, target and interferer shapes differ")
    ref = 0
    manifest = path / "manifest.json"
    if manifest.exists():
        ref = int(json.loads(manifest.read_text()).get("reference", 0))
    return SceneRender(mixture, target, interferer, ref)


def find_scenes(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"scene directory {root} does not exist")
    if all((root / name).exists() for name in SCENE_FILES):
        return [root]
    scenes = sorted(p for p in root.iterdir()
                    if p.is_dir() and all((p / name).exists() for name in SCENE_FILES))
    if not scenes:
        raise ValueError(f"no scenes found in {root}")
    return scenes


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> None:
    spec, target_desc, interferer_desc, duration = load_scene_config(args.spec)
    n = int(round(duration * spec.sample_rate))

    def source(desc):
        if "wav" in desc:
            sig = read_wav(desc["wav"])
            return sig.samples[0]
        return make_source(desc, n, spec.sample_rate)

    dry_target, dry_interferer = source(target_desc), source(interferer_desc)
    if len(dry_interferer) != n:
        dry_interferer = np.resize(dry_interferer, n) if len(dry_interferer) else dry_interferer
    scene = render_scene(spec, dry_target, dry_interferer)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "mixture.wav", scene.mixture)
    write_wav(out / "target.wav", scene.target_image)
    write_wav(out / "interferer.wav", scene.interferer_image)
    manifest = {
        "spec": spec.to_dict(),
        "target": target_desc,
        "interferer": interferer_desc,
        "duration_s": duration,
        "num_samples": n,
        "num_channels": spec.num_mics,
        "reference": spec.reference,
        "seed": spec.reverb.seed if spec.reverb is not None else None,
        "input_si_sdr_db": None if spec.interferer_free else scene.input_si_sdr,
    }
    dump_json(out / "manifest.json", manifest)
    print(f"wrote scene to {out}")


def _filterbank_from_args(args) -> Filterbank:
    if args.fb and args.stft:
        raise ValueError("give either --fb or --stft, not both")
    if args.fb:
        return load_filterbank(args.fb)
    n, length, hop, window = args.stft or (512, 512, 256, "sqrt_hann")
    return make_stft_filterbank(n, length, hop, window)


def cmd_enhance(args) -> None:
    mixture, target, interferer = read_wav(args.mixture), read_wav(args.target), read_wav(args.interferer)
    if not (mixture.samples.shape == target.samples.shape == interferer.samples.shape):
        raise ValueError("mixture, target and interferer must have equal channel count and length")
    fb = _filterbank_from_args(args)
    ref = args.ref
    if not 0 <= ref < mixture.num_channels:
        raise ValueError(f"--ref {ref} outside [0, {mixture.num_channels})")
    if args.mask == "oracle":
        mask = oracle_mask(fb, target, interferer, ref)
    else:
        k = num_frames(mixture.num_samples, fb.kernel_size, fb.hop)
        mask = read_mask_csv(args.mask, fb.num_filters, k)
    result = enhance(fb, mixture, mask, args.beamformer, ref, args.diag_load)
    metrics = evaluate(target.samples[ref], mixture.samples[ref], result.estimate, fb.kernel_size)
    metrics["flagged_bins"] = result.weights.flagged_bins
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "enhanced.wav", result.estimate, mixture.sample_rate)
    dump_json(out / "metrics.json", metrics)
    print(json.dumps({k: v for k, v in metrics.items() if k != "flagged_bins"}))


def sweep_configs(axis: str, values, kernel: int | None, hop: int | None) -> list[tuple[int, int, int]]:
    """(N, L, H) per sweep value."""
    configs = []
    for v in values:
        if axis == "kernel":
            if v < 2 or v % 2:
                raise ValueError(f"kernel size {v} must be an even number >= 2")
            configs.append((v, v, v // 2))
        elif axis == "oversampling":
            length = kernel or 2048
            if v < 1 or length % v:
                raise ValueError(f"oversampling factor {v} must divide the kernel size {length}")
            configs.append((length, length, length // v))
        elif axis == "num-filters":
            configs.append((v, kernel or 256, hop or 128))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
    return configs


def cmd_sweep(args) -> None:
    scene_dirs = find_scenes(args.scenes)
    scenes = [load_scene_dir(p) for p in scene_dirs]
    configs = sweep_configs(args.axis, args.values, args.kernel, args.hop)
    rows = []
    for value, (n, length, hop) in zip(args.values, configs):
        fb = _make_fb(args.fb_kind, n, length, hop, args.window, args.seed)

        def score(scene, fb=fb):
            ref = scene.reference
            mask = oracle_mask(fb, scene.target_image, scene.interferer_image, ref)
            result = enhance(fb, scene.mixture, mask, args.beamformer, ref, args.diag_load)
            return evaluate(scene.target_image.samples[ref], scene.mixture.samples[ref],
                            result.estimate, length)["si_sdri"]

        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            scores = list(pool.map(score, scenes))
        rows.append([value, n, length, hop, len(scenes), float(np.mean(scores))])
        logger.info("%s=%s mean SI-SDRi %.3f dB", args.axis, value, rows[-1][-1])
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "N", "L", "H", "num_scenes", "mean_si_sdri"])
        for row in rows:
            writer.writerow(row[:-1] + [repr(row[-1])])
    print(f"wrote {len(rows)} rows to {args.output}")


def cmd_optimize_fb(args) -> None:
    config = json.loads(Path(args.config).read_text())
    opt = OptimizerConfig.from_dict(config.get("optimizer", {}))
    init = args.init_fb or config.get("init_fb")
    if init:
        fb = load_filterbank(init)
    else:
        spec = config.get("filterbank", {})
        for key in ("N", "L", "H"):
            if key not in spec:
                raise ValueError(f"optimizer config filterbank missing field {key!r}")
        fb = _make_fb(spec.get("kind", "free"), spec["N"], spec["L"], spec["H"],
                      spec.get("window", "sqrt_hann"), spec.get("seed", 0))
    scenes = [load_scene_dir(p) for p in find_scenes(args.scenes)]
    n_val = int(config.get("num_validation", max(1, len(scenes) // 3)))
    if not 1 <= n_val < len(scenes):
        raise ValueError(f"need at least 2 scenes to hold out {n_val} for validation")
    best, trace = train(fb, scenes[:-n_val], scenes[-n_val:], opt)
    save_filterbank(args.output, best)
    trace_path = Path(args.trace) if args.trace else Path(args.output).with_suffix(".trace.csv")
    trace_path.write_text(trace.to_csv())
    print(f"trained {len(trace)} epochs; best validation loss "
          f"{min(trace.validation_loss):.4f} at epoch {trace.best_epoch}")


def cmd_inspect_fb(args) -> None:
    fb = load_filterbank(args.fb)
    mags, centers = frequency_response(fb, args.which, args.fft_size, sort=not args.no_sort)
    value = macs(fb, args.which)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["center_bin"] + [f"bin_{b}" for b in range(mags.shape[1])])
            for c, row in zip(centers, mags):
                writer.writerow([int(c)] + [repr(float(v)) for v in row])
    print(f"MACS ({args.which}): {value!r}")


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic scene to WAV files")
    p.add_argument("spec", help="scene spec JSON")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enhance", help="beamform a mixture with oracle or file masks")
    p.add_argument("mixture")
    p.add_argument("target")
    p.add_argument("interferer")
    p.add_argument("--fb", help="filterbank JSON")
    p.add_argument("--stft", type=_parse_stft, help="N,L,H[,window] (default 512,512,256)")
    p.add_argument("--beamformer", choices=BEAMFORMERS, default="mvdr")
    p.add_argument("--ref", type=int, default=0, help="reference mic (0-based)")
    p.add_argument("--diag-load", type=float, default=DEFAULT_DIAG_LOAD)
    p.add_argument("--mask", default="oracle", help="'oracle' or a K x N CSV file")
    p.add_argument("-o", "--output-dir", default=".")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("sweep", help="mean oracle-mask SI-SDRi over a parameter axis")
    p.add_argument("--axis", choices=("kernel", "oversampling", "num-filters"), required=True)
    p.add_argument("--values", type=_parse_values, required=True)
    p.add_argument("--scenes", required=True, help="directory of rendered scenes")
    p.add_argument("--beamformer", choices=BEAMFORMERS, default="mvdr")
    p.add_argument("--fb-kind", choices=("stft", "free", "analytic"), default="stft")
    p.add_argument("--window", default="sqrt_hann")
    p.add_argument("--kernel", type=int, help="fixed kernel size (oversampling/num-filters axes)")
    p.add_argument("--hop", type=int, help="fixed hop (num-filters axis)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diag-load", type=float, default=DEFAULT_DIAG_LOAD)
    p.add_argument("-o", "--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize-fb", help="learn filterbank taps on rendered scenes")
    p.add_argument("config", help="optimizer config JSON")
    p.add_argument("scenes", help="directory of rendered scenes")
    p.add_argument("output", help="output filterbank JSON")
    p.add_argument("--trace", help="trace CSV path (default: <output>.trace.csv)")
    p.add_argument("--init-fb", help="start from this filterbank JSON")
    p.set_defaults(func=cmd_optimize_fb)

    p = sub.add_parser("inspect-fb", help="frequency response CSV and MACS of a filterbank")
    p.add_argument("fb")
    p.add_argument("--fft-size", type=int, default=4096)
    p.add_argument("--which", choices=("analysis", "synthesis"), default="analysis")
    p.add_argument("--no-sort", action="store_true", help="keep original filter order")
    p.add_argument("-o", "--output", help="frequency response CSV")
    p.set_defaults(func=cmd_inspect_fb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic for every failure
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"beamlab {args.command}: error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
