"""Command-line interface: ``convbf enhance | synth | eval``."""
import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .audio import read_wav, write_wav
from .errors import ConvBFError
from .metrics import evaluate
from .steering import noise_mask_from_margins
from .stft import StftConfig, analyze
from .synth import make_scenario, save_scenario
from .wpd import DEFAULT_BANDS, METHODS, Band, WpdConfig, enhance

SCHEMA_VERSION = 1
MIN_CHANNELS = {"wpe": 1, "mpdr": 2, "wpe_mpdr": 2, "wpd": 2, "wpd_wpe": 2}

logger = logging.getLogger("convbf")


def _nonneg(value):
    x = float(value)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return x


def _positive_int(value):
    x = int(value)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return x


def _bands(value):
    """``low:high:L_w,...`` e.g. ``0:800:12,800:1500:10,1500:8000:6``."""
    try:
        return tuple(Band(float(lo), float(hi), int(lw))
                     for lo, hi, lw in (part.split(":") for part in value.split(",")))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad band list {value!r}: {exc}") from exc


def _load_config(path):
    with open(path) as fh:
        raw = json.load(fh)
    known = {"method", "iterations", "delay", "bands", "loading_rel", "sigma_floor_rel",
             "lead_s", "trail_s", "sample_rate_hz", "frame_len_samples", "shift_samples",
             "fft_len_samples"}
    unknown = set(raw) - known
    if unknown:
        raise ConvBFError(f"unknown config fields: {', '.join(sorted(unknown))}")
    return raw


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def build_report(method, result, stft_config, wpd_config, lead_s, trail_s, runtime_ms,
                 metrics=None, source=None):
    diag = result.diagnostics
    report = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "iterations": int(diag.iterations),
        "objective_mean": [float(v) for v in diag.objective.mean(axis=1)],
        "constraint_residual_max": float(diag.constraint_residual.max()),
        "steering_fallback_bins": int(diag.steering_fallback.sum()),
        "underdetermined_bins": int(diag.underdetermined.sum()),
        "stft": stft_config.to_dict(),
        "wpd": wpd_config.to_dict(),
        "noise_margins_s": [lead_s, trail_s],
        "backend": kernels.BACKEND,
        "runtime_ms": runtime_ms,
    }
    if source is not None:
        report["input"] = source
    if metrics is not None:
        report["metrics"] = metrics.to_dict()
    return report


def cmd_enhance(args):
    overrides = _load_config(args.config) if args.config else {}
    method = overrides.get("method", args.method)
    rate, audio = read_wav(args.input)
    stft_config = StftConfig(
        overrides.get("sample_rate_hz", args.sample_rate),
        overrides.get("frame_len_samples", 512),
        overrides.get("shift_samples", 128),
        "hann",
        overrides.get("fft_len_samples", overrides.get("frame_len_samples", 512)))
    if rate != stft_config.sample_rate_hz:
        raise ConvBFError(
            f"{args.input}: sample rate {rate} Hz, expected {stft_config.sample_rate_hz} Hz "
            "(resample first)")
    if method not in MIN_CHANNELS:
        raise ConvBFError(f"unknown method {method!r}")
    if audio.shape[1] < MIN_CHANNELS[method]:
        raise ConvBFError(f"{method} requires ≥{MIN_CHANNELS[method]} channels")
    bands = overrides.get("bands")
    wpd_config = WpdConfig(
        bands=tuple(Band(*b) for b in bands) if bands else args.bands,
        delay=overrides.get("delay", args.delay),
        iterations=overrides.get("iterations", args.iters),
        loading_rel=overrides.get("loading_rel", args.loading),
        sigma_floor_rel=overrides.get("sigma_floor_rel", 1e-10),
    )
    lead_s = overrides.get("lead_s", args.lead)
    trail_s = overrides.get("trail_s", args.trail)

    start = time.perf_counter()
    spec = analyze(audio, stft_config)
    mask = None
    if method != "wpe":
        mask = noise_mask_from_margins(spec.num_frames, stft_config, lead_s, trail_s,
                                       num_samples=audio.shape[0])
    result = enhance(spec, method, wpd_config, mask, args.threads)
    runtime_ms = (time.perf_counter() - start) * 1000.0

    write_wav(args.output, result.waveform, rate)
    metrics = None
    if args.reference:
        ref_rate, ref = read_wav(args.reference)
        if ref_rate != rate:
            raise ConvBFError("reference sample rate does not match input")
        metrics = evaluate(ref[:, 0], result.waveform, rate)
    source = {"path": str(args.input), "channels": int(audio.shape[1]),
              "sample_rate": rate, "num_samples": int(audio.shape[0])}
    if method == "wpd":
        wpd_config = replace(wpd_config, steering_mode="from_input")
    report = build_report(method, result, stft_config, wpd_config, lead_s, trail_s,
                          runtime_ms, metrics, source)
    report_path = Path(args.report) if args.report else Path(args.output).with_suffix(".json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, default=_json_default)
    logger.info("wrote %s and %s (%.0f ms)", args.output, report_path, runtime_ms)
    return 0


def cmd_synth(args):
    scn = make_scenario(seed=args.seed, num_mics=args.mics, rt60_s=args.rt60,
                        snr_db=args.snr, duration_s=args.duration,
                        lead_noise_s=args.lead, trail_noise_s=args.trail)
    out = save_scenario(scn, args.out_dir)
    logger.info("wrote scenario to %s", out)
    return 0


def cmd_eval(args):
    ref_rate, ref = read_wav(args.reference)
    rate, proc = read_wav(args.processed)
    if ref_rate != rate:
        raise ConvBFError(f"sample rate mismatch: {ref_rate} vs {rate}")
    if ref.shape[0] != proc.shape[0] and not args.trim:
        raise ConvBFError(
            f"length mismatch: {ref.shape[0]} vs {proc.shape[0]} samples (use --trim)")
    report = {"schema_version": SCHEMA_VERSION, **evaluate(ref[:, 0], proc[:, 0], rate).to_dict()}
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convbf", description="Convolutional beamforming for denoising and dereverberation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance a multichannel WAV file",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--method", choices=METHODS, default="wpd_wpe")
    p.add_argument("--iters", type=_positive_int, default=3)
    p.add_argument("--delay", type=_positive_int, default=4, help="prediction delay b (frames)")
    p.add_argument("--bands", type=_bands, default=DEFAULT_BANDS,
                   help="low:high:L_w per band, comma separated")
    p.add_argument("--loading", type=_nonneg, default=1e-6, help="relative diagonal loading")
    p.add_argument("--lead", type=_nonneg, default=0.225, help="leading noise-only seconds")
    p.add_argument("--trail", type=_nonneg, default=0.075, help="trailing noise-only seconds")
    p.add_argument("--sample-rate", type=_positive_int, default=16000)
    p.add_argument("--reference", help="clean/desired WAV for metrics")
    p.add_argument("--report", help="JSON report path (default: output with .json suffix)")
    p.add_argument("--config", help="JSON file overriding the options above")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $CONVBF_THREADS or all cores)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("synth", help="generate a synthetic scenario",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rt60", type=_nonneg, default=0.5)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--mics", type=_positive_int, default=8)
    p.add_argument("--duration", type=float, default=6.0)
    p.add_argument("--lead", type=_nonneg, default=0.225)
    p.add_argument("--trail", type=_nonneg, default=0.075)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="CD and FWSSNR of a processed file against a reference")
    p.add_argument("reference")
    p.add_argument("processed")
    p.add_argument("--report")
    p.add_argument("--trim", action="store_true", help="trim to the shorter file")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConvBFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
