"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .experiment import ConfigError, ExperimentConfig, PipelineError, evaluate_checkpoint, run_experiment, run_sweep
from .ndbgen import DEFAULT_P, DEFAULT_R, ParamsError, QKParams, generate_ndb, read_ndb, write_ndb
from .presets import preset_names, preset_q
from .security import random_strings, security_sweep, write_reports_csv, write_reports_json
from .sketch import Sketch, decode_instance, extract_sketch

EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _qk_from_args(args, bits: int, attributes: int) -> QKParams:
    q = _floats(args.q) if args.q else preset_q(args.preset or "Q1", bits)
    return QKParams(q=tuple(q), attributes=attributes, p=tuple(_floats(args.p)), r=args.r)


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config: required for this command")
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    raw = cfg.to_dict()
    raw.update(overrides)
    if getattr(args, "preset", None):
        raw["qk"] = {**raw["qk"], "preset": args.preset, "q": None}
    return ExperimentConfig.from_dict(raw)


def cmd_encode(args) -> int:
    codec = data_mod.AttributeCodec(args.bits, len(args.values))
    print(data_mod.encode_instance(args.values, codec))
    return 0


def cmd_gen_ndb(args) -> int:
    bits = data_mod.bits_from_string(args.string)
    if len(bits) % args.bits:
        raise ConfigError(f"--string: length {len(bits)} is not a multiple of --bits {args.bits}")
    params = _qk_from_args(args, args.bits, len(bits) // args.bits)
    ndb = generate_ndb(bits, params, args.seed if args.seed is not None else 0)
    out = Path(args.out or "ndb.txt")
    write_ndb(ndb, out)
    print(f"wrote {len(ndb)} records to {out}")
    return 0


def cmd_sketch(args) -> int:
    ndb = read_ndb(args.ndb)
    sketch = extract_sketch(ndb)
    out = Path(args.out or "sketch.bin")
    if args.json:
        out.write_text(sketch.to_json())
    else:
        out.write_bytes(sketch.to_bytes())
    print(f"wrote sketch (m={sketch.m}, total={sketch.total}) to {out}")
    return 0


def _read_sketch(path) -> Sketch:
    blob = Path(path).read_bytes()
    if blob[:4] == b"NDBS":
        return Sketch.from_bytes(blob)
    return Sketch.from_json(blob.decode())


def cmd_decode(args) -> int:
    sketch = _read_sketch(args.sketch)
    params = sketch.params
    codec = data_mod.AttributeCodec(params.L, params.attributes)
    decoded = decode_instance(sketch, codec)
    result = {
        "expected": decoded.expected.tolist(),
        "map": decoded.attr_posterior.argmax(axis=1).tolist() if codec.bits <= 16 else None,
        "bit_prob_zero": decoded.bit_prob_zero.tolist(),
    }
    text = json.dumps(result)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    metrics = run_experiment(cfg)
    print(f"{cfg.mode} test accuracy {metrics['test_accuracy']:.4f} ({cfg.out}/metrics.json)")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model = Path(args.model or Path(cfg.out) / "model.ckpt")
    metrics = evaluate_checkpoint(cfg, model)
    print(json.dumps(metrics, indent=2))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    presets = args.presets.split(",") if args.presets else preset_names(cfg.codec_bits())
    rows = run_sweep(cfg, presets)
    for row in rows:
        print(f"{row['preset']:>4}  |Pdiff1-0.5|={row['abs_p_diff1_minus_half']:.3f}  "
              f"acc={row['accuracy']:.4f}  G={row['mean_G']:.1f}")
    print(f"wrote {Path(cfg.out) / 'sweep.csv'}")
    return 0


def cmd_security(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.config:
        cfg = _load_config(args)
        from .experiment import load_data

        full = load_data(cfg).train
        codec = full.codec
        pick = np.random.default_rng(seed).choice(len(full), size=min(args.strings, len(full)), replace=False)
        strings = codec.to_bits_batch(full.instances[pick])
    else:
        codec = data_mod.AttributeCodec(args.bits, args.attributes)
        strings = random_strings(args.strings, codec, seed)
    names = args.presets.split(",") if args.presets else preset_names(codec.bits)
    params = [
        (n, QKParams(q=preset_q(n, codec.bits), attributes=codec.attributes, p=tuple(_floats(args.p)), r=args.r))
        for n in names
    ]
    reports = security_sweep(strings, params, codec, seed=seed, threads=args.threads or 1)
    out = Path(args.out or "security")
    out.mkdir(parents=True, exist_ok=True)
    write_reports_csv(reports, out / "security.csv")
    write_reports_json(reports, out / "security.json")
    for rep in reports:
        print(f"{rep.name:>4}  mean G = {rep.mean_G:.1f} bits over {rep.string_count} strings")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--mode", choices=["plaintext", "negdl"])
    common.add_argument("--preset", help="named q vector, e.g. Q1")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, help="worker threads for NDB generation")
    common.add_argument("-v", "--verbose", action="store_true")

    qk = argparse.ArgumentParser(add_help=False)
    qk.add_argument("--q", help="explicit q vector, comma separated (overrides --preset)")
    qk.add_argument("--p", default=",".join(map(str, DEFAULT_P)), help="record-type probabilities")
    qk.add_argument("--r", type=float, default=DEFAULT_R, help="records per bit")

    parser = argparse.ArgumentParser(prog="negdl", description="Deep learning on negative-database sketches")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="encode attribute values as a bit string")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("values", type=int, nargs="+")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("gen-ndb", parents=[common, qk], help="generate a negative database for one bit string")
    p.add_argument("--string", required=True)
    p.add_argument("--bits", type=int, required=True, help="bits per attribute")
    p.set_defaults(func=cmd_gen_ndb)

    p = sub.add_parser("sketch", parents=[common], help="extract the sketch of an NDB file")
    p.add_argument("--ndb", required=True)
    p.add_argument("--json", action="store_true", help="write the JSON debug form")
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("decode", parents=[common], help="decode a sketch to expected attribute values")
    p.add_argument("--sketch", required=True)
    p.set_defaults(func=cmd_decode)

    for name, func, text in (
        ("train", cmd_experiment, "train a model from a config and save it"),
        ("experiment", cmd_experiment, "full pipeline with metrics.json"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model on the config's test part")
    p.add_argument("--model", help="checkpoint (default: <out>/model.ckpt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="one NegDL run per preset, written to sweep.csv")
    p.add_argument("--presets", help="comma separated preset names (default: all)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("security", parents=[common, qk], help="mean G per preset")
    p.add_argument("--presets", help="comma separated preset names (default: all)")
    p.add_argument("--strings", type=int, default=100)
    p.add_argument("--bits", type=int, default=8)
    p.add_argument("--attributes", type=int, default=784)
    p.set_defaults(func=cmd_security)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParamsError, KeyError, data_mod.CodecRangeError, data_mod.BitFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, data_mod.DataFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
