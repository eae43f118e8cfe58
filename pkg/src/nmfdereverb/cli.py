"""Command-line front end: ``dereverb``, ``evaluate`` and ``experiment``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import experiment as exp
from .export import save_matrix_csv, save_trace_csv
from .metrics import MetricReport, cepstral_distortion, import_pesq
from .signal_io import Waveform, read_wav, write_wav
from .spectrogram import StftConfig
from .speechlike import synth_corpus

logger = logging.getLogger("nmfdereverb")

CORPUS_ENV = "NMFDEREVERB_CORPUS"
DEFAULT_T60S = (0.25, 0.5, 0.75)

# flag dest -> Params field
PARAM_FLAGS = {
    "filter_len": "L", "rank": "R", "t_stack": "t_stack", "t_base": "t_base", "lam": "lam",
    "iters": "iters", "iters_nmf": "iters_nmf", "seed": "seed", "shared_filter": "shared_filter",
}
STFT_KEYS = ("window_len", "hop", "fft_size", "window_kind")


class CliError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(exp.Params)} | set(STFT_KEYS)
    unknown = set(cfg) - known
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return cfg


def _params(args, cfg: dict) -> exp.Params:
    """Flags override the config file, which overrides the built-in defaults."""
    values = {k: v for k, v in cfg.items() if k not in STFT_KEYS}
    for dest, name in PARAM_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    try:
        return exp.Params(**values)
    except TypeError as exc:
        raise CliError(str(exc)) from exc


def _stft(cfg: dict, sample_rate: int) -> StftConfig:
    kw = {k: cfg[k] for k in STFT_KEYS if k in cfg}
    return StftConfig(sample_rate=sample_rate, **kw)


def _add_param_flags(p):
    g = p.add_argument_group("model hyperparameters (default: config file, then built-ins)")
    g.add_argument("-L", "--filter-len", type=int, help="sub-band filter length in frames (11)")
    g.add_argument("--rank", type=int, help="number of bases R (10, or 20 for act-deconv)")
    g.add_argument("--t-stack", type=int, help="frames stacked per column for 'stacked' (3)")
    g.add_argument("--t-base", type=int, help="basis length in frames for 'conv' (1)")
    g.add_argument("--lam", type=float, help="sparsity weight (sum(Y) * 1e-8)")
    g.add_argument("--iters", type=int, help="iterations (20)")
    g.add_argument("--iters-nmf", type=int, help="NMF iterations for act-deconv (100)")
    g.add_argument("--seed", type=int, help="random seed (0)")
    g.add_argument("--shared-filter", action="store_true", default=None,
                   help="act-deconv: one filter for all activation rows")
    p.add_argument("--config", help="JSON file with default parameters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmfdereverb",
                                     description="Blind single-channel speech dereverberation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging; dereverb also prints the cost trace")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dereverb", help="dereverberate one WAV file")
    d.add_argument("input")
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--algo", required=True, choices=exp.ALGORITHMS)
    d.add_argument("--export-dir", help="write factor matrices and the cost trace as CSV here")
    d.add_argument("--verbose", action="store_true", dest="sub_verbose",
                   help="print the cost trace")
    _add_param_flags(d)

    e = sub.add_parser("evaluate", help="cepstral distortion before and after enhancement")
    e.add_argument("clean")
    e.add_argument("reverberant")
    e.add_argument("enhanced")
    e.add_argument("--label", default="", help="condition label for the CSV row")
    e.add_argument("--csv", help="append the result row to this CSV file")

    x = sub.add_parser("experiment", help="run a sweep over corpus x RIRs x algorithms")
    x.add_argument("--corpus", help=f"directory of clean WAVs (default: ${CORPUS_ENV})")
    x.add_argument("--synthetic", type=int, metavar="N",
                   help="use N generated speech-like utterances instead of a corpus")
    x.add_argument("--rirs", help="directory of RIR WAVs (default: synthetic)")
    x.add_argument("--t60", type=float, nargs="+", default=list(DEFAULT_T60S),
                   help="T60s in seconds for synthetic RIRs")
    x.add_argument("--algo", nargs="+", choices=exp.ALGORITHMS, default=["nmfd"])
    x.add_argument("--sweep", action="append", metavar="KEY=v1,v2",
                   help=f"sweep a parameter; KEY in {', '.join(exp.SWEEP_KEYS)}; repeatable")
    x.add_argument("--out-dir", required=True, help="where results.csv and summary.csv go")
    x.add_argument("--pesq", help="CSV of externally computed id,pesq_in,pesq_out")
    x.add_argument("--save-audio", action="store_true", help="also write the processed WAVs")
    x.add_argument("--jobs", type=int, default=1)
    _add_param_flags(x)
    return parser


def cmd_dereverb(args) -> int:
    cfg = _load_config(args.config)
    params = _params(args, cfg)
    y = read_wav(args.input)
    sink = {}
    out = exp.dereverb(y, args.algo, params, _stft(cfg, y.sample_rate), sink)
    write_wav(args.output, out)
    trace = sink["cost_trace"]
    if args.verbose or args.sub_verbose:
        for i, c in enumerate(trace):
            print(f"iter {i:3d}  cost {c:.10g}")
    if args.export_dir:
        d = Path(args.export_dir)
        d.mkdir(parents=True, exist_ok=True)
        save_trace_csv(d / "cost_trace.csv", trace)
        for name, M in sink.items():
            if name != "cost_trace" and getattr(M, "ndim", 0) == 2:
                save_matrix_csv(d / f"{name}.csv", M)
    return 0


def evaluate(clean: Waveform, reverberant: Waveform, enhanced: Waveform,
             label: str = "", cfg: StftConfig | None = None) -> MetricReport:
    n = len(clean)
    for name, w in (("reverberant", reverberant), ("enhanced", enhanced)):
        if w.sample_rate != clean.sample_rate:
            raise ValueError(f"{name} sample rate {w.sample_rate} != clean {clean.sample_rate}")
        if len(w) < n:
            raise ValueError(f"{name} has {len(w)} samples, shorter than clean ({n})")
    return MetricReport(cepstral_distortion(clean, reverberant.trim(n), cfg),
                        cepstral_distortion(clean, enhanced.trim(n), cfg), label)


def cmd_evaluate(args) -> int:
    rep = evaluate(read_wav(args.clean), read_wav(args.reverberant), read_wav(args.enhanced),
                   args.label)
    header = ["label", "cd_in", "cd_out", "cd_improvement"]
    row = [args.label, repr(rep.cd_in), repr(rep.cd_out), repr(rep.cd_improvement_db)]
    print(f"CD in:  {rep.cd_in:.4f} dB")
    print(f"CD out: {rep.cd_out:.4f} dB")
    print(f"CD improvement: {rep.cd_improvement_db:.4f} dB")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    writer.writerow(row)
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(header)
            w.writerow(row)
    return 0


def _corpus(args):
    if args.synthetic:
        base = 0 if args.seed is None else args.seed
        return [(f"synth{i:03d}", w) for i, w in enumerate(synth_corpus(args.synthetic, base))]
    path = args.corpus or os.environ.get(CORPUS_ENV)
    if not path:
        raise CliError(f"no corpus: pass --corpus, --synthetic N, or set {CORPUS_ENV}")
    if not Path(path).is_dir():
        raise CliError(f"corpus directory {path} does not exist")
    return exp.load_corpus(path)


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    params = _params(args, cfg)
    corpus = _corpus(args)
    rate = corpus[0][1].sample_rate
    rirs = exp.load_rirs(args.rirs) if args.rirs else exp.synthetic_rirs(args.t60, rate)
    sweep = exp.parse_sweep(args.sweep)
    pesq = import_pesq(args.pesq) if args.pesq else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = exp.run_experiment(
        corpus, rirs, args.algo, sweep, params, _stft(cfg, rate), args.jobs,
        out_dir / "audio" if args.save_audio else None, pesq)
    exp.write_long_csv(out_dir / "results.csv", rows)
    header, table = exp.pivot(rows, failures)
    exp.write_pivot_csv(out_dir / "summary.csv", header, table)
    print(f"{len(rows)} items, {len(failures)} failed; results in {out_dir}")
    return 1 if failures else 0


COMMANDS = {"dereverb": cmd_dereverb, "evaluate": cmd_evaluate, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, ValueError, OSError) as exc:
        print(f"nmfdereverb {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
