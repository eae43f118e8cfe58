"""Algorithm dispatch and the batch evaluation harness.

An experiment convolves every clean utterance with every RIR, runs each
algorithm at each sweep point on the reverberant result, and scores input
and output against the clean reference with cepstral distortion. Results
are kept in long format (one row per item) and summarized as a pivot of
mean improvement per algorithm and RIR.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .activation_deconv import DEFAULT_NMF_ITERS, activation_deconvolve_full
from .metrics import cepstral_distortion
from .nmfd import DEFAULT_FILTER_LEN, DEFAULT_ITERS, nmfd
from .rir_synth import RirSpec, measure_t60, synth_rir
from .signal_io import Waveform, convolve, read_wav, write_wav
from .spectrogram import StftConfig, default_config, process_magnitude
from .speech_models import GAIN_MAX, factorize, stacked_gain

logger = logging.getLogger(__name__)

ALGORITHMS = ("nmfd", "nmfd-nmf", "stacked", "conv", "act-deconv")
DEFAULT_RANKS = {"nmfd-nmf": 10, "stacked": 10, "conv": 10, "act-deconv": 20}
SWEEP_KEYS = ("L", "R", "t_stack", "t_base", "lam", "iters")

LONG_COLUMNS = (
    "id", "utterance", "rir", "t60", "algorithm", "L", "R", "t_stack", "t_base", "lam",
    "iters", "seed", "cd_in", "cd_out", "cd_improvement", "pesq_in", "pesq_out",
    "pesq_improvement",
)


@dataclass(frozen=True)
class Params:
    """Hyperparameters; ``R=None`` picks the per-algorithm default and
    ``lam=None`` the data-dependent ``sum(Y) * 1e-8``."""

    L: int = DEFAULT_FILTER_LEN
    R: int | None = None
    t_stack: int = 3
    t_base: int = 1
    lam: float | None = None
    iters: int = DEFAULT_ITERS
    iters_nmf: int = DEFAULT_NMF_ITERS
    seed: int = 0
    shared_filter: bool = False
    g_max: float = GAIN_MAX

    def rank(self, algo: str) -> int:
        return self.R if self.R is not None else DEFAULT_RANKS.get(algo, 10)


def enhance_magnitude(Y: np.ndarray, algo: str, params: Params):
    """Clean magnitude estimate for ``Y`` and a dict of intermediate matrices.

    The dict always holds ``"cost_trace"``; the other entries are the
    factors worth exporting for the chosen algorithm.
    """
    p = params
    if algo == "nmfd":
        res = nmfd(Y, L=p.L, lam=p.lam, iters=p.iters)
        return res.X, {"cost_trace": res.cost_trace, "X": res.X, "H": res.H.H}
    if algo in ("nmfd-nmf", "conv"):
        t_base = p.t_base if algo == "conv" else 1
        res = factorize(Y, p.rank(algo), p.L, t_base, 1, p.lam, p.iters, p.seed)
        extra = {"cost_trace": res.cost_trace, "H": res.H.H, "X": res.X}
        if res.W.ndim == 2:
            extra["W"] = res.W
        return res.S, extra
    if algo == "stacked":
        res = factorize(Y, p.rank(algo), p.L, 1, p.t_stack, p.lam, p.iters, p.seed)
        G = stacked_gain(res, Y.shape[0], p.t_stack, Y.shape[1], p.g_max)
        return G * Y, {"cost_trace": res.cost_trace, "H": res.H.H, "G": G}
    if algo == "act-deconv":
        res = activation_deconvolve_full(Y, p.rank(algo), p.L, p.lam, p.iters_nmf, p.iters,
                                         p.seed, p.shared_filter)
        trace = nmfd(res.A_reverb, L=p.L, lam=p.lam, iters=p.iters,
                     shared_filter=p.shared_filter).cost_trace
        return res.S, {"cost_trace": trace, "W": res.W, "A_reverb": res.A_reverb,
                       "A": res.A, "h": res.h.H}
    raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")


def dereverb(y: Waveform, algo: str, params: Params = Params(),
             cfg: StftConfig | None = None, sink: dict | None = None) -> Waveform:
    """Dereverberate ``y``; intermediate matrices are stored into ``sink`` if given."""
    cfg = cfg or default_config(y.sample_rate)

    def fn(Y):
        S, extra = enhance_magnitude(Y, algo, params)
        if sink is not None:
            sink.update(extra)
        return S

    return process_magnitude(y, cfg, fn)


# -- experiment harness -------------------------------------------------------


@dataclass(frozen=True)
class Rir:
    label: str
    t60: float
    wave: Waveform


def synthetic_rirs(t60s, sample_rate=16000, seed=0) -> list[Rir]:
    rirs = []
    for i, t60 in enumerate(t60s):
        h = synth_rir(RirSpec(t60, sample_rate, seed=seed + i))
        rirs.append(Rir(f"{int(round(t60 * 1000))}ms", float(t60), h))
    return rirs


def load_rirs(directory) -> list[Rir]:
    """Every ``*.wav`` in ``directory``; T60 is measured (NaN if not measurable)."""
    rirs = []
    for path in sorted(Path(directory).glob("*.wav")):
        h = read_wav(path)
        try:
            t60 = measure_t60(h)
        except ValueError:
            logger.warning("could not measure T60 of %s", path)
            t60 = math.nan
        rirs.append(Rir(path.stem, t60, h))
    if not rirs:
        raise ValueError(f"no RIR WAV files in {directory}")
    return rirs


def load_corpus(directory) -> list[tuple[str, Waveform]]:
    items = [(p.stem, read_wav(p)) for p in sorted(Path(directory).glob("*.wav"))]
    if not items:
        raise ValueError(f"corpus directory {directory} contains no WAV files")
    return items


def parse_sweep(specs) -> dict:
    """``["L=4,8,11", "R=5,10"]`` -> ``{"L": [4, 8, 11], "R": [5, 10]}``."""
    sweep = {}
    for spec in specs or ():
        key, sep, values = spec.partition("=")
        key = key.strip()
        if not sep or key not in SWEEP_KEYS:
            raise ValueError(f"bad sweep spec {spec!r}; expected KEY=v1,v2 with KEY in {SWEEP_KEYS}")
        cast = float if key == "lam" else int
        sweep[key] = [cast(v) for v in values.split(",") if v.strip()]
        if not sweep[key]:
            raise ValueError(f"sweep {key} has no values")
    return sweep


def sweep_points(sweep: dict) -> list[dict]:
    keys = list(sweep)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(sweep[k] for k in keys))]


def item_seed(base_seed: int, key: str) -> int:
    return zlib.crc32(f"{base_seed}:{key}".encode()) & 0x7FFFFFFF


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class _Job:
    utt_id: str
    clean: Waveform
    rir: Rir
    algo: str
    point: tuple
    params: Params
    cfg: StftConfig
    audio_dir: str | None


def _row_id(utt_id, rir_label, algo, point) -> str:
    tag = "_".join(f"{k}{v}" for k, v in point)
    return "__".join(filter(None, (utt_id, rir_label, algo, tag)))


def _run_job(job: _Job) -> dict:
    y = convolve(job.clean, job.rir.wave).trim(len(job.clean))
    out = dereverb(y, job.algo, job.params, job.cfg)
    cd_in = cepstral_distortion(job.clean, y, job.cfg)
    cd_out = cepstral_distortion(job.clean, out, job.cfg)
    row_id = _row_id(job.utt_id, job.rir.label, job.algo, job.point)
    if job.audio_dir:
        base = Path(job.audio_dir)
        write_wav(base / f"{row_id}.wav", out)
        write_wav(base / f"{job.utt_id}__{job.rir.label}__reverberant.wav", y)
    p = job.params
    return {
        "id": row_id, "utterance": job.utt_id, "rir": job.rir.label, "t60": job.rir.t60,
        "algorithm": job.algo, "L": p.L,
        "R": None if job.algo == "nmfd" else p.rank(job.algo),
        "t_stack": p.t_stack if job.algo == "stacked" else None,
        "t_base": p.t_base if job.algo == "conv" else None,
        "lam": p.lam, "iters": p.iters, "seed": p.seed,
        "cd_in": cd_in, "cd_out": cd_out, "cd_improvement": cd_in - cd_out,
        "pesq_in": None, "pesq_out": None, "pesq_improvement": None,
    }


def run_experiment(corpus, rirs, algos, sweep=None, base=Params(), cfg=None,
                   jobs: int = 1, audio_dir=None, pesq=None):
    """Run every (utterance, RIR, algorithm, sweep point) combination.

    Returns ``(rows, failures)``: rows sorted by id, and the ids of items that
    raised (logged and skipped). Every item of one (utterance, RIR) pair uses
    the same seed, derived from ``base.seed`` and the pair's name.
    """
    if not corpus:
        raise ValueError("empty corpus")
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
    cfg = cfg or default_config(corpus[0][1].sample_rate)
    points = sweep_points(sweep or {})
    if audio_dir:
        Path(audio_dir).mkdir(parents=True, exist_ok=True)
    work = []
    for (utt_id, clean), rir, algo, point in itertools.product(corpus, rirs, algos, points):
        seed = item_seed(base.seed, f"{utt_id}|{rir.label}")
        params = replace(base, seed=seed, **point)
        work.append(_Job(utt_id, clean, rir, algo, tuple(point.items()), params, cfg,
                         str(audio_dir) if audio_dir else None))

    rows, failures = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(job, pool.submit(_run_job, job)) for job in work]
            results = []
            for job, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - per-item isolation
                    results.append(exc)
    else:
        results = []
        for job in work:
            try:
                results.append(_run_job(job))
            except Exception as exc:  # noqa: BLE001 - per-item isolation
                results.append(exc)
    for job, res in zip(work, results):
        if isinstance(res, Exception):
            rid = _row_id(job.utt_id, job.rir.label, job.algo, job.point)
            logger.error("item %s failed: %s", rid, res)
            failures.append(rid)
        else:
            rows.append(res)
    if pesq:
        for row in rows:
            if row["id"] in pesq:
                row["pesq_in"], row["pesq_out"] = pesq[row["id"]]
                if row["pesq_in"] is not None and row["pesq_out"] is not None:
                    row["pesq_improvement"] = row["pesq_out"] - row["pesq_in"]
    rows.sort(key=lambda r: r["id"])
    return rows, sorted(failures)


def write_long_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in LONG_COLUMNS])


def read_long_csv(path) -> list[dict]:
    numeric = {"t60", "cd_in", "cd_out", "cd_improvement", "pesq_in", "pesq_out",
               "pesq_improvement", "lam"}
    integer = {"L", "R", "t_stack", "t_base", "iters", "seed"}
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in numeric:
                    row[k] = float(v)
                elif k in integer:
                    row[k] = int(v)
                else:
                    row[k] = v
            rows.append(row)
    return rows


def _setting(row) -> str:
    parts = [f"L={row['L']}"]
    if row.get("R") is not None:
        parts.append(f"R={row['R']}")
    if row.get("t_stack") is not None:
        parts.append(f"t_stack={row['t_stack']}")
    if row.get("t_base") is not None:
        parts.append(f"t_base={row['t_base']}")
    if row.get("lam") is not None:
        parts.append(f"lam={row['lam']!r}")
    parts.append(f"iters={row['iters']}")
    return " ".join(parts)


def pivot(rows, failures=()) -> tuple[list[str], list[list]]:
    """Mean improvements per (algorithm, setting) and RIR.

    Returns ``(header, table)``. Each (algorithm, setting) has a
    ``cd_improvement`` row and an ``n`` row, plus ``pesq_improvement`` when
    imported scores exist. A final ``failed`` row counts skipped items.
    """
    rirs = sorted({(r["t60"] if r["t60"] is not None else math.inf, r["rir"]) for r in rows})
    labels = [label for _, label in rirs]
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], _setting(r)), {}).setdefault(r["rir"], []).append(r)
    table = []
    for (algo, setting) in sorted(groups, key=lambda g: (ALGORITHMS.index(g[0]), g[1])):
        cells = groups[(algo, setting)]
        metrics = ["cd_improvement"]
        if any(r["pesq_improvement"] is not None for rs in cells.values() for r in rs):
            metrics.append("pesq_improvement")
        for metric in metrics:
            line = [algo, setting, metric]
            for label in labels:
                vals = [r[metric] for r in cells.get(label, []) if r[metric] is not None]
                line.append(float(np.mean(vals)) if vals else None)
            table.append(line)
        table.append([algo, setting, "n"] + [len(cells.get(label, [])) for label in labels])
    table.append(["", "", "failed", len(failures)] + [None] * max(len(labels) - 1, 0))
    return ["algorithm", "setting", "metric"] + labels, table


def write_pivot_csv(path, header, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for line in table:
            writer.writerow([_fmt(v) for v in line])


def params_dict(p: Params) -> dict:
    return asdict(p)
