"""Command-line front end: ``asyncra <subcommand>``. Every subcommand writes CSV."""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import protograph
from .analysis import capacity as cap
from .analysis import pexit, qde
from .channel import LLR_MODELS, es_n0_to_sigma2, llr_histogram, sigma2_to_es_n0_db

log = logging.getLogger("asyncra")

REPRO_FIGURES = ("fig4", "fig5", "fig6", "fig7", "fig8")


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if ":" in part:  # start:stop:step, inclusive of stop
            a, b, s = (float(x) for x in part.split(":"))
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            out.extend(round(a + i * s, 10) for i in range(n))
        else:
            out.append(float(part))
    if not out:
        raise click.BadParameter("empty list")
    return out


def _names(text) -> list[str]:
    return [p for p in str(text).replace(" ", "").split(",") if p]


def load_config(path: str | None) -> dict:
    """Read ``[section]`` key = value pairs into click's per-command default map."""
    if not path:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise click.BadParameter(f"cannot read config file {path}", param_hint="--config")
    return {sec: {k.replace("-", "_"): v for k, v in parser.items(sec)} for sec in parser.sections()}


class Output:
    """CSV writer that stamps a provenance comment (config hash and seed) first."""

    def __init__(self, path: str | None, params: dict, seed: int):
        self.path = path
        blob = json.dumps({k: params[k] for k in sorted(params)}, sort_keys=True, default=str)
        self.hash = hashlib.sha256(blob.encode()).hexdigest()[:16]
        self.seed = seed
        self.buf = io.StringIO()
        self.buf.write(f"# asyncra config_hash={self.hash} seed={seed}\n")
        self.writer = None

    def header(self, columns):
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(columns)

    def row(self, values):
        self.writer.writerow([_fmt(v) for v in values])

    def close(self):
        text = self.buf.getvalue()
        if self.path in (None, "-"):
            click.echo(text, nl=False)
        else:
            Path(self.path).write_text(text)
            log.info("wrote %s", self.path)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    return v


def _out(ctx, params: dict) -> Output:
    return Output(params.get("output"), {"command": ctx.info_name, **params}, ctx.obj["seed"])


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Config file with [subcommand] sections of key = value defaults.")
@click.option("--seed", type=int, envvar="ASYNC_RA_SEED", default=0, show_default=True,
              help="Master seed (falls back to $ASYNC_RA_SEED).")
@click.option("--threads", type=int, default=None, help="Worker cap (default: available CPUs).")
@click.option("-v", "--verbose", count=True, help="More logging on stderr.")
@click.pass_context
def main(ctx, config_path, seed, threads, verbose):
    """Code design and random-access simulation toolkit."""
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.default_map = load_config(config_path)
    threads = threads or os.cpu_count() or 1
    ctx.obj = {"seed": seed, "threads": threads}


def _output_option(f):
    return click.option("-o", "--output", default=None, help="CSV path (default: stdout).")(f)


@main.command()
@click.option("--esn0", default="0", show_default=True,
              help="Es/(N0 + interference) values in dB: comma list or start:stop:step.")
@_output_option
@click.pass_context
def capacity(ctx, esn0, output):
    """Gray-QPSK constrained capacity table."""
    out = _out(ctx, dict(esn0=esn0, output=output))
    out.header(["es_n0_db", "sigma2", "capacity_bits"])
    for db in _floats(esn0):
        s2 = es_n0_to_sigma2(db)
        out.row([db, s2, cap.qpsk_capacity(s2)])
    out.close()


def _matrices(names: str):
    try:
        return [protograph.resolve(n) for n in _names(names)]
    except (OSError, ValueError, KeyError) as exc:
        raise click.BadParameter(str(exc), param_hint="--matrix") from exc


def _sides(side: str):
    return ("begin", "end") if side == "both" else (side,)


def _threshold_rows(out, mats, alphas, sides, es_n0_db):
    sn2 = es_n0_to_sigma2(es_n0_db)
    out.header(["alpha", "side", "model", "threshold_variance", "shannon_limit_variance"])
    for b in mats:
        for a in alphas:
            for side in sides:
                r = pexit.pexit_interference_threshold(b, a, side, sn2)
                limit = cap.shannon_interference_limit(r.alpha, sn2)
                out.row([r.alpha, side, b.name or "matrix", r.value, limit])


@main.command()
@click.option("--matrix", default="AdHoc", show_default=True,
              help="Comma list of builtin names or base-matrix files.")
@click.option("--alphas", default="0.1:1:0.1", show_default=True)
@click.option("--side", type=click.Choice(["begin", "end", "both"]), default="both", show_default=True)
@click.option("--es-n0-db", type=float, default=6.0, show_default=True)
@_output_option
@click.pass_context
def threshold(ctx, matrix, alphas, side, es_n0_db, output):
    """PEXIT interference thresholds and the matching Shannon limits."""
    out = _out(ctx, dict(matrix=matrix, alphas=alphas, side=side, es_n0_db=es_n0_db, output=output))
    _threshold_rows(out, _matrices(matrix), _floats(alphas), _sides(side), es_n0_db)
    out.close()


def _qde_rows(out, b, models, alphas, side, half_bins):
    grid = qde.Grid(30.0, half_bins)
    out.header(["alpha", "side", "model", "threshold_variance", "threshold_es_n0_db"])
    for a in alphas:
        for m in models:
            r = qde.qde_threshold(b, m, a, side, grid=grid)
            log.info("alpha=%g %s: %.5f", a, m, r.value)
            out.row([r.alpha, side, m, r.value, sigma2_to_es_n0_db(r.value) if r.value > 0 else math.inf])


@main.command(name="qde")
@click.option("--matrix", default="AdHoc", show_default=True)
@click.option("--models", default=",".join(qde.MODELS), show_default=True)
@click.option("--alphas", default="0.2,0.5,0.8", show_default=True)
@click.option("--side", type=click.Choice(["begin", "end"]), default="begin", show_default=True)
@click.option("--half-bins", type=int, default=1024, show_default=True,
              help="Grid bins per LLR sign (grid spans [-30, 30]).")
@_output_option
@click.pass_context
def qde_cmd(ctx, matrix, models, alphas, side, half_bins, output):
    """Noise thresholds with one equal-power interferer by quantized density evolution."""
    models = _names(models)
    bad = [m for m in models if m not in qde.MODELS]
    if bad:
        raise click.BadParameter(f"unknown model(s) {bad}; choose from {', '.join(qde.MODELS)}",
                                 param_hint="--models")
    (b,) = _matrices(matrix)[:1]
    out = _out(ctx, dict(matrix=matrix, models=models, alphas=alphas, side=side,
                         half_bins=half_bins, output=output))
    _qde_rows(out, b, models, _floats(alphas), side, half_bins)
    out.close()


@main.command()
@click.option("--shape", default="11,6,1", show_default=True, help="n_b,m_b,p_b")
@click.option("--alphas", default="0.6,0.9", show_default=True)
@click.option("--population", type=int, default=200, show_default=True)
@click.option("--generations", type=int, default=4000, show_default=True)
@click.option("--crossover", type=float, default=0.6, show_default=True)
@click.option("--max-entry", type=int, default=3, show_default=True)
@click.option("--es-n0-db", type=float, default=6.0, show_default=True)
@click.option("--matrix-out", default="evolved.txt", show_default=True,
              help="Where to write the best base matrix.")
@_output_option
@click.pass_context
def optimize(ctx, shape, alphas, population, generations, crossover, max_entry, es_n0_db,
             matrix_out, output):
    """Differential evolution of a symmetric base matrix; CSV of best gain per generation."""
    from .optimizer import DeConfig, evolve

    try:
        n_b, m_b, p_b = (int(x) for x in shape.split(","))
        cfg = DeConfig(shape=(n_b, m_b, p_b), population=population, generations=generations,
                       crossover_prob=crossover, max_entry=max_entry, alphas=tuple(_floats(alphas)),
                       sigma_n2=es_n0_to_sigma2(es_n0_db), seed=ctx.obj["seed"])
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    out = _out(ctx, dict(shape=shape, alphas=alphas, population=population, generations=generations,
                         crossover=crossover, max_entry=max_entry, es_n0_db=es_n0_db,
                         matrix_out=matrix_out, output=output))
    best, history = evolve(cfg)
    protograph.save(best, matrix_out)
    out.header(["generation", "best_gain"])
    for g, v in enumerate(history):
        out.row([g, v])
    out.close()


@main.command(name="llr-pdf")
@click.option("--models", default=",".join(LLR_MODELS), show_default=True)
@click.option("--es-n0-db", type=float, default=6.0, show_default=True)
@click.option("--samples", type=int, default=200_000, show_default=True)
@click.option("--bins", type=int, default=160, show_default=True, help="Histogram bins on [-40, 40].")
@_output_option
@click.pass_context
def llr_pdf(ctx, models, es_n0_db, samples, bins, output):
    """Histogram of bit LLRs with one equal-power interferer."""
    models = _names(models)
    bad = [m for m in models if m not in LLR_MODELS]
    if bad:
        raise click.BadParameter(f"unknown model(s) {bad}; choose from {', '.join(LLR_MODELS)}",
                                 param_hint="--models")
    out = _out(ctx, dict(models=models, es_n0_db=es_n0_db, samples=samples, bins=bins, output=output))
    _llr_rows(out, models, es_n0_db, samples, bins, ctx.obj["seed"])
    out.close()


def _llr_rows(out, models, es_n0_db, samples, bins, seed):
    out.header(["llr_bin_center", "density", "model"])
    edges = np.linspace(-40, 40, bins + 1)
    for i, m in enumerate(models):
        centers, dens = llr_histogram(m, es_n0_db, samples, edges, np.random.default_rng([seed, i]))
        for c, d in zip(centers, dens):
            out.row([float(c), float(d), m])


def _sim_mode(mode, base_matrix, beta, n_s, lift_seed):
    from . import rasim

    if mode == "random":
        return rasim.AbstractRandom(beta)
    if base_matrix is None:
        raise click.UsageError(f"--mode {mode} needs --base-matrix (file or builtin name)")
    (b,) = _matrices(base_matrix)
    if mode == "ldpc":
        return rasim.AbstractLdpc(b)
    return rasim.Phy(rasim.reference_code(b, n_s, lift_seed), name=b.name)


def _sim_rows(out, template, modes, loads, segments, workers):
    from . import rasim

    out.header(list(rasim.CSV_COLUMNS))
    for mode in modes:
        for rep in rasim.plr_curve(template, loads, mode, segments, workers):
            row = rep.row()
            out.row([row[c] for c in rasim.CSV_COLUMNS])


@main.command()
@click.option("--mode", type=click.Choice(["random", "ldpc", "phy"]), default="random", show_default=True)
@click.option("--loads", default="0.5:1:0.1", show_default=True)
@click.option("--horizon", type=float, default=5000.0, show_default=True, help="In packet durations.")
@click.option("--base-matrix", default=None, help="Base-matrix file or builtin name (ldpc/phy modes).")
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--es-n0-db", type=float, default=6.0, show_default=True)
@click.option("--vf", type=float, default=200.0, show_default=True, help="Virtual frame in packet durations.")
@click.option("--window", type=float, default=600.0, show_default=True)
@click.option("--shift", type=float, default=20.0, show_default=True)
@click.option("--segments", type=int, default=1, show_default=True,
              help="Independent horizons merged per load.")
@click.option("--lift-seed", type=int, default=0, show_default=True)
@_output_option
@click.pass_context
def simulate(ctx, mode, loads, horizon, base_matrix, beta, es_n0_db, vf, window, shift, segments,
             lift_seed, output):
    """Packet loss rate versus channel load."""
    from . import rasim

    try:
        template = rasim.ProtocolConfig(load=1.0, vf_len=vf, window=window, window_shift=shift,
                                        es_n0_db=es_n0_db, horizon=horizon, seed=ctx.obj["seed"])
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    sim_mode = _sim_mode(mode, base_matrix, beta, template.n_s, lift_seed)
    out = _out(ctx, dict(mode=mode, loads=loads, horizon=horizon, base_matrix=base_matrix, beta=beta,
                         es_n0_db=es_n0_db, vf=vf, window=window, shift=shift, segments=segments,
                         lift_seed=lift_seed, output=output))
    _sim_rows(out, template, [sim_mode], _floats(loads), segments, ctx.obj["threads"])
    out.close()


# -- figure presets ------------------------------------------------------------------

SCALES = {
    # horizon in packet durations per segment, segments per load
    "smoke": {"fig7": (3000.0, 1), "fig8": (2000.0, 1), "qde_alphas": "0.5", "fig4": 50_000},
    "desk": {"fig7": (35000.0, 1), "fig8": (13000.0, 1), "qde_alphas": "0.2,0.5,0.8", "fig4": 400_000},
}


@main.command()
@click.argument("figure", type=click.Choice(REPRO_FIGURES))
@click.option("--scale", type=click.Choice(sorted(SCALES)), default="smoke", show_default=True)
@_output_option
@click.pass_context
def repro(ctx, figure, scale, output):
    """Desk-scale presets for the LLR densities, thresholds and PLR curves."""
    from . import rasim

    preset = SCALES[scale]
    out = _out(ctx, dict(figure=figure, scale=scale, output=output))
    seed = ctx.obj["seed"]
    names = ("AdHoc", "FiveGPermuted", "FiveG")
    if figure == "fig4":
        _llr_rows(out, list(LLR_MODELS), 6.0, preset["fig4"], 160, seed)
    elif figure == "fig5":
        mats = [protograph.builtin(n) for n in names]
        _threshold_rows(out, mats, [round(0.1 * i, 10) for i in range(1, 11)], ("begin", "end"), 6.0)
    elif figure == "fig6":
        _qde_rows(out, protograph.builtin("AdHoc"), list(qde.MODELS), _floats(preset["qde_alphas"]),
                  "begin", 1024)
    elif figure == "fig7":
        horizon, segs = preset["fig7"]
        template = rasim.ProtocolConfig(load=1.0, horizon=horizon, seed=seed)
        modes = [rasim.AbstractRandom(1.0), rasim.AbstractRandom(0.95)]
        modes += [rasim.AbstractLdpc(protograph.builtin(n)) for n in names]
        _sim_rows(out, template, modes, _floats("0.6:1.1:0.05"), segs, ctx.obj["threads"])
    else:
        horizon, segs = preset["fig8"]
        template = rasim.ProtocolConfig(load=1.0, horizon=horizon, seed=seed)
        modes = [rasim.Phy(rasim.reference_code(protograph.builtin(n), template.n_s), name=n) for n in names]
        _sim_rows(out, template, modes, _floats("0.6:1.0:0.1"), segs, ctx.obj["threads"])
    out.close()


if __name__ == "__main__":  # pragma: no cover
    main()
