"""File formats and result emission.

Decay traces are CSV with a ``time_ns,counts`` header; ``time_ns`` is the
left edge of each bin. Optional ``# key=value`` comment lines carry
``irf_fwhm_ps``, ``background``, ``source_id`` and ``end_ns`` (right edge of
the last bin). Plots are SVG, each with a CSV of the plotted points.
"""
from __future__ import annotations

import csv
import math
import os
from decimal import Decimal, InvalidOperation
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coherence import G2Curve
from .errors import ValidationError
from .fitting import DecayTrace, FitResult, ModelComparison
from .propagate import FluorescenceTrace, IrfShape, IrfSpec

HEADER = ("time_ns", "counts")


def _encode_ns(t_s: float) -> str:
    """Shortest round-trip decimal of ``t_s`` with the point shifted by nine places."""
    d = Decimal(repr(float(t_s))).scaleb(9).normalize()
    text = format(d, "f")
    return text if "." in text else text + ".0"


def _decode_ns(text: str) -> float:
    """Exact decimal shift back to seconds, then a single rounding to double."""
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(text) from None
    return float(d.scaleb(-9))


def _format_count(c: float) -> str:
    return str(int(c)) if float(c).is_integer() else repr(float(c))


def write_decay_csv(trace: DecayTrace, path) -> Path:
    path = Path(path)
    lines = []
    if trace.irf.shape is IrfShape.GAUSSIAN:
        lines.append(f"# irf_fwhm_ps={trace.irf.fwhm * 1e12!r}")
    if trace.background is not None:
        lines.append(f"# background={trace.background!r}")
    if trace.source_id:
        lines.append(f"# source_id={trace.source_id}")
    lines.append(f"# end_ns={_encode_ns(float(trace.bin_edges[-1]))}")
    lines.append(",".join(HEADER))
    for t, c in zip(trace.bin_edges[:-1], trace.counts):
        lines.append(f"{_encode_ns(float(t))},{_format_count(c)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def ingest_decay_csv(path) -> DecayTrace:
    """Read a decay histogram; errors name the offending line."""
    meta = {}
    times, counts = [], []
    seen_header = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            if not seen_header:
                cols = tuple(c.strip() for c in line.split(","))
                if cols != HEADER:
                    raise ValidationError(f"line {lineno}: expected header 'time_ns,counts', got {line!r}")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValidationError(f"line {lineno}: expected 2 columns, got {len(parts)}")
            try:
                t, c = _decode_ns(parts[0]), float(parts[1])
            except ValueError:
                raise ValidationError(f"line {lineno}: non-numeric value in {line!r}") from None
            if not (math.isfinite(t) and math.isfinite(c)):
                raise ValidationError(f"line {lineno}: non-finite value")
            if c < 0:
                raise ValidationError(f"line {lineno}: negative count {c}")
            if times and t <= times[-1]:
                raise ValidationError(f"line {lineno}: time column is not increasing")
            times.append(t)
            counts.append(c)
    if not seen_header:
        raise ValidationError("missing 'time_ns,counts' header")
    if len(times) < 2:
        raise ValidationError("need at least two bins")
    edges = np.asarray(times)
    if "end_ns" in meta:
        end = _decode_ns(meta["end_ns"])
    else:
        end = edges[-1] + float(np.median(np.diff(edges)))
    if end <= edges[-1]:
        raise ValidationError("end_ns must follow the last bin start")
    edges = np.append(edges, end)
    irf = IrfSpec.gaussian(float(meta["irf_fwhm_ps"]) * 1e-12) if "irf_fwhm_ps" in meta else IrfSpec.gaussian(110e-12)
    background = float(meta["background"]) if "background" in meta else None
    return DecayTrace(edges, np.asarray(counts), irf, background, meta.get("source_id", Path(path).stem))


# ---------------------------------------------------------------- records


def write_kv(path, mapping: dict) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")
    return path


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def write_csv(path, rows: list, columns=None) -> Path:
    path = Path(path)
    columns = columns or list(dict.fromkeys(k for row in rows for k in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _columns_csv(path, **cols):
    names = list(cols)
    data = np.column_stack([np.asarray(cols[n], dtype=float) for n in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="")
    return Path(path)


def plot_decay(path, trace: DecayTrace, model_counts=None, lifetime: float | None = None, title: str = "") -> list:
    """Counts (log scale) with the fitted model and a 1/e marker; SVG plus CSV."""
    path = Path(path)
    plt = _pyplot()
    t_ns = trace.centers * 1e9
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(t_ns, np.maximum(trace.counts, 0.5), ".", ms=2, color="0.5", label="counts")
    cols = {"time_ns": t_ns, "counts": trace.counts}
    if model_counts is not None:
        ax.semilogy(t_ns, np.maximum(model_counts, 0.5), "-", lw=1.2, color="C3", label="model")
        cols["model"] = model_counts
    if lifetime is not None:
        peak = t_ns[int(np.argmax(trace.counts))]
        ax.axvline(peak + lifetime * 1e9, ls="--", color="C0", lw=1, label=f"1/e = {lifetime * 1e9:.2f} ns")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts per bin")
    ax.set_xlim(t_ns[0], t_ns[-1])
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".svg"))
    plt.close(fig)
    return [path.with_suffix(".svg"), _columns_csv(path.with_suffix(".csv"), **cols)]


def plot_g2_tau(path, curve: G2Curve) -> list:
    path = Path(path)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(curve.delays * 1e9, curve.values, "o-", ms=3)
    ax.axhline(1.0, color="0.6", lw=0.8)
    ax.set_xlabel("window half-width tau (ns)")
    ax.set_ylabel("time-integrated g2")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".svg"))
    plt.close(fig)
    return [path.with_suffix(".svg"), _columns_csv(path.with_suffix(".csv"), tau_ns=curve.delays * 1e9, g2=curve.values)]


def plot_g2_vs_n(path, means, values, limit: float = 1.2) -> list:
    """Ensemble g2(0) against mean domain size with the large-N limit."""
    path = Path(path)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(means, values, "-", color="C3", label="Gaussian ensemble")
    ax.axhline(limit, ls="--", color="0.4", lw=0.8, label=f"limit {limit}")
    ax.set_xlabel("mean domain size")
    ax.set_ylabel("g2(0)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".svg"))
    plt.close(fig)
    return [path.with_suffix(".svg"), _columns_csv(path.with_suffix(".csv"), mean_n=means, g2_zero=values)]


def emit_results(result, out_dir, stem: str = "result", trace: DecayTrace | None = None, formats=("kv", "csv", "svg")) -> list:
    """Write ``result`` as key-value text, CSV and SVG (where meaningful). Returns the paths.

    Handles :class:`FitResult`, :class:`ModelComparison`, :class:`G2Curve`,
    :class:`FluorescenceTrace` and plain dicts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    base = out / stem
    written = []
    if isinstance(result, FitResult):
        if "kv" in formats:
            written.append(write_kv(base.with_suffix(".txt"), result.as_dict()))
        if "csv" in formats:
            written.append(write_csv(base.with_suffix(".csv"), [result.as_dict()]))
        if "svg" in formats and trace is not None:
            written += plot_decay(out / f"{stem}_decay", trace, result.model_counts, title=result.model)
    elif isinstance(result, ModelComparison):
        rows = result.table()
        if "csv" in formats:
            written.append(write_csv(base.with_suffix(".csv"), rows, ["model", "residual", "ls_residual", "ls_ratio", "error"]))
        if "kv" in formats:
            kv = {f"{r['model']}.{k}": v for r in rows for k, v in r.items() if k != "model"}
            written.append(write_kv(base.with_suffix(".txt"), kv))
        if "svg" in formats and trace is not None and "superradiant" in result.results:
            written += plot_decay(out / f"{stem}_decay", trace, result.results["superradiant"].model_counts)
    elif isinstance(result, G2Curve):
        if "csv" in formats:
            written.append(_columns_csv(base.with_suffix(".csv"), delay_ns=result.delays * 1e9, g2=result.values))
        if "svg" in formats:
            written += plot_g2_tau(out / f"{stem}_plot", result)
    elif isinstance(result, FluorescenceTrace):
        if "csv" in formats:
            written.append(_columns_csv(base.with_suffix(".csv"), time_ns=result.times * 1e9, rate=result.rates))
    elif isinstance(result, dict):
        if "kv" in formats:
            written.append(write_kv(base.with_suffix(".txt"), result))
        if "csv" in formats:
            written.append(write_csv(base.with_suffix(".csv"), [result]))
    else:
        raise ValidationError(f"cannot emit {type(result).__name__}")
    return written


# ---------------------------------------------------------------- size / rate statistics


@dataclass(frozen=True)
class ScatterRecord:
    diamond_id: str
    diameter: float  # nm
    decay_rate: float  # 1/ns
    peak_brightness: float  # normalized
    nv_density: float  # arbitrary units

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValidationError(f"{self.diamond_id}: diameter must be > 0")
        if not self.decay_rate > 0:
            raise ValidationError(f"{self.diamond_id}: decay rate must be > 0")


@dataclass(frozen=True)
class ScatterSummary:
    n_records: int
    forbidden_fraction: float
    flagged: tuple
    correlations: dict
    files: tuple = ()


def read_scatter_csv(path) -> list:
    """Rows with columns ``diamond_id,diameter_nm,decay_rate_per_ns,peak_brightness,nv_density``."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out.append(
                    ScatterRecord(
                        row["diamond_id"],
                        float(row["diameter_nm"]),
                        float(row["decay_rate_per_ns"]),
                        float(row["peak_brightness"]),
                        float(row["nv_density"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
    return out


def scatter_analysis(
    records: list,
    out_dir=None,
    size_cutoff_nm: float = 80.0,
    rate_cutoff_per_ns: float = 0.5,
) -> ScatterSummary:
    """Rate against size, brightness and density; flags small-and-fast diamonds.

    A record is flagged when its diameter is below ``size_cutoff_nm`` and
    its decay rate above ``rate_cutoff_per_ns``: small diamonds hold too few
    emitters for large collective domains.
    """
    if len(records) < 2:
        raise ValidationError("scatter analysis needs at least 2 records")
    size = np.array([r.diameter for r in records])
    rate = np.array([r.decay_rate for r in records])
    bright = np.array([r.peak_brightness for r in records])
    dens = np.array([r.nv_density for r in records])
    bad = (size < size_cutoff_nm) & (rate > rate_cutoff_per_ns)
    flagged = tuple(r.diamond_id for r, b in zip(records, bad) if b)

    def corr(x, y):
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            return float("nan")
        return float(np.corrcoef(x, y)[0, 1])

    correlations = {"size": corr(size, rate), "brightness": corr(bright, rate), "density": corr(dens, rate)}
    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        plt = _pyplot()
        for key, x, label in (("size", size, "diameter (nm)"), ("brightness", bright, "peak brightness"), ("density", dens, "NV density (a.u.)")):
            fig, ax = plt.subplots(figsize=(4.5, 3.5))
            ax.scatter(x[~bad], rate[~bad], s=10, color="C0")
            ax.scatter(x[bad], rate[bad], s=14, color="C3", label="small and fast")
            ax.set_xlabel(label)
            ax.set_ylabel("decay rate (1/ns)")
            if key == "size":
                ax.axvline(size_cutoff_nm, ls=":", color="0.5")
                ax.axhline(rate_cutoff_per_ns, ls=":", color="0.5")
            fig.tight_layout()
            fig.savefig(out / f"rate_vs_{key}.svg")
            plt.close(fig)
            files.append(out / f"rate_vs_{key}.svg")
            files.append(_columns_csv(out / f"rate_vs_{key}.csv", x=x, rate_per_ns=rate, flagged=bad.astype(float)))
    return ScatterSummary(len(records), float(bad.mean()), flagged, correlations, tuple(files))
