"""SVG figures with CSV twins for a directory of measurement runs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import charvals, ingest, predictor, spectra  # noqa: E402

_SVG_META = {"Date": None}


def _save_svg(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "rolldyn", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def bode_table(responses) -> tuple[list[str], np.ndarray]:
    """Columns: frequency, then magnitude of all nine responses and phase of the three roll-angle ones."""
    base = responses[(spectra.INPUTS[0], 0)]
    header = ["freq_hz"]
    cols = [base.freqs]
    for u in spectra.INPUTS:
        for n in range(3):
            fr = responses[(u, n)]
            header.append(f"mag_{u}__{fr.output}")
            cols.append(fr.magnitude)
        header.append(f"phase_deg_{u}__phi")
        cols.append(responses[(u, 0)].phase_deg)
    return header, np.column_stack(cols)


def _write_table(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) for x in row])


def bode_figure(responses, variant: str, out_dir: Path) -> list[Path]:
    header, data = bode_table(responses)
    csv_path = out_dir / f"bode_{variant}.csv"
    _write_table(csv_path, header, data)
    fig, axes = plt.subplots(4, 3, figsize=(11, 10), sharex=True)
    f = data[:, 0]
    col = 1
    for j, u in enumerate(spectra.INPUTS):
        for n in range(3):
            axes[n, j].semilogy(f, data[:, col])
            axes[n, j].set_title(header[col][4:], fontsize=8)
            col += 1
        axes[3, j].plot(f, data[:, col])
        axes[3, j].set_title(header[col][10:], fontsize=8)
        axes[3, j].set_xlabel("f [Hz]")
        col += 1
    axes[0, 0].set_ylabel("|G|")
    axes[3, 0].set_ylabel("phase [deg]")
    fig.suptitle(f"Frequency responses: {variant}")
    fig.tight_layout()
    svg_path = out_dir / f"bode_{variant}.svg"
    _save_svg(fig, svg_path)
    return [svg_path, csv_path]


def spider_figure(reports, out_dir: Path) -> list[Path]:
    variants, crits, table = predictor.spider_table(reports)
    csv_path = out_dir / "spider.csv"
    predictor.save_spider_csv(reports, csv_path)
    angles = np.linspace(0, 2 * np.pi, len(crits), endpoint=False)
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="polar")
    for v, row in zip(variants, table):
        ax.plot(np.append(angles, angles[0]), np.append(row, row[0]), label=v)
    ax.set_xticks(angles)
    ax.set_xticklabels(crits)
    ax.legend(loc="lower left", bbox_to_anchor=(0.9, 0.9), fontsize=8)
    ax.set_title("Predicted liking ratings")
    svg_path = out_dir / "spider.svg"
    _save_svg(fig, svg_path)
    return [svg_path, csv_path]


def _classify(path: Path):
    try:
        return "run", ingest.load_run(path)
    except (ingest.RunFormatError, ingest.RunValidationError):
        pass
    try:
        return "ratings", ingest.load_ratings(path)
    except ingest.RatingsError:
        return None, None


def build_report(in_dir: Path, out_dir: Path, cfg: spectra.WelchConfig | None = None) -> list[Path]:
    """Bode plots, CV table, predictions and spider chart for every run in ``in_dir``.

    A ratings CSV in the same directory adds a back-test table.
    """
    runs, ratings = [], None
    for path in sorted(Path(in_dir).glob("*.csv")):
        kind, obj = _classify(path)
        if kind == "run":
            runs.append(obj)
        elif kind == "ratings":
            ratings = obj
    if not runs:
        raise ValueError(f"no measurement runs in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    cvsets = []
    for run in runs:
        responses = spectra.roll_responses(run, cfg)
        written += bode_figure(responses, run.variant_id, out_dir)
        cvsets.append(charvals.extract_all(responses, cfg, variant_id=run.variant_id))
    cv_path = out_dir / "cvs.csv"
    charvals.save_cvs(cvsets, cv_path)
    written.append(cv_path)
    models = predictor.builtin_models()
    reports = predictor.predict_all(models, cvsets)
    pred_path = out_dir / "predictions.csv"
    predictor.save_predictions_csv(reports, pred_path)
    written.append(pred_path)
    written += spider_figure(reports, out_dir)
    if ratings is not None:
        bt = predictor.backtest(models, cvsets, ratings)
        bt_path = out_dir / "backtest.csv"
        bt.to_csv(bt_path)
        written.append(bt_path)
    return written
