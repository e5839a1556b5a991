"""CSV reports: per-frame encode stats, PSNR tables and rate-distortion curves.

Columns are fixed and values are formatted with a fixed precision, so two
identical runs produce byte-identical files.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, TextIO, Tuple, Union

from sbcodec.errors import EvaluationError, FrameIOError
from sbcodec.eval.metrics import COMPONENTS, RdCurve, RdPoint, is_lossless, mean_psnr

logger = logging.getLogger(__name__)

FRAME_COLUMNS = (
    "frame",
    "type",
    "bits",
    "psnr_y",
    "psnr_u",
    "psnr_v",
    "lossless",
    "sao_bits",
    "alf_bits",
    "mode_flag_bits",
    "sao_share",
    "alf_share",
    "mode_flag_share",
    "direct_ctu_scus",
    "scu_to_ctu_scus",
)
PSNR_COLUMNS = ("frame", "psnr_y", "psnr_u", "psnr_v", "lossless")
CURVE_COLUMNS = ("qp", "bits", "kbps", "psnr_y", "psnr_u", "psnr_v")


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _share(part: int, total: int) -> str:
    """Percentage of the frame's bits."""
    return f"{100.0 * part / total:.2f}" if total else "0.00"


def lossless_marker(psnr: Sequence[float]) -> str:
    """Letters of the planes reconstructed without error, e.g. 'YUV'; empty when none."""
    return "".join(name.upper() for name, value in zip(COMPONENTS, psnr) if is_lossless(value))


def _write_rows(out: TextIO, columns: Sequence[str], rows: Iterable[Dict[str, str]]) -> None:
    writer = csv.DictWriter(out, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def frame_rows(stats: Sequence) -> List[Dict[str, str]]:
    rows = []
    for s in stats:
        rows.append(
            {
                "frame": str(s.index),
                "type": s.frame_type.value,
                "bits": str(s.bits),
                "psnr_y": _fmt(s.psnr[0]),
                "psnr_u": _fmt(s.psnr[1]),
                "psnr_v": _fmt(s.psnr[2]),
                "lossless": lossless_marker(s.psnr),
                "sao_bits": str(s.sao_bits),
                "alf_bits": str(s.alf_bits),
                "mode_flag_bits": str(s.mode_flag_bits),
                "sao_share": _share(s.sao_bits, s.bits),
                "alf_share": _share(s.alf_bits, s.bits),
                "mode_flag_share": _share(s.mode_flag_bits, s.bits),
                "direct_ctu_scus": str(s.direct_ctu_scus),
                "scu_to_ctu_scus": str(s.scu_to_ctu_scus),
            }
        )
    return rows


def emit_report(stats: Sequence, out: TextIO) -> None:
    """Per-frame stats of an encode run, one row per frame."""
    _write_rows(out, FRAME_COLUMNS, frame_rows(stats))


def emit_psnr_report(per_frame: Sequence[Tuple[float, float, float]], out: TextIO) -> None:
    """Per-frame PSNR plus a final 'avg' row over the lossy frames of each plane."""
    rows = [
        {"frame": str(i), "psnr_y": _fmt(p[0]), "psnr_u": _fmt(p[1]), "psnr_v": _fmt(p[2]), "lossless": lossless_marker(p)}
        for i, p in enumerate(per_frame)
    ]
    if per_frame:
        avg = tuple(mean_psnr(p[c] for p in per_frame) for c in range(3))
        rows.append(
            {"frame": "avg", "psnr_y": _fmt(avg[0]), "psnr_u": _fmt(avg[1]), "psnr_v": _fmt(avg[2]), "lossless": lossless_marker(avg)}
        )
    _write_rows(out, PSNR_COLUMNS, rows)


def summarize(stats: Sequence, frame_rate: float, qp: int = None) -> Tuple[int, RdPoint]:
    """Total bits and the (kbps, mean PSNR) point of one encode run."""
    if not stats:
        raise EvaluationError("no frames to summarize")
    bits = sum(s.bits for s in stats)
    kbps = bits * frame_rate / len(stats) / 1000.0
    means = [mean_psnr(s.psnr[c] for s in stats) for c in range(3)]
    return bits, RdPoint(kbps, means[0], means[1], means[2], qp)


def emit_curve(points: Sequence[Tuple[int, RdPoint]], out: TextIO) -> None:
    """One row per (total bits, RdPoint), in the given order."""
    rows = [
        {
            "qp": "" if p.qp is None else str(p.qp),
            "bits": str(bits),
            "kbps": _fmt(p.bitrate),
            "psnr_y": _fmt(p.psnr_y),
            "psnr_u": _fmt(p.psnr_u),
            "psnr_v": _fmt(p.psnr_v),
        }
        for bits, p in points
    ]
    _write_rows(out, CURVE_COLUMNS, rows)


def read_curve(path: Union[str, Path]) -> RdCurve:
    path = Path(path)
    try:
        with path.open(newline="") as f:
            reader = csv.DictReader(f)
            missing = set(CURVE_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise EvaluationError(f"{path} is missing columns {sorted(missing)}")
            points = [
                RdPoint(
                    float(row["kbps"]),
                    float(row["psnr_y"]),
                    float(row["psnr_u"]),
                    float(row["psnr_v"]),
                    int(row["qp"]) if row["qp"] else None,
                )
                for row in reader
            ]
    except OSError as e:
        raise FrameIOError(f"cannot read curve {path}: {e}") from e
    except ValueError as e:
        if isinstance(e, EvaluationError):
            raise
        raise EvaluationError(f"{path}: {e}") from e
    logger.debug(f"Read {len(points)} RD points from {path}")
    return RdCurve(points)
