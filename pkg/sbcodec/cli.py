"""`sbcodec` command line: encode, decode, psnr, bdrate, sweep and info.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import wraps
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import click
import colorama
from dotenv import load_dotenv

from sbcodec.config import EncoderConfig, load_config
from sbcodec.decoder import decode_stream, read_header
from sbcodec.encoder import encode_sequence
from sbcodec.errors import CodecError, ConfigError, FrameIOError
from sbcodec.eval.metrics import COMPONENTS, RdPoint, bd_rate, frame_psnr
from sbcodec.eval.report import emit_curve, emit_psnr_report, emit_report, read_curve, summarize
from sbcodec.frame_io import Frame, frame_byte_size, read_yuv, write_yuv

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
LOG_LEVEL_ENV = "SBC_LOG_LEVEL"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

SWEEP_QPS = (22, 27, 32, 37)


def setup_logging(level: Optional[str] = None) -> None:
    load_dotenv()
    level = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    # getLevelNamesMapping() is 3.11+; on older Pythons it is the same mapping as _nameToLevel
    level_names = logging.getLevelNamesMapping() if hasattr(logging, "getLevelNamesMapping") else logging._nameToLevel
    if level not in level_names:
        raise click.BadParameter(f"unknown log level {level!r}", param_hint="--log-level")
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATE_FORMAT, stream=sys.stderr, force=True)


def _ok(message: str) -> None:
    click.secho(message, fg="green", err=True)


def _fail(message: str) -> None:
    click.secho(message, fg="red", err=True)


# --- Shared options ---

def _encoder_options(f: Callable) -> Callable:
    """Flags mirroring EncoderConfig fields; unset flags keep the config-file or default value."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="key=value config file."),
        click.option("--qp", type=click.IntRange(0, 51), help="Quantization parameter."),
        click.option("--scu", "--max-scu-width", "scu", type=int, help="SCU size in luma pixels."),
        click.option("--depth", "--max-partition-depth", "max_partition_depth", type=int, help="Minimum-CU depth below the SCU."),
        click.option("--direct-depth", "--max-direct-partition-depth", "max_direct_partition_depth", type=int, help="CTU depth below the SCU."),
        click.option("--intra-period", type=int, help="Distance between I frames (0: first frame only)."),
        click.option("--search-range", type=int, help="Full-pel motion search range."),
        click.option("--sao", "sao_mode", type=click.Choice(["off", "fixed", "adaptive"]), help="SAO scheme."),
        click.option("--sao-block", "--sao-block-size", "sao_block_size", type=int, help="SAO block size in luma pixels."),
        click.option("--alf", "alf_enabled", type=click.Choice(["on", "off"]), help="CU-level adaptive loop filter."),
        click.option("--alf-signaling", type=click.Choice(["superblock", "cu", "improved"]), help="ALF flag syntax."),
        click.option("--lambda-factor", type=float, help="Constant of the lambda(qp) model."),
        click.option("--frame-rate", type=float, help="Frames per second for kbps."),
        click.option("--bit-depth", type=click.Choice(["8", "10"]), help="Sample bit depth of the input."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _input_options(f: Callable) -> Callable:
    f = click.option("--frames", type=click.IntRange(min=1), help="Number of frames to read (default: whole file).")(f)
    f = click.option("--height", required=True, type=click.IntRange(min=1), help="Luma height.")(f)
    f = click.option("--width", required=True, type=click.IntRange(min=1), help="Luma width.")(f)
    return f


def build_config(config_path: Optional[Path] = None, scu: Optional[int] = None, **flags) -> EncoderConfig:
    base = load_config(config_path) if config_path is not None else EncoderConfig()
    if flags.get("alf_enabled") is not None:
        flags["alf_enabled"] = flags["alf_enabled"] == "on"
    if flags.get("bit_depth") is not None:
        flags["bit_depth"] = int(flags["bit_depth"])
    if scu is not None:
        flags["max_scu_width"] = flags["max_scu_height"] = scu
        # Keep a file-provided SAO block size valid when only the SCU shrinks.
        if flags.get("sao_block_size") is None and base.sao_block_size > scu:
            flags["sao_block_size"] = scu
    return base.with_overrides(**flags)


def _count_frames(path: Path, width: int, height: int, bit_depth: int) -> int:
    try:
        size = path.stat().st_size
    except OSError as e:
        raise FrameIOError(f"cannot read {path}: {e}") from e
    count = size // frame_byte_size(width, height, bit_depth)
    if count == 0:
        raise FrameIOError(f"{path} holds no complete {width}x{height} frame")
    return count


def _read_input(path: Path, width: int, height: int, bit_depth: int, frames: Optional[int]) -> List[Frame]:
    count = frames if frames is not None else _count_frames(path, width, height, bit_depth)
    return read_yuv(path, width, height, bit_depth, count)


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FrameIOError(f"cannot read {path}: {e}") from e


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise FrameIOError(f"cannot write {path}: {e}") from e


def _open_text(path: Optional[Path]):
    return click.open_file(str(path) if path is not None else "-", "w", encoding="utf-8", lazy=False)


# --- Commands ---

@click.group()
@click.option("--log-level", default=None, help=f"Logging level (default: ${LOG_LEVEL_ENV} or INFO).")
def cli(log_level: Optional[str]) -> None:
    """Super-block hybrid video encoder and decoder."""
    colorama.just_fix_windows_console()
    setup_logging(log_level)


@cli.command()
@click.argument("input_path", type=click.Path(dir_okay=False, path_type=Path))
@_input_options
@_encoder_options
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Output .sbc stream.")
@click.option("--recon", type=click.Path(dir_okay=False, path_type=Path), help="Write the reconstruction as I420.")
@click.option("--stats", type=click.Path(dir_okay=False, path_type=Path), help="Write per-frame stats CSV.")
def encode(input_path, width, height, frames, output, recon, stats, **options) -> None:
    """Encode a raw I420 file."""
    config = build_config(**options)
    click.echo(config.echo())
    result = encode_sequence(_read_input(input_path, width, height, config.bit_depth, frames), config)
    _write_bytes(output, result.stream)
    if recon is not None:
        write_yuv(result.recon, recon)
    if stats is not None:
        with _open_text(stats) as out:
            emit_report(result.stats, out)
    bits, point = summarize(result.stats, config.frame_rate, config.qp)
    _ok(
        f"Encoded {len(result.frames)} frames: {bits} bits ({point.bitrate:.2f} kbps), "
        f"PSNR Y/U/V {point.psnr_y:.2f}/{point.psnr_u:.2f}/{point.psnr_v:.2f} dB -> {output}"
    )


@cli.command()
@click.argument("stream", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Output I420 file.")
def decode(stream, output) -> None:
    """Decode an .sbc stream to raw I420."""
    data = _read_bytes(stream)
    header = read_header(data)
    click.echo(header.config.echo())
    frames = decode_stream(data)
    write_yuv(frames, output)
    _ok(f"Decoded {len(frames)} frames of {header.width}x{header.height} -> {output}")


@cli.command()
@click.argument("reference", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("distorted", type=click.Path(dir_okay=False, path_type=Path))
@_input_options
@click.option("--bit-depth", type=click.Choice(["8", "10"]), default="8", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="CSV path (default: stdout).")
def psnr(reference, distorted, width, height, frames, bit_depth, output) -> None:
    """Per-frame and average PSNR of two I420 files."""
    depth = int(bit_depth)
    ref = _read_input(reference, width, height, depth, frames)
    dist = _read_input(distorted, width, height, depth, len(ref))
    with _open_text(output) as out:
        emit_psnr_report([frame_psnr(a, b) for a, b in zip(ref, dist)], out)


@cli.command()
@click.argument("anchor", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("test", type=click.Path(dir_okay=False, path_type=Path))
def bdrate(anchor, test) -> None:
    """BD-rate of TEST against ANCHOR, both curve CSVs from `sweep`."""
    anchor_curve, test_curve = read_curve(anchor), read_curve(test)
    for component in COMPONENTS:
        click.echo(f"{component.upper()}: {bd_rate(anchor_curve, test_curve, component):+.2f}%")


def _parse_qps(ctx, param, value: str) -> Tuple[int, ...]:
    try:
        qps = tuple(sorted({int(v) for v in value.split(",") if v.strip()}))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None
    if len(qps) < 4:
        raise click.BadParameter("a BD-rate curve needs at least 4 distinct QPs")
    return qps


def _encode_point(frames: Sequence[Frame], config: EncoderConfig) -> Tuple[int, RdPoint]:
    result = encode_sequence(frames, config)
    return summarize(result.stats, config.frame_rate, config.qp)


@cli.command()
@click.argument("input_path", type=click.Path(dir_okay=False, path_type=Path))
@_input_options
@_encoder_options
@click.option("--qps", default=",".join(map(str, SWEEP_QPS)), show_default=True, callback=_parse_qps, help="QP points.")
@click.option("-j", "--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Parallel encodes.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Curve CSV (default: stdout).")
def sweep(input_path, width, height, frames, qps, jobs, output, **options) -> None:
    """Encode at several QPs and write the rate-distortion curve."""
    if options.get("qp") is not None:
        raise click.UsageError("--qp conflicts with --qps in sweep")
    config = build_config(**options)
    configs = [config.with_overrides(qp=qp) for qp in qps]
    click.echo(config.echo())
    source = _read_input(input_path, width, height, config.bit_depth, frames)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_encode_point, [source] * len(configs), configs))
    else:
        points = []
        for c in configs:
            logger.info(f"Sweep point qp={c.qp}")
            points.append(_encode_point(source, c))
    with _open_text(output) as out:
        emit_curve(points, out)
    _ok(f"Swept {len(points)} QPs: {', '.join(str(q) for q in qps)}")


@cli.command()
@click.argument("stream", type=click.Path(dir_okay=False, path_type=Path))
def info(stream) -> None:
    """Print the sequence header of a stream."""
    header = read_header(_read_bytes(stream))
    click.echo(f"width={header.width}")
    click.echo(f"height={header.height}")
    click.echo(f"frame_count={header.frame_count}")
    click.echo(header.config.echo())


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="sbcodec", standalone_mode=False)
    except click.exceptions.Abort:
        _fail("Aborted.")
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        _fail(f"Configuration error: {e}")
        return EXIT_USAGE
    except CodecError as e:
        _fail(f"Error: {e}")
        return EXIT_DATA
    return result if isinstance(result, int) else EXIT_OK


def run() -> None:
    sys.exit(main())
