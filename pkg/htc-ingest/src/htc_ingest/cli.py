"""Command-line front end: `htc-ingest convert` and `htc-ingest verify`.

Exit codes: 0 success, 1 unreadable input or unmappable schema field,
2 verification failure.
"""

from __future__ import annotations

import sys

import click

from .convert import convert, verify
from .matfile import HtcFormatError
from .raster import RasterError


@click.group()
def main():
    """Convert HTC-2022 MATLAB containers to portable raster + geometry JSON."""


@main.command("convert")
@click.argument("in_path", type=click.Path(exists=True))
@click.argument("out_dir", type=click.Path())
@click.option("--segmentation", "seg_path", type=click.Path(exists=True),
              default=None, help="Ground-truth segmentation MAT-file.")
def cmd_convert(in_path, out_dir, seg_path):
    """Convert one HTC container file into OUT_DIR."""
    try:
        manifest = convert(in_path, out_dir, segmentation_path=seg_path)
    except (HtcFormatError, RasterError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    arc = manifest["arc"]
    click.echo(f"converted {in_path}: {arc['angle_count']} angles over "
               f"{arc['span_deg']:.1f} deg -> {out_dir}")


@main.command("verify")
@click.argument("out_dir", type=click.Path(exists=True))
def cmd_verify(out_dir):
    """Re-check a converted directory against its manifest."""
    report = verify(out_dir)
    if report["ok"]:
        click.echo(f"{out_dir}: all checks passed")
    else:
        for p in report["problems"]:
            click.echo(f"error: {p}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
