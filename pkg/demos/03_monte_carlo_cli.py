"""Drive a small Monte-Carlo study through the command-line interface.

The same steps work from a shell (``cmtunmix synth ...``); here they are
called in-process so the script is self-contained. Scenes are generated for
three SNR levels, unmixed with two variants, and the per-SNR mean and
standard deviation of rmsSAD are aggregated into tidy CSV files.

    python3 demos/03_monte_carlo_cli.py [output_dir]
"""
import sys
from pathlib import Path

from cmtunmix.cli import main

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/monte_carlo")
size = ["--size", "24x24", "--endmembers", "4"]


def cli(*args):
    print("$ cmtunmix", " ".join(args))
    code = main(list(args))
    if code:
        raise SystemExit(code)


cli("synth", *size, "--snr", "15,25,35", "--runs", "3", "--seed", "7", "--out", str(root / "scenes"))
for variant in ("proposed", "plain-nmf"):
    cli("unmix", str(root / "scenes"), "--variant", variant, "--max-iter", "100", "--clusters", "4",
        "--out", str(root / variant))
cli("eval", str(root / "proposed"), str(root / "plain-nmf"), "--out", str(root / "summary"))

print("\nrms_sad.csv:")
print((root / "summary" / "rms_sad.csv").read_text())
