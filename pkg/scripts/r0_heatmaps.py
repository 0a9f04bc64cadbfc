"""R0 heatmaps over (alpha, p_R) for doubling times 2.5 and 21.4 days and halving time 11.6 days."""
from pathlib import Path

from epivolt.cli import run

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    for name in ("heatmap_doubling_2_5d", "heatmap_halving_11_6d", "heatmap_doubling_21_4d"):
        print(f"[{name}]")
        if run(ROOT / "configs" / f"{name}.toml", ROOT / "out" / name) != 0:
            raise SystemExit(f"{name} failed")
