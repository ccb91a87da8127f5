import numpy as np
import pandas as pd


def _radius(frame: pd.DataFrame) -> pd.Series:
    coords = [c for c in frame.columns if c.startswith("x") and c[1:].isdigit()]
    return frame[coords].abs().sum(axis=1)


def profile_sites(frame: pd.DataFrame, columns=None) -> dict:
    """
    Summary statistics of per-site columns, plus their means by L1 distance to the origin.
    The frame needs coordinate columns x1..xd.
    """
    numerical = [c for c in (columns or frame.select_dtypes(include=["number"]).columns) if not (c.startswith("x") and c[1:].isdigit())]
    stats = frame[numerical].describe().to_dict()
    by_radius = frame.assign(radius=_radius(frame)).groupby("radius")[numerical].mean()
    profile = {
        "basic_statistics": stats,
        "by_radius": {col: {int(r): float(v) for r, v in by_radius[col].items()} for col in numerical},
        "sites": int(len(frame)),
    }
    return profile


def radial_frame(profile: dict) -> pd.DataFrame:
    """The by-radius table of ``profile_sites`` as a long frame."""
    rows = [
        {"radius": r, "column": col, "mean": value}
        for col, means in profile["by_radius"].items()
        for r, value in sorted(means.items())
    ]
    return pd.DataFrame(rows, columns=["radius", "column", "mean"]).astype({"mean": np.float64})
