import logging
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import orjson
import pandas as pd

from ..change_point import kolmogorov_cdf, kolmogorov_pdf
from ..models import ExperimentResult, PowerCell, PowerTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "orjson")
HISTOGRAM_BINS = 30


def _versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in MANIFEST_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def power_frame(table: PowerTable) -> pd.DataFrame:
    rows = [
        {
            "sweep_value": c.sweep_value,
            "n": c.n,
            "rejections": c.rejections,
            "replications": c.replications,
            "failures": c.failures,
            "rate": c.rate,
        }
        for c in table.cells
    ]
    return pd.DataFrame(rows, columns=["sweep_value", "n", "rejections", "replications", "failures", "rate"])


def load_power_table(path: PathLike, sweep_name: Optional[str] = None) -> PowerTable:
    frame = pd.read_csv(path)
    cells = [
        PowerCell(
            sweep_value=float(row.sweep_value),
            n=int(row.n),
            rejections=int(row.rejections),
            replications=int(row.replications),
            failures=int(row.failures),
        )
        for row in frame.itertuples(index=False)
    ]
    return PowerTable(sweep_name=sweep_name, cells=cells)


def samples_frame(t_samples: Dict[Tuple[float, int], List[float]]) -> pd.DataFrame:
    rows = [
        {"sweep_value": value, "n": n, "index": i, "t_n": t}
        for (value, n), sample in sorted(t_samples.items())
        for i, t in enumerate(sample)
    ]
    return pd.DataFrame(rows, columns=["sweep_value", "n", "index", "t_n"])


def ecdf_frame(t_samples: Dict[Tuple[float, int], List[float]]) -> pd.DataFrame:
    """Empirical distribution of T_n at each sorted sample point next to the Kolmogorov CDF"""
    frames = []
    for (value, n), sample in sorted(t_samples.items()):
        if not sample:
            continue
        x = np.sort(np.asarray(sample, dtype=float))
        frames.append(
            pd.DataFrame(
                {
                    "sweep_value": value,
                    "n": n,
                    "t_n": x,
                    "ecdf": np.arange(1, x.size + 1) / x.size,
                    "kolmogorov_cdf": kolmogorov_cdf(x),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=["sweep_value", "n", "t_n", "ecdf", "kolmogorov_cdf"])
    return pd.concat(frames, ignore_index=True)


def histogram_frame(t_samples: Dict[Tuple[float, int], List[float]], bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    frames = []
    for (value, n), sample in sorted(t_samples.items()):
        if not sample:
            continue
        density, edges = np.histogram(np.asarray(sample, dtype=float), bins=bins, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        frames.append(
            pd.DataFrame(
                {
                    "sweep_value": value,
                    "n": n,
                    "left": edges[:-1],
                    "right": edges[1:],
                    "density": density,
                    "kolmogorov_pdf": kolmogorov_pdf(centers),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=["sweep_value", "n", "left", "right", "density", "kolmogorov_pdf"])
    return pd.concat(frames, ignore_index=True)


def manifest(result: ExperimentResult) -> Dict:
    cfg = result.config
    return {
        "name": cfg.name,
        "config": cfg.model_dump(mode="json"),
        "config_hash": result.diagnostics.get("config_hash"),
        "seed": cfg.seed,
        "versions": _versions(),
        "wall_time": result.wall_time,
        "failures": result.failures,
        "diagnostics": result.diagnostics,
        "written_at": datetime.now(timezone.utc).isoformat(),
    }


def export_results(result: ExperimentResult, out_dir: PathLike) -> Dict[str, Path]:
    """Write power.csv, t_samples.csv, ecdf.csv, histogram.csv and manifest.json into out_dir"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "power": out / "power.csv",
        "t_samples": out / "t_samples.csv",
        "ecdf": out / "ecdf.csv",
        "histogram": out / "histogram.csv",
        "manifest": out / "manifest.json",
    }
    power_frame(result.table).to_csv(paths["power"], index=False)
    samples_frame(result.t_samples).to_csv(paths["t_samples"], index=False)
    ecdf_frame(result.t_samples).to_csv(paths["ecdf"], index=False)
    histogram_frame(result.t_samples).to_csv(paths["histogram"], index=False)
    paths["manifest"].write_bytes(
        orjson.dumps(manifest(result), option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS)
    )
    logger.info(f"Exported results of '{result.config.name}' to {out}")
    return paths
